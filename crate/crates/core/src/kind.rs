use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Neutral, future or past: the three flavors of collinearity, tubes and gradient lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Neutral,
    Future,
    Past,
}

pub type TubeKind = Kind;
pub type GradientKind = Kind;

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Neutral, Kind::Future, Kind::Past];

    /// α_q: +1 for future and past, −1 for neutral.
    pub fn alpha(self) -> f64 {
        match self {
            Kind::Neutral => -1.0,
            Kind::Future | Kind::Past => 1.0,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Kind::Neutral => "n",
            Kind::Future => "f",
            Kind::Past => "p",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Neutral => "neutral",
            Kind::Future => "future",
            Kind::Past => "past",
        })
    }
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "n" | "neutral" => Ok(Kind::Neutral),
            "f" | "future" => Ok(Kind::Future),
            "p" | "past" => Ok(Kind::Past),
            other => Err(Error::InvalidSpec(format!("unknown kind `{other}`"))),
        }
    }
}
