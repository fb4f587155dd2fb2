//! Command-line front end: reads a JSON world spec, runs one computation and
//! writes CSV or JSON.
//!
//! Exit codes: 0 success, 1 input error, 2 solver failure. Errors are
//! reported on stderr as a JSON object `{"error": ..., "message": ...}`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{coincidence_coefficients, CoincidenceCoefficients};
use crate::degeneracy::{default_probe_dirs, degeneration_check, euclideaness_check};
use crate::error::Error;
use crate::kind::Kind;
use crate::lines::{gradient_line_implicit, gradient_line_ode, initial_velocity, Trajectory};
use crate::tubes::{build_broken_tube_with, sample_axisymmetric_tube, seed_segment, BrokenTubeOptions, LengthConstraint};
use crate::world::{point, Point, World, WorldFunction, WorldSpec};

#[derive(Debug, Parser)]
#[command(name = "tgeom", version, about = "Nonsymmetric T-geometry numerics")]
struct Cli {
    /// Worker threads for grid-parallel work.
    #[arg(long, global = true, env = "TGEOM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    N,
    F,
    P,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Kind {
        match k {
            KindArg::N => Kind::Neutral,
            KindArg::F => Kind::Future,
            KindArg::P => Kind::Past,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Implicit,
    Ode,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Constraint {
    Symmetric,
    Sigma,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckKind {
    Euclideaness,
    Degeneration,
}

#[derive(Debug, Args)]
struct Common {
    /// World spec JSON file.
    #[arg(long)]
    world: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Comma-separated coordinates.
#[derive(Debug, Clone)]
struct Coords(Vec<f64>);

fn parse_vec(s: &str) -> Result<Coords, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Coords)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Radii of the axisymmetric first-order tube through 0 and y on a τ grid.
    TubeSection {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        y: Coords,
        #[arg(long, value_enum, default_value = "n")]
        kind: KindArg,
        #[arg(long, allow_hyphen_values = true)]
        tau_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        tau_max: f64,
        /// Number of grid intervals; the grid has tau_steps + 1 points.
        #[arg(long)]
        tau_steps: usize,
    },
    /// Gradient line from `from` (τ = 0) to `to` (τ = 1).
    GradientLine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "f")]
        kind: KindArg,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        from: Coords,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        to: Coords,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, value_enum, default_value = "implicit")]
        method: Method,
    },
    /// Chain of equal-length parallel segments seeded along seed_to − seed_from.
    BrokenTube {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "f")]
        kind: KindArg,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        seed_from: Coords,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        seed_to: Coords,
        #[arg(long, value_enum, default_value = "symmetric")]
        constraint: Constraint,
    },
    /// Euclideaness conditions or tube degeneration report.
    Check {
        #[arg(value_enum)]
        which: CheckKind,
        #[command(flatten)]
        common: Common,
        /// Anchor for the degeneration check (origin when omitted).
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        at: Option<Coords>,
        /// Random probe points for the euclideaness check.
        #[arg(long, default_value_t = 50)]
        probes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Length of the coordinate axes spanning the euclideaness basis.
        #[arg(long, default_value_t = 1.0)]
        basis_scale: f64,
    },
    /// Coincidence-limit coefficients at a point.
    Coefficients {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        at: Coords,
    },
    /// F-tensors and curvature at a point (and a second anchor for the two-point F̃).
    Curvature {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        at: Coords,
        #[arg(long, value_parser = parse_vec, allow_hyphen_values = true)]
        at_prime: Option<Coords>,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_solver_failure() => 2,
            _ => 1,
        }
    }

    fn json(&self) -> String {
        let (kind, message) = match self {
            CliError::Input(m) => ("input", m.clone()),
            CliError::Core(e) if e.is_solver_failure() => ("solver", e.to_string()),
            CliError::Core(e) => ("input", e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// 17 significant digits, round-trip safe.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn load_world(path: &Path) -> CliResult<WorldFunction> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(WorldFunction::new(WorldSpec::from_json(&text)?)?)
}

/// Writes via a temporary file in the target directory, then renames.
fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match out {
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
            tmp.write_all(bytes)?;
            tmp.flush()?;
            tmp.persist(path).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(())
        }
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Input(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn grid(min: f64, max: f64, steps: usize) -> CliResult<Vec<f64>> {
    if steps == 0 || !(max > min) {
        return Err(CliError::Input("need tau_max > tau_min and tau_steps > 0".into()));
    }
    Ok((0..=steps).map(|i| min + (max - min) * i as f64 / steps as f64).collect())
}

fn trajectory_csv(t: &Trajectory) -> CliResult<Vec<u8>> {
    let d = t.points.first().map_or(0, |p| p.len());
    let mut header = vec!["tau".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("residual".into());
    let rows: Vec<Vec<String>> = t
        .params
        .iter()
        .zip(&t.points)
        .zip(&t.residuals)
        .map(|((tau, p), r)| {
            let mut row = vec![fmt_f64(*tau)];
            row.extend(p.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(*r));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

#[derive(Serialize)]
struct CoefficientsOut<'a> {
    world: String,
    #[serde(flatten)]
    coefficients: &'a CoincidenceCoefficients,
    defects: crate::calculus::CoincidenceDefects,
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::TubeSection {
            common,
            y,
            kind,
            tau_min,
            tau_max,
            tau_steps,
        } => {
            let y = y.0;
            let w = load_world(&common.world)?;
            let taus = grid(tau_min, tau_max, tau_steps)?;
            let samples = sample_axisymmetric_tube(&w, &point(&y), kind.into(), &taus)?;
            let header: Vec<String> = ["tau", "r_inner", "r_outer", "n_roots"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = samples
                .iter()
                .map(|s| {
                    let inner = s.radii.first().map(|v| fmt_f64(*v)).unwrap_or_default();
                    let outer = s.radii.last().map(|v| fmt_f64(*v)).unwrap_or_default();
                    vec![fmt_f64(s.tau), inner, outer, s.radii.len().to_string()]
                })
                .collect();
            emit(&common.out, &csv_bytes(&header, &rows)?)
        }
        Command::GradientLine {
            common,
            kind,
            from,
            to,
            steps,
            method,
        } => {
            let (from, to) = (from.0, to.0);
            let w = load_world(&common.world)?;
            if steps == 0 {
                return Err(CliError::Input("steps must be positive".into()));
            }
            let (a, b) = (point(&from), point(&to));
            let t = match method {
                Method::Implicit => gradient_line_implicit(&w, kind.into(), &a, &b, &grid(0.0, 1.0, steps)?)?,
                Method::Ode => {
                    let v0 = initial_velocity(&w, kind.into(), &a, &b)?;
                    gradient_line_ode(&w, kind.into(), &a, &v0, (0.0, 1.0), steps)?
                }
            };
            for warn in &t.warnings {
                eprintln!("{}", serde_json::to_string(warn).unwrap_or_default());
            }
            emit(&common.out, &trajectory_csv(&t)?)
        }
        Command::BrokenTube {
            common,
            kind,
            mu,
            steps,
            seed_from,
            seed_to,
            constraint,
        } => {
            let (seed_from, seed_to) = (seed_from.0, seed_to.0);
            let w = load_world(&common.world)?;
            let p0 = point(&seed_from);
            if seed_to.len() != seed_from.len() {
                return Err(CliError::Core(Error::DimensionMismatch {
                    expected: seed_from.len(),
                    found: seed_to.len(),
                }));
            }
            let dir: Vec<f64> = seed_to.iter().zip(&seed_from).map(|(b, a)| b - a).collect();
            let p1 = seed_segment(&w, &p0, &dir, mu)?;
            let opts = BrokenTubeOptions {
                constraint: match constraint {
                    Constraint::Symmetric => LengthConstraint::Symmetric,
                    Constraint::Sigma => LengthConstraint::Sigma,
                },
                ..BrokenTubeOptions::default()
            };
            let chain = build_broken_tube_with(&w, kind.into(), &p0, &p1, mu, steps, &opts)?;
            let d = w.dim();
            let mut header = vec!["index".to_string()];
            header.extend((0..d).map(|i| format!("x{i}")));
            header.push("parallelism".into());
            header.push("multiple".into());
            let rows: Vec<Vec<String>> = chain
                .vertices
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut row = vec![i.to_string()];
                    row.extend(p.iter().map(|v| fmt_f64(*v)));
                    // step i produced vertex i + 2
                    let par = if i >= 2 { fmt_f64(chain.parallelism[i - 2]) } else { String::new() };
                    let mult = if i >= 2 { chain.multiple[i - 2].to_string() } else { String::new() };
                    row.push(par);
                    row.push(mult);
                    row
                })
                .collect();
            emit(&common.out, &csv_bytes(&header, &rows)?)
        }
        Command::Check {
            which,
            common,
            at,
            probes,
            seed,
            basis_scale,
        } => {
            let w = load_world(&common.world)?;
            let d = w.dim();
            let report = match which {
                CheckKind::Euclideaness => {
                    if probes == 0 {
                        return Err(CliError::Input("probes must be positive".into()));
                    }
                    let mut basis = vec![point(&vec![0.0; d])];
                    for i in 0..d {
                        let mut e = vec![0.0; d];
                        e[i] = basis_scale;
                        basis.push(point(&e));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let pts: Vec<Point> = (0..probes)
                        .map(|_| point(&(0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()))
                        .collect();
                    euclideaness_check(&w, &basis, &pts)?
                }
                CheckKind::Degeneration => {
                    let x = point(&at.map(|c| c.0).unwrap_or_else(|| vec![0.0; d]));
                    degeneration_check(&w, &x, &default_probe_dirs(d))?
                }
            };
            emit(&common.out, &json_bytes(&report)?)
        }
        Command::Coefficients { common, at } => {
            let at = at.0;
            let w = load_world(&common.world)?;
            w.check(&point(&at))?;
            let c = coincidence_coefficients(&w, &at)?;
            let out = CoefficientsOut {
                world: w.label(),
                coefficients: &c,
                defects: c.defects(),
            };
            emit(&common.out, &json_bytes(&out)?)
        }
        Command::Curvature { common, at, at_prime } => curvature_cmd(common, at.0, at_prime.map(|c| c.0)),
    }
}

#[cfg(feature = "curvature")]
fn curvature_cmd(common: Common, at: Vec<f64>, at_prime: Option<Vec<f64>>) -> CliResult<()> {
    use crate::calculus::{curvature, f_symmetry_defect};
    let w = load_world(&common.world)?;
    w.check(&point(&at))?;
    let xp = at_prime.unwrap_or_else(|| at.clone());
    w.check(&point(&xp))?;
    let cb = curvature(&w, &at, &xp)?;
    let out = serde_json::json!({
        "world": w.label(),
        "x": at,
        "x_prime": xp,
        "curvature": cb,
        "defects": {
            "f_tilde_symmetry": f_symmetry_defect(&cb.f_tilde),
            "f_symmetry": f_symmetry_defect(&cb.f_coincident),
            "f_riemann": cb.f_riemann_defect(),
            "tilde_f": cb.tilde_f_defect(),
            "tilde_p": cb.tilde_p_defect(),
        }
    });
    emit(&common.out, &json_bytes(&out)?)
}

#[cfg(not(feature = "curvature"))]
fn curvature_cmd(_: Common, _: Vec<f64>, _: Option<Vec<f64>>) -> CliResult<()> {
    Err(CliError::Input("built without the curvature feature".into()))
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Input(e.to_string());
            eprintln!("{}", err.json());
            return 1;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::Input("threads must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(CliError::Input(e.to_string())),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.json());
            e.code()
        }
    }
}
