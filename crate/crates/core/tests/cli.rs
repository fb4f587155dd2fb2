use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn tgeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgeom")).args(args).env_remove("TGEOM_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn world(name: &str) -> String {
    data(&format!("data/{name}.json")).display().to_string()
}

#[test]
fn tube_section_matches_golden_file() {
    let o = tgeom(&[
        "tube-section", "--world", &world("case1_g0.1"), "--y", "1,0,0,0", "--kind", "n",
        "--tau-min", "0", "--tau-max", "1", "--tau-steps", "8",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_csv(&stdout(&o));
    assert_eq!(header, ["tau", "r_inner", "r_outer", "n_roots"]);
    let golden = std::fs::read_to_string(data("golden/case1_g0.1_section.csv")).unwrap();
    let (gh, grows) = parse_csv(&golden);
    assert_eq!(header, gh);
    assert_eq!(rows.len(), grows.len());
    for (r, g) in rows.iter().zip(&grows) {
        assert_eq!(r[3], g[3]);
        for c in 0..3 {
            let (a, b) = (num(&r[c]), num(&g[c]));
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }
    let waist = rows.iter().find(|r| num(&r[0]) == 0.5).unwrap();
    assert!((num(&waist[1]) - 0.0755712).abs() < 1.5e-7);
    assert!((num(&waist[2]) - 9.9244288).abs() < 1.5e-7);
}

#[test]
fn empty_tube_has_blank_radii() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    std::fs::write(&w, r#"{"kind":"case1","dim":4,"metric":[1,-1,-1,-1],"b":[1,0,0,0],"alpha":0.8}"#).unwrap();
    let o = tgeom(&[
        "tube-section", "--world", w.to_str().unwrap(), "--y", "1,0,0,0",
        "--tau-min", "0.4", "--tau-max", "0.6", "--tau-steps", "2",
    ]);
    assert!(o.status.success());
    let (_, rows) = parse_csv(&stdout(&o));
    assert_eq!(rows[1][1..], ["", "", "0"]);
}

#[test]
fn degeneration_on_euclidean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = tgeom(&["check", "degeneration", "--world", &world("euclidean3"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let verdicts = report["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 3);
    assert!(verdicts.iter().all(|v| v["holds"] == true));
}

#[test]
fn euclideaness_report() {
    let o = tgeom(&["check", "euclideaness", "--world", &world("euclidean3")]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["classification"], "euclidean");
    assert_eq!(report["signature"], serde_json::json!([3, 0, 0]));
}

#[test]
fn straight_gradient_line() {
    for method in ["implicit", "ode"] {
        let o = tgeom(&[
            "gradient-line", "--world", &world("euclidean3"), "--kind", "f",
            "--from", "0,0,0", "--to", "1,2,-1", "--steps", "10", "--method", method,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let (header, rows) = parse_csv(&stdout(&o));
        assert_eq!(header, ["tau", "x0", "x1", "x2", "residual"]);
        assert_eq!(rows.len(), 11);
        for r in &rows {
            let t = num(&r[0]);
            assert!(num(&r[4]).abs() < 1e-10, "{method}: {r:?}");
            for (c, want) in [(1, t), (2, 2.0 * t), (3, -t)] {
                assert!((num(&r[c]) - want).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn broken_tube_chain() {
    let o = tgeom(&[
        "broken-tube", "--world", &world("euclidean3"), "--kind", "f", "--mu", "0.1", "--steps", "4",
        "--seed-from", "0,0,0", "--seed-to", "1,0,0",
    ]);
    assert!(o.status.success());
    let (header, rows) = parse_csv(&stdout(&o));
    assert_eq!(header, ["index", "x0", "x1", "x2", "parallelism", "multiple"]);
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        assert!((num(&r[1]) - 0.1 * i as f64).abs() < 1e-10);
    }
    assert_eq!(rows[0][4], "");
    assert_eq!(rows[5][5], "false");
}

#[test]
fn coefficients_and_curvature_json() {
    let o = tgeom(&["coefficients", "--world", &world("cubic_a2"), "--at", "0.1,-0.2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let a3 = v["a3"]["data"].as_array().unwrap();
    assert!((a3[0].as_f64().unwrap() - 0.3).abs() < 1e-6);
    assert!(v["defects"]["beta_consistency"].as_f64().unwrap() < 1e-5);

    let o = tgeom(&["curvature", "--world", &world("cubic_a2"), "--at", "0.1,-0.2", "--at-prime", "0.4,0.1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["defects"]["f_tilde_symmetry"].as_f64().unwrap() < 5e-4);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = tgeom(&[
            "--threads", threads, "tube-section", "--world", &world("case1_g0.1"), "--y", "1,0,0,0",
            "--tau-min", "-1", "--tau-max", "2", "--tau-steps", "30", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "4");
    let c = run("c.csv", "4");
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn exit_codes_and_error_json() {
    let o = tgeom(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "input");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let o = tgeom(&["coefficients", "--world", bad.to_str().unwrap(), "--at", "0,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(serde_json::from_slice::<serde_json::Value>(&o.stderr).is_ok());

    let o = tgeom(&["coefficients", "--world", &world("euclidean3"), "--at", "0,x,0"]);
    assert_eq!(o.status.code(), Some(1));

    // spacelike seed direction cannot carry a broken tube
    let w = dir.path().join("mink.json");
    std::fs::write(&w, r#"{"kind":"euclidean","dim":2,"metric":[1,-1]}"#).unwrap();
    let o = tgeom(&[
        "broken-tube", "--world", w.to_str().unwrap(), "--mu", "0.1", "--steps", "2",
        "--seed-from", "0,0", "--seed-to", "0,1",
    ]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(tgeom(&["--help"]).status.code(), Some(0));
    assert_eq!(tgeom(&["--version"]).status.code(), Some(0));
}

#[test]
fn solver_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    std::fs::write(&w, r#"{"kind":"cubic_a","dim":2,"metric":[1,-1],"a3":[30,10,10,0,10,0,0,20]}"#).unwrap();
    let o = tgeom(&[
        "broken-tube", "--world", w.to_str().unwrap(), "--mu", "0.5", "--steps", "5",
        "--seed-from", "0,0", "--seed-to", "1,0.2", "--constraint", "sigma",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "solver");
    assert!(o.stdout.is_empty());
}
