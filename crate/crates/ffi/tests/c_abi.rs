use std::path::{Path, PathBuf};
use std::process::Command;

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

/// target/<profile>/ holding the library artifacts, found from the test binary location.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(include_dir().join("tgeom.h")).unwrap();
    for name in [
        "typedef struct TgWorld TgWorld",
        "tg_world_from_json",
        "tg_world_free",
        "tg_sigma",
        "tg_vector_product",
        "tg_tube_radii",
        "tg_coincidence",
        "tg_gradient_line",
        "tg_last_error_message",
        "TG_STATUS_SOLVER_FAILURE",
    ] {
        assert!(h.contains(name), "{name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    if !have_cc() {
        eprintln!("cc not found; skipping");
        return;
    }
    // cargo test does not refresh the staticlib artifact
    let target = artifact_dir().parent().unwrap().to_path_buf();
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let built = Command::new(cargo)
        .args(["build", "-q", "-p", "tgeom-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .status()
        .unwrap();
    assert!(built.success());
    let lib = artifact_dir().join("libtgeom_ffi.a");
    let dir = tempfile_dir();
    let exe = dir.join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/smoke.c");
    let st = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.0755711 9.9244289");
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("tgeom-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
