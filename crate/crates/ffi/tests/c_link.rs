//! Compiles a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

/// The static library cargo builds alongside this test binary.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libonsager_lab_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    if !have("cc") {
        eprintln!("no C compiler; skipping");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib().expect("libonsager_lab_ffi.a next to the test binary");
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8_lossy(&run.stdout);
    assert_eq!(text.trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}
