use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plate-dpg"))
}

fn code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn solve_to(path: &Path, extra: &[&str]) {
    let mut args = vec!["solve", "--threads", "1", "--no-timing", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn serial_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for extra in [&["--problem", "smooth", "--levels", "3"][..], &["--refine", "adaptive", "--scheme", "plain", "--levels", "6"]] {
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        solve_to(&a, extra);
        solve_to(&b, extra);
        let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b, "{extra:?}");
    }
}

#[test]
fn csv_round_trips_through_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("smooth.csv");
    solve_to(&path, &["--problem", "smooth", "--levels", "3"]);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "level,ndof,h_max,eta,err_u,err_theta,err_M,wall_ms");
    assert_eq!(lines.count(), 3);
    let out = bin().args(["slopes", path.to_str().unwrap(), "--column", "err_M"]).output().unwrap();
    assert!(out.status.success());
    let s: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(s < -0.2 && s > -0.8, "{s}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["fortin-verify"]), 0);
    assert_eq!(code(&["fortin-verify", "--corrupt", "ddiv"]), 1);
    assert_eq!(code(&["fortin-verify", "--corrupt", "dual-basis"]), 1);
    assert_eq!(code(&["fortin-verify", "--tolerance", "1e-15"]), 1);
    assert_eq!(code(&["solve", "--bogus"]), 2);
    assert_eq!(code(&["solve", "--scheme", "plain", "--plain-tensor-degree", "3"]), 2);
    assert_eq!(code(&["solve", "--theta-mark", "0"]), 2);
    assert_eq!(code(&["slopes", "/nonexistent/file.csv"]), 2);
    assert_eq!(code(&[]), 2);
}

#[test]
fn verification_report_ends_with_verdict() {
    let out = bin().arg("fortin-verify").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().last(), Some("RESULT: PASS"));
    assert!(text.contains("65") && text.contains("45"));
}
