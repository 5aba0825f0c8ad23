use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("plate-bench-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(out: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plate-bench"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn poisson_convergence_prints_one_row_per_level() {
    let out = scratch("poisson");
    let o = run(&out, &["poisson-conv", "--disc", "p1", "--levels", "3..5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("err_h1"));
    assert_eq!(text.lines().count(), 4, "{text}");
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn config_file_overrides_flags() {
    let out = scratch("config");
    let cfg = out.join("run.cfg");
    std::fs::write(&cfg, "# small run\nlevels = 2..3\ndisc = rt0\n").unwrap();
    let o = run(&out, &["--config", cfg.to_str().unwrap(), "poisson-conv", "--disc", "p1", "--levels", "3..6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("err_flux"), "{text}");
    assert_eq!(text.lines().count(), 3, "{text}");
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn solve_writes_fields_and_segments() {
    let out = scratch("solve");
    let o = run(&out, &["solve", "--problem", "ex2", "--disc", "rt0", "--level", "3", "--gamma", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(files.iter().any(|f| f.ends_with(".vtk")), "{files:?}");
    assert!(files.iter().any(|f| f.ends_with("_active.csv")), "{files:?}");
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn table_writes_csv() {
    let out = scratch("table");
    let o = run(&out, &["table", "--problem", "ex1", "--disc", "rt0", "--level0", "3", "--gamma0", "100", "--levels", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ex1_rt0_table.csv")).unwrap();
    assert!(csv.lines().count() >= 3, "{csv}");
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn path_failure_exits_with_code_two() {
    let out = scratch("fail");
    let o = run(
        &out,
        &["path", "--problem", "ex1", "--disc", "p1", "--level0", "4", "--gamma0", "400", "--kappa", "8", "--levels", "3"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("path stopped"));
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn bad_gamma_list_is_an_error() {
    let out = scratch("gammas");
    let o = run(&out, &["sweep", "--level", "2", "--gammas", "1e3:1e2:decade"]);
    assert!(!o.status.success());
    assert_ne!(o.status.code(), Some(2));
    std::fs::remove_dir_all(out).unwrap();
}
