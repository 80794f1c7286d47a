use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn switchlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SMALL_PROFILE: [&str; 4] = ["--set", "grid.points=12", "--set", "grid.beta_max=20"];

#[test]
fn profile_reruns_are_byte_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut args = vec![
        "chi-profile",
        "--svg",
        "--seed",
        "5",
        "--set",
        "profile.mc_overlay=3",
        "--set",
        "mc.horizon=50",
    ];
    args.extend(SMALL_PROFILE);
    for d in [&d1, &d2] {
        let o = switchlab(&args, d.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["chi_profile.csv", "chi_profile.svg"] {
        assert_eq!(read(d1.path(), name), read(d2.path(), name), "{name}");
    }
    let csv = String::from_utf8(read(d1.path(), "chi_profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# schema: switchlab/chi_profile v"));
    assert_eq!(lines.next().unwrap(), "beta,chi,method,err,status");
    let svg = String::from_utf8(read(d1.path(), "chi_profile.svg")).unwrap();
    assert!(svg.contains("<metadata>") && svg.contains("\"seed\":5"));
}

#[test]
fn worker_count_does_not_change_output() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut args = vec!["chi-profile", "--format", "json"];
    args.extend(SMALL_PROFILE);
    let mut one = args.clone();
    one.extend(["--workers", "1"]);
    let mut three = args;
    three.extend(["--workers", "3"]);
    assert_eq!(code(&switchlab(&one, d1.path())), 0);
    assert_eq!(code(&switchlab(&three, d2.path())), 0);
    let a = read(d1.path(), "chi_profile.json");
    assert_eq!(a, read(d2.path(), "chi_profile.json"));
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn degenerate_profile_is_flat() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["chi-profile", "--b", "1", "--a", "0.2"];
    args.extend(SMALL_PROFILE);
    assert_eq!(code(&switchlab(&args, d.path())), 0);
    let csv = String::from_utf8(read(d.path(), "chi_profile.csv")).unwrap();
    for row in csv.lines().skip(2) {
        let chi: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((chi + 0.2).abs() < 1e-9, "{row}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&switchlab(&["chi-profile", "--bogus"], d.path())), 1);
    assert_eq!(
        code(&switchlab(
            &["chi-profile", "--set", "grid.points=1"],
            d.path()
        )),
        1
    );
    assert_eq!(
        code(&switchlab(
            &["chi-profile", "--set", "grid.nonsense=1"],
            d.path()
        )),
        1
    );
    assert_eq!(
        code(&switchlab(
            &["simulate", "--set", "simulate.mode=4"],
            d.path()
        )),
        1
    );
    assert_eq!(code(&switchlab(&["chi-profile", "--a", "-1"], d.path())), 1);
    assert_eq!(code(&switchlab(&["--help"], d.path())), 0);
}

#[test]
fn config_errors_name_file_line_and_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "[system]\na = 0.2\n\n[grid]\npoints = \"many\"\n").unwrap();
    let o = switchlab(
        &["chi-profile", "--config", cfg.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(code(&o), 1);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("run.toml:5"), "{err}");
    assert!(err.contains("grid.points"), "{err}");
}

#[test]
fn selftest_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = switchlab(&["selftest"], d.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 7);
    assert!(!out.contains("FAIL"));
}

#[test]
fn tail_bounded_from_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bounded.toml");
    fs::write(
        &cfg,
        "[system]\nkind = \"matrices\"\na0 = [[-1.0, 0.0], [0.0, -1.0]]\na1 = [[-1.0, 0.0], [0.0, -1.0]]\n\
         b0 = [0.5, 0.5]\nb1 = [1.0, 0.0]\nrates = [0.5, 0.5]\n\n[search]\nk_phases = [1]\n\n[bounded]\nsteps = 20000\n",
    )
    .unwrap();
    let o = switchlab(
        &["tail", "--svg", "--config", cfg.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&read(d.path(), "tail_report.json")).unwrap();
    assert_eq!(report["report"]["verdict"], "bounded");
    assert!(d.path().join("tail.svg").exists());
}

#[test]
fn tail_chained_blocks_runs() {
    let d = tempfile::tempdir().unwrap();
    let args = [
        "tail",
        "--set",
        "system.kind=\"chained-blocks\"",
        "--set",
        "system.b0=[1.0, 0.0, 0.0]",
        "--set",
        "system.b1=[0.0, 0.0, 1.0]",
        "--set",
        "system.rates=[1.0, 1.0]",
        "--set",
        "search.k_phases=[1]",
        "--set",
        "search.grid_points=8",
        "--set",
        "search.directions=40",
        "--set",
        "heavy.samples=4000",
        "--set",
        "heavy.chain_steps=20000",
        "--set",
        "heavy.bootstrap_resamples=10",
        "--set",
        "bounded.steps=20000",
    ];
    let o = switchlab(&args, d.path());
    assert!(
        matches!(code(&o), 0 | 3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&read(d.path(), "tail_report.json")).unwrap();
    assert_eq!(report["report"]["dim"], 3);
    assert!(report["report"]["verdict"].is_string());
}

#[test]
fn simulate_writes_trajectory_and_portrait() {
    let d = tempfile::tempdir().unwrap();
    let o = switchlab(
        &["simulate", "--svg", "--seed", "9", "--horizon", "5"],
        d.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(read(d.path(), "trajectory.csv")).unwrap();
    assert!(csv.starts_with("# schema: switchlab/trajectory v"));
    assert!(read(d.path(), "trajectory.svg").starts_with(b"<svg"));
}
