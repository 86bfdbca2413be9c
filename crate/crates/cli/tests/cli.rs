use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_projfilter"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--preset",
        "figure1",
        "--set",
        "integrator.horizon=0.625",
        "--set",
        "ensemble.trajectories=3",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn lists_six_presets() {
    let o = run(&["list-presets"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(
        names,
        [
            "figure1",
            "figure2",
            "figure3",
            "reduction_open_loop",
            "reduction_synthetic",
            "assumption_audit"
        ]
    );
}

#[test]
fn unknown_preset_exits_with_config_status() {
    let o = run(&["run", "--preset", "figure9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_the_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let o = short_run(dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    let header = traj.lines().next().unwrap();
    assert!(header.starts_with(
        "time,trajectory_id,fidelity_to_target,bures_true,bures_proj,u,V_reduction,V_target,xi_norm"
    ));
    // 3 trajectories, 512 steps recorded every 4 steps plus the initial point.
    assert_eq!(traj.lines().count(), 1 + 3 * 129);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 129);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["ensemble"]["trajectories"], 3);
    let overrides = manifest["overrides"].as_array().unwrap();
    assert!(overrides.iter().any(|v| v == "ensemble.trajectories=3"));
    // 17 significant digits.
    let first = summary.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = first.split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{first}");
    assert!((first.parse::<f64>().unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn identical_runs_give_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(short_run(a.path(), &[]).status.success());
    assert!(short_run(b.path(), &[]).status.success());
    for f in ["trajectories.csv", "summary.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn output_directory_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args([
            "run",
            "--preset",
            "figure1",
            "--set",
            "integrator.horizon=0.3125",
        ])
        .env("PROJFILTER_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn unwritable_output_exits_with_io_status() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = short_run(&blocker.join("sub"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_figure1_passes_a1_a2() {
    let o = run(&["verify", "--preset", "figure1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = |name: &str| {
        text.lines()
            .find(|l| l.trim_start().starts_with(name))
            .unwrap()
            .to_owned()
    };
    assert!(line("A1 ").contains(" ok "));
    assert!(line("A2 ").contains(" ok "));
}

#[test]
fn verify_zero_controller_reports_a1() {
    let o = run(&["verify", "--preset", "reduction_open_loop"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.lines()
            .any(|l| l.trim_start().starts_with("A1 ") && l.contains("VIOLATED")),
        "{text}"
    );
}

#[test]
fn config_file_round_trip_and_bad_family() {
    let dir = tempfile::tempdir().unwrap();
    let show = run(&["show-preset", "figure1"]);
    assert!(show.status.success());
    let good = dir.path().join("good.toml");
    fs::write(&good, stdout(&show)).unwrap();
    assert!(run(&["verify", good.to_str().unwrap()]).status.success());

    let text = stdout(&show);
    let start = text.find("rho_bar0").unwrap();
    let end = start + text[start..].find('\n').unwrap();
    let zeroed = "rho_bar0 = [[[0.5, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0], [0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]]";
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        format!("{}{}{}", &text[..start], zeroed, &text[end..]),
    )
    .unwrap();
    let o = run(&["verify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Tr(rho_bar0 A_k)"));
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.toml");
    fs::write(&p, "mode = \"physical\"\n[system]\ndim = \"four\"\n").unwrap();
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("line 3"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
