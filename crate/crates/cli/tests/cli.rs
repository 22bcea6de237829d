use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kinetic-lab"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

const HOMOGENEOUS: &str = r#"
scenario = "homogeneous_relaxation"
epsilon_list = [0.1]
cells = 4
velocity_points = 8
t_end = 0.05
cadence = 0.01

[assertions]
monotone_h = 1e-12
"#;

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut lines = csv_text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn empty_epsilon_list_is_a_configuration_error() {
    let d = scratch("empty");
    let out = run(&d, &HOMOGENEOUS.replace("[0.1]", "[]"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("out").exists());
}

#[test]
fn increasing_epsilon_list_is_rejected() {
    let d = scratch("increasing");
    let out = run(&d, &HOMOGENEOUS.replace("[0.1]", "[0.05, 0.1]"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("out").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let d = scratch("unknown");
    let out = run(&d, &format!("{HOMOGENEOUS}\nbogus = 1\n"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn homogeneous_relaxation_writes_a_monotone_h_column() {
    let d = scratch("homogeneous");
    let out = run(&d, HOMOGENEOUS, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = fs::read_dir(d.join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 2, "{files:?}");
    let text = fs::read_to_string(d.join("out/report_eps_0.1.csv")).unwrap();
    assert!(text.starts_with("# kinetic-lab entropy report, schema 1\n"));
    let h = column(&text, "H_over_eps2");
    assert_eq!(h.len(), 6);
    assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{h:?}");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["scenario"], "homogeneous_relaxation");
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let cfg = HOMOGENEOUS.replace("[0.1]", "[0.1, 0.05]");
    let a = scratch("det_a");
    let b = scratch("det_b");
    assert_eq!(run(&a, &cfg, &["--seed", "3", "--parallel", "2"]).status.code(), Some(0));
    assert_eq!(run(&b, &cfg, &["--seed", "3"]).status.code(), Some(0));
    for f in ["report_eps_0.1.csv", "report_eps_0.05.csv", "summary.json"] {
        assert_eq!(fs::read(a.join("out").join(f)).unwrap(), fs::read(b.join("out").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failed_assertion_exits_with_one_and_keeps_files() {
    let d = scratch("assertion");
    let out = run(&d, &format!("{HOMOGENEOUS}max_h = -1.0\n"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL max_h"));
    assert!(d.join("out/summary.json").exists());
}
