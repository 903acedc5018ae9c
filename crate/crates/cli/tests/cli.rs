use std::path::Path;
use std::process::{Command, Output};

fn paramcheck(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paramcheck"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "seed = 4\n\n[data.synthetic.cut_in]\ncompliant = 3\n\n[data.synthetic.cut_out]\ncompliant = 2\n\n\
         [data.synthetic.lvd]\ncompliant = 3\n\n[sim]\nthw_grid = [1.2]\n",
    )
    .unwrap();
    path
}

#[test]
fn simulate_without_catalog_names_the_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = paramcheck(&["simulate"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("catalog.jsonl"), "{stderr}");
    assert!(stderr.contains("paramcheck mine"), "{stderr}");
}

#[test]
fn unknown_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = paramcheck(&["show-config", "--models", "Reg157,Bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Bogus"));
}

#[test]
fn show_config_prints_resolved_toml() {
    let dir = tempfile::tempdir().unwrap();
    let out = paramcheck(&["show-config", "--seed", "99", "--models", "RSS"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("seed = 99"), "{text}");
    assert!(text.contains("\"RSS\""), "{text}");
}

#[test]
fn all_writes_stamped_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_paramcheck"))
        .args(["all", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let digest = report["config_digest"].as_str().unwrap().to_string();
    assert_eq!(digest.len(), 64);
    assert!(!report["entries"].as_array().unwrap().is_empty());

    for csv in ["outcomes.csv", "parameters.csv", "fail_table.csv"] {
        let text = std::fs::read_to_string(out_dir.join(csv)).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_digest={digest}"), "{csv}");
    }
    let catalog = std::fs::read_to_string(out_dir.join("catalog.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(catalog.lines().next().unwrap()).unwrap();
    assert_eq!(header["config_digest"], digest.as_str());
    assert_eq!(catalog.lines().count(), 1 + 8);
    for cat in ["cut_in", "cut_out", "lvd"] {
        assert!(out_dir.join(format!("radar_{cat}.csv")).is_file(), "{cat}");
    }

    // a later stage alone reuses the artifacts on disk
    let rerun = Command::new(env!("CARGO_BIN_EXE_paramcheck"))
        .args(["report", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(rerun.status.success());
    assert!(String::from_utf8_lossy(&rerun.stdout).contains("Reg157"));
}
