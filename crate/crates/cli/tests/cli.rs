use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hcz_core::volume::read_nrrd_file;

fn hcz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcz")).args(args).env_remove("CORE_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hcz(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantom(dir: &Path, n: usize) {
    ok(&["--quiet", "phantom", "--n-cases", &n.to_string(), "--seed", "3", "--out", s(dir)]);
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(hcz(&["--help"]).status.code(), Some(0));
    assert_eq!(hcz(&["prune", "--help"]).status.code(), Some(0));
    assert_eq!(hcz(&["prune", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(hcz(&[]).status.code(), Some(1));
    assert_eq!(hcz(&["prune", "x.nrrd", "--out", "o", "--r-max", "1.5"]).status.code(), Some(1));
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hcz(&["prune", "/no/such/file.nrrd", "--out", s(dir.path())]).status.code(), Some(2));
    let bad = dir.path().join("bad.nrrd");
    fs::write(&bad, b"not an nrrd").unwrap();
    let out = hcz(&["hcz", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.nrrd"));
}

#[test]
fn single_case_artifacts_reread() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    phantom(&ph, 2);
    let input = ph.join("case_000.nrrd");
    let out = dir.path().join("hcz");
    ok(&["hcz", s(&input), "--out", s(&out)]);
    for name in ["vessel.nrrd", "skeleton.nrrd", "retained.nrrd", "hcz.nrrd"] {
        let g = read_nrrd_file(out.join(name)).unwrap();
        assert!(g.data().iter().all(|&v| v <= 1), "{name}");
        assert!(g.data().contains(&1), "{name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("branches.json")).unwrap()).unwrap();
    assert!(report["branches"].as_array().unwrap().iter().any(|b| b["tag"] == "trunk" && b["level"] == 0));
    let obj = fs::read_to_string(out.join("hcz.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("f ")));

    let mesh = dir.path().join("mesh.obj");
    ok(&["export-mesh", s(&input), "--out", s(&mesh)]);
    assert_eq!(fs::read_to_string(mesh).unwrap(), obj);

    // the vessel dump is itself a valid label volume
    let again = dir.path().join("again");
    ok(&["--quiet", "prune", s(&out.join("vessel.nrrd")), "--out", s(&again), "--remap", "1:3"]);
    assert!(again.join("branches.json").is_file());
}

#[test]
fn biomarkers_then_classifier_commands() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    phantom(&ph, 8);
    let bio = dir.path().join("bio");
    ok(&["--quiet", "biomarkers", s(&ph), "--labels", s(&ph.join("labels.csv")), "--out", s(&bio)]);
    assert!(!bio.join("cases/case_000/vessel.nrrd").exists());
    let record: serde_json::Value = serde_json::from_slice(&fs::read(bio.join("cases/case_000/biomarkers.json")).unwrap()).unwrap();
    for key in ["case_id", "v_liv_mm3", "n_les", "v_les_mm3", "b_hcz", "b_hcz_percent", "flags"] {
        assert!(record.get(key).is_some(), "{key}");
    }
    let dataset = bio.join("dataset.csv");
    let text = fs::read_to_string(&dataset).unwrap();
    assert!(text.starts_with("case_id,b_hcz,n_les,v_les_mm3,v_liv_mm3,raw_score,label"));
    assert_eq!(text.lines().count(), 9);

    let d = s(&dataset);
    let model = dir.path().join("model.json");
    ok(&["fit", "--dataset", d, "--out", s(&model), "--features", "B_HCZ,V_Les"]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(&model).unwrap()).unwrap();
    assert_eq!(m["weights"].as_array().unwrap().len(), 2);

    let metrics = dir.path().join("metrics.json");
    let printed = ok(&["evaluate", "--dataset", d, "--out", s(&metrics), "--no-standardize", "--lambda", "0.5"]);
    assert!(printed.contains("auc"));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    assert_eq!(r["probabilities"].as_array().unwrap().len(), 8);

    let roc = dir.path().join("roc.csv");
    ok(&["roc", "--dataset", d, "--out", s(&roc)]);
    let roc = fs::read_to_string(roc).unwrap();
    assert!(roc.lines().last().unwrap().starts_with("1,1"));

    let abl = dir.path().join("abl");
    ok(&["--quiet", "ablate", "--dataset", d, "--out", s(&abl)]);
    let grid = fs::read_to_string(abl.join("ablation_grid.csv")).unwrap();
    assert!(grid.starts_with("B_HCZ,N_Les,V_Les,V_Liv,accuracy,f1,auc"));
    assert!(abl.join("ablation.json").is_file());

    assert_eq!(hcz(&["fit", "--dataset", d, "--out", "m.json", "--features", "Foo"]).status.code(), Some(1));
}

#[test]
fn run_writes_every_summary() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    phantom(&ph, 6);
    let run = dir.path().join("run");
    ok(&["run", s(&ph), "--labels", s(&ph.join("labels.csv")), "--out", s(&run)]);
    for name in ["biomarkers.json", "dataset.csv", "roc.csv", "ablation.json", "ablation_grid.csv", "metrics.json"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    for name in ["vessel.nrrd", "skeleton.nrrd", "retained.nrrd", "hcz.nrrd", "hcz.obj", "branches.json", "biomarkers.json"] {
        assert!(run.join("cases/case_005").join(name).is_file(), "{name}");
    }
    let truth = ph.join("truth/case_000.json");
    let t: serde_json::Value = serde_json::from_slice(&fs::read(truth).unwrap()).unwrap();
    assert!(t["branches"].as_array().unwrap().len() > 2);
    assert_eq!(hcz(&["run", s(&ph), "--out", s(&run)]).status.code(), Some(1));
}
