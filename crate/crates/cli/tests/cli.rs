//! Drives the `hydride` binary end to end on small settings.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hydride_core::dataset::write_records_jsonl;
use hydride_core::fixture::synthetic_hydrides;

fn hydride(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hydride"))
        .args(args)
        .env_remove("HYDRIDE_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn small() -> Vec<&'static str> {
    vec![
        "--set",
        "epochs=20",
        "--set",
        "n_generate=50",
        "--set",
        "latent_steps=100",
        "--set",
        "top_k=10",
    ]
}

#[test]
fn run_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data/dataset.jsonl");
    fs::create_dir_all(data.parent().unwrap()).unwrap();
    write_records_jsonl(&synthetic_hydrides(120, 2), &data).unwrap();
    let before = fs::read(&data).unwrap();
    let out = tmp.path().join("run");
    let mut args = vec!["run", "--dataset", path(&data), "--out", path(&out), "--seed", "2"];
    args.extend(small());
    let o = hydride(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "run_config.txt",
        "report.md",
        "efactor_curve.csv",
        "ingest/train.jsonl",
        "ingest/rejections.csv",
        "causal/pag.txt",
        "causal/neighborhood.csv",
        "causal/ci_log.csv",
        "pcr/pcr_subsets.csv",
        "train/model.json",
        "train/loss_history.csv",
        "generate/candidates.csv",
        "generate/cifs/gen-0000.cif",
        "screen/verdicts.csv",
        "screen/ranked.csv",
        "screen/top_k.csv",
        "accuracy/accuracy_curve.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read(&data).unwrap(), before, "input was modified");
    let candidates = fs::read_to_string(out.join("generate/candidates.csv")).unwrap();
    assert_eq!(candidates.lines().count(), 51);
    let top = fs::read_to_string(out.join("screen/top_k.csv")).unwrap();
    assert!(top.lines().count() <= 11);
    let cfg = fs::read_to_string(out.join("run_config.txt")).unwrap();
    assert!(cfg.starts_with("# tool_version = hydride "));
    assert!(cfg.contains("seed = 2"));
}

#[test]
fn stages_chain_by_hand() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let fx = root.join("fx");
    assert!(hydride(&["fixture", "--n", "90", "--out", path(&fx), "--seed", "5"])
        .status
        .success());
    let ingest = root.join("ingest");
    let o = hydride(&[
        "ingest",
        "--dataset",
        path(&fx.join("dataset.jsonl")),
        "--out",
        path(&ingest),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("train 54 val 18 test 18"));

    let (train_file, val_file) = (ingest.join("train.jsonl"), ingest.join("val.jsonl"));
    let train = root.join("train");
    let mut args = vec![
        "train",
        "--train",
        path(&train_file),
        "--val",
        path(&val_file),
        "--out",
        path(&train),
    ];
    args.extend(small());
    assert!(hydride(&args).status.success());

    let checkpoint = train.join("model.json");
    let generate = root.join("generate");
    let mut args = vec![
        "generate",
        "--checkpoint",
        path(&checkpoint),
        "--templates",
        path(&train_file),
        "--out",
        path(&generate),
    ];
    args.extend(small());
    assert!(hydride(&args).status.success());

    let screen = root.join("screen");
    let cand = generate.join("candidates.csv");
    let o = hydride(&[
        "screen",
        "--candidates",
        path(&cand),
        "--out",
        path(&screen),
        "--set",
        "top_k=5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let acc = root.join("acc");
    let o = hydride(&[
        "accuracy",
        "--ranked",
        path(&screen.join("top_k.csv")),
        "--reference",
        path(&fx.join("dataset.jsonl")),
        "--out",
        path(&acc),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(acc.join("accuracy_curve.csv")).unwrap();
    assert_eq!(
        curve.lines().next().unwrap(),
        "n,same_formula_rate,same_ratio_rate,same_elements_rate"
    );
}

#[test]
fn score_command_reproduces_table_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("t.csv");
    fs::write(&input, "formula,e_form\nLi3B3H6,0.057\nLi1Al3H6,0.019\nTi1H2,-0.426\n").unwrap();
    let output = tmp.path().join("scored.csv");
    let o = hydride(&["score", "--input", path(&input), "--output", path(&output)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&output).unwrap();
    let last: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(last, ["0.062", "0.043", "0.040"]);
}

#[test]
fn efactor_curve_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let output = tmp.path().join("curve.csv");
    let o = hydride(&[
        "efactor-curve",
        "--lo",
        "-1.2",
        "--hi",
        "0.2",
        "--points",
        "15",
        "--output",
        path(&output),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&output).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(text.lines().nth(1).unwrap().ends_with(",0"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let o = hydride(&[
        "ingest",
        "--dataset",
        path(&missing),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = hydride(&["ingest", "--dataset", path(&missing), "--set", "alpha=2"]);
    assert_eq!(o.status.code(), Some(3));

    let o = hydride(&["ingest", "--dataset", path(&missing), "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(3));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "formula,e_form\nXx2,0.1\n").unwrap();
    let o = hydride(&[
        "score",
        "--input",
        path(&bad),
        "--output",
        path(&tmp.path().join("s.csv")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn diverging_training_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.jsonl");
    let records = synthetic_hydrides(60, 4);
    write_records_jsonl(&records, &data).unwrap();
    let out = tmp.path().join("train");
    let o = hydride(&[
        "train",
        "--train",
        path(&data),
        "--val",
        path(&data),
        "--out",
        path(&out),
        "--set",
        "learning_rate=1e6",
        "--set",
        "clip_norm=none",
        "--set",
        "epochs=50",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("model_last_good.json").exists());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env-root");
    let o = Command::new(env!("CARGO_BIN_EXE_hydride"))
        .args(["fixture", "--n", "10"])
        .env("HYDRIDE_OUTPUT_ROOT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("dataset.jsonl").exists());
}
