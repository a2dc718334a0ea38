use std::path::Path;
use std::process::{Command, Output};

use awdlm::harness::synth::markov_splits;

fn awdlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awdlm"))
        .args(args)
        .env_remove("AWDLM_DATA")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_corpus(dir: &Path) {
    let [train, valid, test] = markov_splits(1500, 300, 300, 40, 7);
    std::fs::write(dir.join("train.txt"), train).unwrap();
    std::fs::write(dir.join("valid.txt"), valid).unwrap();
    std::fs::write(dir.join("test.txt"), test).unwrap();
}

#[test]
fn train_eval_and_cache_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("run");
    std::fs::create_dir(&data).unwrap();
    write_corpus(&data);
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());

    let text = stdout(&awdlm(&[
        "train", "--profile", "tiny", "--data", d, "--out", o, "--epochs", "2", "--hidden", "16", "--embed", "8",
    ]));
    assert!(text.contains("# profile = tiny"));
    assert!(text.contains("epoch\ttrain_ppl"));
    assert!(out.join("final.bin").exists());
    assert!(out.join("metrics.tsv").exists());

    let ckpt = out.join("final.bin");
    let c = ckpt.to_str().unwrap();
    let text = stdout(&awdlm(&["eval", "--checkpoint", c, "--data", d, "--split", "valid"]));
    assert!(text.starts_with("valid\tperplexity\t"), "{text}");

    let text = stdout(&awdlm(&[
        "cache-tune", "--checkpoint", c, "--data", d, "--windows", "10,50", "--lambdas", "0,0.1", "--thetas", "0.5",
    ]));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(text.contains("# best window="));

    let table = tmp.path().join("words.tsv");
    let text = stdout(&awdlm(&[
        "analyze-cache", "--checkpoint", c, "--data", d, "--window", "50", "--tsv", table.to_str().unwrap(),
    ]));
    assert!(text.starts_with("wrote "));
    let tsv = std::fs::read_to_string(table).unwrap();
    assert!(tsv.starts_with("word\tcount\tdelta_loss\n"));
}

#[test]
fn unknown_ablation_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    let o = awdlm(&["ablate", "--profile", "tiny", "--data", tmp.path().to_str().unwrap(), "dropout-everything"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("weight-dropping"), "{err}");
}

#[test]
fn missing_data_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = awdlm(&["train", "--profile", "tiny", "--data", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let o = awdlm(&["train", "--profile", "tiny", "--out", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no data directory"));
}
