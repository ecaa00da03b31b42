mod common;

use std::fs;
use std::process::{Command, Output};

use common::{fixture, small_config};

fn gcn_nmt(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcn-nmt"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn score_identical_files_prints_100() {
    let dir = tempfile::tempdir().unwrap();
    let de = fixture("train.de");
    let de = de.to_str().unwrap();
    let out = gcn_nmt(&["score", "--hyp", de, "--ref", de], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("BLEU = 100.00 "), "{}", stdout(&out));
}

#[test]
fn beam_one_and_greedy_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("out"));
    fs::write(dir.path().join("c.toml"), cfg.to_toml()).unwrap();
    let run = |args: &[&str]| {
        let out = gcn_nmt(args, dir.path());
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    };
    run(&["preprocess", "-c", "c.toml"]);
    run(&["train", "-c", "c.toml", "--recipe", "sem:1", "--epochs", "3"]);
    let input = fixture("test.conll");
    let input = input.to_str().unwrap();
    run(&["translate", "-c", "c.toml", "--recipe", "sem:1", "--input", input, "--beam", "1", "--output", "beam1.txt"]);
    run(&["translate", "-c", "c.toml", "--recipe", "sem:1", "--input", input, "--greedy", "--output", "greedy.txt"]);
    let beam = fs::read_to_string(dir.path().join("beam1.txt")).unwrap();
    assert_eq!(beam, fs::read_to_string(dir.path().join("greedy.txt")).unwrap());
    assert_eq!(beam.lines().count(), 3);
    let metrics = fs::read_to_string(dir.path().join("out/metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
}

#[test]
fn small_grid_lists_the_four_recipes_per_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcn_nmt(&["experiment", "--grid", "paper-small", "--list"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<(&str, &str)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split('\t');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    let recipes = ["none", "sem:2", "syn:2", "syn:2+sem:2"];
    let expected: Vec<(&str, &str)> = ["birnn", "cnn"]
        .iter()
        .flat_map(|e| recipes.iter().map(move |r| (*e, *r)))
        .collect();
    assert_eq!(rows, expected);
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcn_nmt(&["score", "--hyp", "missing.txt", "--ref", "missing.txt"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: score: "), "{}", stderr(&out));

    let out = gcn_nmt(&["train"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: train: "), "{}", stderr(&out));

    fs::write(dir.path().join("bad.toml"), "[train]\nword_retain = 0.0\n").unwrap();
    let out = gcn_nmt(&["preprocess", "-c", "bad.toml"], dir.path());
    assert!(stderr(&out).starts_with("error: config: "), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_or_flag_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["score", "--bleu"][..], &["train", "--recipe", "tree:2"][..]] {
        let out = gcn_nmt(args, dir.path());
        assert!(!out.status.success());
        assert!(stderr(&out).contains("Usage") || stderr(&out).contains("recipe"), "{}", stderr(&out));
    }
}
