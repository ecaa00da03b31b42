mod common;

use std::fs;

use gcn_nmt::config::{EncoderKind, Recipe};
use gcn_nmt::evaluation::{run_experiment, run_grid, Grid, SummaryRow};

use common::small_config;

#[test]
fn experiment_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let row = run_experiment(&cfg).unwrap();
    assert_eq!(row.recipe, Recipe::Baseline);
    assert!((0.0..=100.0).contains(&row.bleu));
    assert!(row.best_epoch.is_some());
    for f in ["vocab", "best.ckpt", "last.ckpt", "metrics.tsv", "test.hyp"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let hyp = fs::read_to_string(dir.path().join("test.hyp")).unwrap();
    assert_eq!(hyp.lines().count(), 3);
}

#[test]
fn grid_of_four_recipes_gives_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.train.epochs = 1;
    let rows = run_grid(&cfg, Grid::PaperFull).unwrap();
    let recipes: Vec<Recipe> = rows.iter().map(|r| r.recipe).collect();
    assert_eq!(
        recipes,
        [Recipe::Baseline, Recipe::Sem(2), Recipe::Syn(2), Recipe::Stacked { syn: 2, sem: 2 }]
    );
    assert!(rows.iter().all(|r| r.encoder == EncoderKind::Birnn));
    let summary = fs::read_to_string(dir.path().join("summary.tsv")).unwrap();
    assert_eq!(summary.lines().next(), Some(SummaryRow::HEADER));
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.contains("\t23.3\n"));
}

#[test]
fn errors_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.data.train_target = Some(dir.path().join("absent.de"));
    assert!(run_experiment(&cfg).unwrap_err().to_string().starts_with("preprocess: "));

    let mut cfg = small_config(dir.path());
    cfg.data.test_source = None;
    assert!(run_experiment(&cfg).unwrap_err().to_string().starts_with("translate: "));
}
