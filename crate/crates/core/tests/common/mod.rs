#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use gcn_nmt::config::{ConfigFile, DataConfig};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    fs::read_to_string(fixture(name)).unwrap()
}

/// Small model over the fixture corpus, writing into `out`.
pub fn small_config(out: &Path) -> ConfigFile {
    let mut cfg = ConfigFile {
        data: DataConfig {
            train_source: Some(fixture("train.conll")),
            train_target: Some(fixture("train.de")),
            valid_source: Some(fixture("test.conll")),
            valid_target: Some(fixture("test.de")),
            test_source: Some(fixture("test.conll")),
            test_target: Some(fixture("test.de")),
            output_dir: Some(out.to_path_buf()),
        },
        ..ConfigFile::default()
    };
    let e = &mut cfg.experiment;
    e.embedding_dim = 8;
    e.hidden_dim = 8;
    e.source_min_count = 1;
    e.bpe_merges = 40;
    e.max_decode_len = 12;
    let t = &mut cfg.train;
    t.epochs = 2;
    t.batch_size = 4;
    t.learning_rate = 0.01;
    cfg
}
