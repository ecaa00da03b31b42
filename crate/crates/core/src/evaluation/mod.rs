//! BLEU scoring and experiment orchestration.

mod bleu;
mod experiment;

pub use bleu::{bleu, bleu_lines, BleuReport, MAX_ORDER};
pub use experiment::{
    cell_config, load_model, load_vocabs, output_dir, preprocess, run_experiment, run_grid, score_files, train_from_config,
    translate_file, translate_sentences, vocab_dir, Grid, GridCell, SummaryRow,
};
