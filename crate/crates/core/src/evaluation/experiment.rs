use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{ConfigFile, DecodeMode, EncoderKind, ExperimentConfig, Recipe, TrainConfig};
use crate::corpus::{ingest_conll, read_parallel, read_plain, AnnotatedSentence, EncodedPair, EncodedSource, Vocabs};
use crate::error::{Error, Result};
use crate::model::{ModelSizes, Seq2Seq};
use crate::training::{train, OutputDir, TrainReport, Validation};

use super::bleu::{bleu, BleuReport};

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("[data] {key} is required for this command")))
}

pub fn output_dir(cfg: &ConfigFile) -> PathBuf {
    cfg.data.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub fn vocab_dir(cfg: &ConfigFile) -> PathBuf {
    output_dir(cfg).join("vocab")
}

/// Builds vocabularies, BPE merges and label inventories from the training
/// data and writes them under `<output_dir>/vocab`.
pub fn preprocess(cfg: &ConfigFile) -> Result<Vocabs> {
    let pairs = read_parallel(
        required(&cfg.data.train_source, "train_source")?,
        required(&cfg.data.train_target, "train_target")?,
    )?;
    if pairs.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let vocabs = Vocabs::build(&pairs, cfg.experiment.vocab_settings());
    vocabs.save(&vocab_dir(cfg))?;
    Ok(vocabs)
}

pub fn load_vocabs(cfg: &ConfigFile) -> Result<Vocabs> {
    Vocabs::load(&vocab_dir(cfg))
}

fn encode_pairs(vocabs: &Vocabs, pairs: &[(AnnotatedSentence, Vec<String>)]) -> Vec<EncodedPair> {
    pairs.iter().map(|(s, t)| vocabs.encode_pair(s, t)).collect()
}

/// Decodes annotated sentences into detokenized target lines.
pub fn translate_sentences(
    model: &Seq2Seq,
    vocabs: &Vocabs,
    sentences: &[AnnotatedSentence],
    mode: DecodeMode,
) -> Result<Vec<String>> {
    let sources: Vec<EncodedSource> = sentences.iter().map(|s| vocabs.encode_source(s)).collect();
    let ids = model.translate_all(&sources, mode, model.config.max_decode_len)?;
    Ok(ids.iter().map(|t| vocabs.decode_target(t).join(" ")).collect())
}

/// Trains from the config's data section, validating on the `valid_*`
/// files when given.
pub fn train_from_config(cfg: &ConfigFile, vocabs: &Vocabs) -> Result<(Seq2Seq, TrainReport)> {
    let pairs = read_parallel(
        required(&cfg.data.train_source, "train_source")?,
        required(&cfg.data.train_target, "train_target")?,
    )?;
    let data = encode_pairs(vocabs, &pairs);
    let valid = match (&cfg.data.valid_source, &cfg.data.valid_target) {
        (Some(s), Some(t)) => Some(read_parallel(s, t)?),
        _ => None,
    };
    let mut model = Seq2Seq::new(&cfg.experiment, ModelSizes::of(vocabs), cfg.train.seed)?;
    let validation = valid.map(|pairs| {
        let (sentences, refs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let mode = cfg.experiment.decode;
        Validation {
            every: 1,
            score: Box::new(move |m: &Seq2Seq| {
                let hyps = translate_sentences(m, vocabs, &sentences, mode)?;
                let hyps: Vec<Vec<String>> = hyps.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect();
                Ok(bleu(&hyps, &refs)?.bleu)
            }),
            stop_at: None,
        }
    });
    let out = OutputDir(output_dir(cfg));
    let report = train(&mut model, &cfg.train, &data, validation, Some(&out))?;
    Ok((model, report))
}

pub fn load_model(cfg: &ConfigFile, vocabs: &Vocabs, checkpoint: &Path) -> Result<Seq2Seq> {
    Seq2Seq::load(&cfg.experiment, ModelSizes::of(vocabs), checkpoint)
}

pub fn translate_file(model: &Seq2Seq, vocabs: &Vocabs, input: &Path, mode: DecodeMode) -> Result<Vec<String>> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    translate_sentences(model, vocabs, &ingest_conll(&text)?, mode)
}

pub fn score_files(hypotheses: &Path, references: &Path) -> Result<BleuReport> {
    let h = fs::read_to_string(hypotheses).map_err(|e| Error::io(hypotheses, e))?;
    let r = fs::read_to_string(references).map_err(|e| Error::io(references, e))?;
    bleu(&read_plain(&h), &read_plain(&r))
}

/// One line of an experiment summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub encoder: EncoderKind,
    pub recipe: Recipe,
    pub bleu: f64,
    pub best_epoch: Option<usize>,
    /// published score for the same configuration, where one exists
    pub reference: Option<f64>,
}

impl SummaryRow {
    pub const HEADER: &'static str = "encoder\trecipe\tbleu\tbest_epoch\treference";
}

impl fmt::Display for SummaryRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        write!(
            f,
            "{}\t{}\t{:.2}\t{}\t{}",
            self.encoder,
            self.recipe,
            self.bleu,
            opt(self.best_epoch.map(|e| e.to_string())),
            opt(self.reference.map(|r| format!("{r:.1}")))
        )
    }
}

/// preprocess → train → translate → score on the test files.
pub fn run_experiment(cfg: &ConfigFile) -> Result<SummaryRow> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let vocabs = preprocess(cfg).map_err(|e| e.in_stage("preprocess"))?;
    let (model, report) = train_from_config(cfg, &vocabs).map_err(|e| e.in_stage("train"))?;
    let translate = || -> Result<Vec<String>> {
        let input = required(&cfg.data.test_source, "test_source")?;
        let lines = translate_file(&model, &vocabs, input, cfg.experiment.decode)?;
        let path = output_dir(cfg).join("test.hyp");
        fs::write(&path, lines.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(lines)
    };
    translate().map_err(|e| e.in_stage("translate"))?;
    let score = || -> Result<BleuReport> {
        score_files(&output_dir(cfg).join("test.hyp"), required(&cfg.data.test_target, "test_target")?)
    };
    let report_bleu = score().map_err(|e| e.in_stage("score"))?;
    Ok(SummaryRow {
        encoder: cfg.experiment.encoder,
        recipe: cfg.experiment.recipe,
        bleu: report_bleu.bleu,
        best_epoch: report.best_epoch,
        reference: None,
    })
}

/// Configuration grids mirroring the published result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// News Commentary test results: four recipes for each encoder
    PaperSmall,
    /// full WMT16 test results, BiRNN only
    PaperFull,
    /// News Commentary validation ablation over layer counts and combinations
    PaperAblation,
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-small" => Ok(Grid::PaperSmall),
            "paper-full" => Ok(Grid::PaperFull),
            "paper-ablation" => Ok(Grid::PaperAblation),
            _ => Err(Error::Config(format!(
                "unknown grid `{s}` (expected paper-small, paper-full or paper-ablation)"
            ))),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grid::PaperSmall => "paper-small",
            Grid::PaperFull => "paper-full",
            Grid::PaperAblation => "paper-ablation",
        })
    }
}

/// A grid cell with the published BLEU it corresponds to. These numbers come
/// from full-scale runs and are documentation, not targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub encoder: EncoderKind,
    pub recipe: Recipe,
    pub reference: f64,
}

const SMALL_RECIPES: [Recipe; 4] = [
    Recipe::Baseline,
    Recipe::Sem(2),
    Recipe::Syn(2),
    Recipe::Stacked { syn: 2, sem: 2 },
];
const SMALL_BIRNN: [f64; 4] = [14.9, 15.6, 16.1, 15.8];
const SMALL_CNN: [f64; 4] = [12.6, 13.4, 13.7, 14.3];
const FULL_BIRNN: [f64; 4] = [23.3, 24.5, 23.9, 24.9];

const ABLATION: [(Recipe, f64, f64); 12] = [
    (Recipe::Baseline, 14.1, 12.1),
    (Recipe::Sem(1), 14.3, 12.5),
    (Recipe::Sem(2), 14.4, 12.6),
    (Recipe::Sem(3), 14.4, 12.7),
    (Recipe::Syn(2), 14.8, 13.1),
    (Recipe::SelfLoop(1), 14.1, 12.1),
    (Recipe::SelfLoop(2), 14.2, 11.5),
    (Recipe::SemSyn(1), 14.1, 12.7),
    (Recipe::Stacked { syn: 1, sem: 1 }, 14.7, 12.7),
    (Recipe::Stacked { syn: 1, sem: 2 }, 14.6, 12.8),
    (Recipe::Stacked { syn: 2, sem: 1 }, 14.9, 13.0),
    (Recipe::Stacked { syn: 2, sem: 2 }, 14.9, 13.5),
];

impl Grid {
    pub fn cells(self) -> Vec<GridCell> {
        let cell = |encoder, recipe, reference| GridCell {
            encoder,
            recipe,
            reference,
        };
        match self {
            Grid::PaperSmall => [(EncoderKind::Birnn, SMALL_BIRNN), (EncoderKind::Cnn, SMALL_CNN)]
                .into_iter()
                .flat_map(|(enc, refs)| SMALL_RECIPES.into_iter().zip(refs).map(move |(r, b)| cell(enc, r, b)))
                .collect(),
            Grid::PaperFull => SMALL_RECIPES
                .into_iter()
                .zip(FULL_BIRNN)
                .map(|(r, b)| cell(EncoderKind::Birnn, r, b))
                .collect(),
            Grid::PaperAblation => [EncoderKind::Birnn, EncoderKind::Cnn]
                .into_iter()
                .flat_map(|enc| {
                    ABLATION.into_iter().map(move |(r, birnn, cnn)| {
                        cell(enc, r, if enc == EncoderKind::Birnn { birnn } else { cnn })
                    })
                })
                .collect(),
        }
    }

    /// Model and training hyperparameters of the published setting.
    pub fn preset(self) -> (ExperimentConfig, TrainConfig) {
        match self {
            Grid::PaperFull => (ExperimentConfig::full_wmt(), TrainConfig::full_wmt()),
            Grid::PaperSmall | Grid::PaperAblation => (ExperimentConfig::news_commentary(), TrainConfig::default()),
        }
    }
}

/// Configuration for one grid cell: the base config with encoder and recipe
/// replaced and its own output subdirectory.
pub fn cell_config(base: &ConfigFile, cell: &GridCell) -> ConfigFile {
    let mut cfg = base.clone();
    cfg.experiment = cfg.experiment.clone().with(cell.encoder, cell.recipe);
    let name = format!("{}-{}", cell.encoder, cell.recipe).replace([':', '+'], "_");
    cfg.data.output_dir = Some(output_dir(base).join(name));
    cfg
}

/// Runs every cell of `grid`, in parallel, and writes `summary.tsv`.
pub fn run_grid(base: &ConfigFile, grid: Grid) -> Result<Vec<SummaryRow>> {
    let rows: Vec<SummaryRow> = grid
        .cells()
        .par_iter()
        .map(|cell| {
            let mut row = run_experiment(&cell_config(base, cell))?;
            row.reference = Some(cell.reference);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let dir = output_dir(base);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut text = format!("{}\n", SummaryRow::HEADER);
    for r in &rows {
        text.push_str(&format!("{r}\n"));
    }
    let path = dir.join("summary.tsv");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_is_four_recipes_per_encoder() {
        let cells = Grid::PaperSmall.cells();
        assert_eq!(cells.len(), 8);
        let birnn: Vec<String> = cells
            .iter()
            .filter(|c| c.encoder == EncoderKind::Birnn)
            .map(|c| c.recipe.to_string())
            .collect();
        assert_eq!(birnn, ["none", "sem:2", "syn:2", "syn:2+sem:2"]);
        assert_eq!(cells[0].reference, 14.9);
        assert_eq!(cells[5].reference, 13.4);
    }

    #[test]
    fn full_grid_references() {
        let refs: Vec<f64> = Grid::PaperFull.cells().iter().map(|c| c.reference).collect();
        assert_eq!(refs, [23.3, 24.5, 23.9, 24.9]);
        assert!(Grid::PaperFull.cells().iter().all(|c| c.encoder == EncoderKind::Birnn));
        let (exp, train) = Grid::PaperFull.preset();
        assert_eq!((exp.hidden_dim, exp.decode, train.epochs), (800, DecodeMode::Beam(12), 20));
    }

    #[test]
    fn ablation_has_every_row_for_both_encoders() {
        let cells = Grid::PaperAblation.cells();
        assert_eq!(cells.len(), 24);
        assert!(cells.iter().any(|c| c.recipe == Recipe::SelfLoop(2) && c.encoder == EncoderKind::Cnn && c.reference == 11.5));
    }

    #[test]
    fn grid_names_round_trip() {
        for g in [Grid::PaperSmall, Grid::PaperFull, Grid::PaperAblation] {
            assert_eq!(g.to_string().parse::<Grid>().unwrap(), g);
        }
        assert!("table9".parse::<Grid>().is_err());
    }

    #[test]
    fn cell_directories_are_distinct() {
        let base = ConfigFile::default();
        let dirs: std::collections::HashSet<_> = Grid::PaperAblation
            .cells()
            .iter()
            .map(|c| cell_config(&base, c).data.output_dir.unwrap())
            .collect();
        assert_eq!(dirs.len(), 24);
    }
}
