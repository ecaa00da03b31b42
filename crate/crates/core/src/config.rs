//! Experiment and training configuration, plus the TOML file schema.
//!
//! ```toml
//! [data]                       # all paths relative to the working directory
//! train_source = "train.conll" # annotated source side
//! train_target = "train.de"    # one target sentence per line
//! valid_source = "dev.conll"   # optional
//! valid_target = "dev.de"      # optional
//! test_source  = "test.conll"  # optional
//! test_target  = "test.de"     # optional
//! output_dir   = "runs/sem2"
//!
//! [experiment]
//! encoder = "birnn"            # birnn | cnn
//! recipe = "sem:2"             # none | sem:k | syn:k | semsyn:k | syn:k+sem:m | selfloop:k
//! embedding_dim = 256
//! hidden_dim = 512
//! cnn_window = 5
//! decode = "greedy"            # greedy | beam:N
//! max_decode_len = 100
//! source_min_count = 4
//! target_min_count = 1
//! bpe_merges = 8000
//! label_min_count = 2
//!
//! [train]
//! learning_rate = 0.0002
//! epochs = 50
//! l2 = 1e-8
//! word_retain = 0.8
//! edge_retain = 0.8
//! batch_size = 64
//! seed = 1
//! max_sentence_len = 50
//! clip_norm = 5.0              # optional
//! ```
//!
//! Every section and key is optional and falls back to the defaults above;
//! unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{BatchOptions, VocabSettings};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Birnn,
    Cnn,
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "birnn" => Ok(EncoderKind::Birnn),
            "cnn" => Ok(EncoderKind::Cnn),
            _ => Err(Error::Config(format!("unknown encoder `{s}` (expected birnn or cnn)"))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Birnn => "birnn",
            EncoderKind::Cnn => "cnn",
        })
    }
}

/// Which graph(s) one GCN layer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphUse {
    Sem,
    Syn,
    /// one fused layer over both graphs
    Both,
    /// no annotated edges, self-loops only
    SelfLoop,
}

impl GraphUse {
    pub fn name(self) -> &'static str {
        match self {
            GraphUse::Sem => "sem",
            GraphUse::Syn => "syn",
            GraphUse::Both => "semsyn",
            GraphUse::SelfLoop => "selfloop",
        }
    }
}

/// GCN stack placed on top of the base encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Recipe {
    Baseline,
    Sem(usize),
    Syn(usize),
    SemSyn(usize),
    /// syntactic layers first, semantic layers stacked on top
    Stacked { syn: usize, sem: usize },
    SelfLoop(usize),
}

impl Recipe {
    /// Blocks in application order: `(graph use, layer count)`.
    pub fn blocks(&self) -> Vec<(GraphUse, usize)> {
        match *self {
            Recipe::Baseline => vec![],
            Recipe::Sem(k) => vec![(GraphUse::Sem, k)],
            Recipe::Syn(k) => vec![(GraphUse::Syn, k)],
            Recipe::SemSyn(k) => vec![(GraphUse::Both, k)],
            Recipe::Stacked { syn, sem } => vec![(GraphUse::Syn, syn), (GraphUse::Sem, sem)],
            Recipe::SelfLoop(k) => vec![(GraphUse::SelfLoop, k)],
        }
    }

    pub fn needs_sem(&self) -> bool {
        self.blocks().iter().any(|(u, _)| matches!(u, GraphUse::Sem | GraphUse::Both))
    }

    pub fn needs_syn(&self) -> bool {
        self.blocks().iter().any(|(u, _)| matches!(u, GraphUse::Syn | GraphUse::Both))
    }

    pub fn num_layers(&self) -> usize {
        self.blocks().iter().map(|(_, k)| k).sum()
    }
}

fn layer_count(s: &str, text: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(Error::Config(format!("bad layer count in recipe `{text}`"))),
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "none" || text == "baseline" {
            return Ok(Recipe::Baseline);
        }
        if let Some((first, second)) = text.split_once('+') {
            let (Some(("syn", a)), Some(("sem", b))) = (first.split_once(':'), second.split_once(':')) else {
                return Err(Error::Config(format!("stacked recipe must be `syn:k+sem:m`, got `{text}`")));
            };
            return Ok(Recipe::Stacked {
                syn: layer_count(a, text)?,
                sem: layer_count(b, text)?,
            });
        }
        let (kind, k) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("recipe `{text}` needs a layer count, e.g. `sem:2`")))?;
        let k = layer_count(k, text)?;
        match kind {
            "sem" => Ok(Recipe::Sem(k)),
            "syn" => Ok(Recipe::Syn(k)),
            "semsyn" => Ok(Recipe::SemSyn(k)),
            "selfloop" => Ok(Recipe::SelfLoop(k)),
            _ => Err(Error::Config(format!("unknown recipe `{text}`"))),
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Baseline => write!(f, "none"),
            Recipe::Sem(k) => write!(f, "sem:{k}"),
            Recipe::Syn(k) => write!(f, "syn:{k}"),
            Recipe::SemSyn(k) => write!(f, "semsyn:{k}"),
            Recipe::Stacked { syn, sem } => write!(f, "syn:{syn}+sem:{sem}"),
            Recipe::SelfLoop(k) => write!(f, "selfloop:{k}"),
        }
    }
}

impl TryFrom<String> for Recipe {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Recipe> for String {
    fn from(r: Recipe) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "greedy" {
            return Ok(DecodeMode::Greedy);
        }
        match s.strip_prefix("beam:").map(str::parse::<usize>) {
            Some(Ok(n)) if n >= 1 => Ok(DecodeMode::Beam(n)),
            _ => Err(Error::Config(format!("decode must be `greedy` or `beam:N`, got `{s}`"))),
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeMode::Greedy => write!(f, "greedy"),
            DecodeMode::Beam(n) => write!(f, "beam:{n}"),
        }
    }
}

impl TryFrom<String> for DecodeMode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DecodeMode> for String {
    fn from(d: DecodeMode) -> String {
        d.to_string()
    }
}

/// One row of the experiment grid: architecture, vocabulary and decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub encoder: EncoderKind,
    pub recipe: Recipe,
    pub embedding_dim: usize,
    /// GRU state size (each direction) and CNN output width
    pub hidden_dim: usize,
    pub cnn_window: usize,
    pub decode: DecodeMode,
    pub max_decode_len: usize,
    pub source_min_count: usize,
    pub target_min_count: usize,
    pub bpe_merges: usize,
    pub label_min_count: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::news_commentary()
    }
}

impl ExperimentConfig {
    /// Settings used for the News Commentary runs.
    pub fn news_commentary() -> Self {
        ExperimentConfig {
            encoder: EncoderKind::Birnn,
            recipe: Recipe::Baseline,
            embedding_dim: 256,
            hidden_dim: 512,
            cnn_window: 5,
            decode: DecodeMode::Greedy,
            max_decode_len: 100,
            source_min_count: crate::corpus::vocab::DEFAULT_MIN_COUNT,
            target_min_count: 1,
            bpe_merges: crate::corpus::bpe::NEWS_COMMENTARY_MERGES,
            label_min_count: crate::corpus::vocab::DEFAULT_LABEL_MIN_COUNT,
        }
    }

    /// Settings used for the full WMT16 runs.
    pub fn full_wmt() -> Self {
        ExperimentConfig {
            hidden_dim: 800,
            decode: DecodeMode::Beam(12),
            bpe_merges: crate::corpus::bpe::FULL_DATA_MERGES,
            ..ExperimentConfig::news_commentary()
        }
    }

    pub fn with(mut self, encoder: EncoderKind, recipe: Recipe) -> Self {
        self.encoder = encoder;
        self.recipe = recipe;
        self
    }

    /// Width of the base encoder output, which every GCN layer keeps.
    pub fn state_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Birnn => 2 * self.hidden_dim,
            EncoderKind::Cnn => self.hidden_dim,
        }
    }

    pub fn vocab_settings(&self) -> VocabSettings {
        VocabSettings {
            source_min_count: self.source_min_count,
            target_min_count: self.target_min_count,
            bpe_merges: self.bpe_merges,
            label_min_count: self.label_min_count,
        }
    }

    pub fn batch_options(&self, max_len: usize) -> BatchOptions {
        BatchOptions {
            max_len,
            with_sem: self.recipe.needs_sem(),
            with_syn: self.recipe.needs_syn(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.cnn_window.is_multiple_of(2) {
            return Err(Error::Config(format!("cnn_window must be odd, got {}", self.cnn_window)));
        }
        if self.max_decode_len == 0 {
            return Err(Error::Config("max_decode_len must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// coupled L2 coefficient added to every gradient
    pub l2: f64,
    pub word_retain: f64,
    pub edge_retain: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub max_sentence_len: usize,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            epochs: 50,
            l2: 1e-8,
            word_retain: 0.8,
            edge_retain: 0.8,
            batch_size: 64,
            seed: 1,
            max_sentence_len: 50,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn full_wmt() -> Self {
        TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("word_retain", self.word_retain), ("edge_retain", self.edge_retain)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {p}")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::Config("l2 must be a finite non-negative number".into()));
        }
        if self.batch_size == 0 || self.max_sentence_len == 0 {
            return Err(Error::Config("batch_size and max_sentence_len must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_source: Option<PathBuf>,
    pub train_target: Option<PathBuf>,
    pub valid_source: Option<PathBuf>,
    pub valid_target: Option<PathBuf>,
    pub test_source: Option<PathBuf>,
    pub test_target: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Contents of an experiment config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataConfig,
    pub experiment: ExperimentConfig,
    pub train: TrainConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigFile::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        self.train.validate()
    }
}
