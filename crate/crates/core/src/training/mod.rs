//! Maximum-likelihood training.

mod adam;

pub use adam::{Adam, BETA1, BETA2, EPSILON};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::corpus::{is_special, Batch, EncodedPair, UNK};
use crate::encoders::EncodeMode;
use crate::error::{Error, Result};
use crate::model::Seq2Seq;
use crate::tensor::{Graph, Var};

/// Mean over unmasked rows of `−log softmax(logits)[target]`.
pub fn nll_loss(g: &mut Graph, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
    Ok(g.cross_entropy(logits, targets, mask)?)
}

/// Replaces each non-special id by UNK with probability `1 − retain`.
pub fn word_dropout(ids: &[usize], retain: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if retain >= 1.0 {
        return ids.to_vec();
    }
    ids.iter()
        .map(|&id| {
            if is_special(id) || rng.gen::<f64>() < retain {
                id
            } else {
                UNK
            }
        })
        .collect()
}

/// Groups example indices into batches of similar source length. Order is
/// shuffled within length ties and across batches.
pub fn bucket_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_bleu: Option<f64>,
    pub seconds: f64,
}

impl EpochStats {
    pub fn log_line(&self) -> String {
        let bleu = self.val_bleu.map_or_else(|| "-".to_string(), |b| format!("{b:.2}"));
        format!("{}\t{:.6}\t{}\t{:.2}", self.epoch, self.train_loss, bleu, self.seconds)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// loss of every optimizer step, in order
    pub step_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_bleu: Option<f64>,
    pub skipped: usize,
}

pub type ScoreFn<'a> = Box<dyn FnMut(&Seq2Seq) -> Result<f64> + 'a>;

/// Validation hook: scores the current model, typically BLEU on held-out
/// data.
pub struct Validation<'a> {
    pub every: usize,
    pub score: ScoreFn<'a>,
    /// stop once the score reaches this value
    pub stop_at: Option<f64>,
}

/// Training output locations: `last.ckpt` after every epoch, `best.ckpt`
/// for the best validation score and `metrics.tsv`.
#[derive(Debug, Clone)]
pub struct OutputDir(pub PathBuf);

impl OutputDir {
    pub fn last(&self) -> PathBuf {
        self.0.join("last.ckpt")
    }

    pub fn best(&self) -> PathBuf {
        self.0.join("best.ckpt")
    }

    pub fn metrics(&self) -> PathBuf {
        self.0.join("metrics.tsv")
    }
}

/// Trains `model` in place. With validation the model ends at the best
/// scoring parameters; otherwise at the last epoch's.
pub fn train(
    model: &mut Seq2Seq,
    config: &TrainConfig,
    data: &[EncodedPair],
    mut validation: Option<Validation<'_>>,
    output: Option<&OutputDir>,
) -> Result<TrainReport> {
    config.validate()?;
    let usable: Vec<&EncodedPair> = data
        .iter()
        .filter(|p| !p.source.ids.is_empty() && p.source.ids.len() <= config.max_sentence_len && p.target.len() <= config.max_sentence_len)
        .collect();
    if usable.is_empty() {
        return Err(Error::Data("no training pairs within the length limit".into()));
    }
    let opts = model.config.batch_options(config.max_sentence_len);
    if let Some(out) = output {
        fs::create_dir_all(&out.0).map_err(|e| Error::io(&out.0, e))?;
        write_file(&out.metrics(), "epoch\ttrain_loss\tval_bleu\tseconds\n")?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model.store, config.learning_rate, config.l2);
    adam.clip_norm = config.clip_norm;
    let lengths: Vec<usize> = usable.iter().map(|p| p.source.ids.len()).collect();
    let mut report = TrainReport {
        skipped: data.len() - usable.len(),
        ..TrainReport::default()
    };
    let mut best_store = None;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut total = 0.0;
        let batches = bucket_batches(&lengths, config.batch_size, &mut rng);
        for indices in &batches {
            let examples: Vec<_> = indices
                .iter()
                .map(|&i| (&usable[i].source, Some(usable[i].target.as_slice())))
                .collect();
            let batch = Batch::from_encoded(&examples, opts)?;
            let loss = train_step(model, &mut adam, &batch, config, &mut rng, epoch)?;
            report.step_losses.push(loss);
            total += loss;
        }
        let mut stats = EpochStats {
            epoch,
            train_loss: total / batches.len() as f64,
            val_bleu: None,
            seconds: 0.0,
        };
        let mut stop = false;
        if let Some(v) = validation.as_mut() {
            if epoch % v.every.max(1) == 0 || epoch == config.epochs {
                let score = (v.score)(model)?;
                stats.val_bleu = Some(score);
                if report.best_bleu.is_none_or(|b| score > b) {
                    report.best_bleu = Some(score);
                    report.best_epoch = Some(epoch);
                    best_store = Some(model.store.clone());
                    if let Some(out) = output {
                        model.save(&out.best())?;
                    }
                }
                stop = v.stop_at.is_some_and(|t| score >= t);
            }
        }
        stats.seconds = start.elapsed().as_secs_f64();
        if let Some(out) = output {
            model.save(&out.last())?;
            append_file(&out.metrics(), &format!("{}\n", stats.log_line()))?;
        }
        report.epochs.push(stats);
        if stop {
            break;
        }
    }

    match best_store {
        Some(store) => model.store = store,
        None => {
            report.best_epoch = report.epochs.last().map(|e| e.epoch);
            if let Some(out) = output {
                model.save(&out.best())?;
            }
        }
    }
    Ok(report)
}

/// Forward, backward and one Adam update on a single batch. Returns the
/// batch loss before the update.
pub fn train_step(
    model: &mut Seq2Seq,
    adam: &mut Adam,
    batch: &Batch,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let source = word_dropout(&batch.source, config.word_retain, rng);
    let target_inputs = word_dropout(&batch.target, config.word_retain, rng);
    let mut g = Graph::new();
    let mode = EncodeMode::Train {
        rng,
        edge_retain: config.edge_retain,
    };
    let loss = model.loss(&mut g, batch, Some(&source), Some(&target_inputs), mode)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { epoch });
    }
    model.store.zero_grads();
    g.backward(loss, &mut model.store)?;
    adam.step(&mut model.store)?;
    Ok(value)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn append_file(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Renders a full metrics log from a report.
pub fn metrics_log(report: &TrainReport) -> String {
    let mut s = String::from("epoch\ttrain_loss\tval_bleu\tseconds\n");
    for e in &report.epochs {
        let _ = writeln!(s, "{}", e.log_line());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EncoderKind, ExperimentConfig, Recipe};
    use crate::corpus::{EncodedSource, LabeledEdge, BOS, EOS, PAD};
    use crate::model::ModelSizes;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_logits_cost_log_vocab() {
        let mut g = Graph::new();
        let logits = g.constant(2, 5, vec![0.3; 10]).unwrap();
        let l = nll_loss(&mut g, logits, &[1, 4], &[true, true]).unwrap();
        assert_abs_diff_eq!(g.scalar(l), 5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn confident_correct_logit_costs_nothing() {
        let mut g = Graph::new();
        let logits = g.constant(1, 3, vec![0.0, 800.0, 0.0]).unwrap();
        let l = nll_loss(&mut g, logits, &[1], &[true]).unwrap();
        assert!(g.scalar(l) < 1e-300);
    }

    #[test]
    fn two_step_hand_case() {
        let mut g = Graph::new();
        let rows = [[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0], [9.0, 9.0, 9.0]];
        let logits = g.constant(3, 3, rows.concat()).unwrap();
        let l = nll_loss(&mut g, logits, &[0, 2, 1], &[true, true, false]).unwrap();
        let nll = |r: [f64; 3], t: usize| (r[0].exp() + r[1].exp() + r[2].exp()).ln() - r[t];
        assert_abs_diff_eq!(g.scalar(l), (nll(rows[0], 0) + nll(rows[1], 2)) / 2.0, epsilon = 1e-15);
        let l = g.constant(1, 3, vec![0.0; 3]).unwrap();
        assert!(nll_loss(&mut g, l, &[0], &[false]).is_err());
    }

    #[test]
    fn word_dropout_rate_and_specials() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ids: Vec<usize> = (0..100_000).map(|i| 4 + i % 50).collect();
        let out = word_dropout(&ids, 0.8, &mut rng);
        let rate = out.iter().filter(|&&x| x == UNK).count() as f64 / ids.len() as f64;
        // binomial sd is sqrt(0.2·0.8/1e5) ≈ 0.0013
        assert!((rate - 0.2).abs() < 0.01, "{rate}");
        let specials = vec![PAD, BOS, EOS, UNK, PAD];
        assert_eq!(word_dropout(&specials, 0.01, &mut rng), specials);
        assert_eq!(word_dropout(&ids, 1.0, &mut rng), ids);
    }

    #[test]
    fn buckets_cover_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lengths: Vec<usize> = (0..23).map(|i| 1 + (i * 7) % 11).collect();
        let batches = bucket_batches(&lengths, 4, &mut rng);
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(batches.iter().all(|b| b.len() <= 4));
        // each batch spans a narrow length range
        for b in &batches {
            let (lo, hi) = (b.iter().map(|&i| lengths[i]).min().unwrap(), b.iter().map(|&i| lengths[i]).max().unwrap());
            assert!(hi - lo <= 2);
        }
    }

    fn tiny_model(seed: u64) -> Seq2Seq {
        let mut c = ExperimentConfig::news_commentary().with(EncoderKind::Birnn, Recipe::Sem(1));
        c.embedding_dim = 8;
        c.hidden_dim = 8;
        let sizes = ModelSizes {
            source_vocab: 8,
            target_vocab: 8,
            sem_labels: 2,
            syn_labels: 1,
        };
        Seq2Seq::new(&c, sizes, seed).unwrap()
    }

    fn one_pair() -> Vec<EncodedPair> {
        vec![EncodedPair {
            source: EncodedSource {
                ids: vec![4, 5, 6],
                sem: vec![LabeledEdge { head: 1, dep: 0, label: 1 }],
                syn: vec![],
            },
            target: vec![7, 5, 6, 4],
        }]
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            epochs,
            word_retain: 1.0,
            edge_retain: 1.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn memorizes_one_pair() {
        let mut model = tiny_model(1);
        let report = train(&mut model, &quick_config(200), &one_pair(), None, None).unwrap();
        let last = report.epochs.last().unwrap().train_loss;
        assert!(last < 0.01, "{last}");
    }

    #[test]
    fn same_seed_same_curve() {
        let config = TrainConfig {
            epochs: 5,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model = tiny_model(2);
            train(&mut model, &config, &one_pair(), None, None).unwrap().step_losses
        };
        let (a, b) = (run(), run());
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn writes_checkpoints_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir(dir.path().join("run"));
        let mut model = tiny_model(3);
        let mut calls = 0;
        let validation = Validation {
            every: 1,
            score: Box::new(|_m: &Seq2Seq| {
                calls += 1;
                Ok([10.0, 30.0, 20.0][calls - 1])
            }),
            stop_at: None,
        };
        let report = train(&mut model, &quick_config(3), &one_pair(), Some(validation), Some(&out)).unwrap();
        assert_eq!(report.best_epoch, Some(2));
        let log = fs::read_to_string(out.metrics()).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "epoch\ttrain_loss\tval_bleu\tseconds");
        assert_eq!(lines[2].split('\t').nth(2), Some("30.00"));
        assert!(out.last().exists() && out.best().exists());
        let best = crate::tensor::load_checkpoint(&out.best()).unwrap();
        let restored: Vec<f64> = best.iter().flat_map(|(_, t)| t.values().to_vec()).collect();
        let current: Vec<f64> = model.store.iter().flat_map(|(_, t)| t.values().to_vec()).collect();
        assert_eq!(restored, current);
    }

    #[test]
    fn early_stop_on_target_score() {
        let mut model = tiny_model(4);
        let validation = Validation {
            every: 1,
            score: Box::new(|_m: &Seq2Seq| Ok(99.0)),
            stop_at: Some(95.0),
        };
        let report = train(&mut model, &quick_config(10), &one_pair(), Some(validation), None).unwrap();
        assert_eq!(report.epochs.len(), 1);
    }

    #[test]
    fn exploding_loss_is_reported() {
        let mut model = tiny_model(5);
        let id = model.store.id("decoder.out.b").unwrap();
        model.store.get_mut(id).values_mut()[4] = f64::NAN;
        match train(&mut model, &quick_config(1), &one_pair(), None, None) {
            Err(Error::NonFiniteLoss { epoch: 1 }) => {}
            other => panic!("{other:?}"),
        }
    }
}
