use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gcn_nmt::config::{ConfigFile, DecodeMode, EncoderKind, Recipe};
use gcn_nmt::evaluation::{
    load_model, load_vocabs, output_dir, preprocess, run_experiment, run_grid, score_files, train_from_config, translate_file, Grid,
    SummaryRow,
};
use gcn_nmt::training::OutputDir;

#[derive(Parser)]
#[command(name = "gcn-nmt", version, about = "Translation with graph-convolutional encoders over semantic and syntactic graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build vocabularies, BPE merges and label sets from the training data
    Preprocess(Common),
    /// Train a model; writes last.ckpt, best.ckpt and metrics.tsv
    Train(Common),
    /// Translate an annotated (CoNLL) source file
    Translate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// defaults to stdout
        #[arg(long)]
        output: Option<PathBuf>,
        /// defaults to <output_dir>/best.ckpt
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Corpus BLEU of a hypothesis file against a reference file
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// preprocess, train, translate and score; optionally over a grid
    Experiment {
        #[command(flatten)]
        common: Common,
        /// paper-small | paper-full | paper-ablation
        #[arg(long)]
        grid: Option<Grid>,
        /// print the grid cells and exit
        #[arg(long, requires = "grid")]
        list: bool,
        /// use the grid's published hyperparameters instead of the config's
        #[arg(long, requires = "grid")]
        preset: bool,
    },
}

/// Config file plus overrides; flags win over file values.
#[derive(Args)]
struct Common {
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    recipe: Option<Recipe>,
    #[arg(long, conflicts_with = "greedy")]
    beam: Option<usize>,
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ConfigFile> {
        let mut cfg = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut ConfigFile) {
        let (exp, train) = (&mut cfg.experiment, &mut cfg.train);
        if let Some(d) = &self.output_dir {
            cfg.data.output_dir = Some(d.clone());
        }
        if let Some(e) = self.encoder {
            exp.encoder = e;
        }
        if let Some(r) = self.recipe {
            exp.recipe = r;
        }
        if let Some(k) = self.beam {
            exp.decode = DecodeMode::Beam(k);
        }
        if self.greedy {
            exp.decode = DecodeMode::Greedy;
        }
        if let Some(d) = self.embedding_dim {
            exp.embedding_dim = d;
        }
        if let Some(d) = self.hidden_dim {
            exp.hidden_dim = d;
        }
        if let Some(n) = self.epochs {
            train.epochs = n;
        }
        if let Some(lr) = self.learning_rate {
            train.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            train.batch_size = b;
        }
        if let Some(s) = self.seed {
            train.seed = s;
        }
    }
}

fn write_lines(path: Option<&Path>, lines: &[String]) -> Result<()> {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(common) => {
            let cfg = common.load().context("config")?;
            let vocabs = preprocess(&cfg).context("preprocess")?;
            eprintln!(
                "source {} / target {} tokens, {} semantic and {} syntactic labels",
                vocabs.source.len(),
                vocabs.target.len(),
                vocabs.sem_labels.len(),
                vocabs.syn_labels.len()
            );
        }
        Command::Train(common) => {
            let cfg = common.load().context("config")?;
            let vocabs = load_vocabs(&cfg).context("train")?;
            let (_, report) = train_from_config(&cfg, &vocabs).context("train")?;
            for e in &report.epochs {
                eprintln!("{}", e.log_line());
            }
            eprintln!("checkpoints in {}", output_dir(&cfg).display());
        }
        Command::Translate {
            common,
            input,
            output,
            checkpoint,
        } => {
            let cfg = common.load().context("config")?;
            let lines = (|| -> Result<Vec<String>> {
                let vocabs = load_vocabs(&cfg)?;
                let ckpt = checkpoint.unwrap_or_else(|| OutputDir(output_dir(&cfg)).best());
                let model = load_model(&cfg, &vocabs, &ckpt)?;
                Ok(translate_file(&model, &vocabs, &input, cfg.experiment.decode)?)
            })()
            .context("translate")?;
            write_lines(output.as_deref(), &lines).context("translate")?;
        }
        Command::Score { hyp, reference } => {
            let report = score_files(&hyp, &reference).context("score")?;
            println!("{report}");
        }
        Command::Experiment {
            common,
            grid,
            list,
            preset,
        } => {
            let mut cfg = common.load().context("config")?;
            match grid {
                None => {
                    let row = run_experiment(&cfg)?;
                    println!("{}\n{row}", SummaryRow::HEADER);
                }
                Some(grid) if list => {
                    println!("encoder\trecipe\treference");
                    for c in grid.cells() {
                        println!("{}\t{}\t{:.1}", c.encoder, c.recipe, c.reference);
                    }
                }
                Some(grid) => {
                    if preset {
                        (cfg.experiment, cfg.train) = grid.preset();
                        common.apply(&mut cfg);
                    }
                    let rows = run_grid(&cfg, grid)?;
                    println!("{}", SummaryRow::HEADER);
                    for r in rows {
                        println!("{r}");
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
