//! `tone` — synthesize corpora, train, and evaluate the tone classifier.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tone_cli::{config, corpus, model, report};
use tone_core::eval::{evaluate, ablation_grid, run_grid};
use tone_core::features::{normalize_by_speaker, DurationStats, Utterance};
use tone_core::syncorpus::generate;
use tone_core::training::{build_examples, grad_check, train_with, Hyperparams};

#[derive(Parser)]
#[command(name = "tone", version, about = "Mandarin tone classification with a recurrent encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test corpus pair.
    GenData {
        /// Generator spec file (key = value).
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Output path for the training corpus.
        #[arg(long, value_name = "PATH")]
        out_train: PathBuf,
        /// Output path for the test corpus.
        #[arg(long, value_name = "PATH")]
        out_test: PathBuf,
        /// Override the seed in the spec file.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Train a model; logs one CSV line per epoch to stdout.
    Train {
        /// Model configuration file (key = value).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Training corpus.
        #[arg(long, value_name = "CORPUS")]
        train: PathBuf,
        /// Hyperparameter file; defaults apply when omitted.
        #[arg(long, value_name = "FILE")]
        hyper: Option<PathBuf>,
        /// Output path for the trained model.
        #[arg(long, value_name = "PATH")]
        out_model: PathBuf,
    },
    /// Evaluate a trained model on a corpus.
    Eval {
        /// Trained model file.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Model configuration the model was trained with.
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Corpus to score.
        #[arg(long, value_name = "CORPUS")]
        corpus: PathBuf,
        /// Output path for the report CSV.
        #[arg(long, value_name = "CSV")]
        report: PathBuf,
    },
    /// Check analytic gradients against central finite differences.
    GradCheck {
        /// Seed for the probe example and parameters.
        #[arg(long, value_name = "N", default_value_t = 1)]
        seed: u64,
        /// Finite-difference step.
        #[arg(long, value_name = "E", default_value_t = 1e-5)]
        epsilon: f64,
    },
    /// Train and score every configuration in an experiment grid.
    Grid {
        /// Grid file; an empty file selects the built-in grid.
        #[arg(long, value_name = "FILE")]
        grid: PathBuf,
        /// Training corpus.
        #[arg(long, value_name = "CORPUS")]
        train: PathBuf,
        /// Test corpus.
        #[arg(long, value_name = "CORPUS")]
        test: PathBuf,
        /// Comma-separated training seeds.
        #[arg(long, value_name = "LIST", default_value = "1,2,3")]
        seeds: String,
        /// Hyperparameter file shared by all rows; defaults when omitted.
        #[arg(long, value_name = "FILE")]
        hyper: Option<PathBuf>,
        /// Output path for the per-cell CSV.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            spec,
            out_train,
            out_test,
            seed,
        } => cmd_gen_data(&spec, &out_train, &out_test, seed),
        Command::Train {
            config,
            train,
            hyper,
            out_model,
        } => cmd_train(&config, &train, hyper.as_deref(), &out_model),
        Command::Eval {
            model,
            config,
            corpus,
            report,
        } => cmd_eval(&model, &config, &corpus, &report),
        Command::GradCheck { seed, epsilon } => cmd_grad_check(seed, epsilon),
        Command::Grid {
            grid,
            train,
            test,
            seeds,
            hyper,
            out,
        } => cmd_grid(&grid, &train, &test, &seeds, hyper.as_deref(), &out),
    }
}

/// Reads a corpus file and applies per-speaker normalization.
fn load_normalized(path: &Path) -> Result<Vec<Utterance>> {
    let raw = corpus::read_corpus(path)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    let normalized = normalize_by_speaker(&raw)
        .with_context(|| format!("normalizing corpus {}", path.display()))?;
    Ok(normalized)
}

fn load_hyperparams(path: Option<&Path>) -> Result<Hyperparams> {
    match path {
        None => Ok(Hyperparams::default()),
        Some(p) => config::read_hyperparams(p)
            .with_context(|| format!("reading hyperparameters {}", p.display())),
    }
}

fn syllable_count(corpus: &[Utterance]) -> usize {
    corpus.iter().map(|u| u.syllables.len()).sum()
}

fn cmd_gen_data(
    spec_path: &Path,
    out_train: &Path,
    out_test: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let mut spec = config::read_generator_spec(spec_path)
        .with_context(|| format!("reading generator spec {}", spec_path.display()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let (train, test) = generate(&spec).context("generating corpus")?;
    corpus::write_corpus(out_train, &train)
        .with_context(|| format!("writing {}", out_train.display()))?;
    corpus::write_corpus(out_test, &test)
        .with_context(|| format!("writing {}", out_test.display()))?;
    println!(
        "wrote {} train syllables in {} utterances to {}",
        syllable_count(&train),
        train.len(),
        out_train.display()
    );
    println!(
        "wrote {} test syllables in {} utterances to {}",
        syllable_count(&test),
        test.len(),
        out_test.display()
    );
    Ok(())
}

fn cmd_train(
    config_path: &Path,
    train_path: &Path,
    hyper_path: Option<&Path>,
    out_model: &Path,
) -> Result<()> {
    let cfg = config::read_model_config(config_path)
        .with_context(|| format!("reading model config {}", config_path.display()))?;
    let hp = load_hyperparams(hyper_path)?;
    let train_corpus = load_normalized(train_path)?;
    let stats = if cfg.classifier.use_duration {
        Some(DurationStats::from_corpus(&train_corpus).context("computing duration statistics")?)
    } else {
        None
    };
    let examples =
        build_examples(&train_corpus, &cfg, stats.as_ref()).context("building examples")?;

    println!("epoch,mean_loss,train_acc,wall_ms");
    let mut epoch_start = Instant::now();
    let (params, _) = train_with(&examples, &cfg, &hp, |stats| {
        let wall_ms = epoch_start.elapsed().as_millis();
        epoch_start = Instant::now();
        println!(
            "{},{},{},{wall_ms}",
            stats.epoch, stats.mean_loss, stats.train_accuracy
        );
    })
    .context("training")?;

    model::save_model(out_model, &params, stats.as_ref())
        .with_context(|| format!("writing model {}", out_model.display()))?;
    Ok(())
}

fn cmd_eval(
    model_path: &Path,
    config_path: &Path,
    corpus_path: &Path,
    report_path: &Path,
) -> Result<()> {
    let cfg = config::read_model_config(config_path)
        .with_context(|| format!("reading model config {}", config_path.display()))?;
    let (params, stats) = model::load_model(model_path, &cfg)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let corpus = load_normalized(corpus_path)?;
    let rep = evaluate(&params, &cfg, &corpus, stats.as_ref()).context("evaluating")?;
    report::write_eval_report(report_path, &rep)
        .with_context(|| format!("writing report {}", report_path.display()))?;
    println!("{}", report::eval_summary(&rep));
    Ok(())
}

fn cmd_grad_check(seed: u64, epsilon: f64) -> Result<()> {
    // Every experiment configuration at a small hidden size; the check walks
    // all parameters, so small keeps it quick while exercising each code
    // path (directions, poolings, contexts, duration).
    let grid = ablation_grid(8);
    let mut max_err = 0.0f64;
    for row in &grid.rows {
        let err = grad_check(&row.cfg, seed, epsilon)
            .with_context(|| format!("gradient check for {}", row.name))?;
        println!("{}: max relative error {err:e}", row.name);
        max_err = max_err.max(err);
    }
    println!("max relative error {max_err:e}");
    if max_err >= 1e-4 {
        bail!("gradient check failed: max relative error {max_err:e} >= 1e-4");
    }
    Ok(())
}

fn cmd_grid(
    grid_path: &Path,
    train_path: &Path,
    test_path: &Path,
    seeds: &str,
    hyper_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let grid = config::read_grid(grid_path)
        .with_context(|| format!("reading grid {}", grid_path.display()))?;
    let seeds = config::parse_seeds(seeds)?;
    let hp = load_hyperparams(hyper_path)?;
    let train_corpus = load_normalized(train_path)?;
    let test_corpus = load_normalized(test_path)?;

    let outcome =
        run_grid(&grid, &train_corpus, &test_corpus, &hp, &seeds).context("running grid")?;
    fs::write(out, outcome.to_csv())
        .with_context(|| format!("writing grid results {}", out.display()))?;
    for failure in &outcome.failures {
        eprintln!(
            "row {:?} seed {} failed: {}",
            failure.row, failure.seed, failure.error
        );
    }
    print!("{}", outcome.summary(&grid));
    Ok(())
}
