//! Evaluation and the configuration-grid harness.
//!
//! [`evaluate`] scores a trained model on a segmented corpus, producing
//! accuracy and a 5×5 confusion matrix. [`run_grid`] trains and evaluates an
//! ordered list of named configurations over several seeds — the ablation
//! ladder from single-frame baseline to the full contextual model — and
//! reports per-seed cells plus median summaries.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::classifier::argmax_label;
use crate::encoder::{Direction, Pooling};
use crate::features::{DurationStats, SegmentScope, Utterance, TONE_COUNT};
use crate::training::{
    build_examples, example_posterior, train, Hyperparams, ModelConfig, ModelParams, TrainError,
    TrainingExample,
};

/// Classification quality of one model on one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Fraction of syllables classified correctly.
    pub accuracy: f64,
    /// `confusion[r][h]`: syllables of reference tone `r` classified as `h`.
    pub confusion: [[u64; TONE_COUNT]; TONE_COUNT],
    pub n_examples: usize,
    /// Short description of the configuration that produced the model.
    pub config_id: String,
}

impl EvalReport {
    /// Reference count of each tone (confusion row sums).
    pub fn reference_counts(&self) -> [u64; TONE_COUNT] {
        let mut counts = [0u64; TONE_COUNT];
        for (r, row) in self.confusion.iter().enumerate() {
            counts[r] = row.iter().sum();
        }
        counts
    }
}

/// Scores already-built examples. The core of [`evaluate`], also used by the
/// grid to avoid rebuilding examples per seed.
pub fn evaluate_examples(
    params: &ModelParams,
    cfg: &ModelConfig,
    examples: &[TrainingExample],
) -> Result<EvalReport, TrainError> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut confusion = [[0u64; TONE_COUNT]; TONE_COUNT];
    let mut correct = 0usize;
    for ex in examples {
        let posterior = example_posterior(ex, params, cfg)?;
        let hyp = argmax_label(&posterior);
        confusion[ex.label.index()][hyp.index()] += 1;
        if hyp == ex.label {
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / examples.len() as f64,
        confusion,
        n_examples: examples.len(),
        config_id: cfg.describe(),
    })
}

/// Classifies every syllable of every utterance, with contexts and durations
/// drawn from the same utterance under the training rules (missing
/// neighbours contribute zero embeddings).
///
/// The corpus must already be speaker-normalized; `stats` are the duration
/// statistics frozen from the training split, required exactly when `cfg`
/// uses duration features.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    corpus: &[Utterance],
    stats: Option<&DurationStats>,
) -> Result<EvalReport, TrainError> {
    let examples = build_examples(corpus, cfg, stats)?;
    evaluate_examples(params, cfg, &examples)
}

/// One named configuration in a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub name: String,
    pub cfg: ModelConfig,
}

/// An ordered list of named configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: Vec<GridRow>,
}

impl GridSpec {
    /// Validates the grid structure: at least one row, unique names.
    ///
    /// Individual row configs are deliberately not checked here — a row
    /// with an unusable config fails during its own run and is recorded as
    /// a row-level failure without stopping the grid.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.rows.is_empty() {
            return Err(TrainError::ConfigMismatch("grid has no rows"));
        }
        for (i, row) in self.rows.iter().enumerate() {
            for other in &self.rows[..i] {
                if other.name == row.name {
                    return Err(TrainError::ConfigMismatch("grid row names must be unique"));
                }
            }
        }
        Ok(())
    }
}

/// The ablation ladder: each row changes one ingredient over the previous
/// ones, from a single-frame last-pooling baseline on syllable finals to the
/// full model with spliced inputs, average pooling over whole syllables,
/// both neighbouring tone embeddings, and duration features.
///
/// Rows whose label would repeat an earlier one carry a "Syllable" prefix
/// (the scope group they belong to) to keep names unique.
pub fn ablation_grid(hidden_size: usize) -> GridSpec {
    let cfg = |radius: usize,
               scope: SegmentScope,
               direction: Direction,
               pooling: Pooling,
               prec: bool,
               succ: bool,
               dur: bool| {
        ModelConfig::assemble(
            radius, scope, direction, pooling, hidden_size, prec, succ, dur, 10,
        )
    };
    use Direction::{Backward, Bidirectional, Forward};
    use Pooling::{Average, Last, Max};
    use SegmentScope::{FinalOnly, FullSyllable};
    let rows = alloc::vec![
        ("Baseline", cfg(0, FinalOnly, Forward, Last, false, false, false)),
        ("Splicing", cfg(4, FinalOnly, Forward, Last, false, false, false)),
        ("Average Pooling", cfg(4, FinalOnly, Forward, Average, false, false, false)),
        ("Max Pooling", cfg(4, FinalOnly, Forward, Max, false, false, false)),
        ("Syllable Average Pooling", cfg(4, FullSyllable, Forward, Average, false, false, false)),
        ("Syllable Max Pooling", cfg(4, FullSyllable, Forward, Max, false, false, false)),
        ("Backward RNN", cfg(4, FullSyllable, Backward, Average, false, false, false)),
        ("Bi-directional RNN", cfg(4, FullSyllable, Bidirectional, Average, false, false, false)),
        ("+Preceeding", cfg(4, FullSyllable, Forward, Average, true, false, false)),
        ("+Succeeding", cfg(4, FullSyllable, Forward, Average, false, true, false)),
        ("+Both", cfg(4, FullSyllable, Forward, Average, true, true, false)),
        ("+Duration", cfg(4, FullSyllable, Forward, Average, true, true, true)),
    ];
    GridSpec {
        rows: rows
            .into_iter()
            .map(|(name, cfg)| GridRow {
                name: name.to_string(),
                cfg,
            })
            .collect(),
    }
}

/// One trained-and-evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub row: String,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// A row/seed combination whose training or evaluation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFailure {
    pub row: String,
    pub seed: u64,
    pub error: TrainError,
}

/// Everything a grid run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Cells in run order: rows in grid order, seeds in given order.
    pub cells: Vec<GridCell>,
    pub failures: Vec<GridFailure>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracies"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl GridOutcome {
    /// Median test accuracy of a row over its successful seeds.
    pub fn median_test_accuracy(&self, row: &str) -> Option<f64> {
        median(
            self.cells
                .iter()
                .filter(|c| c.row == row)
                .map(|c| c.test_accuracy)
                .collect(),
        )
    }

    /// Median train accuracy of a row over its successful seeds.
    pub fn median_train_accuracy(&self, row: &str) -> Option<f64> {
        median(
            self.cells
                .iter()
                .filter(|c| c.row == row)
                .map(|c| c.train_accuracy)
                .collect(),
        )
    }

    /// Full-precision per-cell CSV: `row,seed,train_acc,test_acc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,seed,train_acc,test_acc\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.row, c.seed, c.train_accuracy, c.test_accuracy
            ));
        }
        out
    }

    /// Human-readable median summary, one row per grid row, accuracies to
    /// one decimal place in percent.
    pub fn summary(&self, grid: &GridSpec) -> String {
        let mut out = String::new();
        let width = grid.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for row in &grid.rows {
            let train = self.median_train_accuracy(&row.name);
            let test = self.median_test_accuracy(&row.name);
            match (train, test) {
                (Some(tr), Some(te)) => out.push_str(&format!(
                    "{:width$}  train {:5.1}%  test {:5.1}%\n",
                    row.name,
                    100.0 * tr,
                    100.0 * te,
                )),
                _ => out.push_str(&format!("{:width$}  failed\n", row.name)),
            }
        }
        out
    }
}

/// Trains and evaluates every grid row with every seed.
///
/// Both corpora must already be speaker-normalized. Duration statistics are
/// computed from the training corpus once and reused for every row that
/// needs them. A row/seed whose training fails is recorded as a failure and
/// the run continues; corpus-level problems abort the whole grid.
pub fn run_grid(
    grid: &GridSpec,
    train_corpus: &[Utterance],
    test_corpus: &[Utterance],
    hp: &Hyperparams,
    seeds: &[u64],
) -> Result<GridOutcome, TrainError> {
    grid.validate()?;
    if seeds.is_empty() {
        return Err(TrainError::BadHyperparams("at least one seed is required"));
    }
    let needs_duration = grid.rows.iter().any(|r| r.cfg.classifier.use_duration);
    let stats = if needs_duration {
        Some(DurationStats::from_corpus(train_corpus)?)
    } else {
        None
    };

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for row in &grid.rows {
        let prepared = build_examples(train_corpus, &row.cfg, stats.as_ref())
            .and_then(|tr| Ok((tr, build_examples(test_corpus, &row.cfg, stats.as_ref())?)));
        let (train_ex, test_ex) = match prepared {
            Ok(pair) => pair,
            Err(error) => {
                // The row is unusable independent of seed.
                for &seed in seeds {
                    failures.push(GridFailure {
                        row: row.name.clone(),
                        seed,
                        error: error.clone(),
                    });
                }
                continue;
            }
        };
        for &seed in seeds {
            let hp_seeded = Hyperparams { seed, ..*hp };
            let outcome = train(&train_ex, &row.cfg, &hp_seeded).and_then(|(params, _)| {
                let tr = evaluate_examples(&params, &row.cfg, &train_ex)?;
                let te = evaluate_examples(&params, &row.cfg, &test_ex)?;
                Ok((tr, te))
            });
            match outcome {
                Ok((tr, te)) => cells.push(GridCell {
                    row: row.name.clone(),
                    seed,
                    train_accuracy: tr.accuracy,
                    test_accuracy: te.accuracy,
                }),
                Err(error) => failures.push(GridFailure {
                    row: row.name.clone(),
                    seed,
                    error,
                }),
            }
        }
    }
    Ok(GridOutcome { cells, failures })
}
