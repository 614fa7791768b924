//! Flat `key = value` configuration files.
//!
//! One setting per line; `#` starts a full-line comment; blank lines are
//! ignored. Every key is optional and falls back to its default, but an
//! unknown or repeated key is an error — a typo must not silently become a
//! default run. Semantic range checks (positive sizes, priors summing to
//! one, …) live with the types themselves and fire when the value is used.
//!
//! Grid files describe one experiment row per `row.N.*` group:
//!
//! ```text
//! hidden_size = 32          # default for every row
//! row.0.name = Baseline
//! row.0.scope = final
//! row.0.pooling = last
//! row.0.splice_radius = 0
//! row.1.name = Spliced
//! ```
//!
//! A grid file without any `row.N.*` keys selects the built-in experiment
//! grid at the configured hidden size.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use tone_core::encoder::{Direction, Pooling};
use tone_core::eval::{ablation_grid, GridRow, GridSpec};
use tone_core::features::SegmentScope;
use tone_core::syncorpus::GeneratorSpec;
use tone_core::training::{Hyperparams, ModelConfig};

/// Hidden size used when a config file does not set one.
pub const DEFAULT_HIDDEN_SIZE: usize = 32;

/// Default splice radius for model configs.
pub const DEFAULT_SPLICE_RADIUS: usize = 4;

/// Default width of the duration branch.
pub const DEFAULT_DUR_HIDDEN: usize = 10;

/// Errors from configuration files and list-valued flags.
#[derive(Debug)]
pub enum ConfigError {
    Io(io::Error),
    /// A malformed line or value; the message names the key.
    Parse { line: usize, what: String },
    /// A key this file kind does not define.
    UnknownKey { line: usize, key: String },
    /// The same key given twice.
    DuplicateKey { line: usize, key: String },
    /// A bad flag value (no file position).
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "{e}"),
            ConfigError::Parse { line, what } => write!(f, "line {line}: {what}"),
            ConfigError::UnknownKey { line, key } => {
                write!(f, "line {line}: unknown key {key:?}")
            }
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "line {line}: duplicate key {key:?}")
            }
            ConfigError::Invalid(what) => write!(f, "{what}"),
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ConfigError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for ConfigError {
    fn from(e: io::Error) -> Self {
        ConfigError::Io(e)
    }
}

/// A parsed key=value file with take-and-check-leftovers access.
struct KvFile {
    /// `(key, value, 1-based line)` in file order; `take` removes entries.
    entries: Vec<(String, String, usize)>,
}

impl KvFile {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: lineno,
                what: format!("expected 'key = value', got {line:?}"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line: lineno,
                    what: "empty key".to_string(),
                });
            }
            if entries.iter().any(|(k, _, _)| *k == key) {
                return Err(ConfigError::DuplicateKey { line: lineno, key });
            }
            entries.push((key, value, lineno));
        }
        Ok(KvFile { entries })
    }

    /// Removes and returns the entry for `key`.
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let at = self.entries.iter().position(|(k, _, _)| k == key)?;
        let (_, value, line) = self.entries.remove(at);
        Some((value, line))
    }

    /// Parses `key` into `T` when present.
    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|_| ConfigError::Parse {
                line,
                what: format!("bad value {value:?} for key {key:?}"),
            }),
        }
    }

    /// Like `get` with a default.
    fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn get_bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((value, line)) => match value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(ConfigError::Parse {
                    line,
                    what: format!("bad value {value:?} for key {key:?}: expected true or false"),
                }),
            },
        }
    }

    /// Errors on the first remaining (never taken) key.
    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, _, line)) => Err(ConfigError::UnknownKey { line, key }),
        }
    }
}

fn keyword<T: Copy>(
    kv: &mut KvFile,
    key: &str,
    table: &[(&str, T)],
    default: T,
) -> Result<T, ConfigError> {
    match kv.take(key) {
        None => Ok(default),
        Some((value, line)) => table
            .iter()
            .find(|(name, _)| *name == value)
            .map(|&(_, v)| v)
            .ok_or_else(|| {
                let options: Vec<&str> = table.iter().map(|&(name, _)| name).collect();
                ConfigError::Parse {
                    line,
                    what: format!(
                        "bad value {value:?} for key {key:?}: expected one of {}",
                        options.join(", ")
                    ),
                }
            }),
    }
}

fn model_config_from_kv(
    kv: &mut KvFile,
    default_hidden: usize,
) -> Result<ModelConfig, ConfigError> {
    let splice_radius = kv.get_or("splice_radius", DEFAULT_SPLICE_RADIUS)?;
    let scope = keyword(
        kv,
        "scope",
        &[
            ("syllable", SegmentScope::FullSyllable),
            ("final", SegmentScope::FinalOnly),
        ],
        SegmentScope::FullSyllable,
    )?;
    let direction = keyword(
        kv,
        "direction",
        &[
            ("forward", Direction::Forward),
            ("backward", Direction::Backward),
            ("bidirectional", Direction::Bidirectional),
        ],
        Direction::Forward,
    )?;
    let pooling = keyword(
        kv,
        "pooling",
        &[
            ("last", Pooling::Last),
            ("average", Pooling::Average),
            ("max", Pooling::Max),
        ],
        Pooling::Average,
    )?;
    let hidden_size = kv.get_or("hidden_size", default_hidden)?;
    let use_preceding = kv.get_bool_or("use_preceding", false)?;
    let use_succeeding = kv.get_bool_or("use_succeeding", false)?;
    let use_duration = kv.get_bool_or("use_duration", false)?;
    let dur_hidden = kv.get_or("dur_hidden", DEFAULT_DUR_HIDDEN)?;
    Ok(ModelConfig::assemble(
        splice_radius,
        scope,
        direction,
        pooling,
        hidden_size,
        use_preceding,
        use_succeeding,
        use_duration,
        dur_hidden,
    ))
}

/// Parses a model configuration.
pub fn parse_model_config(text: &str) -> Result<ModelConfig, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let cfg = model_config_from_kv(&mut kv, DEFAULT_HIDDEN_SIZE)?;
    kv.finish()?;
    Ok(cfg)
}

/// Reads a model configuration file.
pub fn read_model_config(path: &Path) -> Result<ModelConfig, ConfigError> {
    parse_model_config(&fs::read_to_string(path)?)
}

/// Parses hyperparameters, starting from the defaults.
pub fn parse_hyperparams(text: &str) -> Result<Hyperparams, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let mut hp = Hyperparams::default();
    hp.learning_rate = kv.get_or("learning_rate", hp.learning_rate)?;
    hp.minibatch_size = kv.get_or("minibatch_size", hp.minibatch_size)?;
    hp.epochs = kv.get_or("epochs", hp.epochs)?;
    hp.grad_clip_norm = match kv.take("grad_clip_norm") {
        None => hp.grad_clip_norm,
        Some((value, _)) if value == "none" => None,
        Some((value, line)) => Some(value.parse().map_err(|_| ConfigError::Parse {
            line,
            what: format!(
                "bad value {value:?} for key \"grad_clip_norm\": expected a number or none"
            ),
        })?),
    };
    hp.init_scale = kv.get_or("init_scale", hp.init_scale)?;
    hp.seed = kv.get_or("seed", hp.seed)?;
    kv.finish()?;
    Ok(hp)
}

/// Reads a hyperparameter file.
pub fn read_hyperparams(path: &Path) -> Result<Hyperparams, ConfigError> {
    parse_hyperparams(&fs::read_to_string(path)?)
}

/// Parses a corpus generator spec, starting from the defaults.
pub fn parse_generator_spec(text: &str) -> Result<GeneratorSpec, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let mut spec = GeneratorSpec::default();
    spec.n_train_syllables = kv.get_or("n_train_syllables", spec.n_train_syllables)?;
    spec.n_test_syllables = kv.get_or("n_test_syllables", spec.n_test_syllables)?;
    spec.syllables_per_utterance = (
        kv.get_or("syllables_min", spec.syllables_per_utterance.0)?,
        kv.get_or("syllables_max", spec.syllables_per_utterance.1)?,
    );
    spec.speakers = kv.get_or("speakers", spec.speakers)?;
    if let Some((value, line)) = kv.take("tone_priors") {
        let parts: Vec<&str> = value.split(',').map(str::trim).collect();
        if parts.len() != spec.tone_priors.len() {
            return Err(ConfigError::Parse {
                line,
                what: format!(
                    "key \"tone_priors\" needs {} comma-separated values, got {}",
                    spec.tone_priors.len(),
                    parts.len()
                ),
            });
        }
        for (slot, part) in spec.tone_priors.iter_mut().zip(parts) {
            *slot = part.parse().map_err(|_| ConfigError::Parse {
                line,
                what: format!("bad value {part:?} in key \"tone_priors\""),
            })?;
        }
    }
    spec.tone_repeat_prob = kv.get_or("tone_repeat_prob", spec.tone_repeat_prob)?;
    spec.coarticulation_strength =
        kv.get_or("coarticulation_strength", spec.coarticulation_strength)?;
    spec.noise_std = kv.get_or("noise_std", spec.noise_std)?;
    spec.duration_mean_frames = kv.get_or("duration_mean_frames", spec.duration_mean_frames)?;
    spec.duration_std_frames = kv.get_or("duration_std_frames", spec.duration_std_frames)?;
    spec.seed = kv.get_or("seed", spec.seed)?;
    kv.finish()?;
    Ok(spec)
}

/// Reads a generator spec file.
pub fn read_generator_spec(path: &Path) -> Result<GeneratorSpec, ConfigError> {
    parse_generator_spec(&fs::read_to_string(path)?)
}

/// Parses a grid file: explicit `row.N.*` groups, or the built-in grid when
/// no rows are given.
pub fn parse_grid(text: &str) -> Result<GridSpec, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let hidden = kv.get_or("hidden_size", DEFAULT_HIDDEN_SIZE)?;

    // Pull out every row.N.* entry, keyed by row index.
    let mut row_entries: Vec<(usize, String, String, usize)> = Vec::new();
    let mut rest = Vec::new();
    for (key, value, line) in std::mem::take(&mut kv.entries) {
        match split_row_key(&key) {
            Some((index, field)) => row_entries.push((index, field.to_string(), value, line)),
            None if key.starts_with("row.") => {
                return Err(ConfigError::Parse {
                    line,
                    what: format!("bad row key {key:?}: expected row.<index>.<field>"),
                });
            }
            None => rest.push((key, value, line)),
        }
    }
    kv.entries = rest;
    kv.finish()?;

    if row_entries.is_empty() {
        return Ok(ablation_grid(hidden));
    }

    let count = row_entries.iter().map(|&(i, ..)| i + 1).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(count);
    for index in 0..count {
        let group: Vec<(String, String, usize)> = row_entries
            .iter()
            .filter(|&&(i, ..)| i == index)
            .map(|(_, field, value, line)| (field.clone(), value.clone(), *line))
            .collect();
        if group.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "grid rows must be numbered contiguously from 0; row {index} is missing"
            )));
        }
        let mut sub = KvFile { entries: group };
        let name = match sub.take("name") {
            Some((value, _)) => value,
            None => {
                return Err(ConfigError::Invalid(format!(
                    "grid row {index} has no \"name\" key"
                )));
            }
        };
        let cfg = model_config_from_kv(&mut sub, hidden)?;
        if let Err(ConfigError::UnknownKey { line, key }) = sub.finish() {
            return Err(ConfigError::UnknownKey {
                line,
                key: format!("row.{index}.{key}"),
            });
        }
        rows.push(GridRow { name, cfg });
    }
    Ok(GridSpec { rows })
}

fn split_row_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("row.")?;
    let (index, field) = rest.split_once('.')?;
    let index: usize = index.parse().ok()?;
    if field.is_empty() {
        None
    } else {
        Some((index, field))
    }
}

/// Reads a grid file.
pub fn read_grid(path: &Path) -> Result<GridSpec, ConfigError> {
    parse_grid(&fs::read_to_string(path)?)
}

/// Parses a comma-separated seed list such as `1,2,3`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    let mut seeds = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        seeds.push(part.parse().map_err(|_| {
            ConfigError::Invalid(format!("bad seed {part:?} in seed list {s:?}"))
        })?);
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_config_gives_defaults() {
        let cfg = parse_model_config("").unwrap();
        assert_eq!(cfg.splice.radius, DEFAULT_SPLICE_RADIUS);
        assert_eq!(cfg.scope, SegmentScope::FullSyllable);
        assert_eq!(cfg.encoder.direction, Direction::Forward);
        assert_eq!(cfg.encoder.pooling, Pooling::Average);
        assert_eq!(cfg.encoder.hidden_size, DEFAULT_HIDDEN_SIZE);
        assert!(!cfg.classifier.use_preceding);
        assert!(!cfg.classifier.use_succeeding);
        assert!(!cfg.classifier.use_duration);
    }

    #[test]
    fn full_model_config_parses_every_key() {
        let text = "\
# contextual bidirectional model
splice_radius = 2
scope = final
direction = bidirectional
pooling = max
hidden_size = 48
use_preceding = true
use_succeeding = true
use_duration = true
dur_hidden = 7
";
        let cfg = parse_model_config(text).unwrap();
        assert_eq!(cfg.splice.radius, 2);
        assert_eq!(cfg.scope, SegmentScope::FinalOnly);
        assert_eq!(cfg.encoder.direction, Direction::Bidirectional);
        assert_eq!(cfg.encoder.pooling, Pooling::Max);
        assert_eq!(cfg.encoder.hidden_size, 48);
        assert_eq!(cfg.encoder.input_dim, 3 * (2 * 2 + 1));
        assert!(cfg.classifier.use_preceding);
        assert!(cfg.classifier.use_succeeding);
        assert!(cfg.classifier.use_duration);
        assert_eq!(cfg.classifier.dur_hidden, 7);
        // Bidirectional doubles the embedding.
        assert_eq!(cfg.encoder.embedding_dim(), 96);
    }

    #[test]
    fn unknown_key_is_an_error_with_its_line() {
        let err = parse_model_config("hidden_size = 8\nhiden_size = 9\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "hiden_size");
            }
            other => panic!("expected unknown-key error, got {other}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_keys_are_errors() {
        let err = parse_model_config("hidden_size = 8\nhidden_size = 9\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 2, .. }), "{err}");

        let err = parse_model_config("hidden_size\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");

        let err = parse_model_config("pooling = mean\n").unwrap_err();
        match err {
            ConfigError::Parse { line, what } => {
                assert_eq!(line, 1);
                assert!(what.contains("last, average, max"), "{what:?}");
            }
            other => panic!("{other}"),
        }

        let err = parse_model_config("use_duration = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn hyperparams_default_and_override() {
        let hp = parse_hyperparams("").unwrap();
        assert_eq!(hp, Hyperparams::default());

        let hp = parse_hyperparams(
            "learning_rate = 0.1\nepochs = 5\ngrad_clip_norm = none\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(hp.learning_rate, 0.1);
        assert_eq!(hp.epochs, 5);
        assert_eq!(hp.grad_clip_norm, None);
        assert_eq!(hp.seed, 42);
        assert_eq!(hp.minibatch_size, Hyperparams::default().minibatch_size);

        let hp = parse_hyperparams("grad_clip_norm = 2.5\n").unwrap();
        assert_eq!(hp.grad_clip_norm, Some(2.5));

        let err = parse_hyperparams("grad_clip_norm = off\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn generator_spec_parses_priors_and_ranges() {
        let spec = parse_generator_spec("").unwrap();
        assert_eq!(spec, GeneratorSpec::default());

        let text = "\
n_train_syllables = 200
n_test_syllables = 50
syllables_min = 2
syllables_max = 4
speakers = 3
tone_priors = 0.2, 0.2, 0.2, 0.2, 0.2
tone_repeat_prob = 0.1
coarticulation_strength = 0.25
noise_std = 0.0
duration_mean_frames = 12
duration_std_frames = 2
seed = 7
";
        let spec = parse_generator_spec(text).unwrap();
        assert_eq!(spec.n_train_syllables, 200);
        assert_eq!(spec.syllables_per_utterance, (2, 4));
        assert_eq!(spec.speakers, 3);
        assert_eq!(spec.tone_priors, [0.2; 5]);
        assert_eq!(spec.tone_repeat_prob, 0.1);
        assert_eq!(spec.coarticulation_strength, 0.25);
        assert_eq!(spec.noise_std, 0.0);
        assert_eq!(spec.seed, 7);

        let err = parse_generator_spec("tone_priors = 0.5, 0.5\n").unwrap_err();
        match err {
            ConfigError::Parse { line, what } => {
                assert_eq!(line, 1);
                assert!(what.contains("5 comma-separated values"), "{what:?}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn grid_without_rows_is_the_built_in_grid() {
        let grid = parse_grid("").unwrap();
        let reference = ablation_grid(DEFAULT_HIDDEN_SIZE);
        assert_eq!(grid.rows.len(), reference.rows.len());
        for (a, b) in grid.rows.iter().zip(&reference.rows) {
            assert_eq!(a.name, b.name);
        }

        let grid = parse_grid("hidden_size = 12\n").unwrap();
        assert!(grid.rows.iter().all(|r| r.cfg.encoder.hidden_size == 12));
    }

    #[test]
    fn grid_with_rows_parses_each_group() {
        let text = "\
hidden_size = 16
row.0.name = Baseline
row.0.scope = final
row.0.pooling = last
row.0.splice_radius = 0
row.1.name = Context
row.1.use_preceding = true
row.1.hidden_size = 24
";
        let grid = parse_grid(text).unwrap();
        assert_eq!(grid.rows.len(), 2);
        assert_eq!(grid.rows[0].name, "Baseline");
        assert_eq!(grid.rows[0].cfg.scope, SegmentScope::FinalOnly);
        assert_eq!(grid.rows[0].cfg.encoder.pooling, Pooling::Last);
        assert_eq!(grid.rows[0].cfg.encoder.input_dim, 3);
        assert_eq!(grid.rows[0].cfg.encoder.hidden_size, 16, "inherits default");
        assert_eq!(grid.rows[1].name, "Context");
        assert!(grid.rows[1].cfg.classifier.use_preceding);
        assert_eq!(grid.rows[1].cfg.encoder.hidden_size, 24, "own override");
    }

    #[test]
    fn grid_rows_must_be_contiguous_named_and_known() {
        let err = parse_grid("row.1.name = Lonely\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");

        let err = parse_grid("row.0.scope = final\n").unwrap_err();
        match err {
            ConfigError::Invalid(what) => assert!(what.contains("name"), "{what:?}"),
            other => panic!("{other}"),
        }

        let err = parse_grid("row.0.name = A\nrow.0.hiden = 3\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "row.0.hiden");
            }
            other => panic!("{other}"),
        }

        let err = parse_grid("row.x.name = A\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn seed_lists_parse_and_reject_junk() {
        assert_eq!(parse_seeds("1,2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds(" 7 ").unwrap(), vec![7]);
        assert!(parse_seeds("1,,3").is_err());
        assert!(parse_seeds("one").is_err());
    }
}
