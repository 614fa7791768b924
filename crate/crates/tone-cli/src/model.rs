//! Binary container for trained model parameters.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "TONE"
//! version u32      1
//! count   u32      number of tensors
//! tensor  repeated:
//!     name_len u32, name bytes (UTF-8)
//!     ndim     u32, dims ndim × u64
//!     data     product(dims) × f64
//! ```
//!
//! Parameter tensors are stored under their canonical names; when the model
//! was trained with the duration branch, the corpus duration statistics ride
//! along as a two-element tensor `dur.stats` = `[mean, std]` so evaluation
//! normalizes durations exactly as training did. Values round-trip
//! bit-exactly.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use tone_core::features::DurationStats;
use tone_core::training::{ModelConfig, ModelParams};

const MAGIC: [u8; 4] = *b"TONE";
const VERSION: u32 = 1;
const STATS_NAME: &str = "dur.stats";

/// Errors from reading or writing model files.
#[derive(Debug)]
pub enum ModelFileError {
    Io(io::Error),
    /// The file does not start with the expected magic bytes.
    BadMagic,
    /// The file uses a container version this build does not understand.
    BadVersion(u32),
    /// The file ended before the declared content.
    Truncated,
    /// A tensor name is not valid UTF-8 or is implausibly long.
    BadName,
    /// The same tensor name appears twice.
    DuplicateTensor(String),
    /// The file lacks a tensor the configuration requires.
    MissingTensor(&'static str),
    /// The file contains a tensor the configuration has no slot for.
    UnknownTensor(String),
    /// A tensor's dimensions disagree with the configuration.
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFileError::Io(e) => write!(f, "{e}"),
            ModelFileError::BadMagic => write!(f, "not a model file (bad magic)"),
            ModelFileError::BadVersion(v) => write!(f, "unsupported model file version {v}"),
            ModelFileError::Truncated => write!(f, "model file is truncated"),
            ModelFileError::BadName => write!(f, "model file contains a malformed tensor name"),
            ModelFileError::DuplicateTensor(name) => {
                write!(f, "model file repeats tensor {name:?}")
            }
            ModelFileError::MissingTensor(name) => {
                write!(f, "model file is missing tensor {name:?}")
            }
            ModelFileError::UnknownTensor(name) => write!(
                f,
                "model file tensor {name:?} has no place in this configuration"
            ),
            ModelFileError::ShapeMismatch {
                name,
                expected,
                got,
            } => write!(
                f,
                "tensor {name:?} has shape {got:?}, configuration expects {expected:?}"
            ),
        }
    }
}

impl std::error::Error for ModelFileError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ModelFileError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for ModelFileError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ModelFileError::Truncated
        } else {
            ModelFileError::Io(e)
        }
    }
}

/// Writes `params` (and the duration statistics, when present) to `path`.
pub fn save_model(
    path: &Path,
    params: &ModelParams,
    dur_stats: Option<&DurationStats>,
) -> Result<(), ModelFileError> {
    let tensors = params.named_tensors();
    let count = tensors.len() + usize::from(dur_stats.is_some());

    let mut out = io::BufWriter::new(fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(count as u32).to_le_bytes())?;
    for (name, dims, data) in tensors {
        write_tensor(&mut out, name, &dims, data)?;
    }
    if let Some(stats) = dur_stats {
        write_tensor(&mut out, STATS_NAME, &[2], &[stats.mean, stats.std])?;
    }
    out.flush()?;
    Ok(())
}

fn write_tensor(
    out: &mut impl Write,
    name: &str,
    dims: &[usize],
    data: &[f64],
) -> Result<(), ModelFileError> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for &x in data {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a model file and checks every tensor against `cfg`.
///
/// Returns the parameters and, when stored, the training-time duration
/// statistics. A configuration that uses the duration branch requires the
/// statistics tensor; one that does not must not find it.
pub fn load_model(
    path: &Path,
    cfg: &ModelConfig,
) -> Result<(ModelParams, Option<DurationStats>), ModelFileError> {
    let mut reader = io::BufReader::new(fs::File::open(path)?);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = read_u32(&mut reader)?;
    if version != VERSION {
        return Err(ModelFileError::BadVersion(version));
    }
    let count = read_u32(&mut reader)? as usize;

    let mut found: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let tensor = read_tensor(&mut reader)?;
        if found.iter().any(|(name, _, _)| *name == tensor.0) {
            return Err(ModelFileError::DuplicateTensor(tensor.0));
        }
        found.push(tensor);
    }

    let expected: Vec<(&'static str, Vec<usize>)> = ModelParams::zeros(cfg)
        .named_tensors()
        .into_iter()
        .map(|(name, dims, _)| (name, dims))
        .collect();

    let mut take = |name: &'static str| -> Option<(Vec<usize>, Vec<f64>)> {
        let at = found.iter().position(|(n, _, _)| n == name)?;
        let (_, dims, data) = found.remove(at);
        Some((dims, data))
    };

    // Tensors concatenated in canonical order form the flat parameter
    // layout, which is the public way back into a `ModelParams`.
    let mut flat = Vec::new();
    for (name, dims) in expected {
        let (got_dims, data) = take(name).ok_or(ModelFileError::MissingTensor(name))?;
        if got_dims != dims {
            return Err(ModelFileError::ShapeMismatch {
                name: name.to_string(),
                expected: dims,
                got: got_dims,
            });
        }
        flat.extend_from_slice(&data);
    }
    let dur_stats = match take(STATS_NAME) {
        Some((dims, data)) => {
            if dims != [2] {
                return Err(ModelFileError::ShapeMismatch {
                    name: STATS_NAME.to_string(),
                    expected: vec![2],
                    got: dims,
                });
            }
            Some(DurationStats {
                mean: data[0],
                std: data[1],
            })
        }
        None => None,
    };
    if let Some((name, _, _)) = found.into_iter().next() {
        return Err(ModelFileError::UnknownTensor(name));
    }
    if cfg.classifier.use_duration && dur_stats.is_none() {
        return Err(ModelFileError::MissingTensor(STATS_NAME));
    }
    if !cfg.classifier.use_duration && dur_stats.is_some() {
        return Err(ModelFileError::UnknownTensor(STATS_NAME.to_string()));
    }

    let params = ModelParams::from_flat(cfg, &flat)
        .expect("per-tensor shapes were checked, so the flat length matches");
    Ok((params, dur_stats))
}

fn read_u32(reader: &mut impl Read) -> Result<u32, ModelFileError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(reader: &mut impl Read) -> Result<u64, ModelFileError> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_tensor(reader: &mut impl Read) -> Result<(String, Vec<usize>, Vec<f64>), ModelFileError> {
    let name_len = read_u32(reader)? as usize;
    if name_len > 1024 {
        return Err(ModelFileError::BadName);
    }
    let mut name_buf = vec![0u8; name_len];
    reader.read_exact(&mut name_buf)?;
    let name = String::from_utf8(name_buf).map_err(|_| ModelFileError::BadName)?;

    let ndim = read_u32(reader)? as usize;
    let mut dims = Vec::with_capacity(ndim);
    let mut len = 1usize;
    for _ in 0..ndim {
        let d = read_u64(reader)? as usize;
        len = len.saturating_mul(d);
        dims.push(d);
    }
    // A corrupt header could otherwise demand an absurd allocation.
    if len > (1 << 28) {
        return Err(ModelFileError::Truncated);
    }
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        reader.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok((name, dims, data))
}
