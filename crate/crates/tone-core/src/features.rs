//! Acoustic feature handling: per-speaker normalization, frame splicing,
//! syllable segment extraction, and duration statistics.
//!
//! Frames carry three values each (log-pitch, its time derivative, and a
//! warped cross-correlation voicing score). Utterances bundle a frame
//! sequence with syllable segmentation; every downstream consumer works on
//! spliced frame windows cut out of an utterance.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use ndarray::Array2;

/// Number of distinct tone classes (neutral tone plus tones 1–4).
pub const TONE_COUNT: usize = 5;

/// Values per frame: log-pitch, delta log-pitch, warped NCCF.
pub const FRAME_DIM: usize = 3;

/// Variance below this is treated as a constant dimension and normalized to
/// zero instead of dividing by a vanishing standard deviation.
const CONSTANT_VAR_EPS: f64 = 1e-12;

/// Errors from the feature pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureError {
    /// The corpus holds no utterances (or no syllables where some are needed).
    EmptyCorpus,
    /// A speaker appears in the corpus but owns zero frames.
    SpeakerWithoutFrames(String),
    /// A frame sequence was empty where at least one frame is required.
    EmptyFrames,
    /// A frame contains a NaN or infinite value.
    NonFiniteValue,
    /// Tone label outside `0..5`.
    InvalidTone(u8),
    /// Segment indices violate `start ≤ final_start < end`.
    InvalidSegment {
        start: usize,
        final_start: usize,
        end: usize,
    },
    /// A segment reaches past the utterance's frames.
    SegmentOutOfBounds { end: usize, frames: usize },
    /// Segments overlap or are out of ascending order.
    UnorderedSegments { index: usize },
    /// Syllable index outside the utterance.
    SyllableIndexOutOfRange { index: usize, count: usize },
    /// Duration statistics with a non-positive standard deviation.
    DegenerateDurationStats,
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::EmptyCorpus => write!(f, "empty corpus"),
            FeatureError::SpeakerWithoutFrames(s) => {
                write!(f, "speaker {s:?} has zero frames")
            }
            FeatureError::EmptyFrames => write!(f, "empty frame sequence"),
            FeatureError::NonFiniteValue => write!(f, "non-finite feature value"),
            FeatureError::InvalidTone(t) => write!(f, "tone label {t} outside 0..5"),
            FeatureError::InvalidSegment {
                start,
                final_start,
                end,
            } => write!(
                f,
                "segment indices must satisfy start <= final_start < end, got \
                 start={start}, final_start={final_start}, end={end}"
            ),
            FeatureError::SegmentOutOfBounds { end, frames } => {
                write!(f, "segment ends at frame {end} but utterance has {frames} frames")
            }
            FeatureError::UnorderedSegments { index } => {
                write!(f, "segment {index} overlaps or precedes its predecessor")
            }
            FeatureError::SyllableIndexOutOfRange { index, count } => {
                write!(f, "syllable index {index} out of range for {count} syllables")
            }
            FeatureError::DegenerateDurationStats => {
                write!(f, "degenerate duration statistics")
            }
        }
    }
}

impl core::error::Error for FeatureError {}

/// Tone class of a syllable: `0` is the neutral tone, `1..=4` the four full
/// tones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToneLabel(u8);

impl ToneLabel {
    /// Wraps a raw label, rejecting values outside `0..5`.
    pub fn new(tone: u8) -> Result<Self, FeatureError> {
        if (tone as usize) < TONE_COUNT {
            Ok(ToneLabel(tone))
        } else {
            Err(FeatureError::InvalidTone(tone))
        }
    }

    /// The label as an index in `0..TONE_COUNT`.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// All five labels in ascending order.
    pub fn all() -> [ToneLabel; TONE_COUNT] {
        [
            ToneLabel(0),
            ToneLabel(1),
            ToneLabel(2),
            ToneLabel(3),
            ToneLabel(4),
        ]
    }
}

impl fmt::Display for ToneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One 10 ms analysis frame: three real-valued acoustic features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    /// POV-weighted mean-subtracted log-pitch.
    pub log_pitch_mvn: f64,
    /// Per-frame time derivative of log-pitch.
    pub delta_log_pitch: f64,
    /// Warped normalized cross-correlation, nominally in `[-1, 1]`.
    pub nccf_warped: f64,
}

impl FeatureFrame {
    pub fn new(log_pitch_mvn: f64, delta_log_pitch: f64, nccf_warped: f64) -> Self {
        FeatureFrame {
            log_pitch_mvn,
            delta_log_pitch,
            nccf_warped,
        }
    }

    /// The frame as a fixed-size array, in field order.
    pub fn as_array(&self) -> [f64; FRAME_DIM] {
        [self.log_pitch_mvn, self.delta_log_pitch, self.nccf_warped]
    }

    fn from_array(a: [f64; FRAME_DIM]) -> Self {
        FeatureFrame::new(a[0], a[1], a[2])
    }

    fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Which frames of a syllable feed the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentScope {
    /// Only the syllable final, `[final_start_frame, end_frame)`.
    FinalOnly,
    /// The whole syllable, `[start_frame, end_frame)`.
    FullSyllable,
}

/// One syllable's frame range and tone label inside an utterance.
///
/// Frame indices satisfy `start_frame ≤ final_start_frame < end_frame`, so
/// the final part is never empty while the initial part may be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyllableSegment {
    pub start_frame: usize,
    /// First frame of the syllable final (exclusive end of the initial).
    pub final_start_frame: usize,
    /// Exclusive end of the syllable.
    pub end_frame: usize,
    pub tone: ToneLabel,
}

impl SyllableSegment {
    pub fn new(
        start_frame: usize,
        final_start_frame: usize,
        end_frame: usize,
        tone: ToneLabel,
    ) -> Result<Self, FeatureError> {
        if start_frame > final_start_frame || final_start_frame >= end_frame {
            return Err(FeatureError::InvalidSegment {
                start: start_frame,
                final_start: final_start_frame,
                end: end_frame,
            });
        }
        Ok(SyllableSegment {
            start_frame,
            final_start_frame,
            end_frame,
            tone,
        })
    }

    /// Syllable duration in frames.
    pub fn duration(&self) -> usize {
        self.end_frame - self.start_frame
    }

    /// Frame range `[start, end)` selected by `scope`.
    pub fn bounds(&self, scope: SegmentScope) -> (usize, usize) {
        match scope {
            SegmentScope::FinalOnly => (self.final_start_frame, self.end_frame),
            SegmentScope::FullSyllable => (self.start_frame, self.end_frame),
        }
    }

    fn validate(&self) -> Result<(), FeatureError> {
        SyllableSegment::new(
            self.start_frame,
            self.final_start_frame,
            self.end_frame,
            self.tone,
        )
        .map(|_| ())
    }
}

/// A speaker-attributed frame sequence with its syllable segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker_id: String,
    pub frames: Vec<FeatureFrame>,
    /// Non-overlapping segments in ascending frame order.
    pub syllables: Vec<SyllableSegment>,
}

impl Utterance {
    /// Builds an utterance, checking segment ordering, bounds, and frame
    /// finiteness.
    pub fn new(
        speaker_id: String,
        frames: Vec<FeatureFrame>,
        syllables: Vec<SyllableSegment>,
    ) -> Result<Self, FeatureError> {
        if frames.iter().any(|fr| !fr.is_finite()) {
            return Err(FeatureError::NonFiniteValue);
        }
        let mut prev_end = 0usize;
        for (i, seg) in syllables.iter().enumerate() {
            seg.validate()?;
            if seg.end_frame > frames.len() {
                return Err(FeatureError::SegmentOutOfBounds {
                    end: seg.end_frame,
                    frames: frames.len(),
                });
            }
            if i > 0 && seg.start_frame < prev_end {
                return Err(FeatureError::UnorderedSegments { index: i });
            }
            prev_end = seg.end_frame;
        }
        Ok(Utterance {
            speaker_id,
            frames,
            syllables,
        })
    }

    /// The syllable at `index`, or an out-of-range error.
    pub fn syllable(&self, index: usize) -> Result<&SyllableSegment, FeatureError> {
        self.syllables
            .get(index)
            .ok_or(FeatureError::SyllableIndexOutOfRange {
                index,
                count: self.syllables.len(),
            })
    }
}

/// Frame splicing configuration: `radius` frames of context on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpliceConfig {
    pub radius: usize,
}

impl SpliceConfig {
    pub fn new(radius: usize) -> Self {
        SpliceConfig { radius }
    }

    /// Dimension of a spliced frame: `3 × (2·radius + 1)`.
    pub fn output_dim(&self) -> usize {
        FRAME_DIM * (2 * self.radius + 1)
    }
}

/// Mean and standard deviation of syllable durations (in frames), computed
/// over a training split and then frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationStats {
    pub mean: f64,
    pub std: f64,
}

impl DurationStats {
    /// Computes duration statistics over every syllable in `corpus`.
    ///
    /// Uses population variance (division by the count); errors when the
    /// corpus has no syllables.
    pub fn from_corpus(corpus: &[Utterance]) -> Result<Self, FeatureError> {
        let mut n = 0usize;
        let mut sum = 0.0;
        for utt in corpus {
            for seg in &utt.syllables {
                n += 1;
                sum += seg.duration() as f64;
            }
        }
        if n == 0 {
            return Err(FeatureError::EmptyCorpus);
        }
        let mean = sum / n as f64;
        let mut sq = 0.0;
        for utt in corpus {
            for seg in &utt.syllables {
                let d = seg.duration() as f64 - mean;
                sq += d * d;
            }
        }
        let std = libm::sqrt(sq / n as f64);
        Ok(DurationStats { mean, std })
    }
}

/// Normalizes every feature dimension to zero mean and unit variance per
/// speaker, pooling frames across all of a speaker's utterances.
///
/// Statistics use a sequential two-pass computation with population variance.
/// A dimension whose variance vanishes for a speaker is mapped to zero.
/// Segmentation and speaker ids are preserved.
pub fn normalize_by_speaker(corpus: &[Utterance]) -> Result<Vec<Utterance>, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }

    // Pass 1: per-speaker frame counts and sums, in corpus order.
    let mut sums: BTreeMap<&str, ([f64; FRAME_DIM], usize)> = BTreeMap::new();
    for utt in corpus {
        let entry = sums.entry(utt.speaker_id.as_str()).or_insert(([0.0; FRAME_DIM], 0));
        for fr in &utt.frames {
            let a = fr.as_array();
            for (s, v) in entry.0.iter_mut().zip(a.iter()) {
                *s += v;
            }
            entry.1 += 1;
        }
    }
    let mut stats: BTreeMap<&str, ([f64; FRAME_DIM], [f64; FRAME_DIM])> = BTreeMap::new();
    for (speaker, (sum, n)) in &sums {
        if *n == 0 {
            return Err(FeatureError::SpeakerWithoutFrames(String::from(*speaker)));
        }
        let mut mean = [0.0; FRAME_DIM];
        for (m, s) in mean.iter_mut().zip(sum.iter()) {
            *m = s / *n as f64;
        }
        stats.insert(speaker, (mean, [0.0; FRAME_DIM]));
    }

    // Pass 2: per-speaker population variances around the pass-1 means.
    for utt in corpus {
        let entry = stats
            .get_mut(utt.speaker_id.as_str())
            .expect("speaker seen in pass 1");
        for fr in &utt.frames {
            let a = fr.as_array();
            for (v, (x, m)) in entry.1.iter_mut().zip(a.iter().zip(entry.0.iter())) {
                let d = x - m;
                *v += d * d;
            }
        }
    }
    for (speaker, (_, var)) in stats.iter_mut() {
        let n = sums[speaker].1 as f64;
        for v in var.iter_mut() {
            *v /= n;
        }
    }

    // Apply: (x − mean) / std, or zero for constant dimensions.
    let mut out = Vec::with_capacity(corpus.len());
    for utt in corpus {
        let (mean, var) = &stats[utt.speaker_id.as_str()];
        let frames = utt
            .frames
            .iter()
            .map(|fr| {
                let mut a = fr.as_array();
                for ((x, m), v) in a.iter_mut().zip(mean.iter()).zip(var.iter()) {
                    *x = if *v <= CONSTANT_VAR_EPS {
                        0.0
                    } else {
                        (*x - m) / libm::sqrt(*v)
                    };
                }
                FeatureFrame::from_array(a)
            })
            .collect();
        out.push(Utterance {
            speaker_id: utt.speaker_id.clone(),
            frames,
            syllables: utt.syllables.clone(),
        });
    }
    Ok(out)
}

/// Splices each frame with `radius` frames of context on both sides,
/// replicating the edge frame where the window leaves the sequence.
///
/// Returns a `frames.len() × (3·(2·radius+1))` matrix whose row `t`
/// concatenates frames `t−radius ⋯ t+radius`, left context first.
pub fn splice(frames: &[FeatureFrame], cfg: &SpliceConfig) -> Result<Array2<f64>, FeatureError> {
    if frames.is_empty() {
        return Err(FeatureError::EmptyFrames);
    }
    let t_len = frames.len();
    let dim = cfg.output_dim();
    let r = cfg.radius as isize;
    let mut out = Array2::zeros((t_len, dim));
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        for k in -r..=r {
            let src = (t as isize + k).clamp(0, t_len as isize - 1) as usize;
            let base = ((k + r) as usize) * FRAME_DIM;
            let a = frames[src].as_array();
            for (j, v) in a.iter().enumerate() {
                row[base + j] = *v;
            }
        }
    }
    Ok(out)
}

/// Cuts the spliced observation sequence for one syllable out of an
/// utterance.
///
/// Splicing runs over the whole utterance first, so frames at the segment
/// edges still see their true neighbours; the segment rows are then sliced
/// out according to `scope`.
pub fn extract_segment(
    utt: &Utterance,
    syllable_index: usize,
    scope: SegmentScope,
    cfg: &SpliceConfig,
) -> Result<Array2<f64>, FeatureError> {
    let seg = *utt.syllable(syllable_index)?;
    let spliced = splice(&utt.frames, cfg)?;
    let (start, end) = seg.bounds(scope);
    Ok(spliced.slice(ndarray::s![start..end, ..]).to_owned())
}

/// Duration features for one syllable: z-scored frame counts of the
/// preceding, current, and succeeding syllables, in that order.
///
/// A missing neighbour at an utterance boundary contributes the normalized
/// mean, i.e. `0`.
pub fn duration_vector(
    utt: &Utterance,
    syllable_index: usize,
    stats: &DurationStats,
) -> Result<[f64; 3], FeatureError> {
    if !(stats.std > 0.0) {
        return Err(FeatureError::DegenerateDurationStats);
    }
    let seg = *utt.syllable(syllable_index)?;
    let z = |s: &SyllableSegment| (s.duration() as f64 - stats.mean) / stats.std;
    let d_prec = if syllable_index == 0 {
        0.0
    } else {
        z(&utt.syllables[syllable_index - 1])
    };
    let d_succ = match utt.syllables.get(syllable_index + 1) {
        Some(s) => z(s),
        None => 0.0,
    };
    Ok([d_prec, z(&seg), d_succ])
}
