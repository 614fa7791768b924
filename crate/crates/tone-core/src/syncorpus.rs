//! Deterministic synthetic Mandarin-like tone corpus generator.
//!
//! Real tone corpora are large and licensed; this generator produces small,
//! fully reproducible corpora with the structure the model cares about:
//! tone-dependent pitch contours, tone-dependent durations (the neutral tone
//! is short), and left-context co-articulation that bleeds the preceding
//! syllable's final pitch into the onset of the next. That structure is what
//! makes pooling, direction, context, and duration comparisons measurable at
//! desk scale; no phonetic fidelity beyond it is attempted.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::{FeatureFrame, SyllableSegment, ToneLabel, Utterance, TONE_COUNT};

/// Fraction of each syllable taken by the onset region.
const ONSET_FRACTION: f64 = 0.3;

/// Shortest syllable, in frames.
const MIN_DURATION_FRAMES: usize = 4;

/// Nominal NCCF value of a cleanly voiced frame.
const VOICED_NCCF: f64 = 0.9;

/// Default tone priors: relative frequencies of tones 0–4 in running
/// Mandarin speech (neutral tone rarest, falling tone most common).
pub const DEFAULT_TONE_PRIORS: [f64; TONE_COUNT] = [0.058, 0.210, 0.224, 0.165, 0.343];

/// Errors from corpus generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorError {
    /// The spec fails validation; the message names the field.
    InvalidSpec(&'static str),
}

impl fmt::Display for GeneratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorError::InvalidSpec(what) => write!(f, "invalid generator spec: {what}"),
        }
    }
}

impl core::error::Error for GeneratorError {}

/// Everything that determines a generated corpus. Identical specs generate
/// identical corpora.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    /// Target syllable counts for the two splits.
    pub n_train_syllables: usize,
    pub n_test_syllables: usize,
    /// Inclusive range of syllables per utterance; the last utterance of a
    /// split may fall below the minimum to hit the target count exactly.
    pub syllables_per_utterance: (usize, usize),
    /// Speakers per split; train and test pools are disjoint.
    pub speakers: usize,
    /// Tone sampling probabilities for tones 0–4; must sum to one.
    pub tone_priors: [f64; TONE_COUNT],
    /// Probability in `[0, 1]` that a non-initial syllable repeats its
    /// predecessor's tone instead of drawing fresh from `tone_priors`.
    /// The repeat kernel leaves the stationary tone marginal equal to
    /// `tone_priors` while making neighbouring tone labels dependent, the
    /// way real tonal language is; zero gives independent tones.
    pub tone_repeat_prob: f64,
    /// Weight in `[0, 1]` of the preceding syllable's final pitch on the
    /// onset of the next syllable; zero removes left context entirely.
    pub coarticulation_strength: f64,
    /// Standard deviation of the per-frame Gaussian noise; zero gives clean
    /// template contours.
    pub noise_std: f64,
    /// Syllable duration distribution (frames), clipped from below.
    pub duration_mean_frames: f64,
    pub duration_std_frames: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n_train_syllables: 5000,
            n_test_syllables: 1000,
            syllables_per_utterance: (3, 8),
            speakers: 8,
            tone_priors: DEFAULT_TONE_PRIORS,
            tone_repeat_prob: 0.25,
            coarticulation_strength: 0.5,
            noise_std: 0.45,
            duration_mean_frames: 26.0,
            duration_std_frames: 7.0,
            seed: 1,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.n_train_syllables == 0 || self.n_test_syllables == 0 {
            return Err(GeneratorError::InvalidSpec("syllable counts must be positive"));
        }
        let (lo, hi) = self.syllables_per_utterance;
        if lo == 0 || lo > hi {
            return Err(GeneratorError::InvalidSpec(
                "syllables_per_utterance must be a non-empty positive range",
            ));
        }
        if self.speakers == 0 {
            return Err(GeneratorError::InvalidSpec("speakers must be positive"));
        }
        let sum: f64 = self.tone_priors.iter().sum();
        if self.tone_priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(GeneratorError::InvalidSpec(
                "tone_priors must lie in [0, 1]",
            ));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GeneratorError::InvalidSpec("tone_priors must sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.tone_repeat_prob) {
            return Err(GeneratorError::InvalidSpec(
                "tone_repeat_prob must lie in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.coarticulation_strength) {
            return Err(GeneratorError::InvalidSpec(
                "coarticulation_strength must lie in [0, 1]",
            ));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(GeneratorError::InvalidSpec(
                "noise_std must be finite and non-negative",
            ));
        }
        if !(self.duration_mean_frames > 0.0) || !self.duration_mean_frames.is_finite() {
            return Err(GeneratorError::InvalidSpec(
                "duration_mean_frames must be positive",
            ));
        }
        if !(self.duration_std_frames >= 0.0) || !self.duration_std_frames.is_finite() {
            return Err(GeneratorError::InvalidSpec(
                "duration_std_frames must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Canonical contour of one tone as normalized log-pitch over normalized
/// time `u ∈ [0, 1]`: tone 1 high level, tone 2 rising, tone 3 dipping,
/// tone 4 falling, tone 0 (neutral) short and mid-level.
pub fn tone_template(tone: ToneLabel, u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    match tone.index() {
        0 => 0.0,
        1 => 0.8,
        2 => -0.3 + 1.0 * u,
        3 => {
            if u <= 0.5 {
                0.1 + (-0.6 - 0.1) * (u / 0.5)
            } else {
                -0.6 + (0.2 + 0.6) * ((u - 0.5) / 0.5)
            }
        }
        _ => 0.8 + (-0.5 - 0.8) * u,
    }
}

/// Generates disjoint train and test corpora, fully determined by the spec.
pub fn generate(spec: &GeneratorSpec) -> Result<(Vec<Utterance>, Vec<Utterance>), GeneratorError> {
    spec.validate()?;
    // The two splits draw from disjoint per-utterance stream ranges of the
    // same seeded generator family, so they never share randomness and each
    // split is reproducible on its own.
    let train = generate_split(spec, spec.n_train_syllables, 1u64 << 32, "trn");
    let test = generate_split(spec, spec.n_test_syllables, 2u64 << 32, "tst");
    Ok((train, test))
}

fn generate_split(
    spec: &GeneratorSpec,
    target_syllables: usize,
    stream_base: u64,
    speaker_prefix: &str,
) -> Vec<Utterance> {
    let mut out = Vec::new();
    let mut remaining = target_syllables;
    let mut utterance_index = 0u64;
    while remaining > 0 {
        // One independent stream per utterance: reproducible regardless of
        // how many utterances precede it.
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream_base + 1 + utterance_index);

        let (lo, hi) = spec.syllables_per_utterance;
        let count = rng.random_range(lo..=hi).min(remaining);
        let speaker = format!(
            "{speaker_prefix}{:02}",
            utterance_index as usize % spec.speakers
        );
        out.push(generate_utterance(spec, &mut rng, speaker, count));
        remaining -= count;
        utterance_index += 1;
    }
    out
}

/// Builds one utterance. Draw order: per syllable, on non-initial
/// syllables with `tone_repeat_prob > 0` one uniform repeat draw, then its
/// tone (skipped when the repeat fires) and its duration; afterwards, when
/// `noise_std > 0`, two Gaussian draws per frame (pitch, NCCF) in frame
/// order. A spec with a feature switched off consumes no draws for it.
fn generate_utterance(
    spec: &GeneratorSpec,
    rng: &mut ChaCha8Rng,
    speaker: String,
    n_syllables: usize,
) -> Utterance {
    // Structure first: tones and durations.
    let mut tones = Vec::with_capacity(n_syllables);
    let mut durations = Vec::with_capacity(n_syllables);
    let dur_dist = Normal::new(spec.duration_mean_frames, spec.duration_std_frames)
        .expect("validated std");
    let mut prev_tone: Option<ToneLabel> = None;
    for _ in 0..n_syllables {
        // Repeat kernel: with probability `tone_repeat_prob` copy the
        // previous tone, otherwise draw fresh — the fresh draw's marginal
        // is the stationary one, so priors are preserved exactly.
        let repeat = match prev_tone {
            Some(_) if spec.tone_repeat_prob > 0.0 => {
                rng.random_range(0.0..1.0) < spec.tone_repeat_prob
            }
            _ => false,
        };
        let tone = if repeat {
            prev_tone.expect("repeat requires a predecessor")
        } else {
            sample_tone(rng, &spec.tone_priors)
        };
        prev_tone = Some(tone);
        let mut d = dur_dist.sample(rng);
        if tone.index() == 0 {
            d *= 0.5; // the neutral tone is systematically short
        }
        let frames = (libm::round(d) as i64).max(MIN_DURATION_FRAMES as i64) as usize;
        tones.push(tone);
        durations.push(frames);
    }

    // Clean pitch track: onset interpolates from a co-articulated blend of
    // the previous syllable's final pitch toward the template start, the
    // remainder resamples the template.
    let total_frames: usize = durations.iter().sum();
    let mut pitch = Vec::with_capacity(total_frames);
    let mut segments = Vec::with_capacity(n_syllables);
    let mut cursor = 0usize;
    let mut prev_final_pitch: Option<f64> = None;
    for (&tone, &frames) in tones.iter().zip(durations.iter()) {
        let onset_len = onset_frames(frames);
        let final_len = frames - onset_len;
        let g0 = tone_template(tone, 0.0);

        let start_pitch = match prev_final_pitch {
            Some(prev) => {
                spec.coarticulation_strength * prev + (1.0 - spec.coarticulation_strength) * g0
            }
            None => g0,
        };
        for t in 0..onset_len {
            let w = (t + 1) as f64 / (onset_len + 1) as f64;
            pitch.push((1.0 - w) * start_pitch + w * g0);
        }
        for t in 0..final_len {
            let u = if final_len == 1 {
                0.5
            } else {
                t as f64 / (final_len - 1) as f64
            };
            pitch.push(tone_template(tone, u));
        }
        prev_final_pitch = Some(tone_template(tone, 1.0));

        segments.push(
            SyllableSegment::new(cursor, cursor + onset_len, cursor + frames, tone)
                .expect("onset shorter than syllable"),
        );
        cursor += frames;
    }

    // Noise, then the derived channels over the whole utterance.
    let mut nccf = alloc::vec![VOICED_NCCF; total_frames];
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
        for t in 0..total_frames {
            pitch[t] += noise.sample(rng);
            nccf[t] = VOICED_NCCF - noise.sample(rng);
        }
    }
    let mut frames_out = Vec::with_capacity(total_frames);
    for t in 0..total_frames {
        let delta = if t == 0 { 0.0 } else { pitch[t] - pitch[t - 1] };
        frames_out.push(FeatureFrame::new(pitch[t], delta, nccf[t]));
    }

    Utterance::new(speaker, frames_out, segments).expect("generated structure is valid")
}

/// Onset length: 30% of the syllable, at least one frame, and at least one
/// frame left for the final.
fn onset_frames(duration: usize) -> usize {
    let raw = libm::round(ONSET_FRACTION * duration as f64) as usize;
    raw.clamp(1, duration - 1)
}

fn sample_tone(rng: &mut ChaCha8Rng, priors: &[f64; TONE_COUNT]) -> ToneLabel {
    let draw: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in priors.iter().enumerate() {
        acc += p;
        if draw < acc {
            return ToneLabel::new(i as u8).expect("in range");
        }
    }
    // Rounding can leave acc marginally below 1; the draw belongs to the
    // last class.
    ToneLabel::new((TONE_COUNT - 1) as u8).expect("in range")
}
