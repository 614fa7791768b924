//! The tone classifier head: assembles the final input vector from pooled
//! encoder outputs plus optional auxiliary features, and produces tone
//! posteriors through an affine softmax layer.
//!
//! The assembled vector concatenates, in fixed order, the preceding-syllable
//! embedding (when configured), the current-syllable embedding, the
//! succeeding-syllable embedding (when configured), and the output of a
//! small sigmoid duration branch `σ(Wd·d + bd)` (when configured). A missing
//! neighbour at an utterance boundary contributes a zero embedding of the
//! right dimension.

use core::fmt;

use ndarray::{Array1, Array2, ArrayView1};

use crate::encoder::ToneEmbedding;
use crate::features::{ToneLabel, TONE_COUNT};
use crate::math::{sigmoid, softmax};

/// Errors from input assembly and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierError {
    /// A vector dimension did not match the configuration.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A contextual embedding was supplied although its flag is off.
    UnexpectedContext(&'static str),
    /// `use_duration` is on but no duration-branch output was supplied.
    MissingDuration,
    /// A duration-branch output was supplied although `use_duration` is off.
    UnexpectedDuration,
    /// The duration branch was invoked without duration parameters.
    MissingDurationParams,
}

impl fmt::Display for ClassifierError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            ClassifierError::UnexpectedContext(which) => {
                write!(f, "{which} embedding supplied but its context flag is off")
            }
            ClassifierError::MissingDuration => {
                write!(f, "duration branch output required but not supplied")
            }
            ClassifierError::UnexpectedDuration => {
                write!(f, "duration branch output supplied but use_duration is off")
            }
            ClassifierError::MissingDurationParams => {
                write!(f, "classifier has no duration-branch parameters")
            }
        }
    }
}

impl core::error::Error for ClassifierError {}

/// Weights of the sigmoid duration branch.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationParams {
    /// `dur_hidden × 3`.
    pub wd: Array2<f64>,
    /// `dur_hidden`.
    pub bd: Array1<f64>,
}

impl DurationParams {
    pub fn zeros(dur_hidden: usize) -> Self {
        DurationParams {
            wd: Array2::zeros((dur_hidden, 3)),
            bd: Array1::zeros(dur_hidden),
        }
    }
}

/// Softmax-layer weights plus the optional duration branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// Softmax weights, `5 × c_dim`.
    pub u: Array2<f64>,
    /// Softmax bias, `5`.
    pub u0: Array1<f64>,
    /// Present exactly when the configuration uses duration features.
    pub duration: Option<DurationParams>,
}

impl ClassifierParams {
    /// All-zero parameters shaped for `cfg`.
    pub fn zeros(cfg: &ClassifierConfig) -> Self {
        ClassifierParams {
            u: Array2::zeros((TONE_COUNT, cfg.c_dim())),
            u0: Array1::zeros(TONE_COUNT),
            duration: cfg.use_duration.then(|| DurationParams::zeros(cfg.dur_hidden)),
        }
    }

    /// Checks every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ClassifierConfig) -> Result<(), ClassifierError> {
        let c_dim = cfg.c_dim();
        if self.u.nrows() != TONE_COUNT {
            return Err(ClassifierError::DimensionMismatch {
                what: "U rows",
                expected: TONE_COUNT,
                got: self.u.nrows(),
            });
        }
        if self.u.ncols() != c_dim {
            return Err(ClassifierError::DimensionMismatch {
                what: "U cols",
                expected: c_dim,
                got: self.u.ncols(),
            });
        }
        if self.u0.len() != TONE_COUNT {
            return Err(ClassifierError::DimensionMismatch {
                what: "u0",
                expected: TONE_COUNT,
                got: self.u0.len(),
            });
        }
        match (&self.duration, cfg.use_duration) {
            (Some(d), true) => {
                if d.wd.nrows() != cfg.dur_hidden || d.wd.ncols() != 3 {
                    return Err(ClassifierError::DimensionMismatch {
                        what: "Wd rows",
                        expected: cfg.dur_hidden,
                        got: d.wd.nrows(),
                    });
                }
                if d.bd.len() != cfg.dur_hidden {
                    return Err(ClassifierError::DimensionMismatch {
                        what: "bd",
                        expected: cfg.dur_hidden,
                        got: d.bd.len(),
                    });
                }
            }
            (None, true) => return Err(ClassifierError::MissingDurationParams),
            (Some(_), false) => return Err(ClassifierError::UnexpectedDuration),
            (None, false) => {}
        }
        Ok(())
    }
}

/// Which auxiliary inputs the classifier consumes, and their dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierConfig {
    pub use_preceding: bool,
    pub use_succeeding: bool,
    pub use_duration: bool,
    /// Dimension of one tone embedding (the encoder's output).
    pub embedding_dim: usize,
    /// Width of the sigmoid duration branch.
    pub dur_hidden: usize,
}

impl ClassifierConfig {
    /// Dimension of the assembled classifier input:
    /// `embedding_dim × (1 + use_preceding + use_succeeding) + use_duration × dur_hidden`.
    pub fn c_dim(&self) -> usize {
        let contexts = 1 + self.use_preceding as usize + self.use_succeeding as usize;
        self.embedding_dim * contexts + if self.use_duration { self.dur_hidden } else { 0 }
    }
}

/// Tone posterior probabilities, indexed by tone label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TonePosterior {
    /// `p[i]` is the probability of tone `i`.
    pub p: [f64; TONE_COUNT],
    logits: [f64; TONE_COUNT],
}

impl TonePosterior {
    /// The unnormalized log-probabilities behind `p`.
    pub fn logits(&self) -> &[f64; TONE_COUNT] {
        &self.logits
    }
}

pub(crate) fn posterior_from_logits(logits: [f64; TONE_COUNT]) -> TonePosterior {
    TonePosterior {
        p: softmax(&logits),
        logits,
    }
}

/// The sigmoid duration branch: `σ(Wd·d + bd)`.
pub fn duration_branch(
    d: &[f64; 3],
    params: &ClassifierParams,
) -> Result<Array1<f64>, ClassifierError> {
    let dur = params
        .duration
        .as_ref()
        .ok_or(ClassifierError::MissingDurationParams)?;
    let x = ArrayView1::from(&d[..]);
    let mut out = dur.wd.dot(&x) + &dur.bd;
    out.mapv_inplace(sigmoid);
    Ok(out)
}

/// Concatenates embeddings and the duration-branch output into the
/// classifier input, in the fixed order (preceding, current, succeeding,
/// duration).
///
/// A `None` context with its flag on stands for an utterance boundary and
/// contributes zeros; a supplied context with its flag off is an error.
pub fn assemble_input(
    curr: &ToneEmbedding,
    prec: Option<&ToneEmbedding>,
    succ: Option<&ToneEmbedding>,
    dur: Option<ArrayView1<f64>>,
    cfg: &ClassifierConfig,
) -> Result<Array1<f64>, ClassifierError> {
    let ed = cfg.embedding_dim;
    let check_emb = |what, e: &ToneEmbedding| {
        if e.c.len() != ed {
            Err(ClassifierError::DimensionMismatch {
                what,
                expected: ed,
                got: e.c.len(),
            })
        } else {
            Ok(())
        }
    };
    check_emb("current embedding", curr)?;
    if !cfg.use_preceding && prec.is_some() {
        return Err(ClassifierError::UnexpectedContext("preceding"));
    }
    if !cfg.use_succeeding && succ.is_some() {
        return Err(ClassifierError::UnexpectedContext("succeeding"));
    }
    let dur = match (cfg.use_duration, dur) {
        (true, Some(d)) => {
            if d.len() != cfg.dur_hidden {
                return Err(ClassifierError::DimensionMismatch {
                    what: "duration branch output",
                    expected: cfg.dur_hidden,
                    got: d.len(),
                });
            }
            Some(d)
        }
        (true, None) => return Err(ClassifierError::MissingDuration),
        (false, Some(_)) => return Err(ClassifierError::UnexpectedDuration),
        (false, None) => None,
    };

    let mut out = Array1::zeros(cfg.c_dim());
    let mut at = 0usize;
    if cfg.use_preceding {
        if let Some(p) = prec {
            check_emb("preceding embedding", p)?;
            out.slice_mut(ndarray::s![at..at + ed]).assign(&p.c);
        }
        at += ed;
    }
    out.slice_mut(ndarray::s![at..at + ed]).assign(&curr.c);
    at += ed;
    if cfg.use_succeeding {
        if let Some(s) = succ {
            check_emb("succeeding embedding", s)?;
            out.slice_mut(ndarray::s![at..at + ed]).assign(&s.c);
        }
        at += ed;
    }
    if let Some(d) = dur {
        out.slice_mut(ndarray::s![at..at + cfg.dur_hidden]).assign(&d);
    }
    Ok(out)
}

/// Tone posterior for an assembled input: `softmax(U·c + u0)`.
pub fn predict(
    c: ArrayView1<f64>,
    params: &ClassifierParams,
) -> Result<TonePosterior, ClassifierError> {
    if c.len() != params.u.ncols() {
        return Err(ClassifierError::DimensionMismatch {
            what: "classifier input",
            expected: params.u.ncols(),
            got: c.len(),
        });
    }
    let z = params.u.dot(&c) + &params.u0;
    let mut logits = [0.0; TONE_COUNT];
    for (l, v) in logits.iter_mut().zip(z.iter()) {
        *l = *v;
    }
    Ok(posterior_from_logits(logits))
}

/// Most probable tone for an assembled input, ties broken toward the lowest
/// tone index.
pub fn classify(
    c: ArrayView1<f64>,
    params: &ClassifierParams,
) -> Result<ToneLabel, ClassifierError> {
    let posterior = predict(c, params)?;
    Ok(argmax_label(&posterior))
}

/// Argmax over posterior probabilities with the lowest-index tie-break.
pub fn argmax_label(posterior: &TonePosterior) -> ToneLabel {
    let mut best = 0usize;
    for i in 1..TONE_COUNT {
        if posterior.p[i] > posterior.p[best] {
            best = i;
        }
    }
    ToneLabel::new(best as u8).expect("index in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(prec: bool, succ: bool, dur: bool, ed: usize) -> ClassifierConfig {
        ClassifierConfig {
            use_preceding: prec,
            use_succeeding: succ,
            use_duration: dur,
            embedding_dim: ed,
            dur_hidden: 10,
        }
    }

    fn emb(v: Vec<f64>) -> ToneEmbedding {
        ToneEmbedding {
            c: Array1::from_vec(v),
        }
    }

    fn random_params(rng: &mut ChaCha8Rng, c: &ClassifierConfig) -> ClassifierParams {
        ClassifierParams {
            u: Array2::from_shape_fn((TONE_COUNT, c.c_dim()), |_| rng.random_range(-1.0..1.0)),
            u0: Array1::from_shape_fn(TONE_COUNT, |_| rng.random_range(-1.0..1.0)),
            duration: c.use_duration.then(|| DurationParams {
                wd: Array2::from_shape_fn((c.dur_hidden, 3), |_| rng.random_range(-1.0..1.0)),
                bd: Array1::from_shape_fn(c.dur_hidden, |_| rng.random_range(-1.0..1.0)),
            }),
        }
    }

    #[test]
    fn duration_branch_at_zero_weights_is_half() {
        let c = cfg(false, false, true, 4);
        let params = ClassifierParams::zeros(&c);
        let out = duration_branch(&[0.7, -1.0, 2.0], &params).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn duration_branch_zero_input_isolates_bias() {
        let c = cfg(false, false, true, 4);
        let mut params = ClassifierParams::zeros(&c);
        {
            let d = params.duration.as_mut().unwrap();
            d.wd.fill(3.0);
            for (i, b) in d.bd.iter_mut().enumerate() {
                *b = i as f64 - 5.0;
            }
        }
        let out = duration_branch(&[0.0, 0.0, 0.0], &params).unwrap();
        let bd = &params.duration.as_ref().unwrap().bd;
        for (o, b) in out.iter().zip(bd.iter()) {
            let want = 1.0 / (1.0 + (-b).exp());
            assert!((o - want).abs() < 1e-15);
        }
    }

    #[test]
    fn duration_branch_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let c = cfg(false, false, true, 4);
        for _ in 0..50 {
            let params = random_params(&mut rng, &c);
            let d = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let out = duration_branch(&d, &params).unwrap();
            let dp = params.duration.as_ref().unwrap();
            for i in 0..10 {
                let mut acc = dp.bd[i];
                for j in 0..3 {
                    acc += dp.wd[[i, j]] * d[j];
                }
                let want = 1.0 / (1.0 + (-acc).exp());
                assert!((out[i] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn duration_branch_requires_parameters() {
        let c = cfg(false, false, false, 4);
        let params = ClassifierParams::zeros(&c);
        assert_eq!(
            duration_branch(&[0.0; 3], &params).unwrap_err(),
            ClassifierError::MissingDurationParams
        );
    }

    #[test]
    fn assembled_dimension_with_both_contexts_and_duration() {
        let c = cfg(true, true, true, 250);
        assert_eq!(c.c_dim(), 760);
        let z = emb(vec![0.0; 250]);
        let dur = Array1::zeros(10);
        let out = assemble_input(&z, Some(&z), Some(&z), Some(dur.view()), &c).unwrap();
        assert_eq!(out.len(), 760);
    }

    #[test]
    fn bare_configuration_returns_current_embedding() {
        let c = cfg(false, false, false, 5);
        let e = emb(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let out = assemble_input(&e, None, None, None, &c).unwrap();
        assert_eq!(out, e.c);
    }

    #[test]
    fn missing_preceding_context_zero_fills_its_slot() {
        let c = cfg(true, false, false, 3);
        let e = emb(vec![0.7, 0.8, 0.9]);
        let out = assemble_input(&e, None, None, None, &c).unwrap();
        assert_eq!(out.to_vec(), vec![0.0, 0.0, 0.0, 0.7, 0.8, 0.9]);
    }

    #[test]
    fn concatenation_order_is_prec_curr_succ_dur() {
        let c = cfg(true, true, true, 2);
        let p = emb(vec![1.0, 1.0]);
        let e = emb(vec![2.0, 2.0]);
        let s = emb(vec![3.0, 3.0]);
        let dur = Array1::from_vec(vec![4.0; 10]);
        let out = assemble_input(&e, Some(&p), Some(&s), Some(dur.view()), &c).unwrap();
        let mut want = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        want.extend(vec![4.0; 10]);
        assert_eq!(out.to_vec(), want);
    }

    #[test]
    fn assemble_rejects_flag_mismatches() {
        let e = emb(vec![0.0; 3]);
        let other = emb(vec![1.0; 3]);
        let dur = Array1::zeros(10);

        let off = cfg(false, false, false, 3);
        assert_eq!(
            assemble_input(&e, Some(&other), None, None, &off).unwrap_err(),
            ClassifierError::UnexpectedContext("preceding")
        );
        assert_eq!(
            assemble_input(&e, None, Some(&other), None, &off).unwrap_err(),
            ClassifierError::UnexpectedContext("succeeding")
        );
        assert_eq!(
            assemble_input(&e, None, None, Some(dur.view()), &off).unwrap_err(),
            ClassifierError::UnexpectedDuration
        );

        let on = cfg(false, false, true, 3);
        assert_eq!(
            assemble_input(&e, None, None, None, &on).unwrap_err(),
            ClassifierError::MissingDuration
        );
        let short = Array1::zeros(4);
        assert!(matches!(
            assemble_input(&e, None, None, Some(short.view()), &on).unwrap_err(),
            ClassifierError::DimensionMismatch { .. }
        ));
        let wide = emb(vec![0.0; 4]);
        assert!(matches!(
            assemble_input(&wide, None, None, None, &off).unwrap_err(),
            ClassifierError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn assembly_is_injective_on_distinct_inputs() {
        let c = cfg(true, false, false, 2);
        let e = emb(vec![0.5, 0.5]);
        let p1 = emb(vec![0.1, 0.2]);
        let p2 = emb(vec![0.2, 0.1]);
        let a = assemble_input(&e, Some(&p1), None, None, &c).unwrap();
        let b = assemble_input(&e, Some(&p2), None, None, &c).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_weights_predict_uniform_posterior() {
        let c = cfg(false, false, false, 6);
        let params = ClassifierParams::zeros(&c);
        let x = Array1::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let post = predict(x.view(), &params).unwrap();
        for p in post.p {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_bias_saturates_stably() {
        let c = cfg(false, false, false, 2);
        let mut params = ClassifierParams::zeros(&c);
        params.u0[0] = 1000.0;
        let x = Array1::zeros(2);
        let post = predict(x.view(), &params).unwrap();
        assert!((post.p[0] - 1.0).abs() < 1e-12);
        assert!(post.p.iter().all(|v| v.is_finite()));
        assert!((post.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// Double-double (compensated) accumulation, used as an independent
    /// higher-precision reference for the softmax normalizer.
    fn dd_sum(values: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut comp = 0.0;
        for &v in values {
            let t = s + v;
            let bp = t - s;
            comp += (s - (t - bp)) + (v - bp);
            s = t;
        }
        s + comp
    }

    #[test]
    fn softmax_matches_extended_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c = cfg(false, false, false, 4);
        for _ in 0..100 {
            let params = random_params(&mut rng, &c);
            let x = Array1::from_shape_fn(4, |_| rng.random_range(-5.0..5.0));
            let post = predict(x.view(), &params).unwrap();
            let logits = post.logits();
            let exps: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
            let total = dd_sum(&exps);
            for (p, e) in post.p.iter().zip(exps.iter()) {
                assert!((p - e / total).abs() < 1e-12);
            }
            assert!((post.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_normalizes_for_extreme_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let c = cfg(false, false, false, 1);
        for _ in 0..100 {
            let mut params = ClassifierParams::zeros(&c);
            for v in params.u0.iter_mut() {
                *v = rng.random_range(-1e4..1e4);
            }
            let x = Array1::zeros(1);
            let post = predict(x.view(), &params).unwrap();
            assert!(post.p.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((post.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_breaks_ties_toward_lowest_index() {
        let c = cfg(false, false, false, 3);
        let params = ClassifierParams::zeros(&c);
        let x = Array1::zeros(3);
        assert_eq!(classify(x.view(), &params).unwrap().index(), 0);
    }

    #[test]
    fn classify_follows_dominant_bias() {
        let c = cfg(false, false, false, 3);
        let mut params = ClassifierParams::zeros(&c);
        params.u0[4] = 5.0;
        let x = Array1::zeros(3);
        assert_eq!(classify(x.view(), &params).unwrap().index(), 4);
    }

    #[test]
    fn logit_shift_leaves_decision_and_probabilities_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let c = cfg(false, false, false, 3);
        for _ in 0..100 {
            let params = random_params(&mut rng, &c);
            let mut shifted = params.clone();
            let shift = rng.random_range(-50.0..50.0);
            for v in shifted.u0.iter_mut() {
                *v += shift;
            }
            let x = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
            let a = predict(x.view(), &params).unwrap();
            let b = predict(x.view(), &shifted).unwrap();
            for (pa, pb) in a.p.iter().zip(b.p.iter()) {
                assert!((pa - pb).abs() < 1e-12);
            }
            assert_eq!(argmax_label(&a), argmax_label(&b));
        }
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let c = cfg(false, false, false, 3);
        let params = ClassifierParams::zeros(&c);
        let x = Array1::zeros(4);
        assert!(matches!(
            predict(x.view(), &params).unwrap_err(),
            ClassifierError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn check_shapes_enforces_duration_consistency() {
        let with = cfg(false, false, true, 3);
        let without = cfg(false, false, false, 3);
        assert!(ClassifierParams::zeros(&with).check_shapes(&with).is_ok());
        assert!(ClassifierParams::zeros(&without).check_shapes(&without).is_ok());

        // Correctly shaped U but the duration branch is absent/present
        // against the flag.
        let mut missing = ClassifierParams::zeros(&with);
        missing.duration = None;
        assert_eq!(
            missing.check_shapes(&with).unwrap_err(),
            ClassifierError::MissingDurationParams
        );
        let mut extra = ClassifierParams::zeros(&without);
        extra.duration = Some(DurationParams::zeros(10));
        assert_eq!(
            extra.check_shapes(&without).unwrap_err(),
            ClassifierError::UnexpectedDuration
        );
    }
}
