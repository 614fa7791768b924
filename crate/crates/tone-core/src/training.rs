//! Joint training of encoder and classifier: cross-entropy loss, exact
//! gradients by backpropagation through time, minibatch SGD, and a
//! finite-difference gradient checker.
//!
//! Gradients are propagated through the softmax layer, the input
//! concatenation, the duration branch, the pooling layer (all three kinds),
//! and the fully unrolled Elman recursion of every encoder pass. Contextual
//! passes reuse the shared encoder parameters, so their gradients accumulate
//! into the same tensors.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{
    assemble_input, duration_branch, predict, ClassifierConfig, ClassifierError, ClassifierParams,
    TonePosterior,
};
use crate::encoder::{
    encode, run_cell, CellParams, Direction, EncoderConfig, EncoderError, EncoderParams, Pooling,
    ToneEmbedding,
};
use crate::features::{
    duration_vector, splice, DurationStats, FeatureError, SegmentScope, SpliceConfig, ToneLabel,
    Utterance, TONE_COUNT,
};
use crate::math::logsumexp;

/// Errors from training and gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// No training examples were supplied.
    EmptyCorpus,
    /// A hyperparameter failed validation.
    BadHyperparams(&'static str),
    /// The model configuration is internally inconsistent.
    ConfigMismatch(&'static str),
    /// An example does not fit the configuration.
    ExampleMismatch {
        index: usize,
        what: &'static str,
    },
    /// Duration features are configured but no duration statistics exist.
    MissingDurationStats,
    /// The loss left the finite range; training aborted.
    NonFiniteLoss { epoch: usize, batch: usize },
    Encoder(EncoderError),
    Classifier(ClassifierError),
    Feature(FeatureError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptyCorpus => write!(f, "empty training corpus"),
            TrainError::BadHyperparams(what) => write!(f, "bad hyperparameters: {what}"),
            TrainError::ConfigMismatch(what) => write!(f, "inconsistent model config: {what}"),
            TrainError::ExampleMismatch { index, what } => {
                write!(f, "training example {index}: {what}")
            }
            TrainError::MissingDurationStats => {
                write!(f, "duration features require duration statistics")
            }
            TrainError::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss in epoch {epoch}, batch {batch}; training aborted")
            }
            TrainError::Encoder(e) => write!(f, "{e}"),
            TrainError::Classifier(e) => write!(f, "{e}"),
            TrainError::Feature(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<EncoderError> for TrainError {
    fn from(e: EncoderError) -> Self {
        TrainError::Encoder(e)
    }
}

impl From<ClassifierError> for TrainError {
    fn from(e: ClassifierError) -> Self {
        TrainError::Classifier(e)
    }
}

impl From<FeatureError> for TrainError {
    fn from(e: FeatureError) -> Self {
        TrainError::Feature(e)
    }
}

/// One spliced syllable with its neighbours and label, ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Spliced observations of the current syllable, `T × input_dim`.
    pub curr_seq: Array2<f64>,
    /// Spliced observations of the neighbours; `None` at utterance
    /// boundaries.
    pub prec_seq: Option<Array2<f64>>,
    pub succ_seq: Option<Array2<f64>>,
    /// Duration features `(d_prec, d_curr, d_succ)`, when configured.
    pub dur: Option<[f64; 3]>,
    pub label: ToneLabel,
}

/// Training hyperparameters.
///
/// `learning_rate` and `init_scale` may be zero (useful for no-op and
/// degenerate-initialization checks); everything else must be positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub epochs: usize,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            minibatch_size: 32,
            epochs: 20,
            grad_clip_norm: Some(5.0),
            seed: 1,
            init_scale: 0.1,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::BadHyperparams(
                "learning_rate must be finite and non-negative",
            ));
        }
        if self.minibatch_size == 0 {
            return Err(TrainError::BadHyperparams("minibatch_size must be positive"));
        }
        if self.epochs == 0 {
            return Err(TrainError::BadHyperparams("epochs must be positive"));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(TrainError::BadHyperparams(
                    "grad_clip_norm must be positive when set",
                ));
            }
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(TrainError::BadHyperparams(
                "init_scale must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// The complete model shape: feature, encoder, and classifier choices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub splice: SpliceConfig,
    pub scope: SegmentScope,
    pub encoder: EncoderConfig,
    pub classifier: ClassifierConfig,
}

impl ModelConfig {
    /// Builds a config from the independent choices, deriving the dependent
    /// dimensions (`encoder.input_dim`, `classifier.embedding_dim`).
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        splice_radius: usize,
        scope: SegmentScope,
        direction: Direction,
        pooling: Pooling,
        hidden_size: usize,
        use_preceding: bool,
        use_succeeding: bool,
        use_duration: bool,
        dur_hidden: usize,
    ) -> Self {
        let splice = SpliceConfig::new(splice_radius);
        let encoder = EncoderConfig {
            direction,
            pooling,
            hidden_size,
            input_dim: splice.output_dim(),
        };
        let classifier = ClassifierConfig {
            use_preceding,
            use_succeeding,
            use_duration,
            embedding_dim: encoder.embedding_dim(),
            dur_hidden,
        };
        ModelConfig {
            splice,
            scope,
            encoder,
            classifier,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.encoder.hidden_size == 0 {
            return Err(TrainError::ConfigMismatch("hidden_size must be positive"));
        }
        if self.encoder.input_dim != self.splice.output_dim() {
            return Err(TrainError::ConfigMismatch(
                "encoder input_dim must equal the spliced frame dimension",
            ));
        }
        if self.classifier.embedding_dim != self.encoder.embedding_dim() {
            return Err(TrainError::ConfigMismatch(
                "classifier embedding_dim must equal the encoder embedding dimension",
            ));
        }
        if self.classifier.use_duration && self.classifier.dur_hidden == 0 {
            return Err(TrainError::ConfigMismatch(
                "dur_hidden must be positive when duration features are used",
            ));
        }
        Ok(())
    }

    /// A short, stable textual identity for reports.
    pub fn describe(&self) -> String {
        let scope = match self.scope {
            SegmentScope::FinalOnly => "final",
            SegmentScope::FullSyllable => "syllable",
        };
        let dir = match self.encoder.direction {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
            Direction::Bidirectional => "bi",
        };
        let pool = match self.encoder.pooling {
            Pooling::Last => "last",
            Pooling::Average => "avg",
            Pooling::Max => "max",
        };
        format!(
            "scope={scope} radius={} dir={dir} pool={pool} hidden={} prec={} succ={} dur={}",
            self.splice.radius,
            self.encoder.hidden_size,
            self.classifier.use_preceding as u8,
            self.classifier.use_succeeding as u8,
            self.classifier.use_duration as u8,
        )
    }
}

/// All trainable tensors of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub classifier: ClassifierParams,
}

/// Gradient tensors, shaped exactly like the parameters they belong to.
pub type Gradients = ModelParams;

impl ModelParams {
    /// All-zero parameters shaped for `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelParams {
            encoder: EncoderParams::zeros(&cfg.encoder),
            classifier: ClassifierParams::zeros(&cfg.classifier),
        }
    }

    /// Checks every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), TrainError> {
        self.encoder.check_shapes(&cfg.encoder)?;
        self.classifier.check_shapes(&cfg.classifier)?;
        Ok(())
    }

    fn tensor_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(10);
        let cell = &self.encoder.cell;
        v.push(cell.w.as_slice().expect("standard layout"));
        v.push(cell.v.as_slice().expect("standard layout"));
        v.push(cell.b.as_slice().expect("standard layout"));
        if let Some(bwd) = &self.encoder.backward {
            v.push(bwd.w.as_slice().expect("standard layout"));
            v.push(bwd.v.as_slice().expect("standard layout"));
            v.push(bwd.b.as_slice().expect("standard layout"));
        }
        v.push(self.classifier.u.as_slice().expect("standard layout"));
        v.push(self.classifier.u0.as_slice().expect("standard layout"));
        if let Some(d) = &self.classifier.duration {
            v.push(d.wd.as_slice().expect("standard layout"));
            v.push(d.bd.as_slice().expect("standard layout"));
        }
        v
    }

    fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(10);
        let cell = &mut self.encoder.cell;
        v.push(cell.w.as_slice_mut().expect("standard layout"));
        v.push(cell.v.as_slice_mut().expect("standard layout"));
        v.push(cell.b.as_slice_mut().expect("standard layout"));
        if let Some(bwd) = &mut self.encoder.backward {
            v.push(bwd.w.as_slice_mut().expect("standard layout"));
            v.push(bwd.v.as_slice_mut().expect("standard layout"));
            v.push(bwd.b.as_slice_mut().expect("standard layout"));
        }
        v.push(self.classifier.u.as_slice_mut().expect("standard layout"));
        v.push(self.classifier.u0.as_slice_mut().expect("standard layout"));
        if let Some(d) = &mut self.classifier.duration {
            v.push(d.wd.as_slice_mut().expect("standard layout"));
            v.push(d.bd.as_slice_mut().expect("standard layout"));
        }
        v
    }

    /// Named tensors with shapes, in canonical serialization order.
    pub fn named_tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut v = Vec::with_capacity(10);
        let cell = &self.encoder.cell;
        v.push((
            "enc.W",
            vec![cell.w.nrows(), cell.w.ncols()],
            cell.w.as_slice().expect("standard layout"),
        ));
        v.push((
            "enc.V",
            vec![cell.v.nrows(), cell.v.ncols()],
            cell.v.as_slice().expect("standard layout"),
        ));
        v.push((
            "enc.b",
            vec![cell.b.len()],
            cell.b.as_slice().expect("standard layout"),
        ));
        if let Some(bwd) = &self.encoder.backward {
            v.push((
                "enc_bwd.W",
                vec![bwd.w.nrows(), bwd.w.ncols()],
                bwd.w.as_slice().expect("standard layout"),
            ));
            v.push((
                "enc_bwd.V",
                vec![bwd.v.nrows(), bwd.v.ncols()],
                bwd.v.as_slice().expect("standard layout"),
            ));
            v.push((
                "enc_bwd.b",
                vec![bwd.b.len()],
                bwd.b.as_slice().expect("standard layout"),
            ));
        }
        v.push((
            "cls.U",
            vec![self.classifier.u.nrows(), self.classifier.u.ncols()],
            self.classifier.u.as_slice().expect("standard layout"),
        ));
        v.push((
            "cls.u0",
            vec![self.classifier.u0.len()],
            self.classifier.u0.as_slice().expect("standard layout"),
        ));
        if let Some(d) = &self.classifier.duration {
            v.push((
                "cls.Wd",
                vec![d.wd.nrows(), d.wd.ncols()],
                d.wd.as_slice().expect("standard layout"),
            ));
            v.push((
                "cls.bd",
                vec![d.bd.len()],
                d.bd.as_slice().expect("standard layout"),
            ));
        }
        v
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.tensor_slices().iter().map(|s| s.len()).sum()
    }

    /// All parameters concatenated in canonical tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for s in self.tensor_slices() {
            out.extend_from_slice(s);
        }
        out
    }

    /// Rebuilds parameters shaped for `cfg` from a flat vector in canonical
    /// tensor order.
    pub fn from_flat(cfg: &ModelConfig, flat: &[f64]) -> Result<Self, TrainError> {
        let mut params = ModelParams::zeros(cfg);
        let mut at = 0usize;
        for dst in params.tensor_slices_mut() {
            let end = at + dst.len();
            if end > flat.len() {
                return Err(TrainError::ConfigMismatch(
                    "flat parameter vector too short for config",
                ));
            }
            dst.copy_from_slice(&flat[at..end]);
            at = end;
        }
        if at != flat.len() {
            return Err(TrainError::ConfigMismatch(
                "flat parameter vector too long for config",
            ));
        }
        Ok(params)
    }

    /// `self += alpha · other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        let others = other.tensor_slices();
        for (dst, src) in self.tensor_slices_mut().into_iter().zip(others) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += alpha * s;
            }
        }
    }

    /// Multiplies every parameter by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for dst in self.tensor_slices_mut() {
            for d in dst {
                *d *= factor;
            }
        }
    }

    /// Sets every parameter to zero.
    pub fn set_zero(&mut self) {
        for dst in self.tensor_slices_mut() {
            for d in dst {
                *d = 0.0;
            }
        }
    }

    /// Sum of squares over all parameters.
    pub fn sq_norm(&self) -> f64 {
        self.tensor_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum()
    }
}

/// Per-epoch training statistics, in the order they were produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean per-example loss over the epoch, measured as examples are
    /// visited.
    pub mean_loss: f64,
    /// Fraction of examples classified correctly as they are visited.
    pub train_accuracy: f64,
}

/// Draws initial parameters: weights i.i.d. uniform on `[−scale, +scale]`,
/// biases zero.
///
/// Tensors are filled in canonical serialization order, each in row-major
/// order, from a generator seeded with `seed`, so identical inputs give
/// bit-identical parameters.
pub fn init_params(cfg: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(cfg);
    let mut fill = |m: &mut Array2<f64>| {
        for v in m.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
    };
    if scale > 0.0 {
        fill(&mut params.encoder.cell.w);
        fill(&mut params.encoder.cell.v);
        if let Some(bwd) = &mut params.encoder.backward {
            fill(&mut bwd.w);
            fill(&mut bwd.v);
        }
        fill(&mut params.classifier.u);
        if let Some(d) = &mut params.classifier.duration {
            fill(&mut d.wd);
        }
    }
    params
}

/// Cross-entropy loss `−log p(label)`, computed from the logits in fused
/// log-sum-exp form rather than from a (possibly clipped) probability.
pub fn loss(posterior: &TonePosterior, label: ToneLabel) -> f64 {
    let logits = posterior.logits();
    logsumexp(logits) - logits[label.index()]
}

/// One backpropagation result.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Gradients,
    pub loss: f64,
    pub posterior: TonePosterior,
    /// Argmax decision under the current parameters (lowest index on ties).
    pub predicted: ToneLabel,
}

/// Forward record of one encoder pass: aligned hidden states, per half.
struct PassTrace<'a> {
    x: &'a Array2<f64>,
    /// States of the primary cell (reversed read for `Direction::Backward`).
    primary: Array2<f64>,
    /// States of the backward cell for bidirectional encoders.
    secondary: Option<Array2<f64>>,
}

fn check_example(ex: &TrainingExample, cfg: &ModelConfig, index: usize) -> Result<(), TrainError> {
    let dim = cfg.encoder.input_dim;
    if ex.curr_seq.nrows() == 0 {
        return Err(TrainError::ExampleMismatch {
            index,
            what: "empty current-syllable sequence",
        });
    }
    if ex.curr_seq.ncols() != dim {
        return Err(TrainError::ExampleMismatch {
            index,
            what: "current-syllable dimension does not match encoder input_dim",
        });
    }
    if let Some(m) = &ex.prec_seq {
        if m.nrows() == 0 || m.ncols() != dim {
            return Err(TrainError::ExampleMismatch {
                index,
                what: "bad preceding-syllable sequence shape",
            });
        }
    }
    if let Some(m) = &ex.succ_seq {
        if m.nrows() == 0 || m.ncols() != dim {
            return Err(TrainError::ExampleMismatch {
                index,
                what: "bad succeeding-syllable sequence shape",
            });
        }
    }
    if cfg.classifier.use_duration && ex.dur.is_none() {
        return Err(TrainError::ExampleMismatch {
            index,
            what: "duration features configured but absent from example",
        });
    }
    Ok(())
}

/// Runs the encoder over one sequence, recording aligned states per half.
fn trace_pass<'a>(
    x: &'a Array2<f64>,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<PassTrace<'a>, TrainError> {
    let (primary, secondary) = match cfg.direction {
        Direction::Forward => (run_cell(x.view(), &params.cell, false)?, None),
        Direction::Backward => (run_cell(x.view(), &params.cell, true)?, None),
        Direction::Bidirectional => {
            let bwd = params
                .backward
                .as_ref()
                .ok_or(EncoderError::MissingBackwardParams)?;
            (
                run_cell(x.view(), &params.cell, false)?,
                Some(run_cell(x.view(), bwd, true)?),
            )
        }
    };
    Ok(PassTrace {
        x,
        primary,
        secondary,
    })
}

/// Traces a contextual pass when its flag is on and the neighbour exists.
fn trace_context<'a>(
    seq: &'a Option<Array2<f64>>,
    used: bool,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Option<(PassTrace<'a>, ToneEmbedding)>, TrainError> {
    match (used, seq) {
        (true, Some(x)) => {
            let trace = trace_pass(x, params, cfg)?;
            let emb = pooled_embedding(&trace, cfg)?;
            Ok(Some((trace, emb)))
        }
        _ => Ok(None),
    }
}

fn pooled_embedding(trace: &PassTrace<'_>, cfg: &EncoderConfig) -> Result<ToneEmbedding, TrainError> {
    let a = crate::encoder::pool(trace.primary.view(), cfg.pooling)?;
    let c = match &trace.secondary {
        Some(sec) => {
            let b = crate::encoder::pool(sec.view(), cfg.pooling)?;
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("same hidden size")
        }
        None => a,
    };
    Ok(ToneEmbedding { c })
}

/// Distributes an embedding gradient back over aligned hidden states.
///
/// Average pooling spreads the gradient uniformly; last pooling sends it to
/// the final aligned state; max pooling routes each unit's gradient to the
/// earliest time step attaining that unit's maximum, all other steps
/// receiving exactly zero.
fn pool_backward(
    demb: ArrayView1<f64>,
    states: ArrayView2<f64>,
    kind: Pooling,
) -> Array2<f64> {
    let t_len = states.nrows();
    let h = states.ncols();
    let mut g = Array2::zeros((t_len, h));
    match kind {
        Pooling::Last => {
            g.row_mut(t_len - 1).assign(&demb);
        }
        Pooling::Average => {
            let share = 1.0 / t_len as f64;
            for mut row in g.rows_mut() {
                row.assign(&demb);
                row *= share;
            }
        }
        Pooling::Max => {
            for j in 0..h {
                let mut best = 0usize;
                for t in 1..t_len {
                    if states[[t, j]] > states[[best, j]] {
                        best = t;
                    }
                }
                g[[best, j]] = demb[j];
            }
        }
    }
    g
}

/// Backpropagation through the unrolled recursion of one cell.
///
/// `states` are aligned to original time order; with `reversed` the
/// recursion ran back-to-front, so the chain rule walks front-to-back.
fn bptt_cell(
    x: &Array2<f64>,
    states: &Array2<f64>,
    dstates: &Array2<f64>,
    cell: &CellParams,
    grads: &mut CellParams,
    reversed: bool,
) {
    let t_len = x.nrows();
    let h = states.ncols();

    // Processing order: the order the recursion consumed the frames.
    let (x_p, h_p, g_p) = if reversed {
        (
            x.slice(s![..;-1, ..]).to_owned(),
            states.slice(s![..;-1, ..]).to_owned(),
            dstates.slice(s![..;-1, ..]).to_owned(),
        )
    } else {
        (x.clone(), states.clone(), dstates.clone())
    };

    let mut dpre = Array2::zeros((t_len, h));
    let mut carry: Array1<f64> = Array1::zeros(h);
    for k in (0..t_len).rev() {
        // dL/dh_k: pooling contribution plus the recurrent term from step k+1.
        let mut dh = &g_p.row(k) + &carry;
        let hk = h_p.row(k);
        dh.zip_mut_with(&hk, |d, &hv| *d *= hv * (1.0 - hv));
        dpre.row_mut(k).assign(&dh);
        if k > 0 {
            general_mat_vec_mul(1.0, &cell.v.t(), &dh, 0.0, &mut carry);
        }
    }

    general_mat_mul(1.0, &dpre.t(), &x_p, 1.0, &mut grads.w);
    if t_len > 1 {
        general_mat_mul(
            1.0,
            &dpre.slice(s![1.., ..]).t(),
            &h_p.slice(s![..t_len - 1, ..]),
            1.0,
            &mut grads.v,
        );
    }
    grads.b += &dpre.sum_axis(Axis(0));
}

/// Accumulates `a ⊗ b` into `dst`.
fn outer_acc(dst: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    general_mat_mul(1.0, &a2, &b2, 1.0, dst);
}

/// Exact loss gradients for one example, through every layer and every
/// encoder pass.
pub fn backprop(
    ex: &TrainingExample,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Backprop, TrainError> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    check_example(ex, cfg, 0)?;

    let enc_cfg = &cfg.encoder;
    let cls_cfg = &cfg.classifier;
    let ed = cls_cfg.embedding_dim;

    // Forward, keeping the hidden states of every pass. A configured but
    // missing neighbour contributes a zero embedding and receives no
    // gradient, so its trace is simply absent.
    let curr_trace = trace_pass(&ex.curr_seq, &params.encoder, enc_cfg)?;
    let curr_emb = pooled_embedding(&curr_trace, enc_cfg)?;
    let prec_pass = trace_context(&ex.prec_seq, cls_cfg.use_preceding, &params.encoder, enc_cfg)?;
    let succ_pass = trace_context(&ex.succ_seq, cls_cfg.use_succeeding, &params.encoder, enc_cfg)?;

    let dur_out = match (cls_cfg.use_duration, &ex.dur) {
        (true, Some(d)) => Some(duration_branch(d, &params.classifier)?),
        (true, None) => return Err(ClassifierError::MissingDuration.into()),
        (false, _) => None,
    };

    let z = assemble_input(
        &curr_emb,
        prec_pass.as_ref().map(|(_, e)| e),
        succ_pass.as_ref().map(|(_, e)| e),
        dur_out.as_ref().map(|d| d.view()),
        cls_cfg,
    )?;
    let posterior = predict(z.view(), &params.classifier)?;
    let loss_val = loss(&posterior, ex.label);
    let predicted = crate::classifier::argmax_label(&posterior);

    // Backward.
    let mut grads = ModelParams::zeros(cfg);

    let mut dlogits = Array1::from_iter(posterior.p.iter().copied());
    dlogits[ex.label.index()] -= 1.0;
    outer_acc(&mut grads.classifier.u, dlogits.view(), z.view());
    grads.classifier.u0 += &dlogits;

    let mut dz = Array1::zeros(z.len());
    general_mat_vec_mul(1.0, &params.classifier.u.t(), &dlogits, 0.0, &mut dz);

    // Split dz along the assembled layout: (prec?, curr, succ?, dur?).
    let mut at = 0usize;
    let dprec = cls_cfg.use_preceding.then(|| {
        let g = dz.slice(s![at..at + ed]).to_owned();
        at += ed;
        g
    });
    let dcurr = dz.slice(s![at..at + ed]).to_owned();
    at += ed;
    let dsucc = cls_cfg.use_succeeding.then(|| {
        let g = dz.slice(s![at..at + ed]).to_owned();
        at += ed;
        g
    });
    if let Some(s_out) = &dur_out {
        // σ'(pre) = s(1−s) on the branch output.
        let mut dpre = dz.slice(s![at..at + cls_cfg.dur_hidden]).to_owned();
        dpre.zip_mut_with(s_out, |d, &sv| *d *= sv * (1.0 - sv));
        let d_in = ex.dur.as_ref().expect("checked above");
        let dg = grads
            .classifier
            .duration
            .as_mut()
            .expect("duration grads shaped by cfg");
        outer_acc(&mut dg.wd, dpre.view(), ArrayView1::from(&d_in[..]));
        dg.bd += &dpre;
    }

    // Through pooling and the recursion of every present pass; contextual
    // passes share the encoder cells, so gradients accumulate into the same
    // tensors across passes.
    let mut passes: Vec<(&PassTrace<'_>, &Array1<f64>)> = Vec::with_capacity(3);
    if let (Some((trace, _)), Some(g)) = (&prec_pass, &dprec) {
        passes.push((trace, g));
    }
    passes.push((&curr_trace, &dcurr));
    if let (Some((trace, _)), Some(g)) = (&succ_pass, &dsucc) {
        passes.push((trace, g));
    }
    for (trace, demb) in passes {
        match enc_cfg.direction {
            Direction::Forward | Direction::Backward => {
                let reversed = enc_cfg.direction == Direction::Backward;
                let dstates = pool_backward(demb.view(), trace.primary.view(), enc_cfg.pooling);
                bptt_cell(
                    trace.x,
                    &trace.primary,
                    &dstates,
                    &params.encoder.cell,
                    &mut grads.encoder.cell,
                    reversed,
                );
            }
            Direction::Bidirectional => {
                let h = enc_cfg.hidden_size;
                let dstates_f =
                    pool_backward(demb.slice(s![..h]), trace.primary.view(), enc_cfg.pooling);
                bptt_cell(
                    trace.x,
                    &trace.primary,
                    &dstates_f,
                    &params.encoder.cell,
                    &mut grads.encoder.cell,
                    false,
                );
                let secondary = trace.secondary.as_ref().expect("bidirectional trace");
                let cell_b = params.encoder.backward.as_ref().expect("checked");
                let dstates_b =
                    pool_backward(demb.slice(s![h..]), secondary.view(), enc_cfg.pooling);
                bptt_cell(
                    trace.x,
                    secondary,
                    &dstates_b,
                    cell_b,
                    grads.encoder.backward.as_mut().expect("shaped by cfg"),
                    true,
                );
            }
        }
    }

    Ok(Backprop {
        grads,
        loss: loss_val,
        posterior,
        predicted,
    })
}

/// Loss of one example under given parameters, via the composed public
/// forward path (used by the finite-difference oracle).
pub fn example_loss(
    ex: &TrainingExample,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<f64, TrainError> {
    let posterior = example_posterior(ex, params, cfg)?;
    Ok(loss(&posterior, ex.label))
}

/// Posterior of one example under given parameters, composing the public
/// encode/assemble/predict operations.
pub fn example_posterior(
    ex: &TrainingExample,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<TonePosterior, TrainError> {
    let enc = |seq: &Array2<f64>| encode(seq.view(), &params.encoder, &cfg.encoder);
    let curr = enc(&ex.curr_seq)?;
    let prec = match (&ex.prec_seq, cfg.classifier.use_preceding) {
        (Some(x), true) => Some(enc(x)?),
        _ => None,
    };
    let succ = match (&ex.succ_seq, cfg.classifier.use_succeeding) {
        (Some(x), true) => Some(enc(x)?),
        _ => None,
    };
    let dur_out = match (cfg.classifier.use_duration, &ex.dur) {
        (true, Some(d)) => Some(duration_branch(d, &params.classifier)?),
        (true, None) => return Err(ClassifierError::MissingDuration.into()),
        (false, _) => None,
    };
    let z = assemble_input(
        &curr,
        prec.as_ref(),
        succ.as_ref(),
        dur_out.as_ref().map(|d| d.view()),
        &cfg.classifier,
    )?;
    Ok(predict(z.view(), &params.classifier)?)
}

/// Builds training examples from a segmented corpus: one example per
/// syllable, with neighbour sequences and duration features as configured.
///
/// The corpus is expected to be speaker-normalized already; `stats` must be
/// present when `cfg` uses duration features (computed on the training
/// split and frozen).
pub fn build_examples(
    corpus: &[Utterance],
    cfg: &ModelConfig,
    stats: Option<&DurationStats>,
) -> Result<Vec<TrainingExample>, TrainError> {
    cfg.validate()?;
    if cfg.classifier.use_duration && stats.is_none() {
        return Err(TrainError::MissingDurationStats);
    }
    let mut out = Vec::new();
    for utt in corpus {
        if utt.syllables.is_empty() {
            continue;
        }
        let spliced = splice(&utt.frames, &cfg.splice)?;
        let cut = |seg: &crate::features::SyllableSegment| {
            let (a, b) = seg.bounds(cfg.scope);
            spliced.slice(s![a..b, ..]).to_owned()
        };
        for (idx, seg) in utt.syllables.iter().enumerate() {
            let prec_seq = if cfg.classifier.use_preceding && idx > 0 {
                Some(cut(&utt.syllables[idx - 1]))
            } else {
                None
            };
            let succ_seq = if cfg.classifier.use_succeeding && idx + 1 < utt.syllables.len() {
                Some(cut(&utt.syllables[idx + 1]))
            } else {
                None
            };
            let dur = match stats {
                Some(st) if cfg.classifier.use_duration => {
                    Some(duration_vector(utt, idx, st)?)
                }
                _ => None,
            };
            out.push(TrainingExample {
                curr_seq: cut(seg),
                prec_seq,
                succ_seq,
                dur,
                label: seg.tone,
            });
        }
    }
    if out.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    Ok(out)
}

/// Minibatch SGD over the examples. Returns the trained parameters and the
/// per-epoch log.
pub fn train(
    examples: &[TrainingExample],
    cfg: &ModelConfig,
    hp: &Hyperparams,
) -> Result<(ModelParams, Vec<EpochStats>), TrainError> {
    train_with(examples, cfg, hp, |_| {})
}

/// `train` with an observer invoked after each epoch (for live logging).
///
/// Uses mean minibatch gradients, a fresh seeded shuffle every epoch, and
/// optional global-norm gradient clipping (a clip that never binds leaves
/// every update bit-identical to no clipping). Single-threaded and
/// deterministic for a fixed seed.
pub fn train_with(
    examples: &[TrainingExample],
    cfg: &ModelConfig,
    hp: &Hyperparams,
    mut observer: impl FnMut(&EpochStats),
) -> Result<(ModelParams, Vec<EpochStats>), TrainError> {
    cfg.validate()?;
    hp.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    for (i, ex) in examples.iter().enumerate() {
        check_example(ex, cfg, i)?;
    }

    let mut params = init_params(cfg, hp.seed, hp.init_scale);
    // The shuffle stream is separated from the initialization stream so the
    // two deterministic draws never interleave.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hp.seed);
    shuffle_rng.set_stream(1);

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad_buf = ModelParams::zeros(cfg);
    let mut log = Vec::with_capacity(hp.epochs);

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for (batch_idx, batch) in order.chunks(hp.minibatch_size).enumerate() {
            grad_buf.set_zero();
            for &i in batch {
                let bp = backprop(&examples[i], &params, cfg)?;
                if !bp.loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                loss_sum += bp.loss;
                if bp.predicted == examples[i].label {
                    correct += 1;
                }
                grad_buf.add_scaled(1.0, &bp.grads);
            }
            grad_buf.scale(1.0 / batch.len() as f64);
            if let Some(clip) = hp.grad_clip_norm {
                let norm = libm::sqrt(grad_buf.sq_norm());
                if norm > clip {
                    grad_buf.scale(clip / norm);
                }
            }
            params.add_scaled(-hp.learning_rate, &grad_buf);
        }

        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / examples.len() as f64,
            train_accuracy: correct as f64 / examples.len() as f64,
        };
        observer(&stats);
        log.push(stats);
    }
    Ok((params, log))
}

/// Compares analytic gradients against central finite differences over every
/// parameter of a small random model, returning the maximum relative error
/// `|a − n| / (|a| + |n| + 1e-12)`.
///
/// Intended for small configurations (hidden ≤ 8, short sequences) where the
/// exhaustive sweep is cheap.
pub fn grad_check(cfg: &ModelConfig, seed: u64, epsilon: f64) -> Result<f64, TrainError> {
    cfg.validate()?;
    if !(epsilon > 0.0) {
        return Err(TrainError::BadHyperparams("epsilon must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cfg.encoder.input_dim;

    let mut seq = |t: usize| Array2::from_shape_fn((t, dim), |_| rng.random_range(-1.0..1.0));
    let curr_seq = seq(5);
    let prec_seq = cfg.classifier.use_preceding.then(|| seq(3));
    let succ_seq = cfg.classifier.use_succeeding.then(|| seq(6));
    let dur = cfg.classifier.use_duration.then(|| {
        [
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
        ]
    });
    let label = ToneLabel::new(rng.random_range(0..TONE_COUNT as u8)).expect("in range");
    let ex = TrainingExample {
        curr_seq,
        prec_seq,
        succ_seq,
        dur,
        label,
    };

    // Random parameters including biases, away from saturation.
    let mut params = ModelParams::zeros(cfg);
    for slice in params.tensor_slices_mut() {
        for v in slice {
            *v = rng.random_range(-0.5..0.5);
        }
    }

    let analytic = backprop(&ex, &params, cfg)?.grads.to_flat();
    let base = params.to_flat();
    let mut max_rel = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += epsilon;
        let mut minus = base.clone();
        minus[i] -= epsilon;
        let lp = example_loss(&ex, &ModelParams::from_flat(cfg, &plus)?, cfg)?;
        let lm = example_loss(&ex, &ModelParams::from_flat(cfg, &minus)?, cfg)?;
        let numeric = (lp - lm) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
