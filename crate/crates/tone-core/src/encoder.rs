//! The recurrent tone encoder: an Elman network whose hidden states are
//! pooled into a fixed-dimensional embedding.
//!
//! A sequence of spliced frames is run through `h_t = σ(W·x_t + V·h_{t−1} + b)`
//! with `h_0 = 0`, then reduced over time by one of three pooling layers
//! (last state, elementwise average, elementwise maximum). The encoder can
//! read the sequence forwards, backwards (same parameters, reversed order),
//! or both ways with a separate backward parameter set whose pooled states
//! are concatenated onto the forward ones.

use core::fmt;

use alloc::vec::Vec;
use ndarray::linalg::general_mat_vec_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::math::sigmoid;

/// Errors from encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderError {
    /// The observation sequence had no frames.
    EmptySequence,
    /// A vector or matrix dimension did not match the configuration.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Bidirectional encoding was requested but no backward parameters exist.
    MissingBackwardParams,
}

impl fmt::Display for EncoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderError::EmptySequence => write!(f, "empty observation sequence"),
            EncoderError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            EncoderError::MissingBackwardParams => {
                write!(f, "bidirectional encoding requires backward parameters")
            }
        }
    }
}

impl core::error::Error for EncoderError {}

/// Reading order of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    /// Forward and backward passes with separate parameters, pooled
    /// embeddings concatenated.
    Bidirectional,
}

/// Time-pooling applied to the hidden-state sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Hidden state of the last frame.
    Last,
    /// Elementwise mean over all frames.
    Average,
    /// Elementwise maximum over all frames.
    Max,
}

/// One Elman cell: `h_t = σ(W·x_t + V·h_{t−1} + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    /// Input weights, `hidden_size × input_dim`.
    pub w: Array2<f64>,
    /// Recurrent weights, `hidden_size × hidden_size`.
    pub v: Array2<f64>,
    /// Bias, `hidden_size`.
    pub b: Array1<f64>,
}

impl CellParams {
    /// All-zero cell of the given shape.
    pub fn zeros(hidden_size: usize, input_dim: usize) -> Self {
        CellParams {
            w: Array2::zeros((hidden_size, input_dim)),
            v: Array2::zeros((hidden_size, hidden_size)),
            b: Array1::zeros(hidden_size),
        }
    }

    fn check_shapes(&self, hidden_size: usize, input_dim: usize) -> Result<(), EncoderError> {
        let checks = [
            ("W rows", self.w.nrows(), hidden_size),
            ("W cols", self.w.ncols(), input_dim),
            ("V rows", self.v.nrows(), hidden_size),
            ("V cols", self.v.ncols(), hidden_size),
            ("b", self.b.len(), hidden_size),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(EncoderError::DimensionMismatch {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Encoder parameters: the primary cell, plus a second cell for the backward
/// half of a bidirectional encoder.
///
/// The backward *direction* on its own reuses the primary cell on the
/// reversed sequence; only `Direction::Bidirectional` needs `backward`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub cell: CellParams,
    pub backward: Option<CellParams>,
}

impl EncoderParams {
    /// All-zero parameters shaped for `cfg`.
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        EncoderParams {
            cell: CellParams::zeros(cfg.hidden_size, cfg.input_dim),
            backward: match cfg.direction {
                Direction::Bidirectional => {
                    Some(CellParams::zeros(cfg.hidden_size, cfg.input_dim))
                }
                _ => None,
            },
        }
    }

    /// Checks every tensor shape against `cfg`, including the presence of
    /// backward parameters for a bidirectional configuration.
    pub fn check_shapes(&self, cfg: &EncoderConfig) -> Result<(), EncoderError> {
        self.cell.check_shapes(cfg.hidden_size, cfg.input_dim)?;
        if let Some(bwd) = &self.backward {
            bwd.check_shapes(cfg.hidden_size, cfg.input_dim)?;
        }
        if cfg.direction == Direction::Bidirectional && self.backward.is_none() {
            return Err(EncoderError::MissingBackwardParams);
        }
        Ok(())
    }
}

/// Shape and variant choices of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub direction: Direction,
    pub pooling: Pooling,
    pub hidden_size: usize,
    pub input_dim: usize,
}

impl EncoderConfig {
    /// Dimension of the pooled embedding: `hidden_size`, doubled for the
    /// bidirectional concatenation.
    pub fn embedding_dim(&self) -> usize {
        match self.direction {
            Direction::Bidirectional => 2 * self.hidden_size,
            _ => self.hidden_size,
        }
    }
}

/// A pooled encoder output for one syllable.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneEmbedding {
    pub c: Array1<f64>,
}

/// One step of the Elman recursion with the primary cell:
/// `σ(W·x + V·h_prev + b)`.
pub fn elman_step(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    params: &EncoderParams,
) -> Result<Array1<f64>, EncoderError> {
    step_cell(x, h_prev, &params.cell)
}

fn step_cell(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    cell: &CellParams,
) -> Result<Array1<f64>, EncoderError> {
    if x.len() != cell.w.ncols() {
        return Err(EncoderError::DimensionMismatch {
            what: "input vector",
            expected: cell.w.ncols(),
            got: x.len(),
        });
    }
    if h_prev.len() != cell.v.ncols() {
        return Err(EncoderError::DimensionMismatch {
            what: "previous hidden state",
            expected: cell.v.ncols(),
            got: h_prev.len(),
        });
    }
    let mut pre = cell.w.dot(&x) + &cell.b;
    general_mat_vec_mul(1.0, &cell.v, &h_prev, 1.0, &mut pre);
    pre.mapv_inplace(sigmoid);
    Ok(pre)
}

/// Runs the full recursion with the primary cell over a `T × input_dim`
/// sequence, returning all `T` hidden states as rows.
///
/// With `reversed` set, the recursion consumes the frames from the end
/// backwards, but the returned states stay aligned to original time order:
/// row `t` is the backward recursion's state after reading frame `t`.
pub fn run_rnn(
    seq: ArrayView2<f64>,
    params: &EncoderParams,
    reversed: bool,
) -> Result<Array2<f64>, EncoderError> {
    run_cell(seq, &params.cell, reversed)
}

/// `run_rnn` against an explicit cell — the shared primitive behind both
/// halves of a bidirectional encoder.
pub(crate) fn run_cell(
    seq: ArrayView2<f64>,
    cell: &CellParams,
    reversed: bool,
) -> Result<Array2<f64>, EncoderError> {
    let t_len = seq.nrows();
    if t_len == 0 {
        return Err(EncoderError::EmptySequence);
    }
    if seq.ncols() != cell.w.ncols() {
        return Err(EncoderError::DimensionMismatch {
            what: "input vector",
            expected: cell.w.ncols(),
            got: seq.ncols(),
        });
    }
    let hidden = cell.b.len();

    // Input contributions for every step in one matrix product, then the
    // sequential part adds the recurrent term row by row.
    let mut states = seq.dot(&cell.w.t());
    states += &cell.b.view().insert_axis(Axis(0));

    let mut h_prev = Array1::zeros(hidden);
    let order: Vec<usize> = if reversed {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for idx in order {
        let mut row = states.row_mut(idx);
        general_mat_vec_mul(1.0, &cell.v, &h_prev, 1.0, &mut row);
        row.mapv_inplace(sigmoid);
        h_prev.assign(&row);
    }
    Ok(states)
}

/// Reduces a `T × hidden` state sequence to one vector.
pub fn pool(hiddens: ArrayView2<f64>, kind: Pooling) -> Result<Array1<f64>, EncoderError> {
    let t_len = hiddens.nrows();
    if t_len == 0 {
        return Err(EncoderError::EmptySequence);
    }
    Ok(match kind {
        Pooling::Last => hiddens.row(t_len - 1).to_owned(),
        Pooling::Average => hiddens.mean_axis(Axis(0)).expect("non-empty sequence"),
        Pooling::Max => {
            let mut acc = hiddens.row(0).to_owned();
            for row in hiddens.rows().into_iter().skip(1) {
                acc.zip_mut_with(&row, |a, &b| {
                    if b > *a {
                        *a = b;
                    }
                });
            }
            acc
        }
    })
}

/// Encodes one observation sequence into its pooled tone embedding.
pub fn encode(
    seq: ArrayView2<f64>,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<ToneEmbedding, EncoderError> {
    params.check_shapes(cfg)?;
    if seq.nrows() == 0 {
        return Err(EncoderError::EmptySequence);
    }
    if seq.ncols() != cfg.input_dim {
        return Err(EncoderError::DimensionMismatch {
            what: "input vector",
            expected: cfg.input_dim,
            got: seq.ncols(),
        });
    }
    let c = match cfg.direction {
        Direction::Forward => pool(run_cell(seq, &params.cell, false)?.view(), cfg.pooling)?,
        Direction::Backward => pool(run_cell(seq, &params.cell, true)?.view(), cfg.pooling)?,
        Direction::Bidirectional => {
            let bwd_cell = params
                .backward
                .as_ref()
                .ok_or(EncoderError::MissingBackwardParams)?;
            let fwd = pool(run_cell(seq, &params.cell, false)?.view(), cfg.pooling)?;
            let bwd = pool(run_cell(seq, bwd_cell, true)?.view(), cfg.pooling)?;
            concatenate(Axis(0), &[fwd.view(), bwd.view()]).expect("same hidden size")
        }
    };
    Ok(ToneEmbedding { c })
}

/// Convenience for tests and callers that reverse sequences: rows in
/// reverse time order, materialized.
pub fn reverse_rows(seq: ArrayView2<f64>) -> Array2<f64> {
    seq.slice(s![..;-1, ..]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cell(rng: &mut ChaCha8Rng, hidden: usize, input: usize) -> CellParams {
        CellParams {
            w: Array2::from_shape_fn((hidden, input), |_| rng.random_range(-0.8..0.8)),
            v: Array2::from_shape_fn((hidden, hidden), |_| rng.random_range(-0.8..0.8)),
            b: Array1::from_shape_fn(hidden, |_| rng.random_range(-0.5..0.5)),
        }
    }

    fn random_params(rng: &mut ChaCha8Rng, hidden: usize, input: usize, bwd: bool) -> EncoderParams {
        EncoderParams {
            cell: random_cell(rng, hidden, input),
            backward: bwd.then(|| random_cell(rng, hidden, input)),
        }
    }

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, dim), |_| rng.random_range(-1.5..1.5))
    }

    /// Scalar reference for one step, written independently of the library
    /// code (plain loops, naive sigmoid).
    fn step_by_hand(x: &[f64], h_prev: &[f64], cell: &CellParams) -> Vec<f64> {
        (0..cell.b.len())
            .map(|i| {
                let mut acc = cell.b[i];
                for (j, xv) in x.iter().enumerate() {
                    acc += cell.w[[i, j]] * xv;
                }
                for (j, hv) in h_prev.iter().enumerate() {
                    acc += cell.v[[i, j]] * hv;
                }
                1.0 / (1.0 + (-acc).exp())
            })
            .collect()
    }

    #[test]
    fn zero_params_give_half_everywhere() {
        let params = EncoderParams {
            cell: CellParams::zeros(4, 3),
            backward: None,
        };
        let x = Array1::from_vec(vec![5.0, -2.0, 0.25]);
        let h = elman_step(x.view(), Array1::zeros(4).view(), &params).unwrap();
        assert!(h.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn large_bias_saturates_without_overflow() {
        let mut cell = CellParams::zeros(3, 2);
        cell.b[1] = 1000.0;
        cell.b[2] = -1000.0;
        let params = EncoderParams {
            cell,
            backward: None,
        };
        let h = elman_step(
            Array1::zeros(2).view(),
            Array1::zeros(3).view(),
            &params,
        )
        .unwrap();
        assert!(h.iter().all(|v| v.is_finite()));
        assert!((h[1] - 1.0).abs() < 1e-12);
        assert!(h[2] < 1e-12);
    }

    #[test]
    fn step_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let params = random_params(&mut rng, 2, 2, false);
            let x = Array1::from_shape_fn(2, |_| rng.random_range(-2.0..2.0));
            let h_prev = Array1::from_shape_fn(2, |_| rng.random_range(0.0..1.0));
            let got = elman_step(x.view(), h_prev.view(), &params).unwrap();
            let want = step_by_hand(
                x.as_slice().unwrap(),
                h_prev.as_slice().unwrap(),
                &params.cell,
            );
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-14, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn step_rejects_dimension_mismatch() {
        let params = EncoderParams {
            cell: CellParams::zeros(4, 3),
            backward: None,
        };
        let err = elman_step(Array1::zeros(2).view(), Array1::zeros(4).view(), &params)
            .unwrap_err();
        assert!(matches!(err, EncoderError::DimensionMismatch { .. }));
        let err = elman_step(Array1::zeros(3).view(), Array1::zeros(5).view(), &params)
            .unwrap_err();
        assert!(matches!(err, EncoderError::DimensionMismatch { .. }));
    }

    #[test]
    fn length_one_sequence_matches_single_step_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let params = random_params(&mut rng, 5, 3, false);
        let seq = random_seq(&mut rng, 1, 3);
        let fwd = run_rnn(seq.view(), &params, false).unwrap();
        let bwd = run_rnn(seq.view(), &params, true).unwrap();
        let step = elman_step(seq.row(0), Array1::zeros(5).view(), &params).unwrap();
        assert_eq!(fwd.row(0).to_vec(), step.to_vec());
        assert_eq!(bwd, fwd);
    }

    #[test]
    fn no_recurrence_makes_order_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut params = random_params(&mut rng, 4, 3, false);
        params.cell.v.fill(0.0);
        let seq = random_seq(&mut rng, 6, 3);
        let fwd = run_rnn(seq.view(), &params, false).unwrap();
        let bwd = run_rnn(seq.view(), &params, true).unwrap();
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn run_rnn_matches_manual_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let params = random_params(&mut rng, 4, 3, false);
        let seq = random_seq(&mut rng, 3, 3);
        let states = run_rnn(seq.view(), &params, false).unwrap();
        let mut h = Array1::zeros(4);
        for t in 0..3 {
            h = elman_step(seq.row(t), h.view(), &params).unwrap();
            for (a, b) in states.row(t).iter().zip(h.iter()) {
                assert!((a - b).abs() < 1e-15, "state {t} differs");
            }
        }
    }

    #[test]
    fn reversed_states_align_to_original_time_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let params = random_params(&mut rng, 4, 2, false);
        let seq = random_seq(&mut rng, 5, 2);
        let states = run_rnn(seq.view(), &params, true).unwrap();
        // Backward recursion by hand: state at t depends on frames T−1 ⋯ t.
        let mut h = Array1::zeros(4);
        for t in (0..5).rev() {
            h = elman_step(seq.row(t), h.view(), &params).unwrap();
            for (a, b) in states.row(t).iter().zip(h.iter()) {
                assert!((a - b).abs() < 1e-15, "aligned state {t} differs");
            }
        }
    }

    #[test]
    fn pooling_on_constant_sequence_returns_the_constant() {
        let v = Array1::from_vec(vec![0.3, 0.7, 0.1]);
        let seq = Array2::from_shape_fn((6, 3), |(_, j)| v[j]);
        for kind in [Pooling::Last, Pooling::Average, Pooling::Max] {
            let p = pool(seq.view(), kind).unwrap();
            for (a, b) in p.iter().zip(v.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pooling_two_state_example() {
        let seq = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            pool(seq.view(), Pooling::Average).unwrap().to_vec(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            pool(seq.view(), Pooling::Max).unwrap().to_vec(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            pool(seq.view(), Pooling::Last).unwrap().to_vec(),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn average_matches_independent_summation_and_max_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let seq = Array2::from_shape_fn((7, 4), |_| rng.random_range(0.0..1.0));
        let avg = pool(seq.view(), Pooling::Average).unwrap();
        let max = pool(seq.view(), Pooling::Max).unwrap();
        for j in 0..4 {
            let mut s = 0.0;
            for t in 0..7 {
                s += seq[[t, j]];
            }
            assert!((avg[j] - s / 7.0).abs() < 1e-12);
            assert!(max[j] >= avg[j]);
        }
    }

    #[test]
    fn pool_rejects_empty_input() {
        let empty = Array2::<f64>::zeros((0, 4));
        for kind in [Pooling::Last, Pooling::Average, Pooling::Max] {
            assert_eq!(pool(empty.view(), kind).unwrap_err(), EncoderError::EmptySequence);
        }
    }

    #[test]
    fn bidirectional_embedding_dimension_doubles() {
        let cfg = EncoderConfig {
            direction: Direction::Bidirectional,
            pooling: Pooling::Average,
            hidden_size: 250,
            input_dim: 3,
        };
        assert_eq!(cfg.embedding_dim(), 500);
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let params = random_params(&mut rng, 250, 3, true);
        let seq = random_seq(&mut rng, 2, 3);
        let emb = encode(seq.view(), &params, &cfg).unwrap();
        assert_eq!(emb.c.len(), 500);
    }

    #[test]
    fn single_frame_forward_equals_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let params = random_params(&mut rng, 6, 3, false);
        let seq = random_seq(&mut rng, 1, 3);
        let mut cfg = EncoderConfig {
            direction: Direction::Forward,
            pooling: Pooling::Last,
            hidden_size: 6,
            input_dim: 3,
        };
        let fwd = encode(seq.view(), &params, &cfg).unwrap();
        cfg.direction = Direction::Backward;
        let bwd = encode(seq.view(), &params, &cfg).unwrap();
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn average_encode_composes_run_rnn_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = random_params(&mut rng, 5, 3, false);
        let seq = random_seq(&mut rng, 4, 3);
        let cfg = EncoderConfig {
            direction: Direction::Forward,
            pooling: Pooling::Average,
            hidden_size: 5,
            input_dim: 3,
        };
        let emb = encode(seq.view(), &params, &cfg).unwrap();
        let states = run_rnn(seq.view(), &params, false).unwrap();
        for j in 0..5 {
            let mean = (0..4).map(|t| states[[t, j]]).sum::<f64>() / 4.0;
            assert!((emb.c[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_dimension_matches_config_for_all_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for direction in [Direction::Forward, Direction::Backward, Direction::Bidirectional] {
            for pooling in [Pooling::Last, Pooling::Average, Pooling::Max] {
                let cfg = EncoderConfig {
                    direction,
                    pooling,
                    hidden_size: 7,
                    input_dim: 4,
                };
                let params =
                    random_params(&mut rng, 7, 4, direction == Direction::Bidirectional);
                let seq = random_seq(&mut rng, 5, 4);
                let emb = encode(seq.view(), &params, &cfg).unwrap();
                assert_eq!(emb.c.len(), cfg.embedding_dim());
                assert!(emb.c.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn encode_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = EncoderConfig {
            direction: Direction::Bidirectional,
            pooling: Pooling::Average,
            hidden_size: 4,
            input_dim: 3,
        };
        let params = random_params(&mut rng, 4, 3, false);
        let seq = random_seq(&mut rng, 3, 3);
        assert_eq!(
            encode(seq.view(), &params, &cfg).unwrap_err(),
            EncoderError::MissingBackwardParams
        );
        let cfg_fwd = EncoderConfig {
            direction: Direction::Forward,
            ..cfg
        };
        let wide = random_seq(&mut rng, 3, 5);
        assert!(matches!(
            encode(wide.view(), &params, &cfg_fwd).unwrap_err(),
            EncoderError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn hidden_states_stay_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let params = random_params(&mut rng, 3, 2, false);
            let t = rng.random_range(1..8);
            let seq = random_seq(&mut rng, t, 2);
            let states = run_rnn(seq.view(), &params, false).unwrap();
            assert!(states.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn average_and_max_pooling_ignore_state_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let t = rng.random_range(2..9);
            let states = Array2::from_shape_fn((t, 4), |_| rng.random_range(0.0..1.0));
            // A rotation is permutation enough to move every row.
            let mut rotated = Array2::zeros((t, 4));
            for i in 0..t {
                rotated.row_mut(i).assign(&states.row((i + 1) % t));
            }
            let avg_a = pool(states.view(), Pooling::Average).unwrap();
            let avg_b = pool(rotated.view(), Pooling::Average).unwrap();
            for (a, b) in avg_a.iter().zip(avg_b.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(
                pool(states.view(), Pooling::Max).unwrap(),
                pool(rotated.view(), Pooling::Max).unwrap()
            );
            // Last pooling is order-sensitive: the rotation moves a different
            // row into the last slot.
            assert_ne!(
                pool(states.view(), Pooling::Last).unwrap(),
                pool(rotated.view(), Pooling::Last).unwrap()
            );
        }
    }

    #[test]
    fn backward_encoding_equals_forward_on_reversed_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let params = random_params(&mut rng, 5, 3, false);
            let t = rng.random_range(1..8);
            let seq = random_seq(&mut rng, t, 3);
            let rev = reverse_rows(seq.view());
            for pooling in [Pooling::Average, Pooling::Max] {
                let cfg_b = EncoderConfig {
                    direction: Direction::Backward,
                    pooling,
                    hidden_size: 5,
                    input_dim: 3,
                };
                let cfg_f = EncoderConfig {
                    direction: Direction::Forward,
                    ..cfg_b
                };
                let bwd = encode(seq.view(), &params, &cfg_b).unwrap();
                let fwd = encode(rev.view(), &params, &cfg_f).unwrap();
                for (a, b) in bwd.c.iter().zip(fwd.c.iter()) {
                    assert!((a - b).abs() < 1e-12, "pooling {pooling:?}");
                }
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let params = random_params(&mut rng, 6, 3, true);
        let seq = random_seq(&mut rng, 5, 3);
        let cfg = EncoderConfig {
            direction: Direction::Bidirectional,
            pooling: Pooling::Max,
            hidden_size: 6,
            input_dim: 3,
        };
        let a = encode(seq.view(), &params, &cfg).unwrap();
        let b = encode(seq.view(), &params, &cfg).unwrap();
        assert_eq!(a, b, "bit-identical embeddings expected");
    }
}
