//! One layer of a stacked autoencoder and the loss terms trained on it.
//!
//! A layer maps `H_prev` (`n x d_in`) to `H = f(H_prev W1^T + b1)` and back to
//! `H_rec = f(H W2^T + b2)` with the logistic sigmoid `f`. Biases are vectors
//! broadcast over rows.

mod checkpoint;
mod gradcheck;
mod objective;
mod trainer;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CdneError, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{
    finite_difference_check, gradcheck_suite, random_instance, GradCheckInstance, GradCheckReport,
    GradCheckSummary,
};
pub use objective::{Alignment, LayerObjective, LossBreakdown, Pairwise, Side};
pub use trainer::{train_layer, TrainedLayer, TrainerConfig};

/// Encode/decode weights and biases of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `d_out x d_in`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `d_in x d_out`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w1: Array2::zeros((d_out, d_in)),
            b1: Array1::zeros(d_out),
            w2: Array2::zeros((d_in, d_out)),
            b2: Array1::zeros(d_in),
        }
    }

    /// Weights uniform in `±sqrt(6 / (d_in + d_out))`, biases zero.
    pub fn init(d_in: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let mut p = Self::zeros(d_in, d_out);
        p.w1.mapv_inplace(|_| rng.random_range(-limit..limit));
        p.w2.mapv_inplace(|_| rng.random_range(-limit..limit));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let (d_out, d_in) = self.w1.dim();
        if self.b1.len() != d_out || self.w2.dim() != (d_in, d_out) || self.b2.len() != d_in {
            return Err(CdneError::shape(
                "LayerParams",
                format!("w1 {d_out}x{d_in}, b1 {d_out}, w2 {d_in}x{d_out}, b2 {d_in}"),
                format!(
                    "w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                    self.w1.dim(),
                    self.b1.len(),
                    self.w2.dim(),
                    self.b2.len()
                ),
            ));
        }
        Ok(())
    }

    /// Parameter blocks in the fixed order `w1, b1, w2, b2`.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    /// `self -= step * grad`, block by block.
    pub fn descend(&mut self, grad: &LayerParams, step: f64) {
        self.w1.scaled_add(-step, &grad.w1);
        self.b1.scaled_add(-step, &grad.b1);
        self.w2.scaled_add(-step, &grad.w2);
        self.b2.scaled_add(-step, &grad.b2);
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine_sigmoid(input: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut z = input.dot(&w.t());
    z += b;
    z.mapv_inplace(sigmoid);
    z
}

/// `H = f(H_prev W1^T + b1)`.
pub fn encode(input: ArrayView2<f64>, params: &LayerParams) -> Result<Array2<f64>> {
    params.check_shapes()?;
    if input.ncols() != params.input_dim() {
        return Err(CdneError::shape("encode", params.input_dim(), input.ncols()));
    }
    Ok(affine_sigmoid(input, &params.w1, &params.b1))
}

/// `H_rec = f(H W2^T + b2)`.
pub fn decode(hidden: ArrayView2<f64>, params: &LayerParams) -> Result<Array2<f64>> {
    params.check_shapes()?;
    if hidden.ncols() != params.hidden_dim() {
        return Err(CdneError::shape("decode", params.hidden_dim(), hidden.ncols()));
    }
    Ok(affine_sigmoid(hidden, &params.w2, &params.b2))
}

/// Reconstruction penalty weights. At the first layer a cell weighs `beta`
/// when its input is positive and 1 otherwise; deeper layers weigh every
/// cell by `beta`, so squared errors carry `beta^2`.
pub fn penalty_matrix(input: ArrayView2<f64>, beta: f64, layer_index: usize) -> Array2<f64> {
    if layer_index <= 1 {
        input.mapv(|v| if v > 0.0 { beta } else { 1.0 })
    } else {
        Array2::from_elem(input.raw_dim(), beta)
    }
}

fn same_shape(context: &'static str, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(CdneError::shape(context, a.dim(), b.dim()));
    }
    Ok(())
}

/// `(1 / 2n) ||P ⊙ (H_rec - H)||_F^2` with `n` the row count.
pub fn reconstruction_loss(
    input: ArrayView2<f64>,
    reconstructed: ArrayView2<f64>,
    penalty: ArrayView2<f64>,
) -> Result<f64> {
    same_shape("reconstruction_loss", input, reconstructed)?;
    same_shape("reconstruction_loss", input, penalty)?;
    let n = input.nrows().max(1) as f64;
    let mut sum = 0.0;
    for ((x, r), p) in input.iter().zip(reconstructed.iter()).zip(penalty.iter()) {
        let e = p * (r - x);
        sum += e * e;
    }
    Ok(sum / (2.0 * n))
}

/// `(1 / 2n) sum_ij X_ij ||H_i - H_j||^2`.
pub fn connectivity_loss(h: ArrayView2<f64>, proximity: ArrayView2<f64>) -> Result<f64> {
    Pairwise::new(proximity)?.loss(h)
}

/// Pairwise loss evaluated as the literal double sum.
pub fn pairwise_loss_double_sum(h: ArrayView2<f64>, weights: ArrayView2<f64>) -> Result<f64> {
    let n = h.nrows();
    if weights.dim() != (n, n) {
        return Err(CdneError::shape("pairwise_loss_double_sum", (n, n), weights.dim()));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = weights[[i, j]];
            if w != 0.0 {
                let d2: f64 = h.row(i).iter().zip(h.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                sum += w * d2;
            }
        }
    }
    Ok(sum / (2.0 * n.max(1) as f64))
}

/// `O^s`: shared-label counts between source nodes, `-1` for disjoint label
/// sets and `0` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonLabelMatrix {
    pub o: Array2<f64>,
}

pub fn common_label_matrix(y_s: ArrayView2<f64>) -> Result<CommonLabelMatrix> {
    if let Some(i) = y_s.axis_iter(Axis(0)).position(|row| row.iter().all(|&v| v == 0.0)) {
        return Err(CdneError::invalid(format!("source row {i} has no label")));
    }
    let mut o = y_s.dot(&y_s.t());
    o.mapv_inplace(|v| if v > 0.0 { v } else { -1.0 });
    o.diag_mut().fill(0.0);
    Ok(CommonLabelMatrix { o })
}

/// `(1 / 2n) sum_ij O_ij ||H_i - H_j||^2`; negative entries repel.
pub fn label_pairwise_loss(h: ArrayView2<f64>, common: &CommonLabelMatrix) -> Result<f64> {
    Pairwise::new(common.o.view())?.loss(h)
}

fn check_dims(context: &'static str, h_s: ArrayView2<f64>, h_t: ArrayView2<f64>) -> Result<()> {
    if h_s.nrows() == 0 || h_t.nrows() == 0 {
        return Err(CdneError::invalid(format!("{context}: empty representation matrix")));
    }
    if h_s.ncols() != h_t.ncols() {
        return Err(CdneError::shape(context, h_s.ncols(), h_t.ncols()));
    }
    Ok(())
}

/// `1/2 ||mean_rows(H_s) - mean_rows(H_t)||^2`.
pub fn marginal_mmd(h_s: ArrayView2<f64>, h_t: ArrayView2<f64>) -> Result<f64> {
    check_dims("marginal_mmd", h_s, h_t)?;
    let diff = h_s.mean_axis(Axis(0)).unwrap() - h_t.mean_axis(Axis(0)).unwrap();
    Ok(0.5 * diff.dot(&diff))
}

/// Per-class source means (`C x d`), failing when a class has no source
/// member.
pub fn class_means(h: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    if h.nrows() != y.nrows() {
        return Err(CdneError::shape("class_means", h.nrows(), y.nrows()));
    }
    let mass = y.sum_axis(Axis(0));
    if let Some(c) = mass.iter().position(|&m| m <= 0.0) {
        return Err(CdneError::invalid(format!("class {c} has no source members")));
    }
    let mut means = y.t().dot(&h);
    for (mut row, m) in means.axis_iter_mut(Axis(0)).zip(mass.iter()) {
        row /= *m;
    }
    Ok(means)
}

/// Sum over classes of `1/2 ||fuzzy-weighted target mean - source mean||^2`.
/// Classes with zero fuzzy target mass contribute nothing.
pub fn conditional_mmd(
    h_s: ArrayView2<f64>,
    y_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    y_hat_t: ArrayView2<f64>,
) -> Result<f64> {
    check_dims("conditional_mmd", h_s, h_t)?;
    if y_hat_t.nrows() != h_t.nrows() || y_hat_t.ncols() != y_s.ncols() {
        return Err(CdneError::shape("conditional_mmd", (h_t.nrows(), y_s.ncols()), y_hat_t.dim()));
    }
    let source_means = class_means(h_s, y_s)?;
    let mut total = 0.0;
    for c in 0..y_s.ncols() {
        let weights = y_hat_t.column(c);
        let mass: f64 = weights.sum();
        if mass <= 0.0 {
            continue;
        }
        let target_mean = weights.dot(&h_t) / mass;
        let diff = target_mean - source_means.row(c);
        total += 0.5 * diff.dot(&diff);
    }
    Ok(total)
}

/// `(||W1||_F^2 + ||W2||_F^2) / 2`; biases are not penalized.
pub fn l2_reg(params: &LayerParams) -> f64 {
    0.5 * (params.w1.iter().map(|v| v * v).sum::<f64>() + params.w2.iter().map(|v| v * v).sum::<f64>())
}

/// Trade-off weights of one layer's objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    /// Source only.
    pub phi: f64,
    /// Target only.
    pub mu: f64,
    /// Target only.
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("phi", self.phi),
            ("mu", self.mu),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CdneError::invalid(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(CdneError::invalid(format!("beta must exceed 1, got {}", self.beta)));
        }
        Ok(())
    }
}
