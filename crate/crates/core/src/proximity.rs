//! K-step random-walk transition matrices and the PPMI structural proximity
//! matrix built from them.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};

use crate::error::{CdneError, Result};
use crate::graph::AttributedNetwork;

/// `T^(1) ..= T^(K)`, each `n x n` and row-stochastic except for the zero
/// rows of isolated nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStack {
    steps: Vec<Array2<f64>>,
}

impl TransitionStack {
    pub fn steps(&self) -> &[Array2<f64>] {
        &self.steps
    }

    /// `T^(k)` for `k` in `1..=K`.
    pub fn step(&self, k: usize) -> &Array2<f64> {
        &self.steps[k - 1]
    }

    pub fn max_step(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpmiMatrix {
    pub x: Array2<f64>,
    pub k: usize,
    /// Largest entry of `x`; the autoencoder input is `x / scale_max`.
    pub scale_max: f64,
}

impl PpmiMatrix {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `x` divided by its largest entry so every value lies in `[0, 1]`.
    /// An all-zero matrix is returned unchanged.
    pub fn scaled(&self) -> Array2<f64> {
        if self.scale_max > 0.0 {
            &self.x / self.scale_max
        } else {
            self.x.clone()
        }
    }

    /// Nonzero entries as `i<TAB>j<TAB>value` lines, sorted by `(i, j)`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((i, j), &v) in self.x.indexed_iter() {
            if v != 0.0 {
                let _ = writeln!(out, "{i}\t{j}\t{v:.16e}");
            }
        }
        out
    }
}

fn row_normalize(m: &mut Array2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
}

/// `T^(1) = D^-1 A` and `T^(k) = T^(k-1) T^(1)`.
pub fn transition_stack(net: &AttributedNetwork, k: usize) -> Result<TransitionStack> {
    if k == 0 {
        return Err(CdneError::invalid("the maximum step K must be at least 1"));
    }
    let n = net.n();
    let mut t1 = Array2::<f64>::zeros((n, n));
    for &(a, b) in net.edges() {
        t1[[a, b]] = 1.0;
        t1[[b, a]] = 1.0;
    }
    row_normalize(&mut t1);
    let mut steps = Vec::with_capacity(k);
    steps.push(t1);
    for _ in 1..k {
        let next = steps.last().unwrap().dot(&steps[0]);
        steps.push(next);
    }
    Ok(TransitionStack { steps })
}

/// `sum_k T^(k) / k`.
pub fn aggregate_transition(stack: &TransitionStack) -> Array2<f64> {
    let mut total = Array2::zeros(stack.steps[0].raw_dim());
    for (i, t) in stack.steps.iter().enumerate() {
        total.scaled_add(1.0 / (i + 1) as f64, t);
    }
    total
}

/// PPMI of the row-normalized aggregate transition matrix.
///
/// Entries with zero transition probability and columns with zero mean are
/// left at zero, so `ln 0` is never evaluated.
pub fn ppmi(net: &AttributedNetwork, k: usize) -> Result<PpmiMatrix> {
    let stack = transition_stack(net, k)?;
    let mut t = aggregate_transition(&stack);
    row_normalize(&mut t);
    Ok(ppmi_from_normalized(&t, k))
}

pub(crate) fn ppmi_from_normalized(t: &Array2<f64>, k: usize) -> PpmiMatrix {
    let n = t.nrows();
    let col_mean = t.sum_axis(Axis(0)) / n.max(1) as f64;
    let mut x = Array2::zeros((n, n));
    let mut scale_max = 0.0_f64;
    for ((i, j), &tij) in t.indexed_iter() {
        let mean = col_mean[j];
        if tij > 0.0 && mean > 0.0 {
            let v = (tij / mean).ln().max(0.0);
            x[[i, j]] = v;
            scale_max = scale_max.max(v);
        }
    }
    PpmiMatrix { x, k, scale_max }
}
