//! Central finite-difference verification of the analytic layer gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{common_label_matrix, Alignment, LayerObjective, LayerParams, LossWeights, Pairwise};
use crate::error::Result;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is ~0 are judged by absolute error instead.
const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            checked: self.checked + other.checked,
        }
    }
}

/// Compares the analytic gradient of `objective` at `params` with central
/// differences of step `step` over every parameter.
pub fn finite_difference_check(
    objective: &LayerObjective,
    params: &LayerParams,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = objective.evaluate_with_gradients(params)?;
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for (block, grad_block) in analytic.blocks().iter().enumerate() {
        for (idx, &a) in grad_block.iter().enumerate() {
            let original = probe.blocks()[block][idx];
            probe.blocks_mut()[block][idx] = original + step;
            let plus = objective.evaluate(&probe)?.total;
            probe.blocks_mut()[block][idx] = original - step;
            let minus = objective.evaluate(&probe)?.total;
            probe.blocks_mut()[block][idx] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// A random small layer problem with every loss term active.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub input: Array2<f64>,
    pub proximity: Array2<f64>,
    /// Labels of the nodes in `input` when treated as a source network.
    pub labels: Array2<f64>,
    /// Frozen source representation and labels for the target objective.
    pub source_hidden: Array2<f64>,
    pub source_labels: Array2<f64>,
    pub fuzzy: Array2<f64>,
    pub weights: LossWeights,
    pub params: LayerParams,
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((n, classes));
    for i in 0..n {
        y[[i, i % classes]] = 1.0;
        for c in 0..classes {
            if rng.random_bool(0.25) {
                y[[i, c]] = 1.0;
            }
        }
    }
    y
}

pub fn random_instance(seed: u64, n: usize, d_in: usize, d_out: usize) -> GradCheckInstance {
    let classes = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Array2::from_shape_fn((n, d_in), |_| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..1.0)
        }
    });
    let proximity = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j || rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.0..2.0)
        }
    });
    let labels = random_labels(&mut rng, n, classes);
    let n_s = n + 5;
    let source_hidden = Array2::from_shape_fn((n_s, d_out), |_| rng.random_range(0.05..0.95));
    let source_labels = random_labels(&mut rng, n_s, classes);
    let fuzzy = Array2::from_shape_fn((n, classes), |(i, c)| {
        if i < 2 {
            if c == i { 1.0 } else { 0.0 }
        } else {
            rng.random_range(0.01..0.99)
        }
    });
    let weights = LossWeights {
        alpha: rng.random_range(0.5..4.0),
        phi: rng.random_range(0.5..2.0),
        mu: rng.random_range(0.5..2.0),
        gamma: rng.random_range(1.0..40.0),
        lambda: rng.random_range(0.01..0.1),
        beta: 4.0,
    };
    let mut params = LayerParams::init(d_in, d_out, rng.random());
    params.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    params.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    GradCheckInstance {
        input,
        proximity,
        labels,
        source_hidden,
        source_labels,
        fuzzy,
        weights,
        params,
    }
}

impl GradCheckInstance {
    pub fn check_source(&self, step: f64) -> Result<GradCheckReport> {
        let prox = Pairwise::new(self.proximity.view())?;
        let labels = Pairwise::new(common_label_matrix(self.labels.view())?.o.view())?;
        let objective = LayerObjective::source(self.input.view(), 1, &prox, &labels, self.weights)?;
        finite_difference_check(&objective, &self.params, step)
    }

    pub fn check_target(&self, step: f64) -> Result<GradCheckReport> {
        let prox = Pairwise::new(self.proximity.view())?;
        let alignment = Alignment::new(self.source_hidden.view(), self.source_labels.view(), self.fuzzy.view())?;
        let objective = LayerObjective::target(self.input.view(), 1, &prox, &alignment, self.weights)?;
        finite_difference_check(&objective, &self.params, step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSummary {
    pub instances: usize,
    pub source: GradCheckReport,
    pub target: GradCheckReport,
}

impl GradCheckSummary {
    pub fn max_rel_error(&self) -> f64 {
        self.source.max_rel_error.max(self.target.max_rel_error)
    }
}

/// Checks the first-layer source and target objectives on `instances`
/// random problems (12 nodes, 8 -> 4) with step `1e-5`.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<GradCheckSummary> {
    let empty = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut summary = GradCheckSummary {
        instances,
        source: empty,
        target: empty,
    };
    for k in 0..instances as u64 {
        let inst = random_instance(seed.wrapping_add(k), 12, 8, 4);
        summary.source = summary.source.merge(inst.check_source(1e-5)?);
        summary.target = summary.target.merge(inst.check_target(1e-5)?);
    }
    Ok(summary)
}
