//! L2-penalized logistic regression, binary and one-vs-rest.
//!
//! The objective is averaged over samples:
//! `(1/N) sum_i [log(1 + e^{z_i}) - y_i z_i] + (l2/2) ||w||^2` with
//! `z = X w + b`; the intercept is not penalized. It is minimized by damped
//! Newton steps.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{CdneError, Result};
use crate::sae::sigmoid;

/// Probabilities of degenerate single-class fits are clipped into
/// `(EPS, 1 - EPS)`.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    /// `None` uses `1 / N` for `N` training rows.
    pub l2: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: None,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

impl LogisticConfig {
    pub fn l2_for(&self, rows: usize) -> f64 {
        self.l2.unwrap_or(1.0 / rows.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLogistic {
    pub weights: Array1<f64>,
    pub intercept: f64,
}

impl BinaryLogistic {
    pub fn predict_proba(&self, features: ArrayView2<f64>) -> Array1<f64> {
        (features.dot(&self.weights) + self.intercept).mapv(sigmoid)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn objective(x: ArrayView2<f64>, y: ArrayView1<f64>, w: &Array1<f64>, b: f64, l2: f64) -> f64 {
    let z = x.dot(w) + b;
    let n = x.nrows() as f64;
    let data: f64 = z.iter().zip(y.iter()).map(|(&z, &y)| softplus(z) - y * z).sum();
    data / n + 0.5 * l2 * w.dot(w)
}

/// Fits one binary model. `targets` holds 0/1 values. When only one class is
/// present the result is a constant model at the clipped observed frequency.
pub fn lr_fit(
    features: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    l2: f64,
    max_iter: usize,
    tol: f64,
) -> Result<BinaryLogistic> {
    let (n, d) = features.dim();
    if targets.len() != n {
        return Err(CdneError::shape("lr_fit", n, targets.len()));
    }
    if n == 0 {
        return Err(CdneError::invalid("logistic regression needs at least one row"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(CdneError::invalid("logistic regression features contain non-finite values"));
    }
    let positives = targets.iter().filter(|&&t| t > 0.5).count();
    if positives == 0 || positives == n {
        let freq = (positives as f64 / n as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
        return Ok(BinaryLogistic {
            weights: Array1::zeros(d),
            intercept: (freq / (1.0 - freq)).ln(),
        });
    }

    let nf = n as f64;
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut f = objective(features, targets, &w, b, l2);
    for _ in 0..max_iter {
        let p = (features.dot(&w) + b).mapv(sigmoid);
        let resid = &p - &targets;
        let mut gw = features.t().dot(&resid) / nf;
        gw.scaled_add(l2, &w);
        let gb = resid.sum() / nf;
        let gmax = gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
        if gmax < tol {
            break;
        }

        // Hessian of [w; b] with the intercept in the last slot.
        let s = p.mapv(|v| v * (1.0 - v));
        let mut weighted = features.to_owned();
        for (mut row, si) in weighted.axis_iter_mut(Axis(0)).zip(s.iter()) {
            row *= *si;
        }
        let hww = features.t().dot(&weighted) / nf;
        let hwb = weighted.sum_axis(Axis(0)) / nf;
        let hbb = s.sum() / nf;
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        for i in 0..d {
            for j in 0..d {
                hess[(i, j)] = hww[[i, j]];
            }
            hess[(i, i)] += l2;
            hess[(i, d)] = hwb[i];
            hess[(d, i)] = hwb[i];
        }
        hess[(d, d)] = hbb + 1e-12;
        let grad = DVector::from_iterator(d + 1, gw.iter().copied().chain(std::iter::once(gb)));
        let dir = match hess.cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -grad.clone(),
        };

        let slope: f64 = dir.dot(&grad);
        let mut t = 1.0;
        let (mut w_new, mut b_new, mut f_new);
        loop {
            w_new = &w + &(Array1::from_iter(dir.iter().take(d).copied()) * t);
            b_new = b + t * dir[d];
            f_new = objective(features, targets, &w_new, b_new, l2);
            if f_new <= f + 1e-4 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        let improvement = f - f_new;
        w = w_new;
        b = b_new;
        f = f_new;
        if improvement.abs() < tol * tol {
            break;
        }
    }
    Ok(BinaryLogistic { weights: w, intercept: b })
}

/// One binary model per class.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrLogisticModel {
    pub classes: Vec<BinaryLogistic>,
    pub config: LogisticConfig,
}

impl OvrLogisticModel {
    /// `targets` is the `N x C` binary label matrix of the training rows.
    pub fn fit(features: ArrayView2<f64>, targets: ArrayView2<f64>, config: LogisticConfig) -> Result<Self> {
        if features.nrows() != targets.nrows() {
            return Err(CdneError::shape("OvrLogisticModel::fit", features.nrows(), targets.nrows()));
        }
        let l2 = config.l2_for(features.nrows());
        let classes = targets
            .columns()
            .into_iter()
            .map(|col| lr_fit(features, col, l2, config.max_iter, config.tol))
            .collect::<Result<_>>()?;
        Ok(Self { classes, config })
    }

    /// `N x C` matrix of per-class probabilities.
    pub fn predict_proba(&self, features: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((features.nrows(), self.classes.len()));
        for (c, model) in self.classes.iter().enumerate() {
            out.column_mut(c).assign(&model.predict_proba(features));
        }
        out
    }
}
