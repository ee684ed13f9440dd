use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{CdneError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `r x W`, orthonormal rows.
    pub components: Array2<f64>,
    /// Nonincreasing variance captured by each component.
    pub explained_variance: Array1<f64>,
    /// Total variance of the centered data over all directions.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        if self.total_variance > 0.0 {
            &self.explained_variance / self.total_variance
        } else {
            Array1::zeros(self.explained_variance.len())
        }
    }
}

/// Fits the top-`r` principal directions of `data` (`N x W`) by SVD of the
/// centered matrix. Each component is signed so that its entry of largest
/// magnitude is positive.
pub fn pca_fit(data: ArrayView2<f64>, r: usize) -> Result<PcaModel> {
    let (n, w) = data.dim();
    if w == 0 {
        return Err(CdneError::invalid("PCA needs at least one attribute column"));
    }
    if n < 2 {
        return Err(CdneError::invalid("PCA needs at least two rows"));
    }
    if r == 0 || r > (n - 1).min(w) {
        return Err(CdneError::invalid(format!(
            "PCA output dimension {r} must lie in 1..={}",
            (n - 1).min(w)
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CdneError::invalid("PCA input contains non-finite values"));
    }
    let mean = data.mean_axis(Axis(0)).unwrap();
    let centered = &data - &mean;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;

    let matrix = DMatrix::from_row_iterator(n, w, centered.iter().copied());
    let svd = matrix.svd(false, true);
    let v_t = svd.v_t.expect("V^T requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut components = Array2::zeros((r, w));
    let mut explained_variance = Array1::zeros(r);
    for (k, &src) in order.iter().take(r).enumerate() {
        let mut row: Vec<f64> = v_t.row(src).iter().copied().collect();
        let pivot = row
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (j, v)| if v.abs() > best.1 { (j, v.abs()) } else { best })
            .0;
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.row_mut(k).assign(&Array1::from(row));
        let s = svd.singular_values[src];
        explained_variance[k] = s * s / (n - 1) as f64;
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

/// Projects centered rows of `data` onto the fitted components.
pub fn pca_transform(model: &PcaModel, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    if data.ncols() != model.mean.len() {
        return Err(CdneError::shape("pca_transform", model.mean.len(), data.ncols()));
    }
    Ok((&data - &model.mean).dot(&model.components.t()))
}
