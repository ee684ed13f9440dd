//! Attribute-based fuzzy pseudo-labels for the target network.

mod logistic;
mod pca;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{CdneError, Result};
use crate::graph::{attribute_matrix, TransferTask};

pub use logistic::{lr_fit, BinaryLogistic, LogisticConfig, OvrLogisticModel, PROB_EPS};
pub use pca::{pca_fit, pca_transform, PcaModel};

/// `n_t x C` label-membership degrees. Labeled rows hold the observed binary
/// labels; every other entry lies strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyLabelMatrix {
    y_hat: Array2<f64>,
    labeled_rows: BTreeSet<usize>,
}

impl FuzzyLabelMatrix {
    pub fn new(y_hat: Array2<f64>, labeled_rows: BTreeSet<usize>) -> Result<Self> {
        if let Some(&r) = labeled_rows.iter().find(|&&r| r >= y_hat.nrows()) {
            return Err(CdneError::invalid(format!("labeled row {r} is out of range")));
        }
        for ((i, _), &v) in y_hat.indexed_iter() {
            let ok = if labeled_rows.contains(&i) {
                v == 0.0 || v == 1.0
            } else {
                v > 0.0 && v < 1.0
            };
            if !ok {
                return Err(CdneError::invalid(format!("fuzzy label entry {v} in row {i} is out of range")));
            }
        }
        Ok(Self { y_hat, labeled_rows })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.y_hat.view()
    }

    pub fn labeled_rows(&self) -> &BTreeSet<usize> {
        &self.labeled_rows
    }

    /// `node<TAB>class<TAB>value` for every entry, sorted by node id then
    /// class name.
    pub fn to_tsv(&self, node_ids: &[String], classes: &[String]) -> String {
        let mut order: Vec<usize> = (0..self.y_hat.nrows()).collect();
        order.sort_by(|&a, &b| node_ids[a].cmp(&node_ids[b]));
        let mut out = String::new();
        for i in order {
            for (c, name) in classes.iter().enumerate() {
                let _ = writeln!(out, "{}\t{name}\t{:.16e}", node_ids[i], self.y_hat[[i, c]]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelConfig {
    /// Upper bound on the PCA dimension; the fitted dimension is
    /// `min(pca_dim, N - 1, W)`.
    pub pca_dim: usize,
    pub logistic: LogisticConfig,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            pca_dim: 128,
            logistic: LogisticConfig::default(),
        }
    }
}

/// PCA over both networks' attribute rows, then one-vs-rest logistic
/// regression trained on every source node and every labeled target node.
pub fn predict_fuzzy_labels(task: &TransferTask, config: &PseudoLabelConfig) -> Result<FuzzyLabelMatrix> {
    let space = &task.attr_space;
    if space.is_empty() {
        return Err(CdneError::invalid("pseudo-labeling needs a nonempty attribute space"));
    }
    let a_s = attribute_matrix(&task.source, space)?;
    let a_t = attribute_matrix(&task.target, space)?;
    let stacked = concatenate![Axis(0), a_s, a_t];
    let rows = stacked.nrows();
    let r = config.pca_dim.min(rows.saturating_sub(1)).min(space.len());
    let pca = pca_fit(stacked.view(), r)?;
    let features = pca_transform(&pca, stacked.view())?;

    let n_s = task.source.n();
    let y_s = task.source_label_matrix();
    let y_t = task.target_observed_label_matrix();
    let labeled: Vec<usize> = task.target_labeled.iter().copied().collect();
    let train_x = concatenate![
        Axis(0),
        features.slice(ndarray::s![..n_s, ..]),
        features.slice(ndarray::s![n_s.., ..]).select(Axis(0), &labeled)
    ];
    let train_y = concatenate![Axis(0), y_s, y_t.select(Axis(0), &labeled)];
    if let Some(c) = train_y.sum_axis(Axis(0)).iter().position(|&m| m == 0.0) {
        return Err(CdneError::invalid(format!(
            "label {:?} has no labeled example",
            task.labels.names()[c]
        )));
    }
    let model = OvrLogisticModel::fit(train_x.view(), train_y.view(), config.logistic)?;
    let mut y_hat = model.predict_proba(features.slice(ndarray::s![n_s.., ..]));
    y_hat.mapv_inplace(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS));
    for &i in &labeled {
        y_hat.row_mut(i).assign(&y_t.row(i));
    }
    FuzzyLabelMatrix::new(y_hat, task.target_labeled.clone())
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use ndarray::array;

    use super::*;
    use crate::graph::{synth_transfer_task, AttributedNetwork, SynthParams};

    #[test]
    fn fuzzy_matrix_validates_rows() {
        let ok = FuzzyLabelMatrix::new(array![[1.0, 0.0], [0.3, 0.6]], BTreeSet::from([0]));
        assert!(ok.is_ok());
        assert!(FuzzyLabelMatrix::new(array![[1.0, 0.0], [0.0, 0.6]], BTreeSet::from([0])).is_err());
        assert!(FuzzyLabelMatrix::new(array![[0.5, 0.0]], BTreeSet::from([0])).is_err());
    }

    #[test]
    fn labeled_rows_copied_and_unlabeled_strictly_inside() {
        let task = synth_transfer_task(&SynthParams {
            n_s: 80,
            n_t: 80,
            label_fraction: 0.1,
            ..SynthParams::default()
        })
        .unwrap();
        let fuzzy = predict_fuzzy_labels(&task, &PseudoLabelConfig::default()).unwrap();
        let y_t = task.target_observed_label_matrix();
        for i in 0..task.target.n() {
            if task.target_labeled.contains(&i) {
                assert_eq!(fuzzy.values().row(i), y_t.row(i));
            } else {
                assert!(fuzzy.values().row(i).iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
        assert_eq!(fuzzy, predict_fuzzy_labels(&task, &PseudoLabelConfig::default()).unwrap());
    }

    #[test]
    fn rejects_empty_attribute_space() {
        let net = |prefix: &str| {
            AttributedNetwork::new(
                vec![format!("{prefix}0"), format!("{prefix}1")],
                [(0, 1)],
                vec![BTreeMap::new(); 2],
                vec![BTreeSet::from(["a".to_string()]), BTreeSet::from(["b".to_string()])],
            )
            .unwrap()
        };
        let task = TransferTask::new(net("s"), net("t"), 0.5, 0).unwrap();
        assert!(predict_fuzzy_labels(&task, &PseudoLabelConfig::default()).is_err());
    }
}
