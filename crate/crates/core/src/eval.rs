//! Cross-network node classification on learned embeddings, scored with
//! Micro-F1 and Macro-F1 over random labeled/unlabeled target splits.

use std::fmt::Write as _;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{CdneError, Result};
use crate::graph::TransferTask;
use crate::pseudo::{LogisticConfig, OvrLogisticModel};

/// How binary multi-label decisions are read off per-class scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub threshold: f64,
    /// When no class reaches the threshold, predict the single best class
    /// (ties go to the lowest index).
    pub fallback_argmax: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            fallback_argmax: true,
        }
    }
}

pub fn predict_labels(scores: ArrayView2<f64>, policy: ThresholdPolicy) -> Array2<f64> {
    let mut pred = scores.mapv(|s| if s >= policy.threshold { 1.0 } else { 0.0 });
    if policy.fallback_argmax {
        for (mut row, srow) in pred.axis_iter_mut(Axis(0)).zip(scores.axis_iter(Axis(0))) {
            if row.iter().all(|&v| v == 0.0) && !srow.is_empty() {
                let mut best = 0;
                for (c, &s) in srow.iter().enumerate() {
                    if s > srow[best] {
                        best = c;
                    }
                }
                row[best] = 1.0;
            }
        }
    }
    pred
}

/// Per-class `(tp, fp, fn)` counts.
fn confusion(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Vec<(f64, f64, f64)>> {
    if pred.dim() != truth.dim() {
        return Err(CdneError::shape("F1", truth.dim(), pred.dim()));
    }
    Ok(pred
        .columns()
        .into_iter()
        .zip(truth.columns())
        .map(|(p, t)| {
            p.iter().zip(t.iter()).fold((0.0, 0.0, 0.0), |(tp, fp, fn_), (&p, &t)| {
                match (p > 0.5, t > 0.5) {
                    (true, true) => (tp + 1.0, fp, fn_),
                    (true, false) => (tp, fp + 1.0, fn_),
                    (false, true) => (tp, fp, fn_ + 1.0),
                    (false, false) => (tp, fp, fn_),
                }
            })
        })
        .collect())
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// F1 of the pooled counts over all classes.
pub fn micro_f1(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    let (tp, fp, fn_) = confusion(pred, truth)?
        .into_iter()
        .fold((0.0, 0.0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(f1(tp, fp, fn_))
}

/// Unweighted mean of per-class F1; a class with no predictions and no
/// truth scores 0.
pub fn macro_f1(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    let counts = confusion(pred, truth)?;
    if counts.is_empty() {
        return Ok(0.0);
    }
    Ok(counts.iter().map(|&(tp, fp, fn_)| f1(tp, fp, fn_)).sum::<f64>() / counts.len() as f64)
}

/// Training rows (every source node, then the labeled target nodes) and the
/// unlabeled target rows to be classified.
#[derive(Debug, Clone)]
pub struct ClassifierInput {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub eval_features: Array2<f64>,
    pub eval_truth: Array2<f64>,
}

impl ClassifierInput {
    pub fn new(task: &TransferTask, h_s: ArrayView2<f64>, h_t: ArrayView2<f64>) -> Result<Self> {
        if h_s.nrows() != task.source.n() || h_t.nrows() != task.target.n() {
            return Err(CdneError::shape(
                "embedding rows",
                (task.source.n(), task.target.n()),
                (h_s.nrows(), h_t.nrows()),
            ));
        }
        if h_s.ncols() != h_t.ncols() {
            return Err(CdneError::shape("embedding width", h_s.ncols(), h_t.ncols()));
        }
        let labeled: Vec<usize> = task.target_labeled.iter().copied().collect();
        let unlabeled: Vec<usize> = task.target_unlabeled.iter().copied().collect();
        let truth = task.target_truth_label_matrix();
        let features = concatenate![Axis(0), h_s, h_t.select(Axis(0), &labeled)];
        let targets = concatenate![Axis(0), task.source_label_matrix(), truth.select(Axis(0), &labeled)];
        if let Some(c) = targets.sum_axis(Axis(0)).iter().position(|&m| m == 0.0) {
            return Err(CdneError::invalid(format!(
                "label {:?} is absent from the classifier's training rows",
                task.labels.names()[c]
            )));
        }
        Ok(Self {
            features,
            targets,
            eval_features: h_t.select(Axis(0), &unlabeled),
            eval_truth: truth.select(Axis(0), &unlabeled),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub seed: u64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub splits: Vec<SplitScore>,
    pub micro_mean: f64,
    /// Population standard deviation over splits.
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub label_fraction: f64,
    pub policy: ThresholdPolicy,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl F1Report {
    pub fn from_splits(splits: Vec<SplitScore>, label_fraction: f64, policy: ThresholdPolicy) -> Self {
        let micro: Vec<f64> = splits.iter().map(|s| s.micro_f1).collect();
        let macro_: Vec<f64> = splits.iter().map(|s| s.macro_f1).collect();
        let (micro_mean, micro_std) = mean_std(&micro);
        let (macro_mean, macro_std) = mean_std(&macro_);
        Self {
            splits,
            micro_mean,
            micro_std,
            macro_mean,
            macro_std,
            label_fraction,
            policy,
        }
    }

    /// Flat `key: value` summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "splits: {}", self.splits.len());
        let seeds: Vec<String> = self.splits.iter().map(|s| s.seed.to_string()).collect();
        let _ = writeln!(out, "split_seeds: {}", seeds.join(","));
        let _ = writeln!(out, "label_fraction: {}", self.label_fraction);
        let _ = writeln!(out, "threshold: {}", self.policy.threshold);
        let _ = writeln!(out, "fallback_argmax: {}", self.policy.fallback_argmax);
        let _ = writeln!(out, "micro_f1_mean: {:.6}", self.micro_mean);
        let _ = writeln!(out, "micro_f1_std: {:.6}", self.micro_std);
        let _ = writeln!(out, "macro_f1_mean: {:.6}", self.macro_mean);
        let _ = writeln!(out, "macro_f1_std: {:.6}", self.macro_std);
        out
    }

    /// `split_seed<TAB>micro_f1<TAB>macro_f1` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("split_seed\tmicro_f1\tmacro_f1\n");
        for s in &self.splits {
            let _ = writeln!(out, "{}\t{:.16e}\t{:.16e}", s.seed, s.micro_f1, s.macro_f1);
        }
        out
    }
}

/// Scores one fixed embedding pair over several labeled/unlabeled target
/// splits, one per seed.
pub fn evaluate_transfer(
    task: &TransferTask,
    h_s: ArrayView2<f64>,
    h_t: ArrayView2<f64>,
    seeds: &[u64],
    label_fraction: f64,
    policy: ThresholdPolicy,
    logistic: LogisticConfig,
) -> Result<F1Report> {
    let mut splits = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let split = task.resplit(label_fraction, seed)?;
        let input = ClassifierInput::new(&split, h_s, h_t)?;
        let model = OvrLogisticModel::fit(input.features.view(), input.targets.view(), logistic)?;
        let scores = model.predict_proba(input.eval_features.view());
        let pred = predict_labels(scores.view(), policy);
        splits.push(SplitScore {
            seed,
            micro_f1: micro_f1(pred.view(), input.eval_truth.view())?,
            macro_f1: macro_f1(pred.view(), input.eval_truth.view())?,
        });
    }
    Ok(F1Report::from_splits(splits, label_fraction, policy))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    use super::*;

    #[test]
    fn prediction_policy() {
        let p = ThresholdPolicy::default();
        assert_eq!(predict_labels(array![[0.9, 0.2]].view(), p), array![[1.0, 0.0]]);
        assert_eq!(predict_labels(array![[0.3, 0.3]].view(), p), array![[1.0, 0.0]]);
        let no_fallback = ThresholdPolicy { fallback_argmax: false, ..p };
        assert_eq!(predict_labels(array![[0.3, 0.3]].view(), no_fallback), array![[0.0, 0.0]]);
        let zero = ThresholdPolicy { threshold: 0.0, fallback_argmax: false };
        assert_eq!(predict_labels(array![[0.1, 0.0]].view(), zero), array![[1.0, 1.0]]);
    }

    #[test]
    fn hand_counted_f1() {
        // class 1: TP=2 FP=1 FN=0, class 2: TP=1 FP=0 FN=1
        let pred = array![[1.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        let truth = array![[1.0, 1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        assert_eq!(micro_f1(pred.view(), truth.view()).unwrap(), 0.75);
        assert_abs_diff_eq!(macro_f1(pred.view(), truth.view()).unwrap(), (0.8 + 2.0 / 3.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn f1_guards() {
        let truth = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(micro_f1(truth.view(), truth.view()).unwrap(), 1.0);
        assert_eq!(macro_f1(truth.view(), truth.view()).unwrap(), 1.0);
        let none = Array2::zeros((2, 2));
        assert_eq!(micro_f1(none.view(), truth.view()).unwrap(), 0.0);
        // third class absent everywhere scores 0
        let t3 = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_abs_diff_eq!(macro_f1(t3.view(), t3.view()).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(micro_f1(t3.view(), truth.view()).is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.6, 0.7, 0.8]);
        assert_abs_diff_eq!(m, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(s, (0.02f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
    }
}
