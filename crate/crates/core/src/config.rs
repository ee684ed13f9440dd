//! Run configuration and its flat `key = value` file format.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{CdneError, Result};
use crate::eval::ThresholdPolicy;
use crate::pseudo::{LogisticConfig, PseudoLabelConfig};
use crate::sae::TrainerConfig;

/// Terms forced to zero at every depth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablations {
    pub alpha_zero: bool,
    pub phi_zero: bool,
    pub mu_zero: bool,
    pub gamma_zero: bool,
}

impl Ablations {
    /// Enables the ablation named `alpha`, `phi`, `mu` or `gamma`.
    pub fn enable(&mut self, name: &str) -> Result<()> {
        match name {
            "alpha" => self.alpha_zero = true,
            "phi" => self.phi_zero = true,
            "mu" => self.mu_zero = true,
            "gamma" => self.gamma_zero = true,
            other => return Err(CdneError::invalid(format!("unknown ablation {other:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub label_fraction: f64,
    pub splits: usize,
    pub policy: ThresholdPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            label_fraction: 0.01,
            splits: 5,
            policy: ThresholdPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdneConfig {
    /// Maximum random-walk step.
    pub k: usize,
    /// Hidden widths `d(1), ..., d(L)`.
    pub layer_dims: Vec<usize>,
    pub beta: f64,
    pub alpha: f64,
    pub phi: f64,
    pub mu: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub pca_dim: usize,
    pub trainer: TrainerConfig,
    pub logistic: LogisticConfig,
    pub ablations: Ablations,
    pub eval: EvalConfig,
}

impl Default for CdneConfig {
    fn default() -> Self {
        Self {
            k: 3,
            layer_dims: vec![256, 128],
            beta: 4.0,
            alpha: 4.0,
            phi: 2.0,
            mu: 2.0,
            gamma: 40.0,
            lambda: 0.05,
            pca_dim: 128,
            trainer: TrainerConfig::default(),
            logistic: LogisticConfig::default(),
            ablations: Ablations::default(),
            eval: EvalConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "k",
    "layer_dims",
    "beta",
    "alpha",
    "phi",
    "mu",
    "gamma",
    "lambda",
    "pca_dim",
    "learning_rate",
    "max_iters",
    "rel_tol",
    "seed",
    "batch_size",
    "lr_l2",
    "lr_max_iter",
    "lr_tol",
    "ablate_alpha",
    "ablate_phi",
    "ablate_mu",
    "ablate_gamma",
    "label_fraction",
    "splits",
    "eval_threshold",
    "eval_fallback_argmax",
];

/// Parses `key = value` lines; `#` starts a comment line. Returns the pairs
/// with their line numbers, rejecting keys outside `allowed` and repeats.
pub fn parse_key_values<'a>(text: &'a str, allowed: &[&str]) -> Result<Vec<(usize, &'a str, &'a str)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CdneError::invalid(format!("config line {}: {msg}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !allowed.contains(&key) {
            return Err(err(format!("unknown key {key:?}")));
        }
        if !seen.insert(key) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        out.push((i + 1, key, value));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CdneError::invalid(format!("config line {line}: bad value {value:?} for {key}")))
}

impl CdneConfig {
    /// Overlays the keys present in `text` on the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (line, key, value) in parse_key_values(text, KEYS)? {
            let v = value;
            match key {
                "k" => c.k = parse_value(line, key, v)?,
                "layer_dims" => {
                    c.layer_dims = v
                        .split(',')
                        .map(|d| parse_value(line, key, d.trim()))
                        .collect::<Result<_>>()?
                }
                "beta" => c.beta = parse_value(line, key, v)?,
                "alpha" => c.alpha = parse_value(line, key, v)?,
                "phi" => c.phi = parse_value(line, key, v)?,
                "mu" => c.mu = parse_value(line, key, v)?,
                "gamma" => c.gamma = parse_value(line, key, v)?,
                "lambda" => c.lambda = parse_value(line, key, v)?,
                "pca_dim" => c.pca_dim = parse_value(line, key, v)?,
                "learning_rate" => c.trainer.learning_rate = parse_value(line, key, v)?,
                "max_iters" => c.trainer.max_iters = parse_value(line, key, v)?,
                "rel_tol" => c.trainer.rel_tol = parse_value(line, key, v)?,
                "seed" => c.trainer.seed = parse_value(line, key, v)?,
                "batch_size" => {
                    let b: usize = parse_value(line, key, v)?;
                    c.trainer.batch_size = (b > 0).then_some(b);
                }
                "lr_l2" => c.logistic.l2 = if v == "auto" { None } else { Some(parse_value(line, key, v)?) },
                "lr_max_iter" => c.logistic.max_iter = parse_value(line, key, v)?,
                "lr_tol" => c.logistic.tol = parse_value(line, key, v)?,
                "ablate_alpha" => c.ablations.alpha_zero = parse_value(line, key, v)?,
                "ablate_phi" => c.ablations.phi_zero = parse_value(line, key, v)?,
                "ablate_mu" => c.ablations.mu_zero = parse_value(line, key, v)?,
                "ablate_gamma" => c.ablations.gamma_zero = parse_value(line, key, v)?,
                "label_fraction" => c.eval.label_fraction = parse_value(line, key, v)?,
                "splits" => c.eval.splits = parse_value(line, key, v)?,
                "eval_threshold" => c.eval.policy.threshold = parse_value(line, key, v)?,
                "eval_fallback_argmax" => c.eval.policy.fallback_argmax = parse_value(line, key, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("k", self.k.to_string());
        kv("layer_dims", dims.join(","));
        kv("beta", self.beta.to_string());
        kv("alpha", self.alpha.to_string());
        kv("phi", self.phi.to_string());
        kv("mu", self.mu.to_string());
        kv("gamma", self.gamma.to_string());
        kv("lambda", self.lambda.to_string());
        kv("pca_dim", self.pca_dim.to_string());
        kv("learning_rate", self.trainer.learning_rate.to_string());
        kv("max_iters", self.trainer.max_iters.to_string());
        kv("rel_tol", self.trainer.rel_tol.to_string());
        kv("seed", self.trainer.seed.to_string());
        kv("batch_size", self.trainer.batch_size.unwrap_or(0).to_string());
        kv("lr_l2", self.logistic.l2.map_or("auto".to_string(), |v| v.to_string()));
        kv("lr_max_iter", self.logistic.max_iter.to_string());
        kv("lr_tol", self.logistic.tol.to_string());
        kv("ablate_alpha", self.ablations.alpha_zero.to_string());
        kv("ablate_phi", self.ablations.phi_zero.to_string());
        kv("ablate_mu", self.ablations.mu_zero.to_string());
        kv("ablate_gamma", self.ablations.gamma_zero.to_string());
        kv("label_fraction", self.eval.label_fraction.to_string());
        kv("splits", self.eval.splits.to_string());
        kv("eval_threshold", self.eval.policy.threshold.to_string());
        kv("eval_fallback_argmax", self.eval.policy.fallback_argmax.to_string());
        out
    }

    /// First 16 hex digits of the SHA-256 of [`CdneConfig::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CdneError::invalid("k must be at least 1"));
        }
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return Err(CdneError::invalid("layer_dims must be a nonempty list of positive widths"));
        }
        if self.layer_dims.windows(2).any(|w| w[1] >= w[0]) {
            log::warn!("layer_dims {:?} are not strictly decreasing", self.layer_dims);
        }
        if self.pca_dim == 0 {
            return Err(CdneError::invalid("pca_dim must be positive"));
        }
        self.trainer.validate()?;
        self.layer_weights(1, crate::pipeline::Network::Source).validate()?;
        let f = self.eval.label_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CdneError::invalid(format!("label_fraction must lie in (0, 1), got {f}")));
        }
        Ok(())
    }

    pub fn pseudo_label(&self) -> PseudoLabelConfig {
        PseudoLabelConfig {
            pca_dim: self.pca_dim,
            logistic: self.logistic,
        }
    }
}
