use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LayerObjective, LayerParams, LossBreakdown};
use crate::error::{CdneError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once `|loss_t - loss_{t-1}| / max(1, |loss_{t-1}|)` drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    /// `None` trains full-batch. `Some(b)` runs node mini-batches of size `b`
    /// per epoch, with pairwise terms restricted to in-batch pairs.
    pub batch_size: Option<usize>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.025,
            max_iters: 2000,
            rel_tol: 1e-6,
            seed: 0,
            batch_size: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CdneError::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(CdneError::invalid(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        if self.batch_size == Some(0) {
            return Err(CdneError::invalid("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLayer {
    pub params: LayerParams,
    /// Loss at the initial parameters followed by the loss after every update.
    pub trajectory: Vec<LossBreakdown>,
}

impl TrainedLayer {
    pub fn initial_loss(&self) -> LossBreakdown {
        self.trajectory[0]
    }

    pub fn final_loss(&self) -> LossBreakdown {
        *self.trajectory.last().unwrap()
    }
}

fn converged(prev: &LossBreakdown, cur: &LossBreakdown, rel_tol: f64) -> bool {
    (cur.total - prev.total).abs() / prev.total.abs().max(1.0) < rel_tol
}

fn check_finite(iteration: usize, loss: &LossBreakdown, params: &LayerParams) -> Result<()> {
    if !loss.total.is_finite() || !params.is_finite() {
        return Err(CdneError::Diverged {
            iteration,
            loss: loss.total,
        });
    }
    Ok(())
}

/// Gradient descent on one layer from a seeded initialization.
pub fn train_layer(objective: &LayerObjective, hidden_dim: usize, config: &TrainerConfig) -> Result<TrainedLayer> {
    config.validate()?;
    if hidden_dim == 0 {
        return Err(CdneError::invalid("hidden dimension must be positive"));
    }
    let mut params = LayerParams::init(objective.input().ncols(), hidden_dim, config.seed);
    match config.batch_size {
        Some(b) if b < objective.n() => train_minibatch(objective, &mut params, b, config).map(|trajectory| {
            TrainedLayer { params, trajectory }
        }),
        _ => train_full_batch(objective, &mut params, config).map(|trajectory| TrainedLayer { params, trajectory }),
    }
}

fn train_full_batch(
    objective: &LayerObjective,
    params: &mut LayerParams,
    config: &TrainerConfig,
) -> Result<Vec<LossBreakdown>> {
    let mut trajectory: Vec<LossBreakdown> = Vec::new();
    for iter in 0..=config.max_iters {
        let last = iter == config.max_iters;
        let (loss, grad) = if last {
            (objective.evaluate(params)?, None)
        } else {
            let (l, g) = objective.evaluate_with_gradients(params)?;
            (l, Some(g))
        };
        check_finite(iter, &loss, params)?;
        let stop = trajectory.last().is_some_and(|prev| converged(prev, &loss, config.rel_tol));
        trajectory.push(loss);
        match grad {
            Some(g) if !stop => params.descend(&g, config.learning_rate),
            _ => break,
        }
    }
    Ok(trajectory)
}

fn train_minibatch(
    objective: &LayerObjective,
    params: &mut LayerParams,
    batch_size: usize,
    config: &TrainerConfig,
) -> Result<Vec<LossBreakdown>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..objective.n()).collect();
    let mut trajectory: Vec<LossBreakdown> = Vec::new();
    for epoch in 0..=config.max_iters {
        let loss = objective.evaluate(params)?;
        check_finite(epoch, &loss, params)?;
        let stop = trajectory.last().is_some_and(|prev| converged(prev, &loss, config.rel_tol));
        trajectory.push(loss);
        if stop || epoch == config.max_iters {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let mut rows = chunk.to_vec();
            rows.sort_unstable();
            let sub = objective.restrict(&rows);
            let (_, grad) = sub.evaluate_with_gradients(params)?;
            params.descend(&grad, config.learning_rate);
        }
    }
    Ok(trajectory)
}
