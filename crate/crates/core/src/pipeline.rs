//! End-to-end CDNE: source SAE, attribute pseudo-labels, then the target SAE
//! aligned against the frozen source stack.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use sha2::{Digest, Sha256};

use crate::config::CdneConfig;
use crate::error::{CdneError, Result};
use crate::graph::TransferTask;
use crate::proximity::{ppmi, PpmiMatrix};
use crate::pseudo::{predict_fuzzy_labels, FuzzyLabelMatrix};
use crate::sae::{
    common_label_matrix, train_layer, write_checkpoint, Alignment, Checkpoint, LayerObjective, LossBreakdown,
    LossWeights, Pairwise, TrainedLayer, TrainerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    Source,
    Target,
}

impl CdneConfig {
    /// Loss weights of layer `l` (1-based). Deeper layers halve `alpha`,
    /// `mu` and `gamma` and drop `phi`; ablations zero a weight everywhere.
    /// Weights that do not belong to `which` are 0.
    pub fn layer_weights(&self, l: usize, which: Network) -> LossWeights {
        let deep = l > 1;
        let scale = if deep { 0.5 } else { 1.0 };
        let a = &self.ablations;
        let pick = |v: f64, off: bool| if off { 0.0 } else { v };
        let (phi, mu, gamma) = match which {
            Network::Source => (if deep { 0.0 } else { self.phi }, 0.0, 0.0),
            Network::Target => (0.0, scale * self.mu, scale * self.gamma),
        };
        LossWeights {
            alpha: pick(scale * self.alpha, a.alpha_zero),
            phi: pick(phi, a.phi_zero),
            mu: pick(mu, a.mu_zero),
            gamma: pick(gamma, a.gamma_zero),
            lambda: self.lambda,
            beta: self.beta,
        }
    }
}

/// Free-function form of [`CdneConfig::layer_weights`].
pub fn layer_weights_at_depth(config: &CdneConfig, l: usize, which: Network) -> LossWeights {
    config.layer_weights(l, which)
}

/// Trainer settings for layer `l`; source and target layers at the same
/// depth share an initialization seed.
fn layer_trainer(config: &CdneConfig, l: usize) -> TrainerConfig {
    TrainerConfig {
        seed: config.trainer.seed.wrapping_add(l as u64 - 1),
        ..config.trainer.clone()
    }
}

/// A trained stack: one entry per layer, in depth order.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeRun {
    pub layers: Vec<TrainedLayer>,
    /// `reps[l - 1]` is the frozen encoding `H^(l)`.
    pub reps: Vec<Array2<f64>>,
}

impl SaeRun {
    pub fn output(&self) -> &Array2<f64> {
        self.reps.last().expect("a trained stack has at least one layer")
    }

    /// SHA-256 over the bit patterns of every parameter.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for layer in &self.layers {
            for block in layer.params.blocks() {
                for v in block {
                    hasher.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hasher.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn check_ppmi(ppmi: &PpmiMatrix, n: usize, which: &str) -> Result<()> {
    if ppmi.n() != n {
        return Err(CdneError::invalid(format!(
            "{which} proximity has {} rows but the network has {n} nodes",
            ppmi.n()
        )));
    }
    Ok(())
}

pub fn train_source_sae(task: &TransferTask, ppmi_s: &PpmiMatrix, config: &CdneConfig) -> Result<SaeRun> {
    config.validate()?;
    check_ppmi(ppmi_s, task.source.n(), "source")?;
    let proximity = Pairwise::new(ppmi_s.x.view())?;
    let labels = Pairwise::new(common_label_matrix(task.source_label_matrix().view())?.o.view())?;
    let mut input = ppmi_s.scaled();
    let mut run = SaeRun { layers: Vec::new(), reps: Vec::new() };
    for (i, &dim) in config.layer_dims.iter().enumerate() {
        let l = i + 1;
        let objective = LayerObjective::source(input.view(), l, &proximity, &labels, config.layer_weights(l, Network::Source))?;
        let trained = train_layer(&objective, dim, &layer_trainer(config, l))?;
        let h = objective.hidden(&trained.params)?;
        log::info!(
            "source layer {l}: loss {:.6} -> {:.6} in {} iterations",
            trained.initial_loss().total,
            trained.final_loss().total,
            trained.trajectory.len() - 1
        );
        run.layers.push(trained);
        run.reps.push(h.clone());
        input = h;
    }
    Ok(run)
}

pub fn train_target_sae(
    task: &TransferTask,
    ppmi_t: &PpmiMatrix,
    source_reps: &[Array2<f64>],
    y_hat: &FuzzyLabelMatrix,
    config: &CdneConfig,
) -> Result<SaeRun> {
    config.validate()?;
    check_ppmi(ppmi_t, task.target.n(), "target")?;
    if source_reps.len() != config.layer_dims.len() {
        return Err(CdneError::shape("source representations", config.layer_dims.len(), source_reps.len()));
    }
    let y_s = task.source_label_matrix();
    if y_hat.values().dim() != (task.target.n(), y_s.ncols()) {
        return Err(CdneError::shape("fuzzy labels", (task.target.n(), y_s.ncols()), y_hat.values().dim()));
    }
    let proximity = Pairwise::new(ppmi_t.x.view())?;
    let mut input = ppmi_t.scaled();
    let mut run = SaeRun { layers: Vec::new(), reps: Vec::new() };
    for (i, &dim) in config.layer_dims.iter().enumerate() {
        let l = i + 1;
        let alignment = Alignment::new(source_reps[i].view(), y_s.view(), y_hat.values())?;
        let objective =
            LayerObjective::target(input.view(), l, &proximity, &alignment, config.layer_weights(l, Network::Target))?;
        let trained = train_layer(&objective, dim, &layer_trainer(config, l))?;
        let h = objective.hidden(&trained.params)?;
        log::info!(
            "target layer {l}: loss {:.6} -> {:.6} in {} iterations",
            trained.initial_loss().total,
            trained.final_loss().total,
            trained.trajectory.len() - 1
        );
        run.layers.push(trained);
        run.reps.push(h.clone());
        input = h;
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub source: SaeRun,
    pub target: SaeRun,
    pub fuzzy: FuzzyLabelMatrix,
}

impl EmbeddingPair {
    /// `H^{s(L)}`
    pub fn h_s(&self) -> ArrayView2<'_, f64> {
        self.source.output().view()
    }

    /// `H^{t(L)}`
    pub fn h_t(&self) -> ArrayView2<'_, f64> {
        self.target.output().view()
    }
}

pub fn run_cdne(task: &TransferTask, config: &CdneConfig) -> Result<EmbeddingPair> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let ppmi_s = ppmi(&task.source, config.k).map_err(|e| e.in_stage("source proximity"))?;
    let ppmi_t = ppmi(&task.target, config.k).map_err(|e| e.in_stage("target proximity"))?;
    let source = train_source_sae(task, &ppmi_s, config).map_err(|e| e.in_stage("source SAE"))?;
    let frozen = source.checksum();
    let fuzzy = predict_fuzzy_labels(task, &config.pseudo_label()).map_err(|e| e.in_stage("pseudo-labels"))?;
    let target =
        train_target_sae(task, &ppmi_t, &source.reps, &fuzzy, config).map_err(|e| e.in_stage("target SAE"))?;
    debug_assert_eq!(frozen, source.checksum());
    Ok(EmbeddingPair { source, target, fuzzy })
}

/// `node_id<TAB>v1<TAB>...<TAB>v_d` with 17 significant digits, in node order.
pub fn embedding_tsv(node_ids: &[String], h: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for (id, row) in node_ids.iter().zip(h.rows()) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, "\t{v:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Reads an embedding TSV and orders its rows as `node_ids`. Every node must
/// appear exactly once and every row must have the same width.
pub fn read_embeddings(path: &Path, node_ids: &[String]) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CdneError::io(path, e))?;
    let parse_err = |line: usize, message: String| CdneError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let index: HashMap<&str, usize> = node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; node_ids.len()];
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let &row = index
            .get(id)
            .ok_or_else(|| parse_err(i + 1, format!("unknown node {id:?}")))?;
        let values: Vec<f64> = fields
            .map(|f| f.trim().parse().map_err(|_| parse_err(i + 1, format!("bad value {f:?}"))))
            .collect::<Result<_>>()?;
        if *width.get_or_insert(values.len()) != values.len() || values.is_empty() {
            return Err(parse_err(i + 1, "inconsistent embedding width".into()));
        }
        if rows[row].replace(values).is_some() {
            return Err(parse_err(i + 1, format!("node {id:?} appears twice")));
        }
    }
    let d = width.ok_or_else(|| CdneError::invalid(format!("{} holds no embeddings", path.display())))?;
    let mut out = Array2::zeros((node_ids.len(), d));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| CdneError::invalid(format!("{} lacks node {:?}", path.display(), node_ids[i])))?;
        out.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    Ok(out)
}

pub const SOURCE_EMBEDDING_FILE: &str = "source_embedding.tsv";
pub const TARGET_EMBEDDING_FILE: &str = "target_embedding.tsv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved.cfg";
pub const FUZZY_LABEL_FILE: &str = "fuzzy_labels.tsv";

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CdneError::io(path, e))
}

/// Writes both embeddings, the resolved config, the fuzzy labels and, per
/// network and layer, the loss trajectory and a parameter checkpoint.
pub fn write_run(dir: &Path, task: &TransferTask, config: &CdneConfig, pair: &EmbeddingPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CdneError::io(dir, e))?;
    write_file(&dir.join(SOURCE_EMBEDDING_FILE), &embedding_tsv(task.source.node_ids(), pair.h_s()))?;
    write_file(&dir.join(TARGET_EMBEDDING_FILE), &embedding_tsv(task.target.node_ids(), pair.h_t()))?;
    write_file(&dir.join(RESOLVED_CONFIG_FILE), &config.to_text())?;
    write_file(
        &dir.join(FUZZY_LABEL_FILE),
        &pair.fuzzy.to_tsv(task.target.node_ids(), task.labels.names()),
    )?;
    let hash = config.hash();
    for (name, run) in [("source", &pair.source), ("target", &pair.target)] {
        for (i, layer) in run.layers.iter().enumerate() {
            let l = i + 1;
            write_file(
                &dir.join(format!("loss_{name}_layer{l}.tsv")),
                &LossBreakdown::trajectory_tsv(&layer.trajectory),
            )?;
            let checkpoint = Checkpoint {
                params: layer.params.clone(),
                seed: layer_trainer(config, l).seed,
                config_hash: hash.clone(),
            };
            write_checkpoint(&dir.join(format!("params_{name}_layer{l}.txt")), &checkpoint)?;
        }
    }
    Ok(())
}
