//! Cross-network deep network embedding.
//!
//! A source network with full labels and a sparsely labeled target network
//! are embedded into a shared space by two stacked autoencoders. The source
//! stack is trained first with connectivity and shared-label constraints; the
//! target stack is then trained with marginal and class-conditional MMD terms
//! that pull it toward the frozen source representations, using fuzzy target
//! labels predicted from node attributes.

pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod proximity;
pub mod pseudo;
pub mod sae;

pub use config::{Ablations, CdneConfig, EvalConfig};
pub use error::{CdneError, Result};
pub use eval::{evaluate_transfer, macro_f1, micro_f1, predict_labels, F1Report, ThresholdPolicy};
pub use graph::{
    load_network, synth_transfer_task, write_network, AttributedNetwork, LabelUniverse, SynthParams, TransferTask,
    UnionAttributeSpace,
};
pub use pipeline::{layer_weights_at_depth, run_cdne, train_source_sae, train_target_sae, EmbeddingPair, Network, SaeRun};
pub use proximity::{ppmi, PpmiMatrix};
pub use pseudo::{predict_fuzzy_labels, FuzzyLabelMatrix, LogisticConfig, PseudoLabelConfig};
pub use sae::{LayerParams, LossBreakdown, LossWeights, TrainerConfig};
