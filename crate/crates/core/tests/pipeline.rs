use std::collections::BTreeSet;

use cdne::proximity::ppmi;
use cdne::sae::{common_label_matrix, train_layer, LayerObjective, Pairwise};
use cdne::{
    layer_weights_at_depth, run_cdne, synth_transfer_task, train_source_sae, train_target_sae, Ablations, CdneConfig,
    FuzzyLabelMatrix, Network, SynthParams, TransferTask,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_task(seed: u64) -> TransferTask {
    synth_transfer_task(&SynthParams {
        n_s: 60,
        n_t: 60,
        label_fraction: 0.1,
        seed,
        ..SynthParams::default()
    })
    .unwrap()
}

fn small_config() -> CdneConfig {
    let mut c = CdneConfig {
        layer_dims: vec![16, 8],
        pca_dim: 16,
        ..CdneConfig::default()
    };
    c.trainer.max_iters = 60;
    c
}

#[test]
fn identical_networks_without_cross_terms_embed_identically() {
    let base = small_task(0);
    let task = TransferTask::new(base.source.clone(), base.source.clone(), 0.1, 0).unwrap();
    let config = CdneConfig {
        phi: 0.0,
        mu: 0.0,
        gamma: 0.0,
        ..small_config()
    };
    let pair = run_cdne(&task, &config).unwrap();
    assert_eq!(pair.h_s(), pair.h_t());
    assert_eq!(pair.source.reps, pair.target.reps);
}

#[test]
fn phi_ablation_ignores_source_labels() {
    let task = small_task(1);
    let mut labels: Vec<BTreeSet<String>> = (0..task.source.n()).map(|i| task.source.labels(i).clone()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let relabeled = TransferTask {
        source: task.source.with_labels(labels).unwrap(),
        ..task.clone()
    };
    assert_ne!(relabeled.source_label_matrix(), task.source_label_matrix());

    let mut config = small_config();
    config.ablations.phi_zero = true;
    let a = train_source_sae(&task, &ppmi(&task.source, config.k).unwrap(), &config).unwrap();
    let b = train_source_sae(&relabeled, &ppmi(&relabeled.source, config.k).unwrap(), &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn alignment_ablation_ignores_the_source() {
    let task = small_task(2);
    let mut config = small_config();
    config.ablations.mu_zero = true;
    config.ablations.gamma_zero = true;
    let ppmi_t = ppmi(&task.target, config.k).unwrap();
    let source = train_source_sae(&task, &ppmi(&task.source, config.k).unwrap(), &config).unwrap();
    let fuzzy = cdne::predict_fuzzy_labels(&task, &config.pseudo_label()).unwrap();
    let a = train_target_sae(&task, &ppmi_t, &source.reps, &fuzzy, &config).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let substitute: Vec<Array2<f64>> = source.reps.iter().map(|r| r.mapv(|_| rng.random_range(0.0..1.0))).collect();
    let b = train_target_sae(&task, &ppmi_t, &substitute, &fuzzy, &config).unwrap();
    assert_eq!(a, b);

    // Swapping in a different source network end to end.
    let other = small_task(3);
    let swapped = TransferTask::new(other.source.clone(), task.target.clone(), 0.1, task.seed).unwrap();
    assert_eq!(swapped.target_labeled, task.target_labeled);
    let p = run_cdne(&task, &config).unwrap();
    let q = run_cdne(&swapped, &config).unwrap();
    assert_eq!(p.target.reps, q.target.reps);
}

#[test]
fn source_stack_is_untouched_by_target_training() {
    let task = small_task(4);
    let config = small_config();
    let source = train_source_sae(&task, &ppmi(&task.source, config.k).unwrap(), &config).unwrap();
    let before = source.checksum();
    let fuzzy = cdne::predict_fuzzy_labels(&task, &config.pseudo_label()).unwrap();
    train_target_sae(&task, &ppmi(&task.target, config.k).unwrap(), &source.reps, &fuzzy, &config).unwrap();
    assert_eq!(before, source.checksum());
}

#[test]
fn single_layer_source_is_one_constrained_autoencoder() {
    let task = small_task(5);
    let config = CdneConfig {
        layer_dims: vec![10],
        ..small_config()
    };
    let p = ppmi(&task.source, config.k).unwrap();
    let run = train_source_sae(&task, &p, &config).unwrap();
    assert_eq!(run.layers.len(), 1);

    let scaled = p.scaled();
    let prox = Pairwise::new(p.x.view()).unwrap();
    let labels = Pairwise::new(common_label_matrix(task.source_label_matrix().view()).unwrap().o.view()).unwrap();
    let obj = LayerObjective::source(scaled.view(), 1, &prox, &labels, config.layer_weights(1, Network::Source)).unwrap();
    let direct = train_layer(&obj, 10, &config.trainer).unwrap();
    assert_eq!(run.layers[0], direct);
}

#[test]
fn conditional_alignment_descends_with_true_fuzzy_labels() {
    let base = small_task(6);
    let task = TransferTask::new(base.source.clone(), base.source.clone(), 0.1, 0).unwrap();
    let config = small_config();
    let source = train_source_sae(&task, &ppmi(&task.source, config.k).unwrap(), &config).unwrap();
    let all: BTreeSet<usize> = (0..task.target.n()).collect();
    let fuzzy = FuzzyLabelMatrix::new(task.target_truth_label_matrix(), all).unwrap();
    let target = train_target_sae(&task, &ppmi(&task.target, config.k).unwrap(), &source.reps, &fuzzy, &config).unwrap();
    for layer in &target.layers {
        assert!(layer.final_loss().mmd_c < layer.initial_loss().mmd_c);
    }
}

#[test]
fn ablation_variants_run_on_the_synthetic_task() {
    let task = synth_transfer_task(&SynthParams::default()).unwrap();
    for flag in ["alpha", "phi", "mu", "gamma"] {
        let mut config = CdneConfig::default();
        config.trainer.max_iters = 25;
        config.ablations.enable(flag).unwrap();
        let pair = run_cdne(&task, &config).unwrap();
        assert_eq!(pair.h_t().dim(), (400, 128), "{flag}");
    }
}

#[test]
fn default_run_on_the_synthetic_task() {
    let task = synth_transfer_task(&SynthParams::default()).unwrap();
    let pair = run_cdne(&task, &CdneConfig::default()).unwrap();
    assert_eq!(pair.source.reps[0].ncols(), 256);
    assert_eq!(pair.h_s().dim(), (400, 128));
    for layer in pair.source.layers.iter().chain(&pair.target.layers) {
        assert!(layer.final_loss().total < layer.initial_loss().total);
    }
    let out = pair.target.layers.last().unwrap();
    let (first, last) = (out.initial_loss().mmd_c, out.final_loss().mmd_c);
    assert!(last < 0.25 * first, "output layer conditional MMD {first} -> {last}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn depth_schedule_traces_to_config(
        alpha in 0.0f64..10.0, phi in 0.0f64..10.0, mu in 0.0f64..10.0, gamma in 0.0f64..100.0,
        lambda in 0.0f64..1.0, beta in 1.01f64..10.0, flags in prop::array::uniform4(any::<bool>()),
    ) {
        let config = CdneConfig {
            alpha, phi, mu, gamma, lambda, beta,
            layer_dims: vec![8, 4, 2],
            ablations: Ablations { alpha_zero: flags[0], phi_zero: flags[1], mu_zero: flags[2], gamma_zero: flags[3] },
            ..CdneConfig::default()
        };
        for l in 1..=3 {
            let half = if l == 1 { 1.0 } else { 0.5 };
            let off = |v: f64, flag: bool| if flag { 0.0 } else { v };
            let s = layer_weights_at_depth(&config, l, Network::Source);
            let t = layer_weights_at_depth(&config, l, Network::Target);
            for w in [s, t] {
                prop_assert_eq!(w.alpha, off(alpha * half, flags[0]));
                prop_assert_eq!(w.lambda, lambda);
                prop_assert_eq!(w.beta, beta);
            }
            prop_assert_eq!(s.phi, off(if l == 1 { phi } else { 0.0 }, flags[1]));
            prop_assert_eq!((s.mu, s.gamma, t.phi), (0.0, 0.0, 0.0));
            prop_assert_eq!(t.mu, off(mu * half, flags[2]));
            prop_assert_eq!(t.gamma, off(gamma * half, flags[3]));
        }
    }
}
