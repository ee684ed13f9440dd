use cdne::sae::{
    common_label_matrix, conditional_mmd, connectivity_loss, decode, encode, gradcheck_suite, l2_reg,
    label_pairwise_loss, marginal_mmd, pairwise_loss_double_sum, penalty_matrix, random_instance, reconstruction_loss,
    Alignment, GradCheckInstance, LayerObjective, LayerParams, LossWeights, Pairwise,
};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: LossWeights = LossWeights {
    alpha: 0.0,
    phi: 0.0,
    mu: 0.0,
    gamma: 0.0,
    lambda: 0.0,
    beta: 4.0,
};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn source_total(inst: &GradCheckInstance, w: LossWeights, layer: usize, params: &LayerParams) -> f64 {
    let prox = Pairwise::new(inst.proximity.view()).unwrap();
    let labels = Pairwise::new(common_label_matrix(inst.labels.view()).unwrap().o.view()).unwrap();
    let obj = LayerObjective::source(inst.input.view(), layer, &prox, &labels, w).unwrap();
    obj.evaluate(params).unwrap().total
}

fn source_grad(inst: &GradCheckInstance, w: LossWeights, layer: usize, params: &LayerParams) -> LayerParams {
    let prox = Pairwise::new(inst.proximity.view()).unwrap();
    let labels = Pairwise::new(common_label_matrix(inst.labels.view()).unwrap().o.view()).unwrap();
    let obj = LayerObjective::source(inst.input.view(), layer, &prox, &labels, w).unwrap();
    obj.evaluate_with_gradients(params).unwrap().1
}

fn target_total(inst: &GradCheckInstance, w: LossWeights, layer: usize, params: &LayerParams) -> f64 {
    let prox = Pairwise::new(inst.proximity.view()).unwrap();
    let align = Alignment::new(inst.source_hidden.view(), inst.source_labels.view(), inst.fuzzy.view()).unwrap();
    let obj = LayerObjective::target(inst.input.view(), layer, &prox, &align, w).unwrap();
    obj.evaluate(params).unwrap().total
}

fn target_grad(inst: &GradCheckInstance, w: LossWeights, layer: usize, params: &LayerParams) -> LayerParams {
    let prox = Pairwise::new(inst.proximity.view()).unwrap();
    let align = Alignment::new(inst.source_hidden.view(), inst.source_labels.view(), inst.fuzzy.view()).unwrap();
    let obj = LayerObjective::target(inst.input.view(), layer, &prox, &align, w).unwrap();
    obj.evaluate_with_gradients(params).unwrap().1
}

/// Max relative error between `analytic` and central differences of `f`.
fn fd_error(params: &LayerParams, analytic: &LayerParams, f: impl Fn(&LayerParams) -> f64) -> f64 {
    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for b in 0..4 {
        for i in 0..analytic.blocks()[b].len() {
            let orig = probe.blocks()[b][i];
            probe.blocks_mut()[b][i] = orig + h;
            let plus = f(&probe);
            probe.blocks_mut()[b][i] = orig - h;
            let minus = f(&probe);
            probe.blocks_mut()[b][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.blocks()[b][i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn minus(a: &LayerParams, b: &LayerParams) -> LayerParams {
    LayerParams {
        w1: &a.w1 - &b.w1,
        b1: &a.b1 - &b.b1,
        w2: &a.w2 - &b.w2,
        b2: &a.b2 - &b.b2,
    }
}

#[test]
fn each_term_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let inst = random_instance(seed, 12, 8, 4);
        let w = inst.weights;
        let p = &inst.params;
        for layer in [1, 2] {
            let base_s = source_grad(&inst, ZERO, layer, p);
            let base_t = target_grad(&inst, ZERO, layer, p);
            assert!(fd_error(p, &base_s, |q| source_total(&inst, ZERO, layer, q)) <= 1e-4);

            let source_terms = [
                LossWeights { alpha: w.alpha, ..ZERO },
                LossWeights { phi: w.phi, ..ZERO },
                LossWeights { lambda: w.lambda, ..ZERO },
            ];
            for tw in source_terms {
                let g = minus(&source_grad(&inst, tw, layer, p), &base_s);
                let err = fd_error(p, &g, |q| source_total(&inst, tw, layer, q) - source_total(&inst, ZERO, layer, q));
                assert!(err <= 1e-4, "seed {seed} layer {layer} source term {tw:?}: {err:e}");
            }
            let target_terms = [LossWeights { mu: w.mu, ..ZERO }, LossWeights { gamma: w.gamma, ..ZERO }];
            for tw in target_terms {
                let g = minus(&target_grad(&inst, tw, layer, p), &base_t);
                let err = fd_error(p, &g, |q| target_total(&inst, tw, layer, q) - target_total(&inst, ZERO, layer, q));
                assert!(err <= 1e-4, "seed {seed} layer {layer} target term {tw:?}: {err:e}");
            }

            let err_s = fd_error(p, &source_grad(&inst, w, layer, p), |q| source_total(&inst, w, layer, q));
            let err_t = fd_error(p, &target_grad(&inst, w, layer, p), |q| target_total(&inst, w, layer, q));
            assert!(err_s <= 1e-4 && err_t <= 1e-4, "seed {seed} composites: {err_s:e} {err_t:e}");
        }
    }
}

#[test]
fn gradcheck_suite_passes() {
    let summary = gradcheck_suite(25, 100).unwrap();
    assert_eq!(summary.instances, 25);
    assert!(summary.max_rel_error() <= 1e-4, "{summary:?}");
}

/// Straight-line gradient of the penalized reconstruction loss alone.
fn reduced_oracle(x: &Array2<f64>, pen: &Array2<f64>, p: &LayerParams) -> (f64, LayerParams) {
    let (n, d_in) = x.dim();
    let d_out = p.b1.len();
    let mut h = Array2::zeros((n, d_out));
    let mut r = Array2::zeros((n, d_in));
    for i in 0..n {
        for k in 0..d_out {
            let mut z = p.b1[k];
            for j in 0..d_in {
                z += x[[i, j]] * p.w1[[k, j]];
            }
            h[[i, k]] = sig(z);
        }
        for j in 0..d_in {
            let mut z = p.b2[j];
            for k in 0..d_out {
                z += h[[i, k]] * p.w2[[j, k]];
            }
            r[[i, j]] = sig(z);
        }
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut g = LayerParams::zeros(d_in, d_out);
    let mut dh = Array2::<f64>::zeros((n, d_out));
    for i in 0..n {
        for j in 0..d_in {
            let e = pen[[i, j]] * (r[[i, j]] - x[[i, j]]);
            loss += e * e / (2.0 * nf);
            let dz = pen[[i, j]] * e / nf * r[[i, j]] * (1.0 - r[[i, j]]);
            g.b2[j] += dz;
            for k in 0..d_out {
                g.w2[[j, k]] += dz * h[[i, k]];
                dh[[i, k]] += dz * p.w2[[j, k]];
            }
        }
    }
    for i in 0..n {
        for k in 0..d_out {
            let dz = dh[[i, k]] * h[[i, k]] * (1.0 - h[[i, k]]);
            g.b1[k] += dz;
            for j in 0..d_in {
                g.w1[[k, j]] += dz * x[[i, j]];
            }
        }
    }
    (loss, g)
}

#[test]
fn reduced_model_matches_plain_autoencoder() {
    for seed in 0..20 {
        let inst = random_instance(seed, 10, 7, 3);
        for layer in [1, 2] {
            let pen = penalty_matrix(inst.input.view(), ZERO.beta, layer);
            let (loss, oracle) = reduced_oracle(&inst.input, &pen, &inst.params);
            for (total, g) in [
                (source_total(&inst, ZERO, layer, &inst.params), source_grad(&inst, ZERO, layer, &inst.params)),
                (target_total(&inst, ZERO, layer, &inst.params), target_grad(&inst, ZERO, layer, &inst.params)),
            ] {
                assert!((total - loss).abs() <= 1e-12 * loss.max(1.0));
                for b in 0..4 {
                    for (a, o) in g.blocks()[b].iter().zip(oracle.blocks()[b]) {
                        assert!((a - o).abs() <= 1e-12 * o.abs().max(1e-3), "seed {seed}: {a} vs {o}");
                    }
                }
            }
        }
    }
}

#[test]
fn encode_decode_match_scalar_loops() {
    let inst = random_instance(9, 6, 5, 3);
    let p = &inst.params;
    let h = encode(inst.input.view(), p).unwrap();
    let r = decode(h.view(), p).unwrap();
    for i in 0..6 {
        for k in 0..3 {
            let z: f64 = p.b1[k] + (0..5).map(|j| inst.input[[i, j]] * p.w1[[k, j]]).sum::<f64>();
            assert!((h[[i, k]] - sig(z)).abs() <= 1e-12);
        }
        for j in 0..5 {
            let z: f64 = p.b2[j] + (0..3).map(|k| h[[i, k]] * p.w2[[j, k]]).sum::<f64>();
            assert!((r[[i, j]] - sig(z)).abs() <= 1e-12);
        }
    }
}

#[test]
fn pairwise_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let n = rng.random_range(1..15);
        let d = rng.random_range(1..6);
        let h = Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0));
        let x = Array2::from_shape_fn((n, n), |_| if rng.random_bool(0.4) { rng.random_range(0.0..3.0) } else { 0.0 });
        let lap = connectivity_loss(h.view(), x.view()).unwrap();
        let direct = pairwise_loss_double_sum(h.view(), x.view()).unwrap();
        assert!((lap - direct).abs() <= 1e-10, "{lap} vs {direct}");

        let y = Array2::from_shape_fn((n, 3), |(i, c)| if c == i % 3 || rng.random_bool(0.3) { 1.0 } else { 0.0 });
        let o = common_label_matrix(y.view()).unwrap();
        let lap = label_pairwise_loss(h.view(), &o).unwrap();
        let direct = pairwise_loss_double_sum(h.view(), o.o.view()).unwrap();
        assert!((lap - direct).abs() <= 1e-10, "{lap} vs {direct}");
    }
}

#[test]
fn composite_equals_weighted_parts() {
    for seed in 0..10 {
        let inst = random_instance(seed, 12, 8, 4);
        let w = inst.weights;
        let p = &inst.params;
        let h = encode(inst.input.view(), p).unwrap();
        let r = decode(h.view(), p).unwrap();
        let pen = penalty_matrix(inst.input.view(), w.beta, 1);
        let recon = reconstruction_loss(inst.input.view(), r.view(), pen.view()).unwrap();
        let conn = connectivity_loss(h.view(), inst.proximity.view()).unwrap();
        let label = label_pairwise_loss(h.view(), &common_label_matrix(inst.labels.view()).unwrap()).unwrap();
        let mm = marginal_mmd(inst.source_hidden.view(), h.view()).unwrap();
        let mc = conditional_mmd(inst.source_hidden.view(), inst.source_labels.view(), h.view(), inst.fuzzy.view()).unwrap();
        let omega = l2_reg(p);

        let s = recon + w.alpha * conn + w.phi * label + w.lambda * omega;
        let t = recon + w.alpha * conn + w.mu * mm + w.gamma * mc + w.lambda * omega;
        assert!((source_total(&inst, w, 1, p) - s).abs() <= 1e-12 * s.abs().max(1.0));
        assert!((target_total(&inst, w, 1, p) - t).abs() <= 1e-12 * t.abs().max(1.0));
    }
}

#[test]
fn ablated_terms_ignore_their_inputs() {
    for seed in 0..10 {
        let inst = random_instance(seed, 12, 8, 4);
        let mut other = inst.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        other.labels.mapv_inplace(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        for i in 0..other.labels.nrows() {
            other.labels[[i, 0]] = 1.0;
        }
        other.source_hidden.mapv_inplace(|_| rng.random_range(0.0..1.0));
        other.source_labels.mapv_inplace(|_| 1.0);

        let no_phi = LossWeights { phi: 0.0, ..inst.weights };
        assert_eq!(
            source_total(&inst, no_phi, 1, &inst.params).to_bits(),
            source_total(&other, no_phi, 1, &inst.params).to_bits()
        );
        assert_eq!(source_grad(&inst, no_phi, 1, &inst.params), source_grad(&other, no_phi, 1, &inst.params));

        let no_align = LossWeights { mu: 0.0, gamma: 0.0, ..inst.weights };
        assert_eq!(
            target_total(&inst, no_align, 1, &inst.params).to_bits(),
            target_total(&other, no_align, 1, &inst.params).to_bits()
        );
        assert_eq!(target_grad(&inst, no_align, 1, &inst.params), target_grad(&other, no_align, 1, &inst.params));
    }
}

#[test]
fn node_permutation_is_equivariant() {
    for seed in 0..10 {
        let inst = random_instance(seed, 12, 8, 4);
        let mut perm: Vec<usize> = (0..12).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut moved = inst.clone();
        moved.input = inst.input.select(Axis(0), &perm);
        moved.proximity = inst.proximity.select(Axis(0), &perm).select(Axis(1), &perm);
        moved.labels = inst.labels.select(Axis(0), &perm);
        moved.fuzzy = inst.fuzzy.select(Axis(0), &perm);

        let h = encode(inst.input.view(), &inst.params).unwrap();
        let h_moved = encode(moved.input.view(), &inst.params).unwrap();
        assert_eq!(h.select(Axis(0), &perm), h_moved);

        let w = inst.weights;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        assert!(close(source_total(&inst, w, 1, &inst.params), source_total(&moved, w, 1, &inst.params)));
        assert!(close(target_total(&inst, w, 1, &inst.params), target_total(&moved, w, 1, &inst.params)));
    }
}

#[test]
fn conditional_mmd_ignores_per_class_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let inst = random_instance(rng.random(), 12, 8, 4);
        let h = encode(inst.input.view(), &inst.params).unwrap();
        let base = conditional_mmd(inst.source_hidden.view(), inst.source_labels.view(), h.view(), inst.fuzzy.view()).unwrap();
        let scale = Array1::from_shape_fn(3, |_| rng.random_range(0.01..100.0));
        let scaled = &inst.fuzzy * &scale;
        let moved = conditional_mmd(inst.source_hidden.view(), inst.source_labels.view(), h.view(), scaled.view()).unwrap();
        assert!((base - moved).abs() <= 1e-12 * base.max(1.0), "{base} vs {moved}");
    }
}

#[test]
fn gradient_vanishes_at_a_symmetric_minimum() {
    // W2 = 0 makes each reconstruction column the constant sigmoid(b2_j);
    // with column values 0.25 / 0.75 under equal penalties the loss in b2 is
    // minimal at b2 = 0.
    let input = Array2::from_shape_fn((6, 3), |(i, _)| if i % 2 == 0 { 0.25 } else { 0.75 });
    let mut params = LayerParams::init(3, 2, 4);
    params.w2.fill(0.0);
    params.b2.fill(0.0);
    let prox = Pairwise::new(Array2::zeros((6, 6)).view()).unwrap();
    let labels = Pairwise::new(Array2::zeros((6, 6)).view()).unwrap();
    let obj = LayerObjective::source(input.view(), 1, &prox, &labels, ZERO).unwrap();
    let (_, g) = obj.evaluate_with_gradients(&params).unwrap();
    assert!(g.b2.iter().all(|v| v.abs() <= 1e-6), "{:?}", g.b2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn activations_stay_inside_unit_interval(seed in any::<u64>(), n in 1usize..12, d_in in 1usize..10, d_out in 1usize..6, scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Array2::from_shape_fn((n, d_in), |_| rng.random_range(0.0..1.0));
        let mut p = LayerParams::init(d_in, d_out, seed);
        p.w1 *= scale;
        p.w2 *= scale;
        let h = encode(input.view(), &p).unwrap();
        let r = decode(h.view(), &p).unwrap();
        prop_assert!(h.iter().chain(r.iter()).all(|&v| v > 0.0 && v < 1.0));
    }
}
