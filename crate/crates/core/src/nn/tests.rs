use super::gradcheck::*;
use super::*;
use crate::rng::stream_rng;
use rand_distr::{Distribution, StandardNormal};

fn randn(rows: usize, cols: usize, rng: &mut SnotRng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Random network and batch with no pre-activation within `margin` of zero.
fn instance(d_in: usize, h: usize, d_out: usize, batch: usize, seed: u64) -> (MlpParams, Matrix) {
    let mut rng = stream_rng(seed, 0);
    loop {
        let p = MlpParams::init(d_in, h, d_out, &mut rng);
        let x = randn(batch, d_in, &mut rng);
        if min_abs_preactivation(&p, &x) > 1e-3 {
            return (p, x);
        }
    }
}

#[test]
fn zero_params_give_zero_output() {
    let p = MlpParams::zeros(3, 5, 2);
    let mut rng = stream_rng(0, 0);
    let (y, _) = forward(&p, &randn(4, 3, &mut rng)).unwrap();
    assert!(y.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_construction() {
    let d = 4;
    let shift = 100.0;
    let p = MlpParams::from_parts(Matrix::identity(d), vec![shift; d], Matrix::identity(d), vec![-shift; d]).unwrap();
    let mut rng = stream_rng(1, 0);
    let x = randn(10, d, &mut rng);
    let (y, _) = forward(&p, &x).unwrap();
    assert!(y.max_abs_diff(&x) < 1e-12);
    let j = jacobian_map(&p, x.row(0));
    assert_eq!(j, Matrix::identity(d));
}

#[test]
fn forward_matches_direct_evaluation() {
    let (p, x) = instance(3, 7, 2, 6, 2);
    let (y, _) = forward(&p, &x).unwrap();
    let z = p.w1.matmul(&x.transpose()).unwrap();
    for i in 0..x.rows() {
        for o in 0..2 {
            let mut s = p.b2[o];
            for k in 0..7 {
                s += p.w2[(o, k)] * (z[(k, i)] + p.b1[k]).max(0.0);
            }
            assert!((s - y[(i, o)]).abs() < 1e-12);
        }
    }
    assert_eq!(predict(&p, &x).unwrap(), y);
    assert_eq!(predict_one(&p, x.row(3)), y.row(3));
}

#[test]
fn shape_mismatch_and_stale_cache() {
    let (mut p, x) = instance(3, 4, 1, 2, 3);
    assert!(forward(&p, &Matrix::zeros(2, 2)).is_err());
    let (_, cache) = forward(&p, &x).unwrap();
    let g = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
    assert!(backward(&p, &cache, &g).is_ok());
    let grads = backward(&p, &cache, &g).unwrap().params;
    let mut adam = AdamState::new(AdamConfig::default(), &p);
    adam.step(&mut p, &grads).unwrap();
    assert!(backward(&p, &cache, &g).is_err());
}

#[test]
fn zero_upstream_gradient() {
    let (p, x) = instance(2, 6, 3, 5, 4);
    let (_, cache) = forward(&p, &x).unwrap();
    let g = backward(&p, &cache, &Matrix::zeros(5, 3)).unwrap();
    assert_eq!(g.params.max_abs(), 0.0);
    assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn single_unit_chain_rule() {
    // y = a relu(w x + b) + c with w x + b > 0.
    let (w, b, a, c, x) = (0.7, 0.2, -1.3, 0.4, 1.5);
    let p = MlpParams::from_parts(
        Matrix::from_vec(1, 1, vec![w]).unwrap(),
        vec![b],
        Matrix::from_vec(1, 1, vec![a]).unwrap(),
        vec![c],
    )
    .unwrap();
    let xs = Matrix::from_vec(1, 1, vec![x]).unwrap();
    let (y, cache) = forward(&p, &xs).unwrap();
    let z: f64 = w * x + b;
    assert!((y[(0, 0)] - (a * z + c)).abs() < 1e-15);
    let g = backward(&p, &cache, &Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
    assert!((g.params.w1[(0, 0)] - a * x).abs() < 1e-15);
    assert!((g.params.b1[0] - a).abs() < 1e-15);
    assert!((g.params.w2[(0, 0)] - z).abs() < 1e-15);
    assert_eq!(g.params.b2[0], 1.0);
    assert!((g.input[(0, 0)] - a * w).abs() < 1e-15);
}

#[test]
fn relu_derivative_at_zero_is_zero() {
    let p = MlpParams::from_parts(
        Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
        vec![0.0],
        Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
        vec![0.0],
    )
    .unwrap();
    let x = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
    let (_, cache) = forward(&p, &x).unwrap();
    let g = backward(&p, &cache, &Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
    assert_eq!(g.params.w1[(0, 0)], 0.0);
    assert_eq!(g.params.b1[0], 0.0);
    assert_eq!(jacobian_map(&p, &[0.0])[(0, 0)], 0.0);
}

#[test]
fn backward_matches_finite_differences() {
    for seed in 0..100 {
        let d_in = 1 + (seed % 4) as usize;
        let d_out = 1 + (seed % 3) as usize;
        let (p, x) = instance(d_in, 8, d_out, 4, 100 + seed);
        let mut rng = stream_rng(seed, 1);
        let g = randn(4, d_out, &mut rng);
        let report = check_backward(&p, &x, &g).unwrap();
        assert!(report.passes(1e-5), "seed {seed}: {report:?}");
    }
}

#[test]
fn inactive_relus_give_zero_jacobian() {
    let mut p = MlpParams::zeros(3, 4, 2);
    p.b1.iter_mut().for_each(|b| *b = -1.0);
    p.w2.as_mut_slice().iter_mut().for_each(|w| *w = 1.0);
    assert_eq!(jacobian_map(&p, &[0.1, 0.2, 0.3]), Matrix::zeros(2, 3));
    p.b1.iter_mut().for_each(|b| *b = 50.0);
    let mut rng = stream_rng(5, 0);
    p.w1 = randn(4, 3, &mut rng);
    p.w2 = randn(2, 4, &mut rng);
    assert!(jacobian_map(&p, &[0.1, 0.2, 0.3]).max_abs_diff(&p.w2.matmul(&p.w1).unwrap()) < 1e-12);
}

#[test]
fn jacobian_matches_finite_differences() {
    for seed in 0..50 {
        let (p, x) = instance(3, 10, 3, 1, 500 + seed);
        assert!(check_jacobian(&p, x.row(0)) < 1e-5, "seed {seed}");
    }
}

#[test]
fn jacobian_directional_derivative() {
    let (p, x) = instance(4, 12, 4, 1, 9);
    let x = x.row(0).to_vec();
    let v = [0.3, -0.2, 0.5, 0.1];
    let t = 1e-6;
    let xt: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + t * b).collect();
    let f0 = predict_one(&p, &x);
    let f1 = predict_one(&p, &xt);
    let jv = jacobian_map(&p, &x).matvec(&v);
    for o in 0..4 {
        assert!(((f1[o] - f0[o]) / t - jv[o]).abs() < 1e-4);
    }
}

#[test]
fn grad_norm_penalty_matches_finite_differences() {
    for seed in 0..30 {
        let (p, x) = instance(3, 9, 1, 5, 700 + seed);
        let mut acc = p.zeros_like();
        let value = grad_norm_penalty(&p, &x, 1.0, &mut acc).unwrap();
        // Direct evaluation through the backward pass.
        let (_, cache) = forward(&p, &x).unwrap();
        let ones = Matrix::from_vec(5, 1, vec![1.0; 5]).unwrap();
        let gx = backward(&p, &cache, &ones).unwrap().input;
        let direct = gx.as_slice().iter().map(|v| v * v).sum::<f64>() / 5.0;
        assert!((value - direct).abs() < 1e-12);
        let report = check_param_grads(&p, &acc, FD_STEP, |q| {
            let mut scratch = q.zeros_like();
            grad_norm_penalty(q, &x, 0.0, &mut scratch).unwrap()
        });
        assert!(report.passes(1e-5), "seed {seed}: {report:?}");
    }
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let (mut p, _) = instance(2, 3, 1, 1, 11);
    let before = p.clone();
    let mut adam = AdamState::new(AdamConfig::default(), &p);
    let zero = p.zeros_like();
    adam.step(&mut p, &zero).unwrap();
    assert_eq!(adam.steps(), 1);
    assert_eq!(p.tensors(), before.tensors());
}

#[test]
fn adam_first_step() {
    let mut p = MlpParams::zeros(1, 1, 1);
    let mut g = p.zeros_like();
    g.b2[0] = 1.0;
    let cfg = AdamConfig::default();
    let mut adam = AdamState::new(cfg, &p);
    adam.step(&mut p, &g).unwrap();
    assert_eq!(p.b2[0], -cfg.learning_rate * 1.0 / (1.0 + cfg.eps_div));
    // v_hat = 0.1 / (1 - 0.9) = 1
    assert!((adam.second_moment().b2[0] / (1.0 - 0.9) - 1.0).abs() < 1e-15);
}

#[test]
fn adam_constant_gradient_bounded_steps() {
    let mut p = MlpParams::zeros(1, 1, 1);
    let mut g = p.zeros_like();
    g.w1[(0, 0)] = 3.7;
    let cfg = AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() };
    let mut adam = AdamState::new(cfg, &p);
    let mut prev = 0.0;
    for _ in 0..200 {
        adam.step(&mut p, &g).unwrap();
        let cur = p.w1[(0, 0)];
        assert!(cur < prev);
        assert!(prev - cur <= cfg.learning_rate * (1.0 + 1e-9));
        prev = cur;
    }
}

#[test]
fn adam_rejects_non_finite() {
    let mut p = MlpParams::zeros(1, 2, 1);
    let mut g = p.zeros_like();
    g.b1[1] = f64::NAN;
    let mut adam = AdamState::new(AdamConfig::default(), &p);
    assert!(matches!(adam.step(&mut p, &g), Err(Error::TrainingFault { .. })));
}

#[test]
fn seeded_init_is_reproducible() {
    let a = MlpParams::init(5, 16, 2, &mut stream_rng(3, 4));
    let b = MlpParams::init(5, 16, 2, &mut stream_rng(3, 4));
    assert_eq!(a, b);
    let bound = 1.0 / 5f64.sqrt();
    assert!(a.w1.as_slice().iter().all(|w| w.abs() <= bound));
    assert_eq!(a.n_params(), 5 * 16 + 16 + 2 * 16 + 2);
}
