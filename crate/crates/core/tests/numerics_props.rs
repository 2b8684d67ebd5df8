//! Gradient checks for every graph op on small random shapes, plus optimizer
//! properties.

use proptest::prelude::*;

use softlid_core::numerics::{
    grad_check, Adam, AdamConfig, GradCheckOptions, Graph, NoamSchedule, ParamSet, Tensor, Var,
};

const TOL: f64 = 1e-5;

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.5f64..1.5, rows * cols).prop_map(move |d| Tensor::from_vec(rows, cols, d))
}

fn shapes() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=8, 1usize..=8, 1usize..=8)
}

fn opts() -> GradCheckOptions {
    GradCheckOptions {
        eps: 1e-6,
        samples_per_tensor: 20,
        seed: 3,
    }
}

/// Reduces any node to a scalar through a fixed random projection so that
/// every output coordinate carries a distinct weight.
fn project(g: &mut Graph, v: Var, weights: &Tensor) -> Var {
    let w = g.constant(weights.clone());
    let t = g.transpose(v);
    let m = g.matmul(w, t);
    g.sum(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_add_gradients((n, k, m) in shapes(), seed in 0u64..1000) {
        let a = Tensor::from_vec(n, k, (0..n * k).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect());
        let b = Tensor::from_vec(k, m, (0..k * m).map(|i| ((i as f64 * 1.3 + seed as f64) * 0.21).cos()).collect());
        let bias = Tensor::from_vec(1, m, (0..m).map(|i| i as f64 * 0.1 - 0.2).collect());
        let proj = Tensor::from_vec(1, m, (0..m).map(|i| 1.0 + i as f64 * 0.5).collect());
        let mut p = ParamSet::new();
        p.insert("a", a, true);
        p.insert("b", b, true);
        p.insert("bias", bias, true);
        let err = grad_check(&p, opts(), |g, p| {
            let a = g.param(p, "a")?;
            let b = g.param(p, "b")?;
            let bias = g.param(p, "bias")?;
            let ab = g.matmul(a, b);
            let y = g.add(ab, bias);
            let t = g.transpose(y);
            let w = g.constant(proj.clone());
            let s = g.matmul(w, t);
            Ok(g.sum(s))
        }).unwrap();
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn elementwise_gradients(x in tensor(3, 5), proj in tensor(1, 5)) {
        let mut p = ParamSet::new();
        p.insert("x", x, true);
        let err = grad_check(&p, opts(), |g, p| {
            let x = g.param(p, "x")?;
            let t = g.tanh(x);
            let s = g.scale(t, -1.7);
            let y = g.add(s, x);
            Ok(project(g, y, &proj))
        }).unwrap();
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn relu_gradient_away_from_kink(x in tensor(4, 4), proj in tensor(1, 4)) {
        let x = x.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
        let mut p = ParamSet::new();
        p.insert("x", x, true);
        let err = grad_check(&p, opts(), |g, p| {
            let x = g.param(p, "x")?;
            let r = g.relu(x);
            Ok(project(g, r, &proj))
        }).unwrap();
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn softmax_family_gradients(x in tensor(5, 6), proj in tensor(1, 6), proj_col in tensor(1, 1)) {
        let mut p = ParamSet::new();
        p.insert("x", x, true);
        let err = grad_check(&p, opts(), |g, p| {
            let x = g.param(p, "x")?;
            let ls = g.log_softmax(x);
            let a = project(g, ls, &proj);
            let lse = g.logsumexp(x);
            let b = project(g, lse, &proj_col);
            Ok(g.add(a, b))
        }).unwrap();
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn gather_and_concat_gradients(x in tensor(4, 3), y in tensor(2, 3), idx in prop::collection::vec(0usize..4, 1..7)) {
        let mut p = ParamSet::new();
        p.insert("x", x, true);
        p.insert("y", y, true);
        let rows = idx.len() + 2;
        let proj = Tensor::from_vec(1, rows, (0..rows).map(|i| 0.3 + i as f64).collect());
        let err = grad_check(&p, opts(), |g, p| {
            let x = g.param(p, "x")?;
            let y = g.param(p, "y")?;
            let gx = g.gather_rows(x, &idx);
            let c = g.concat_rows(&[gx, y]);
            let t = g.tanh(c);
            let tt = g.transpose(t);
            let w = g.constant(proj.clone());
            let w_t = g.transpose(w);
            let m = g.matmul(tt, w_t);
            Ok(g.sum(m))
        }).unwrap();
        prop_assert!(err <= TOL, "{err}");
    }

    #[test]
    fn noam_peaks_at_warmup(peak in 1e-5f64..1e-1, warmup in 1u64..5000) {
        let s = NoamSchedule::new(peak, warmup).unwrap();
        let at = s.lr(warmup).unwrap();
        prop_assert!((at - peak).abs() <= 1e-12 * peak);
        prop_assert!(s.lr(warmup + 1).unwrap() <= at);
        if warmup > 1 {
            prop_assert!(s.lr(warmup - 1).unwrap() < at);
        }
        prop_assert!(s.lr(0).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr(gv in -10.0f64..10.0, lr in 1e-4f64..1e-1) {
        prop_assume!(gv.abs() > 1e-3);
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(0.0), true);
        let mut g = Graph::new();
        let w = g.param(&p, "w").unwrap();
        let s = g.scale(w, gv);
        let grads = g.backward(s).unwrap();
        p.accumulate(&grads).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p, lr).unwrap();
        let moved = p.value("w").unwrap().item();
        prop_assert!((moved + lr * gv.signum()).abs() <= 1e-9 * lr.max(1.0), "{moved}");
    }
}
