mod common;

use blockpd::counterexample::{self, CounterexampleInstance};
use blockpd::problem::{build_g_f, gamma_bound, verify_dominance};
use blockpd::{presets, BoxSet, DualBox};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn vec_in(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, n)
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_nonexpansive(
        x in vec_in(4, -20.0, 20.0),
        y in vec_in(4, -20.0, 20.0),
    ) {
        let b = BoxSet::new(vec![-1.0, 0.0, 2.0, -5.0], vec![1.0, 3.0, 2.5, 5.0]).unwrap();
        let px = b.project(&x);
        prop_assert!(b.contains(&px));
        prop_assert_eq!(b.project(&px), px.clone());
        let py = b.project(&y);
        for i in 0..4 {
            prop_assert!((px[i] - py[i]).abs() <= (x[i] - y[i]).abs());
        }
    }

    #[test]
    fn g_f_contraction(seed in 0u64..1000, frac in 0.05f64..0.99) {
        let spec = common::random_dd_qp(seed, 5, 2);
        let p = spec.build().unwrap();
        let d = DualBox::user_supplied(1.0, "test").unwrap();
        let beta = verify_dominance(&p, &d).unwrap().beta;
        let gamma = frac * gamma_bound(&p, &d).unwrap();
        let h = p.hessian_x(&[0.0; 5], &[0.0, 0.0]).unwrap();
        let (g, f) = build_g_f(&h, gamma).unwrap();
        // F >= 0 and every row sums to at most 1 - gamma beta
        for i in 0..5 {
            let row: f64 = (0..5).map(|j| f[(i, j)]).sum();
            prop_assert!(row <= 1.0 - gamma * beta + 1e-12);
            for j in 0..5 {
                prop_assert!(f[(i, j)] >= 0.0);
                let want = if i == j { h[(i, j)] } else { -h[(i, j)].abs() };
                prop_assert_eq!(g[(i, j)], want);
            }
        }
    }

    #[test]
    fn counterexample_always_verifies(
        log_eps in -3.0f64..0.0,
        log_ratio in 1.0f64..4.0,
        n in 1usize..7,
        seed in any::<u64>(),
    ) {
        let eps = 10f64.powf(log_eps);
        let l = eps * 10f64.powf(log_ratio);
        let inst = CounterexampleInstance::build(eps, l, n, seed).unwrap();
        let rep = counterexample::verify(&inst).unwrap();
        prop_assert!(rep.x_gap >= 1.8 * l * (1.0 - 1e-9));
        prop_assert!(rep.mu_gap < eps);
    }

    #[test]
    fn lagrangian_gradient_matches_differences(
        x in vec_in(10, 1.0, 10.0),
        mu in vec_in(6, 0.0, 10.0),
    ) {
        let p = presets::quartic10_problem().unwrap();
        let g = p.grad_x(&x, &mu).unwrap();
        for i in 0..10 {
            let h = 1e-6 * x[i];
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.eval_lagrangian(&xp, &mu).unwrap() - p.eval_lagrangian(&xm, &mu).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g.amax().max(1.0));
        }
    }
}

#[test]
fn g_f_hand_example() {
    let h = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 2.0]);
    let (g, f) = build_g_f(&h, 0.2).unwrap();
    assert_eq!(g, h);
    assert!((f - DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.6])).amax() < 1e-15);
}

#[test]
fn primal_fixed_point_is_the_lagrangian_argmin() {
    for seed in 0..5 {
        let inst = CounterexampleInstance::build(1.0, 10.0, 3, seed).unwrap();
        let p = inst.to_problem(0.01).unwrap();
        let q = inst.q_matrix();
        let gamma = 1.0 / (0..3).map(|i| q.row(i).abs().sum()).fold(0.0, f64::max);
        for mu in [&inst.mu1, &inst.mu2] {
            let fp =
                blockpd::uzawa::inner_primal_fixed_point(&p, mu, gamma, 1e-13, 1_000_000).unwrap();
            let exact = counterexample::argmin_lagrangian(&inst, mu).unwrap();
            for i in 0..3 {
                assert!((fp.x[i] - exact[i]).abs() < 1e-9 * (1.0 + exact[i].abs()));
            }
        }
    }
}
