use dgsm_core::functions::{fd_gradient, gradient_sample, DEFAULT_FD_DELTA};
use dgsm_core::sampling::generate;
use dgsm_core::{builtin, Generator, GradientMethod, InputSpace, ModelFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn builtins() -> Vec<ModelFunction> {
    vec![
        builtin("linear_one_var", &[2.0, 1.0]).unwrap(),
        builtin("linear_sum", &[3.0, -1.0, 0.5]).unwrap(),
        builtin("gfunction", &[0.0, 1.0, 4.5, 9.0, 99.0]).unwrap(),
        builtin("morris_reduced", &[]).unwrap(),
    ]
}

#[test]
fn finite_differences_match_analytic_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in builtins() {
        let d = f.dimension();
        let bounds = vec![(0.0, 1.0); d];
        let mut tested = 0;
        while tested < 100 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.001..0.999)).collect();
            if f.name() == "gfunction" && x.iter().any(|v| (v - 0.5).abs() < 1e-3) {
                continue;
            }
            let fd = fd_gradient(&f, &x, DEFAULT_FD_DELTA, &bounds).unwrap();
            let exact = f.gradient(&x).unwrap();
            for i in 0..d {
                let tol = 1e-4f64.max(1e-4 * exact[i].abs());
                assert!((fd[i] - exact[i]).abs() <= tol, "{} at {x:?}: {} vs {}", f.name(), fd[i], exact[i]);
            }
            tested += 1;
        }
    }
}

#[test]
fn gradient_sample_costs() {
    let f = builtin("gfunction", &[0.0; 8]).unwrap();
    let space = InputSpace::unit_cube(8);
    let design = generate(&space, 10, Generator::Pseudo { seed: 1 }).unwrap();
    let before = f.ledger();
    let fd = gradient_sample(&f, &design, GradientMethod::ForwardFd { delta: 1e-5 }).unwrap();
    assert_eq!(f.ledger().since(&before).model_evals, 90);
    assert_eq!(fd.cost.model_evals, 90);
    assert_eq!(fd.values.as_ref().unwrap().len(), 10);

    let before = f.ledger();
    let an = gradient_sample(&f, &design, GradientMethod::Analytic).unwrap();
    let spent = f.ledger().since(&before);
    assert_eq!((spent.model_evals, spent.gradient_evals), (0, 10));
    assert!(an.values.is_none());

    let empty = generate(&space, 0, Generator::Pseudo { seed: 1 }).unwrap();
    let before = f.ledger();
    let g = gradient_sample(&f, &empty, GradientMethod::ForwardFd { delta: 1e-5 }).unwrap();
    assert!(g.is_empty());
    assert_eq!(f.ledger().since(&before).model_evals, 0);
}

#[test]
fn linear_sum_rows_equal_coefficients() {
    let b = [0.3, -2.0, 5.0];
    let f = builtin("linear_sum", &b).unwrap();
    let design = generate(&InputSpace::unit_cube(3), 50, Generator::LowDiscrepancy { skip: 0 }).unwrap();
    let g = gradient_sample(&f, &design, GradientMethod::Analytic).unwrap();
    for r in 0..g.len() {
        assert_eq!(g.grads.row(r).to_vec(), b.to_vec());
    }
}

#[test]
fn ledger_is_shared_across_clones_and_monotone() {
    let f = builtin("morris_reduced", &[]).unwrap();
    let g = f.clone();
    let start = f.ledger().model_evals;
    g.evaluate(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    f.evaluate(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(f.ledger().model_evals, start + 2);
    assert!(f.evaluate(&[0.1]).is_err());
}
