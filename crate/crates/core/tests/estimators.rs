#![allow(clippy::needless_range_loop)]

use dgsm_core::closed_form::GFunction;
use dgsm_core::estimators::{
    dgsm_estimates, estimate_mu_star, estimate_nu, estimate_nu_crossed, estimate_sigma_small, estimate_sobol,
    estimate_superset, estimate_tau, estimate_w, estimate_w_m, evaluate_pick_freeze, morris_measures, FirstOrderForm,
    CROSS_FD_DELTA,
};
use dgsm_core::functions::FnModel;
use dgsm_core::oracle::anova_totals;
use dgsm_core::sampling::{generate, morris_trajectories, pick_freeze};
use dgsm_core::{builtin, Error, Generator, GradientMethod, InputDistribution, InputSpace, ModelFunction};

const FD: GradientMethod = GradientMethod::ForwardFd { delta: 1e-5 };

fn grads_for(f: &ModelFunction, space: &InputSpace, n: usize, method: GradientMethod) -> dgsm_core::GradientSample {
    let design = generate(space, n, Generator::LowDiscrepancy { skip: 0 }).unwrap();
    dgsm_core::functions::gradient_sample(f, &design, method).unwrap()
}

#[test]
fn gfunction_measures_within_two_percent() {
    let a = [0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0];
    let f = builtin("gfunction", &a).unwrap();
    let space = InputSpace::unit_cube(8);
    let g = GFunction::new(a.to_vec());
    let grads = grads_for(&f, &space, 1 << 14, GradientMethod::Analytic);
    let nu = estimate_nu(&grads).unwrap();
    let sigma = estimate_sigma_small(&grads, &space).unwrap();
    let mu = estimate_mu_star(&grads).unwrap();
    assert!((g.nu(0) - 17.585).abs() < 1e-3);
    for i in 0..8 {
        assert!((nu[i].value - g.nu(i)).abs() <= 0.02 * g.nu(i), "nu_{i}");
        assert!((sigma[i].value - g.sigma_small(i)).abs() <= 0.02 * g.sigma_small(i), "sigma_{i}");
        assert!((mu[i].value - 4.0 / (1.0 + a[i])).abs() <= 0.02 * 4.0 / (1.0 + a[i]));
    }
}

#[test]
fn simple_examples() {
    let lin = builtin("linear_one_var", &[-2.0, 0.0]).unwrap();
    let s1 = InputSpace::unit_cube(1);
    let g = grads_for(&lin, &s1, 64, GradientMethod::Analytic);
    assert_eq!(estimate_nu(&g).unwrap()[0].value, 4.0);
    assert_eq!(estimate_mu_star(&g).unwrap()[0].value, 2.0);
    let w1 = estimate_w_m(&g, &s1, 1.0).unwrap()[0].value;
    assert!((w1 + 1.0).abs() < 0.02, "c E[x] = {w1}");
    assert!(estimate_w_m(&g, &s1, 0.0).is_err());

    let sq = ModelFunction::new(FnModel::new("x1^2", 1, |x| x[0] * x[0]).with_gradient(|x, g| g[0] = 2.0 * x[0]));
    let g = grads_for(&sq, &s1, 1 << 12, GradientMethod::Analytic);
    assert!((estimate_w_m(&g, &s1, 1.0).unwrap()[0].value - 2.0 / 3.0).abs() < 1e-3);

    let normal = InputSpace::new(vec![InputDistribution::normal(3.0, 2.0).unwrap()]).unwrap();
    let ident = ModelFunction::new(FnModel::new("x1", 1, |x| x[0]).with_gradient(|_, g| g[0] = 1.0));
    let g = grads_for(&ident, &normal, 32, GradientMethod::Analytic);
    assert_eq!(estimate_w(&g).unwrap()[0].value, 1.0);
    assert!(matches!(estimate_sigma_small(&g, &normal), Err(Error::UnsupportedMeasure { .. })));
    assert!(estimate_w_m(&g, &normal, 1.0).is_err());
    // Normal tau weight integrates to (sigma^2 + sigma^2) / 4.
    let g = grads_for(&ident, &normal, 1 << 14, GradientMethod::Analytic);
    let tau = estimate_tau(&g, &normal, &[0]).unwrap();
    assert!((tau.value - 2.0).abs() < 0.01);

    let expo = InputSpace::new(vec![InputDistribution::exponential(1.0).unwrap()]).unwrap();
    let g = grads_for(&ident, &expo, 16, GradientMethod::Analytic);
    assert!(matches!(estimate_tau(&g, &expo, &[0]), Err(Error::UnsupportedMeasure { .. })));

    let constant = ModelFunction::new(FnModel::new("c", 2, |_| 5.0));
    let s2 = InputSpace::unit_cube(2);
    let g = grads_for(&constant, &s2, 100, FD);
    let est = dgsm_estimates(&g, &s2, &[1.0]).unwrap();
    assert!(est.nu.iter().all(|e| e.value == 0.0));
    assert!(est.sigma_small.iter().all(|e| e.unwrap().value == 0.0));
    assert!(est.tau.iter().all(|e| e.unwrap().value == 0.0));

    let one = grads_for(&constant, &s2, 1, FD);
    assert!(matches!(estimate_nu(&one), Err(Error::EmptySample(_))));
}

#[test]
fn crossed_dgsm_examples() {
    let space = InputSpace::unit_cube(3);
    let design = generate(&space, 1 << 12, Generator::LowDiscrepancy { skip: 0 }).unwrap();
    let models = [
        (ModelFunction::new(FnModel::new("x1(1+x2)", 3, |x| x[0] * (1.0 + x[1]))), 1.0),
        (ModelFunction::new(FnModel::new("x1+x2", 3, |x| x[0] + x[1])), 0.0),
        (ModelFunction::new(FnModel::new("x1x2x3", 3, |x| x[0] * x[1] * x[2])), 1.0 / 3.0),
    ];
    for (f, nu12) in &models {
        let before = f.ledger();
        let (pairs, cost) = estimate_nu_crossed(f, &design, CROSS_FD_DELTA).unwrap();
        assert_eq!(cost.model_evals, (1 << 12) * (1 + 3 + 3));
        assert_eq!(f.ledger().since(&before).model_evals, cost.model_evals);
        assert_eq!((pairs[0].i, pairs[0].j), (0, 1));
        assert!((pairs[0].estimate.value - nu12).abs() < 1e-3, "{}: {}", f.name(), pairs[0].estimate.value);
    }
}

#[test]
fn sobol_examples() {
    let f = ModelFunction::new(FnModel::new("x1+x1x2", 2, |x| x[0] + x[0] * x[1]));
    let space = InputSpace::unit_cube(2);
    let pf = pick_freeze(&space, 1 << 14, Generator::LowDiscrepancy { skip: 0 }).unwrap();
    let ev = evaluate_pick_freeze(&f, &pf, true).unwrap();
    let s = estimate_sobol(&ev, FirstOrderForm::default()).unwrap();
    assert!((s.total[0].value - 28.0 / 31.0).abs() < 0.01);
    assert!((s.total[1].value - 4.0 / 31.0).abs() < 0.01);
    let sup = estimate_superset(&f, &pf, &ev, 0, 1).unwrap();
    assert!((sup.value - 1.0 / 144.0).abs() < 3.0 * sup.se + 1e-4);
    assert!(estimate_superset(&f, &pf, &ev, 0, 0).is_err());

    let add = builtin("linear_sum", &[1.0, 2.0]).unwrap();
    let ev = evaluate_pick_freeze(&add, &pf, true).unwrap();
    for form in [FirstOrderForm::Covariance, FirstOrderForm::Difference] {
        let s = estimate_sobol(&ev, form).unwrap();
        let first = s.first.as_ref().unwrap();
        assert!((first[0].value + first[1].value - 1.0).abs() < 0.02);
        for i in 0..2 {
            assert!((first[i].value - s.total[i].value).abs() < 0.02);
        }
    }
    let sup = estimate_superset(&add, &pf, &ev, 0, 1).unwrap();
    assert!(sup.value.abs() < 1e-20);

    let constant = ModelFunction::new(FnModel::new("c", 2, |_| 1.0));
    let ev = evaluate_pick_freeze(&constant, &pf, false).unwrap();
    assert!(matches!(estimate_sobol(&ev, FirstOrderForm::default()), Err(Error::DegenerateVariance(_))));
}

#[test]
fn superset_dominates_on_oracle_and_sample() {
    let f = builtin("morris_reduced", &[]).unwrap();
    let space = InputSpace::unit_cube(4);
    let o = anova_totals(&f, &space, 16).unwrap();
    let pf = pick_freeze(&space, 1 << 13, Generator::LowDiscrepancy { skip: 0 }).unwrap();
    let ev = evaluate_pick_freeze(&f, &pf, false).unwrap();
    for i in 0..4 {
        for j in i + 1..4 {
            assert!(o.second[i][j] <= o.superset[i][j] + 1e-10);
            let sup = estimate_superset(&f, &pf, &ev, i, j).unwrap();
            assert!(sup.within(o.superset[i][j], 3.0, 1e-9), "({i},{j}) {} vs {}", sup.value, o.superset[i][j]);
        }
    }
}

#[test]
fn morris_examples() {
    let b = [1.5, -2.0, 0.25];
    let f = builtin("linear_sum", &b).unwrap();
    let space = InputSpace::unit_cube(3);
    let design = morris_trajectories(&space, 10, 4, 2, 1).unwrap();
    let before = f.ledger();
    let m = morris_measures(&f, &design).unwrap();
    assert_eq!(f.ledger().since(&before).model_evals, 40);
    for i in 0..3 {
        assert!((m.mu[i] - b[i]).abs() < 1e-12);
        assert!((m.mu_star[i] - b[i].abs()).abs() < 1e-12);
        assert!(m.sigma[i] < 1e-12);
    }
    let single = morris_trajectories(&space, 1, 4, 2, 1).unwrap();
    assert!(morris_measures(&f, &single).is_err());

    let mr = builtin("morris_reduced", &[]).unwrap();
    let design = morris_trajectories(&InputSpace::unit_cube(4), 50, 4, 2, 8).unwrap();
    let m = morris_measures(&mr, &design).unwrap();
    for i in 0..4 {
        assert!(m.mu_star[i] >= m.mu[i].abs() - 1e-12);
    }
    // The large b_ij couplings on x1 and x2 outweigh b_3, so x3 ranks last by
    // total index; mu* must reproduce the full ranking.
    let o = anova_totals(&mr, &InputSpace::unit_cube(4), 16).unwrap();
    let rank = |v: &dyn Fn(usize) -> f64| {
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| v(b).total_cmp(&v(a)));
        order
    };
    assert_eq!(rank(&|i| m.mu_star[i]), rank(&|i| o.total_index(i)), "mu* = {:?}", m.mu_star);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let f = builtin("gfunction", &[0.0, 1.0, 4.5]).unwrap();
    let space = InputSpace::unit_cube(3);
    let run = || {
        let g = grads_for(&f, &space, 5000, FD);
        dgsm_estimates(&g, &space, &[1.0, 2.0]).unwrap().nu
    };
    let many = run();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    assert_eq!(many, one);
}
