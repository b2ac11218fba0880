//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers or comma-separated lists and returns a
//! JSON string, so the page needs no generated bindings beyond these calls.

use dgsm_core::bounds::{self, BoundsOptions, GammaTerms};
use dgsm_core::closed_form::{GFunction, LinearInOne};
use dgsm_core::estimators::{dgsm_estimates, estimate_sobol, evaluate_pick_freeze, mean_estimate, FirstOrderForm};
use dgsm_core::functions::gradient_sample;
use dgsm_core::sampling::{generate, pick_freeze};
use dgsm_core::{builtin, Generator, GradientMethod, InputSpace};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const FD: GradientMethod = GradientMethod::ForwardFd { delta: 1e-5 };
const MAX_N: usize = 1 << 16;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_list(text: &str) -> Result<Vec<f64>, JsError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| err(format!("'{s}' is not a number"))))
        .collect()
}

fn check_n(n: usize) -> Result<(), JsError> {
    if !(2..=MAX_N).contains(&n) {
        return Err(err(format!("N must lie in [2, {MAX_N}]")));
    }
    Ok(())
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean_estimate(values).value;
    let sq: Vec<f64> = values.iter().map(|v| (v - m).powi(2)).collect();
    mean_estimate(&sq).value
}

/// `gamma(m)` for input `input` (0-based) of a g-function with coefficients `a`,
/// estimated from `n` Sobol' points, next to the closed form. With `a` empty the
/// model is `G = 4 (x - 1/2)`, whose optimum sits near `m = 3.745`.
pub fn gamma_curve_value(a: &[f64], input: usize, n: usize) -> Result<Value, String> {
    let s = |e: dgsm_core::Error| e.to_string();
    let (f, d) = if a.is_empty() {
        (builtin("linear_one_var", &[4.0, 0.0]).map_err(s)?, 1)
    } else {
        (builtin("gfunction", a).map_err(s)?, a.len())
    };
    if input >= d {
        return Err(format!("input {} out of range for d = {d}", input + 1));
    }
    let space = InputSpace::unit_cube(d);
    let design = generate(&space, n, Generator::LowDiscrepancy { skip: 0 }).map_err(s)?;
    let grads = gradient_sample(&f, &design, FD).map_err(s)?;
    let lbs = bounds::lower_bound_sample(&f, &space, &design, &grads).map_err(s)?;
    let v = sample_variance(&lbs.g_x);
    let terms = GammaTerms::new(&lbs, &grads, &space, input, v).map_err(s)?;
    let closed = |m: f64| {
        if a.is_empty() {
            LinearInOne::single(4.0).gamma(m)
        } else {
            GFunction::new(a.to_vec()).gamma(input, m)
        }
    };
    let grid = bounds::m_grid();
    let sample: Vec<f64> = grid.iter().map(|&m| terms.gamma(m).unwrap_or(0.0)).collect();
    let exact: Vec<f64> = grid.iter().map(|&m| closed(m)).collect();
    let best = bounds::maximize_gamma_fn(|m| terms.gamma(m).unwrap_or(0.0));
    let best_closed = bounds::maximize_gamma_fn(closed);
    Ok(json!({
        "m": grid,
        "gamma_sample": sample,
        "gamma_closed": exact,
        "m_star": best.map(|b| b.0),
        "lb2": best.map(|b| b.1),
        "m_star_closed": best_closed.map(|b| b.0),
        "lb2_closed": best_closed.map(|b| b.1),
        "variance": v,
        "model_evals": f.ledger().model_evals,
    }))
}

/// Sampled LB*, S_tot, UB1 and UB2 for a g-function against their closed forms.
pub fn gfunction_bounds_value(a: &[f64], n: usize) -> Result<Value, String> {
    let s = |e: dgsm_core::Error| e.to_string();
    let f = builtin("gfunction", a).map_err(s)?;
    let d = a.len();
    let space = InputSpace::unit_cube(d);
    let gen = Generator::LowDiscrepancy { skip: 0 };
    let design = generate(&space, n, gen).map_err(s)?;
    let grads = gradient_sample(&f, &design, FD).map_err(s)?;
    let dgsm = dgsm_estimates(&grads, &space, &[]).map_err(s)?;
    let lbs = bounds::lower_bound_sample(&f, &space, &design, &grads).map_err(s)?;
    let v = sample_variance(&lbs.g_x);
    let opts = BoundsOptions {
        lower: Some(&lbs),
        ..Default::default()
    };
    let report = bounds::bounds_report(&space, &grads, &dgsm, v, &opts).map_err(s)?;
    if report.degenerate {
        return Err("degenerate output variance".into());
    }
    let pf = pick_freeze(&space, n, gen).map_err(s)?;
    let ev = evaluate_pick_freeze(&f, &pf, false).map_err(s)?;
    let sobol = estimate_sobol(&ev, FirstOrderForm::default()).map_err(s)?;
    let g = GFunction::new(a.to_vec());
    let best = bounds::maximize_gamma_fn(|m| g.gamma(0, m)).map(|b| b.0).unwrap_or(1.0);
    let rows: Vec<Value> = (0..d)
        .map(|i| {
            let b = &report.inputs[i];
            json!({
                "input": i + 1,
                "lb_star": b.lb_star, "s_tot": sobol.total[i].value, "s_tot_se": sobol.total[i].se,
                "ub1": b.ub1, "ub2": b.ub2,
                "exact": {
                    "lb_star": g.lb1(i).max(g.gamma(i, best)),
                    "s_tot": g.total_index(i), "ub1": g.ub1(i), "ub2": g.ub2(i),
                },
            })
        })
        .collect();
    Ok(json!({ "n": n, "variance": v, "variance_exact": g.variance(), "inputs": rows,
               "model_evals": f.ledger().model_evals }))
}

/// UB1 and S_tot of the reduced Morris function for each `n`, using pseudo-random
/// points from `seed`. S_tot comes from one pick-freeze run of size `reference_n`.
pub fn morris_convergence_value(ns: &[usize], seed: u64, reference_n: usize) -> Result<Value, String> {
    let s = |e: dgsm_core::Error| e.to_string();
    let f = builtin("morris_reduced", &[]).map_err(s)?;
    let space = InputSpace::unit_cube(4);
    let pf = pick_freeze(&space, reference_n, Generator::Pseudo { seed }).map_err(s)?;
    let ev = evaluate_pick_freeze(&f, &pf, false).map_err(s)?;
    let sobol = estimate_sobol(&ev, FirstOrderForm::default()).map_err(s)?;
    let v = sobol.variance.value;
    let mut ub1 = vec![Vec::new(); 4];
    for &n in ns {
        let design = generate(&space, n, Generator::Pseudo { seed }).map_err(s)?;
        let grads = gradient_sample(&f, &design, FD).map_err(s)?;
        let dgsm = dgsm_estimates(&grads, &space, &[]).map_err(s)?;
        for (series, nu) in ub1.iter_mut().zip(&dgsm.nu) {
            series.push(bounds::ub1(nu.value, v).map_err(s)?);
        }
    }
    Ok(json!({
        "n": ns,
        "ub1": ub1,
        "s_tot": sobol.total.iter().map(|e| e.value).collect::<Vec<_>>(),
        "variance": v,
    }))
}

#[wasm_bindgen]
pub fn gamma_curve(a: &str, input: usize, n: usize) -> Result<String, JsError> {
    check_n(n)?;
    let a = parse_list(a)?;
    gamma_curve_value(&a, input, n).map(|v| v.to_string()).map_err(err)
}

#[wasm_bindgen]
pub fn gfunction_bounds(a: &str, n: usize) -> Result<String, JsError> {
    check_n(n)?;
    let a = parse_list(a)?;
    if a.is_empty() || a.len() > 10 {
        return Err(err("give between 1 and 10 coefficients"));
    }
    gfunction_bounds_value(&a, n).map(|v| v.to_string()).map_err(err)
}

#[wasm_bindgen]
pub fn morris_convergence(ns: &str, seed: u32) -> Result<String, JsError> {
    let ns: Vec<usize> = parse_list(ns)?.into_iter().map(|x| x as usize).collect();
    if ns.is_empty() || ns.iter().any(|&n| !(2..=MAX_N).contains(&n)) {
        return Err(err(format!("sample sizes must lie in [2, {MAX_N}]")));
    }
    morris_convergence_value(&ns, seed as u64, 20_000).map(|v| v.to_string()).map_err(err)
}
