//! Executes the analyses named in a config.

use std::fmt;

use dgsm_core::bounds::{self, BoundsOptions, BoundsReport};
use dgsm_core::estimators::{
    dgsm_estimates, estimate_nu_crossed, estimate_sobol, estimate_superset, evaluate_pick_freeze, mean_estimate,
    morris_measures, unit_scale, DgsmEstimates, MorrisMeasures, PairEstimate, SobolEstimates, CROSS_FD_DELTA,
};
use dgsm_core::functions::{gradient_sample, LedgerSnapshot};
use dgsm_core::oracle::{anova_totals, dgsm_exact, AnovaTotals, DgsmExact};
use dgsm_core::sampling::{generate, morris_trajectories, pick_freeze};
use dgsm_core::{Error as CoreError, ModelFunction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Analysis, AnalysisConfig, ConfigError, VarianceSource};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// Numerically degenerate output (exit code 3).
    Degenerate(String),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Degenerate(m) => write!(f, "numeric degeneracy: {m}"),
            Self::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Degenerate(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

/// Attributes a library error to the config key that caused it.
fn blame(key: &'static str) -> impl Fn(CoreError) -> RunError {
    move |e| match e {
        CoreError::DegenerateVariance(_) | CoreError::Domain(_) => {
            RunError::Degenerate(format!("{e} (check model.*)"))
        }
        other => RunError::Config(ConfigError::new(key, other)),
    }
}

/// One CSV row. Absent quantities stay `None` and serialize as empty fields.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InputRow {
    pub input: String,
    pub distribution: String,
    pub s: Option<f64>,
    pub s_se: Option<f64>,
    pub s_tot: Option<f64>,
    pub s_tot_se: Option<f64>,
    pub lb1: Option<f64>,
    pub lb1_se: Option<f64>,
    pub lb2: Option<f64>,
    pub m_star: Option<f64>,
    pub lb_star: Option<f64>,
    pub ub1: Option<f64>,
    pub ub2: Option<f64>,
    pub poincare_constant: Option<f64>,
    pub ub_poincare: Option<f64>,
    pub normal_lb: Option<f64>,
    pub theorem1_lo: Option<f64>,
    pub theorem1_hi: Option<f64>,
    pub nu: Option<f64>,
    pub nu_se: Option<f64>,
    pub w: Option<f64>,
    pub w_se: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma_se: Option<f64>,
    pub tau: Option<f64>,
    pub tau_se: Option<f64>,
    pub mu_star: Option<f64>,
    pub mu_star_se: Option<f64>,
    pub morris_mu: Option<f64>,
    pub morris_mu_star: Option<f64>,
    pub morris_sigma: Option<f64>,
    pub oracle_s: Option<f64>,
    pub oracle_s_tot: Option<f64>,
    pub oracle_nu: Option<f64>,
    pub variance: Option<f64>,
    pub n: usize,
    pub model_evals: u64,
    pub gradient_evals: u64,
}

/// CSV header, in column order.
pub const COLUMNS: [&str; 38] = [
    "input",
    "distribution",
    "S",
    "S_se",
    "S_tot",
    "S_tot_se",
    "LB1",
    "LB1_se",
    "LB2",
    "m_star",
    "LB_star",
    "UB1",
    "UB2",
    "poincare_constant",
    "UB_poincare",
    "normal_LB",
    "theorem1_lo",
    "theorem1_hi",
    "nu",
    "nu_se",
    "w",
    "w_se",
    "sigma",
    "sigma_se",
    "tau",
    "tau_se",
    "mu_star",
    "mu_star_se",
    "morris_mu",
    "morris_mu_star",
    "morris_sigma",
    "oracle_S",
    "oracle_S_tot",
    "oracle_nu",
    "variance",
    "N",
    "model_evals",
    "gradient_evals",
];

impl InputRow {
    pub fn fields(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        vec![
            self.input.clone(),
            self.distribution.clone(),
            f(self.s),
            f(self.s_se),
            f(self.s_tot),
            f(self.s_tot_se),
            f(self.lb1),
            f(self.lb1_se),
            f(self.lb2),
            f(self.m_star),
            f(self.lb_star),
            f(self.ub1),
            f(self.ub2),
            f(self.poincare_constant),
            f(self.ub_poincare),
            f(self.normal_lb),
            f(self.theorem1_lo),
            f(self.theorem1_hi),
            f(self.nu),
            f(self.nu_se),
            f(self.w),
            f(self.w_se),
            f(self.sigma),
            f(self.sigma_se),
            f(self.tau),
            f(self.tau_se),
            f(self.mu_star),
            f(self.mu_star_se),
            f(self.morris_mu),
            f(self.morris_mu_star),
            f(self.morris_sigma),
            f(self.oracle_s),
            f(self.oracle_s_tot),
            f(self.oracle_nu),
            f(self.variance),
            self.n.to_string(),
            self.model_evals.to_string(),
            self.gradient_evals.to_string(),
        ]
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Default)]
pub struct Stages {
    pub dgsm: LedgerSnapshot,
    pub lower: LedgerSnapshot,
    pub crossed: LedgerSnapshot,
    pub sobol: LedgerSnapshot,
    pub morris: LedgerSnapshot,
    pub oracle: LedgerSnapshot,
}

impl Stages {
    /// Everything spent by the sampling estimators; oracle quadrature is excluded.
    pub fn sampling_total(&self) -> LedgerSnapshot {
        let s = [self.dgsm, self.lower, self.crossed, self.sobol, self.morris];
        LedgerSnapshot {
            model_evals: s.iter().map(|l| l.model_evals).sum(),
            gradient_evals: s.iter().map(|l| l.gradient_evals).sum(),
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub rows: Vec<InputRow>,
    pub variance: Option<(f64, VarianceSource)>,
    pub dgsm: Option<DgsmEstimates>,
    pub bounds: Option<BoundsReport>,
    pub crossed: Option<Vec<PairEstimate>>,
    pub superset: Vec<(usize, usize, f64, f64)>,
    pub sobol: Option<SobolEstimates>,
    pub morris: Option<MorrisMeasures>,
    pub oracle: Option<(AnovaTotals, Option<DgsmExact>)>,
    pub stages: Stages,
    pub warnings: Vec<String>,
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean_estimate(values).value;
    let sq: Vec<f64> = values.iter().map(|v| (v - m).powi(2)).collect();
    mean_estimate(&sq).value
}

pub fn run(cfg: &AnalysisConfig) -> Result<RunOutput, RunError> {
    let f = cfg.build_model()?;
    let space = &cfg.space;
    let d = cfg.dimension();
    let mut stages = Stages::default();
    let measure = |f: &ModelFunction, before: LedgerSnapshot| f.ledger().since(&before);

    let oracle = if cfg.has(Analysis::Oracle) || cfg.variance_source == VarianceSource::Oracle {
        let before = f.ledger();
        let totals = anova_totals(&f, space, cfg.oracle_order).map_err(blame("analyses"))?;
        let exact = if f.has_gradient() {
            Some(dgsm_exact(&f, space, cfg.oracle_order, &cfg.m_list).map_err(blame("analyses"))?)
        } else {
            None
        };
        stages.oracle = measure(&f, before);
        Some((totals, exact))
    } else {
        None
    };

    let sobol_run = if cfg.has(Analysis::Sobol) || cfg.variance_source == VarianceSource::Sobol {
        let before = f.ledger();
        let pf = pick_freeze(space, cfg.sobol_n.unwrap_or(cfg.n), cfg.generator).map_err(blame("sobol.n"))?;
        let ev = evaluate_pick_freeze(&f, &pf, cfg.first_order.is_some()).map_err(blame("model.expression"))?;
        let est = estimate_sobol(&ev, cfg.first_order.unwrap_or_default()).map_err(blame("model.builtin"))?;
        let mut superset = Vec::new();
        if cfg.has(Analysis::Crossed) {
            for i in 0..d {
                for j in i + 1..d {
                    let s = estimate_superset(&f, &pf, &ev, i, j).map_err(blame("analyses"))?;
                    superset.push((i, j, s.value, s.se));
                }
            }
        }
        stages.sobol = measure(&f, before);
        Some((est, superset))
    } else {
        None
    };

    let mut dgsm = None;
    let mut report = None;
    let mut crossed = None;
    let mut variance = None;
    let mut warnings = Vec::new();
    if let Some((t, _)) = &oracle {
        if t.precision_warning {
            warnings.push("oracle quadrature has not converged to 1e-8; raise oracle.order".to_string());
        }
    }
    if cfg.has(Analysis::Dgsm) {
        let before = f.ledger();
        let design = generate(space, cfg.n, cfg.generator).map_err(blame("sampler.kind"))?;
        let grads = gradient_sample(&f, &design, cfg.gradient_method()).map_err(blame("grad.mode"))?;
        let est = dgsm_estimates(&grads, space, &cfg.m_list).map_err(blame("sampler.n"))?;
        stages.dgsm = measure(&f, before);

        if cfg.has(Analysis::Crossed) {
            let (pairs, cost) = estimate_nu_crossed(&f, &design, CROSS_FD_DELTA).map_err(blame("analyses"))?;
            stages.crossed = cost;
            crossed = Some(pairs);
        }

        if cfg.has(Analysis::Bounds) {
            let all_uniform = (0..d).all(|i| unit_scale(space.marginal(i)).is_some());
            let lbs = if all_uniform {
                let before = f.ledger();
                let lbs = bounds::lower_bound_sample(&f, space, &design, &grads).map_err(blame("analyses"))?;
                stages.lower = measure(&f, before);
                Some(lbs)
            } else {
                warnings.push("LB1/LB2/LB* skipped: they need every marginal to be uniform".to_string());
                None
            };
            let v = match cfg.variance_source {
                VarianceSource::Sample => match (&lbs, &grads.values) {
                    (Some(l), _) => sample_variance(&l.g_x),
                    (None, Some(values)) => sample_variance(values),
                    (None, None) => {
                        let before = f.ledger();
                        let values = f.evaluate_rows(&design.points).map_err(blame("model.expression"))?;
                        stages.lower = measure(&f, before);
                        sample_variance(&values)
                    }
                },
                VarianceSource::Sobol => sobol_run.as_ref().unwrap().0.variance.value,
                VarianceSource::Oracle => oracle.as_ref().unwrap().0.variance,
            };
            variance = Some((v, cfg.variance_source));
            let opts = BoundsOptions {
                lower: lbs.as_ref(),
                envelopes: None,
                groups: cfg.groups.clone(),
                crossed: crossed.as_deref(),
            };
            let r = bounds::bounds_report(space, &grads, &est, v, &opts).map_err(blame("groups"))?;
            if r.degenerate {
                return Err(RunError::Degenerate(format!(
                    "output variance is {v:e}; the model looks constant on this sample (check model.*)"
                )));
            }
            report = Some(r);
        }
        dgsm = Some(est);
    }

    let morris = if cfg.has(Analysis::Morris) {
        let before = f.ledger();
        let m = cfg.morris;
        let design = morris_trajectories(space, m.r, m.p, m.delta_levels, m.seed).map_err(blame("morris.r"))?;
        let out = morris_measures(&f, &design).map_err(blame("morris.r"))?;
        stages.morris = measure(&f, before);
        Some(out)
    } else {
        None
    };

    let total = stages.sampling_total();
    let mut rows = Vec::with_capacity(d);
    for i in 0..d {
        let marginal = space.marginal(i);
        let mut row = InputRow {
            input: format!("x{}", i + 1),
            distribution: marginal.to_string(),
            n: cfg.n,
            model_evals: total.model_evals,
            gradient_evals: total.gradient_evals,
            variance: variance.map(|v| v.0),
            poincare_constant: marginal.poincare_constant().ok(),
            ..Default::default()
        };
        if let Some((s, _)) = &sobol_run {
            row.s_tot = Some(s.total[i].value);
            row.s_tot_se = Some(s.total[i].se);
            if let Some(first) = &s.first {
                row.s = Some(first[i].value);
                row.s_se = Some(first[i].se);
            }
        }
        if let Some(est) = &dgsm {
            row.nu = Some(est.nu[i].value);
            row.nu_se = Some(est.nu[i].se);
            row.w = Some(est.w[i].value);
            row.w_se = Some(est.w[i].se);
            row.mu_star = Some(est.mu_star[i].value);
            row.mu_star_se = Some(est.mu_star[i].se);
            row.sigma = est.sigma_small[i].map(|e| e.value);
            row.sigma_se = est.sigma_small[i].map(|e| e.se);
            row.tau = est.tau[i].map(|e| e.value);
            row.tau_se = est.tau[i].map(|e| e.se);
        }
        if let Some(r) = &report {
            let b = &r.inputs[i];
            row.lb1 = b.lb1.map(|l| l.estimate.value);
            row.lb1_se = b.lb1.map(|l| l.estimate.se);
            row.lb2 = b.lb2.map(|l| l.value);
            row.m_star = b.lb2.and_then(|l| l.m_star);
            row.lb_star = b.lb_star;
            row.ub1 = b.ub1;
            row.ub2 = b.ub2;
            row.ub_poincare = b.ub_poincare;
            row.normal_lb = b.normal_lb;
            if let Some(&(c, upper)) = cfg.envelopes.get(&i) {
                let (lo, hi) =
                    bounds::theorem1_range(c, upper, r.variance, marginal).map_err(blame("analyses"))?;
                row.theorem1_lo = Some(lo);
                row.theorem1_hi = Some(hi);
            }
        }
        if let Some(m) = &morris {
            row.morris_mu = Some(m.mu[i]);
            row.morris_mu_star = Some(m.mu_star[i]);
            row.morris_sigma = Some(m.sigma[i]);
        }
        if let Some((t, exact)) = &oracle {
            if t.variance > 0.0 {
                row.oracle_s = Some(t.first_index(i));
                row.oracle_s_tot = Some(t.total_index(i));
            }
            row.oracle_nu = exact.as_ref().map(|e| e.nu[i]);
        }
        rows.push(row);
    }

    let (sobol, superset) = match sobol_run {
        Some((s, sup)) => (Some(s), sup),
        None => (None, Vec::new()),
    };
    Ok(RunOutput {
        rows,
        variance,
        dgsm,
        bounds: report,
        crossed,
        superset,
        sobol,
        morris,
        oracle,
        stages,
        warnings,
    })
}

fn ledger_json(l: LedgerSnapshot) -> Value {
    json!({ "model_evals": l.model_evals, "gradient_evals": l.gradient_evals })
}

fn generator_json(cfg: &AnalysisConfig) -> Value {
    match cfg.generator {
        dgsm_core::Generator::Pseudo { seed } => json!({ "kind": "pseudo", "seed": seed }),
        dgsm_core::Generator::LowDiscrepancy { skip } => json!({ "kind": "lowdiscrepancy", "skip": skip }),
    }
}

/// Full-metadata JSON document. `wall_time_s` is the only non-deterministic field.
pub fn to_json(cfg: &AnalysisConfig, out: &RunOutput, wall_time_s: f64) -> Value {
    let name = match &cfg.model {
        crate::config::ModelSpec::Builtin { name, .. } => name.clone(),
        crate::config::ModelSpec::Expression { text, .. } => text.clone(),
    };
    let delta = match cfg.grad_mode {
        crate::config::GradMode::Fd => json!(cfg.fd_delta),
        crate::config::GradMode::Analytic => Value::Null,
    };
    let pairs: Vec<Value> = out
        .crossed
        .iter()
        .flatten()
        .map(|p| {
            let ub = out
                .bounds
                .as_ref()
                .and_then(|r| r.pairs.iter().find(|q| q.i == p.i && q.j == p.j))
                .and_then(|q| q.ub);
            let sup = out.superset.iter().find(|s| s.0 == p.i && s.1 == p.j);
            json!({
                "i": p.i + 1, "j": p.j + 1,
                "nu_ij": p.estimate.value, "nu_ij_se": p.estimate.se,
                "superset_ub": ub,
                "superset_sobol": sup.map(|s| s.2), "superset_sobol_se": sup.map(|s| s.3),
            })
        })
        .collect();
    let groups: Vec<Value> = out
        .bounds
        .iter()
        .flat_map(|r| r.groups.iter())
        .map(|g| {
            json!({
                "group": g.group.iter().map(|i| i + 1).collect::<Vec<_>>(),
                "tau": g.tau, "ub": g.ub, "linear_value": g.linear_value,
            })
        })
        .collect();
    let w_m: Vec<Value> = out
        .dgsm
        .iter()
        .flat_map(|d| d.w_m.iter())
        .map(|(m, v)| json!({ "m": m, "values": v.iter().map(|e| e.map(|e| e.value)).collect::<Vec<_>>(),
            "se": v.iter().map(|e| e.map(|e| e.se)).collect::<Vec<_>>() }))
        .collect();
    let oracle = out.oracle.as_ref().map(|(t, exact)| {
        json!({
            "order": cfg.oracle_order,
            "mean": t.mean, "variance": t.variance,
            "first": t.first, "total": t.total,
            "precision_warning": t.precision_warning,
            "nu": exact.as_ref().map(|e| e.nu.clone()),
            "sigma_small": exact.as_ref().map(|e| e.sigma_small.clone()),
        })
    });
    let envelope: Vec<Value> = out
        .bounds
        .iter()
        .flat_map(|r| r.inputs.iter())
        .map(|b| json!([b.empirical_envelope.0, b.empirical_envelope.1]))
        .collect();
    let rules: Vec<Value> = (0..cfg.dimension())
        .map(|i| {
            cfg.space
                .marginal(i)
                .poincare_constant_with_rule()
                .ok()
                .map(|(_, r)| serde_json::to_value(r).unwrap_or(Value::Null))
                .unwrap_or(Value::Null)
        })
        .collect();
    let morris = out.morris.as_ref().map(|m| {
        json!({
            "r": cfg.morris.r, "p": cfg.morris.p, "delta_levels": cfg.morris.delta_levels,
            "seed": cfg.morris.seed, "effects_per_input": m.effects.first().map(Vec::len),
        })
    });
    let first_form = out.sobol.as_ref().filter(|s| s.first.is_some()).map(|s| s.first_form);
    json!({
        "schema_version": 1,
        "tool": { "name": "dgsm", "version": env!("CARGO_PKG_VERSION") },
        "config": cfg.raw,
        "model": { "name": name, "dimension": cfg.dimension() },
        "space": (0..cfg.dimension()).map(|i| cfg.space.marginal(i).to_string()).collect::<Vec<_>>(),
        "sampler": generator_json(cfg),
        "seed": cfg.seed,
        "N": cfg.n,
        "sobol_N": out.sobol.as_ref().map(|_| cfg.sobol_n.unwrap_or(cfg.n)),
        "gradient": { "mode": if delta.is_null() { "analytic" } else { "fd" }, "delta": delta },
        "delta": delta,
        "variance": out.variance.map(|(v, s)| json!({ "value": v, "source": format!("{s:?}").to_lowercase() })),
        "first_order_form": first_form,
        "inputs": out.rows,
        "poincare_rules": rules,
        "empirical_envelope": envelope,
        "w_m": w_m,
        "pairs": pairs,
        "groups": groups,
        "morris": morris,
        "oracle": oracle,
        "warnings": out.warnings,
        "ledger": {
            "model_evals": out.stages.sampling_total().model_evals,
            "gradient_evals": out.stages.sampling_total().gradient_evals,
            "stages": {
                "dgsm": ledger_json(out.stages.dgsm),
                "lower_bounds": ledger_json(out.stages.lower),
                "crossed": ledger_json(out.stages.crossed),
                "sobol": ledger_json(out.stages.sobol),
                "morris": ledger_json(out.stages.morris),
                "oracle": ledger_json(out.stages.oracle),
            }
        },
        "wall_time_s": wall_time_s,
    })
}

/// One `(n, input)` row of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub input: usize,
    pub nu: f64,
    pub nu_se: f64,
    pub ub1: Option<f64>,
    pub ub_poincare: Option<f64>,
    pub s_tot: f64,
    pub s_tot_se: f64,
    pub variance: f64,
    pub model_evals: u64,
}

pub const CONVERGENCE_COLUMNS: [&str; 10] = [
    "n",
    "input",
    "nu",
    "nu_se",
    "UB1",
    "UB_poincare",
    "S_tot",
    "S_tot_se",
    "variance",
    "model_evals",
];

impl ConvergenceRow {
    pub fn fields(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        vec![
            self.n.to_string(),
            format!("x{}", self.input + 1),
            fmt_num(self.nu),
            fmt_num(self.nu_se),
            f(self.ub1),
            f(self.ub_poincare),
            fmt_num(self.s_tot),
            fmt_num(self.s_tot_se),
            fmt_num(self.variance),
            self.model_evals.to_string(),
        ]
    }
}

/// DGSM upper bounds against total indices as `n` grows. If `sobol.n` is set the
/// total indices come from one reference run of that size, otherwise from a
/// pick-freeze run of size `n` at each step. `bounds.variance` picks V.
pub fn convergence(cfg: &AnalysisConfig, n_list: &[usize]) -> Result<Vec<ConvergenceRow>, RunError> {
    if n_list.is_empty() {
        return Err(ConfigError::new("--n", "needs at least one sample size").into());
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(ConfigError::new("--n", "sample sizes must be positive and strictly ascending").into());
    }
    let f = cfg.build_model()?;
    let space = &cfg.space;
    let sobol_at = |n: usize| -> Result<SobolEstimates, RunError> {
        let pf = pick_freeze(space, n, cfg.generator).map_err(blame("sobol.n"))?;
        let ev = evaluate_pick_freeze(&f, &pf, false).map_err(blame("model.expression"))?;
        estimate_sobol(&ev, cfg.first_order.unwrap_or_default()).map_err(blame("model.builtin"))
    };
    let reference = cfg.sobol_n.map(sobol_at).transpose()?;
    let oracle_v = if cfg.variance_source == VarianceSource::Oracle {
        Some(anova_totals(&f, space, cfg.oracle_order).map_err(blame("bounds.variance"))?.variance)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &n in n_list {
        let before = f.ledger();
        let design = generate(space, n, cfg.generator).map_err(blame("sampler.kind"))?;
        let grads = gradient_sample(&f, &design, cfg.gradient_method()).map_err(blame("grad.mode"))?;
        let est = dgsm_estimates(&grads, space, &[]).map_err(blame("--n"))?;
        let local = if reference.is_none() { Some(sobol_at(n)?) } else { None };
        let sobol = reference.as_ref().or(local.as_ref()).unwrap();
        let v = match cfg.variance_source {
            VarianceSource::Sample => match &grads.values {
                Some(values) => sample_variance(values),
                None => sobol.variance.value,
            },
            VarianceSource::Sobol => sobol.variance.value,
            VarianceSource::Oracle => oracle_v.unwrap(),
        };
        if !(v > 0.0) {
            return Err(RunError::Degenerate(format!(
                "output variance is {v:e} at n = {n}; the model looks constant (check model.*)"
            )));
        }
        let spent = f.ledger().since(&before).model_evals;
        for i in 0..cfg.dimension() {
            let m = space.marginal(i);
            let nu = est.nu[i].value;
            let ub1 = unit_scale(m)
                .map(|(_, w)| bounds::ub1(nu * w * w, v))
                .transpose()
                .map_err(blame("model.builtin"))?;
            let ub_poincare = m
                .poincare_constant()
                .ok()
                .map(|c| bounds::ub_poincare(nu, c, v))
                .transpose()
                .map_err(blame("model.builtin"))?;
            rows.push(ConvergenceRow {
                n,
                input: i,
                nu,
                nu_se: est.nu[i].se,
                ub1,
                ub_poincare,
                s_tot: sobol.total[i].value,
                s_tot_se: sobol.total[i].se,
                variance: v,
                model_evals: spent,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> AnalysisConfig {
        text.parse().unwrap()
    }

    #[test]
    fn dgsm_only_costs() {
        let c = cfg("model.builtin = gfunction\nmodel.params.a = 0, 1, 2\nsampler.n = 50\nanalyses = dgsm");
        let out = run(&c).unwrap();
        assert_eq!(out.rows[0].model_evals, 50 * 4);
        assert!(out.rows[0].ub1.is_none());
        let c = cfg("model.builtin = gfunction\nmodel.params.a = 0, 1, 2\nsampler.n = 50\nanalyses = bounds");
        assert_eq!(run(&c).unwrap().rows[2].model_evals, 50 * 10);
    }

    #[test]
    fn degenerate_model() {
        let c = cfg("model.expression = 3\nmodel.dimension = 2\nsampler.n = 32\nanalyses = bounds");
        assert_eq!(run(&c).unwrap_err().exit_code(), 3);
        let c = cfg("model.expression = 3\nmodel.dimension = 2\nsampler.n = 32\nanalyses = sobol");
        assert_eq!(run(&c).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn convergence_rejects_unsorted() {
        let c = cfg("model.builtin = morris_reduced\nsampler.n = 10\nanalyses = dgsm");
        let err = convergence(&c, &[20, 10]).unwrap_err();
        assert!(matches!(err, RunError::Config(ref e) if e.key == "--n"));
    }
}
