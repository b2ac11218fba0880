//! Sample estimators for DGSM, Sobol' and Morris measures.
//!
//! Standard errors come from 10 batch means: the estimator is recomputed on
//! each contiguous tenth of the sample and the spread of those batch values
//! gives the error. All sums use pairwise summation in row order, so results
//! do not depend on the worker count.

use ndarray::Array2;
use serde::Serialize;

use crate::distributions::{InputDistribution, InputSpace};
use crate::error::{Error, Result};
use crate::functions::{GradientSample, LedgerSnapshot, ModelFunction};
use crate::par::map_rows;
use crate::sampling::{MorrisDesign, PickFreezeDesign, SampleDesign};

pub const BATCHES: usize = 10;
/// Step of the nested second difference used for `nu_ij`.
pub const CROSS_FD_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    /// `|value - target| <= k * se`, with an absolute floor for exact cases.
    pub fn within(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.value - target).abs() <= k * self.se + floor
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Contiguous row ranges of the batches (the last one absorbs the remainder).
fn batch_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let size = n / BATCHES;
    (0..BATCHES)
        .map(|k| k * size..if k + 1 == BATCHES { n } else { (k + 1) * size })
        .collect()
}

/// Batch-means standard error of a statistic computed on row ranges.
/// Samples too small for ten batches fall back to one row per batch.
fn batch_se(n: usize, stat: impl Fn(std::ops::Range<usize>) -> f64) -> f64 {
    let ranges: Vec<_> = if n >= BATCHES {
        batch_ranges(n)
    } else {
        (0..n).map(|r| r..r + 1).collect()
    };
    let k = ranges.len();
    if k < 2 {
        return f64::NAN;
    }
    let vals: Vec<f64> = ranges.into_iter().map(stat).collect();
    let m = mean(&vals);
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Sample mean of per-row terms with its batch SE.
pub fn mean_estimate(terms: &[f64]) -> Estimate {
    Estimate::new(mean(terms), batch_se(terms.len(), |r| mean(&terms[r])))
}

/// `(lower end, width)` for uniform marginals, used to rescale to `[0, 1]`.
pub fn unit_scale(m: &InputDistribution) -> Option<(f64, f64)> {
    match *m {
        InputDistribution::Uniform { a, b } => Some((a, b - a)),
        _ => None,
    }
}

fn need_rows(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::EmptySample(format!("need N >= 2 rows, got {n}")));
    }
    Ok(())
}

fn check_space(grads: &GradientSample, space: &InputSpace) -> Result<()> {
    if grads.dimension() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: grads.dimension(),
        });
    }
    Ok(())
}

fn per_input(grads: &GradientSample, term: impl Fn(usize, usize) -> f64) -> Result<Vec<Estimate>> {
    need_rows(grads.len())?;
    Ok((0..grads.dimension())
        .map(|i| {
            let terms: Vec<f64> = (0..grads.len()).map(|r| term(r, i)).collect();
            mean_estimate(&terms)
        })
        .collect())
}

fn uniform_scale(space: &InputSpace, i: usize, measure: &'static str) -> Result<(f64, f64)> {
    unit_scale(space.marginal(i)).ok_or_else(|| Error::UnsupportedMeasure {
        measure,
        input: i + 1,
        reason: format!("needs a uniform marginal, got {}", space.marginal(i)),
    })
}

/// `nu_i = E[(dG/dx_i)^2]`.
pub fn estimate_nu(grads: &GradientSample) -> Result<Vec<Estimate>> {
    per_input(grads, |r, i| grads.grads[[r, i]].powi(2))
}

/// `w_i = E[dG/dx_i]`, defined for any marginal.
pub fn estimate_w(grads: &GradientSample) -> Result<Vec<Estimate>> {
    per_input(grads, |r, i| grads.grads[[r, i]])
}

/// `mu*_i = E|dG/dx_i|`.
pub fn estimate_mu_star(grads: &GradientSample) -> Result<Vec<Estimate>> {
    per_input(grads, |r, i| grads.grads[[r, i]].abs())
}

/// `w_i^(m) = E[t_i^m dG/dt_i]` with `t_i` the input rescaled to `[0, 1]`.
pub fn estimate_w_m(grads: &GradientSample, space: &InputSpace, m: f64) -> Result<Vec<Estimate>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("w^(m) needs m > 0, got {m}")));
    }
    check_space(grads, space)?;
    let scales = (0..space.dimension())
        .map(|i| uniform_scale(space, i, "w^(m)"))
        .collect::<Result<Vec<_>>>()?;
    per_input(grads, |r, i| {
        let (lo, width) = scales[i];
        let t = (grads.points[[r, i]] - lo) / width;
        t.powf(m) * grads.grads[[r, i]] * width
    })
}

/// `sigma_i = E[t(1 - t) (dG/dt)^2] / 2` (uniform marginals).
pub fn estimate_sigma_small(grads: &GradientSample, space: &InputSpace) -> Result<Vec<Estimate>> {
    check_space(grads, space)?;
    let scales = (0..space.dimension())
        .map(|i| uniform_scale(space, i, "sigma"))
        .collect::<Result<Vec<_>>>()?;
    per_input(grads, |r, i| {
        let (lo, width) = scales[i];
        let t = (grads.points[[r, i]] - lo) / width;
        let g = grads.grads[[r, i]] * width;
        0.5 * t * (1.0 - t) * g * g
    })
}

/// Per-row weight of `(dG/dx_i)^2` in `tau`.
fn tau_weight(space: &InputSpace, i: usize) -> Result<Box<dyn Fn(f64) -> f64 + '_>> {
    match *space.marginal(i) {
        InputDistribution::Uniform { a, b } => {
            let width = b - a;
            Ok(Box::new(move |x| {
                let t = (x - a) / width;
                (1.0 - 3.0 * t + 3.0 * t * t) / 6.0 * width * width
            }))
        }
        InputDistribution::Normal { mu, sigma } => {
            Ok(Box::new(move |x| ((x - mu).powi(2) + sigma * sigma) / 4.0))
        }
        ref other => Err(Error::UnsupportedMeasure {
            measure: "tau",
            input: i + 1,
            reason: format!("no tau weight for {other}"),
        }),
    }
}

/// `tau_y`: sum over the group of weighted mean squared partials.
pub fn estimate_tau(grads: &GradientSample, space: &InputSpace, group: &[usize]) -> Result<Estimate> {
    check_space(grads, space)?;
    need_rows(grads.len())?;
    for &i in group {
        if i >= space.dimension() {
            return Err(Error::InvalidParameter(format!(
                "group member x{} out of range (d = {})",
                i + 1,
                space.dimension()
            )));
        }
    }
    let weights = group
        .iter()
        .map(|&i| tau_weight(space, i))
        .collect::<Result<Vec<_>>>()?;
    let terms: Vec<f64> = (0..grads.len())
        .map(|r| {
            group
                .iter()
                .zip(&weights)
                .map(|(&i, w)| w(grads.points[[r, i]]) * grads.grads[[r, i]].powi(2))
                .sum()
        })
        .collect();
    Ok(mean_estimate(&terms))
}

#[derive(Debug, Clone, Serialize)]
pub struct PairEstimate {
    pub i: usize,
    pub j: usize,
    pub estimate: Estimate,
}

/// `nu_ij = E[(d^2 G / dx_i dx_j)^2]` by nested finite differences.
/// Each row costs `1 + d + d(d-1)/2` evaluations (base and single shifts reused).
/// A step that would leave the support is taken in the opposite direction.
pub fn estimate_nu_crossed(
    f: &ModelFunction,
    design: &SampleDesign,
    delta: f64,
) -> Result<(Vec<PairEstimate>, LedgerSnapshot)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("cross delta must be > 0, got {delta}")));
    }
    let d = f.dimension();
    if design.dimension() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: design.dimension(),
        });
    }
    need_rows(design.len())?;
    let before = f.ledger();
    let rows = map_rows(design.len(), f.concurrent(), |r| {
        let x = design.points.row(r).to_vec();
        let h: Vec<f64> = (0..d)
            .map(|i| if x[i] + delta <= design.bounds[i].1 { delta } else { -delta })
            .collect();
        let g0 = f.evaluate(&x)?;
        let mut single = vec![0.0; d];
        let mut probe = x.clone();
        for i in 0..d {
            probe[i] += h[i];
            single[i] = f.evaluate(&probe)?;
            probe[i] = x[i];
        }
        let mut out = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in i + 1..d {
                probe[i] += h[i];
                probe[j] += h[j];
                let both = f.evaluate(&probe)?;
                probe[i] = x[i];
                probe[j] = x[j];
                let cross = (both - single[i] - single[j] + g0) / (h[i] * h[j]);
                out.push(cross * cross);
            }
        }
        Ok(out)
    })?;
    let cost = f.ledger().since(&before);
    let mut pairs = Vec::new();
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            let terms: Vec<f64> = rows.iter().map(|row| row[k]).collect();
            pairs.push(PairEstimate {
                i,
                j,
                estimate: mean_estimate(&terms),
            });
            k += 1;
        }
    }
    Ok((pairs, cost))
}

/// All derivative-based measures from one gradient sample.
#[derive(Debug, Clone, Serialize)]
pub struct DgsmEstimates {
    pub nu: Vec<Estimate>,
    pub w: Vec<Estimate>,
    pub mu_star: Vec<Estimate>,
    /// `(m, w^(m))` for each requested `m`; `None` where the marginal is not uniform.
    pub w_m: Vec<(f64, Vec<Option<Estimate>>)>,
    pub sigma_small: Vec<Option<Estimate>>,
    pub tau: Vec<Option<Estimate>>,
    pub nu_cross: Option<Vec<PairEstimate>>,
    pub cost: LedgerSnapshot,
}

pub fn dgsm_estimates(grads: &GradientSample, space: &InputSpace, m_list: &[f64]) -> Result<DgsmEstimates> {
    check_space(grads, space)?;
    let d = space.dimension();
    let nu = estimate_nu(grads)?;
    let uniform: Vec<Option<(f64, f64)>> = (0..d).map(|i| unit_scale(space.marginal(i))).collect();
    let scaled = |r: usize, i: usize| -> Option<(f64, f64)> {
        uniform[i].map(|(lo, width)| ((grads.points[[r, i]] - lo) / width, grads.grads[[r, i]] * width))
    };
    let optional = |term: &dyn Fn(usize, usize) -> Option<f64>| -> Vec<Option<Estimate>> {
        (0..d)
            .map(|i| {
                let terms: Option<Vec<f64>> = (0..grads.len()).map(|r| term(r, i)).collect();
                terms.map(|t| mean_estimate(&t))
            })
            .collect()
    };
    let sigma_small = optional(&|r, i| scaled(r, i).map(|(t, g)| 0.5 * t * (1.0 - t) * g * g));
    let mut w_m = Vec::with_capacity(m_list.len());
    for &m in m_list {
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!("w^(m) needs m > 0, got {m}")));
        }
        w_m.push((m, optional(&|r, i| scaled(r, i).map(|(t, g)| t.powf(m) * g))));
    }
    let tau = (0..d)
        .map(|i| match tau_weight(space, i) {
            Ok(_) => estimate_tau(grads, space, &[i]).map(Some),
            Err(_) => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DgsmEstimates {
        nu,
        w: estimate_w(grads)?,
        mu_star: estimate_mu_star(grads)?,
        w_m,
        sigma_small,
        tau,
        nu_cross: None,
        cost: grads.cost,
    })
}

/// Model values on a pick-freeze design.
#[derive(Debug, Clone)]
pub struct PickFreezeEvaluations {
    pub g_a: Vec<f64>,
    /// Present when first-order indices were requested.
    pub g_b: Option<Vec<f64>>,
    /// `G(A_B^i)` for each input.
    pub g_ab: Vec<Vec<f64>>,
    pub cost: LedgerSnapshot,
}

/// `N (d + 1)` evaluations, plus `N` for `B` when `with_b`.
pub fn evaluate_pick_freeze(f: &ModelFunction, pf: &PickFreezeDesign, with_b: bool) -> Result<PickFreezeEvaluations> {
    if pf.dimension() != f.dimension() {
        return Err(Error::DimensionMismatch {
            expected: f.dimension(),
            got: pf.dimension(),
        });
    }
    let before = f.ledger();
    let g_a = f.evaluate_rows(&pf.a)?;
    let g_b = if with_b { Some(f.evaluate_rows(&pf.b)?) } else { None };
    let g_ab = (0..pf.dimension())
        .map(|i| f.evaluate_rows(&pf.a_b(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PickFreezeEvaluations {
        g_a,
        g_b,
        g_ab,
        cost: f.ledger().since(&before),
    })
}

/// First-order estimator variant.
///
/// The covariance form subtracts `g0^2` from a product mean, so its error
/// scales with `E[G^2]` rather than with the effect being measured and it
/// swamps small indices. The difference form is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstOrderForm {
    /// `[mean(G(B) G(A_B^i)) - g0^2] / V`.
    Covariance,
    /// `mean(G(B) (G(A_B^i) - G(A))) / V`.
    #[default]
    Difference,
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolEstimates {
    pub mean: f64,
    pub variance: Estimate,
    pub first: Option<Vec<Estimate>>,
    pub first_form: FirstOrderForm,
    pub total: Vec<Estimate>,
    /// Jansen `V_i^tot` before division by `V`.
    pub total_variance: Vec<Estimate>,
    pub cost: LedgerSnapshot,
}

/// Mean and variance over `A` (and `B` when present) for a row range.
fn moments(ev: &PickFreezeEvaluations, r: std::ops::Range<usize>) -> (f64, f64) {
    let mut vals: Vec<f64> = ev.g_a[r.clone()].to_vec();
    if let Some(b) = &ev.g_b {
        vals.extend_from_slice(&b[r]);
    }
    let m = mean(&vals);
    let sq: Vec<f64> = vals.iter().map(|v| (v - m).powi(2)).collect();
    (m, mean(&sq))
}

fn jansen(ev: &PickFreezeEvaluations, i: usize, r: std::ops::Range<usize>) -> f64 {
    let terms: Vec<f64> = r.map(|k| (ev.g_a[k] - ev.g_ab[i][k]).powi(2)).collect();
    0.5 * mean(&terms)
}

fn first_partial(ev: &PickFreezeEvaluations, form: FirstOrderForm, i: usize, r: std::ops::Range<usize>, g0: f64) -> f64 {
    let b = ev.g_b.as_ref().expect("first-order needs B");
    let terms: Vec<f64> = match form {
        FirstOrderForm::Covariance => r.map(|k| b[k] * ev.g_ab[i][k]).collect(),
        FirstOrderForm::Difference => r.map(|k| b[k] * (ev.g_ab[i][k] - ev.g_a[k])).collect(),
    };
    match form {
        FirstOrderForm::Covariance => mean(&terms) - g0 * g0,
        FirstOrderForm::Difference => mean(&terms),
    }
}

pub fn estimate_sobol(ev: &PickFreezeEvaluations, form: FirstOrderForm) -> Result<SobolEstimates> {
    let n = ev.g_a.len();
    need_rows(n)?;
    let d = ev.g_ab.len();
    let (g0, v) = moments(ev, 0..n);
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(v));
    }
    let variance = Estimate::new(v, batch_se(n, |r| moments(ev, r).1));
    let total_variance: Vec<Estimate> = (0..d)
        .map(|i| Estimate::new(jansen(ev, i, 0..n), batch_se(n, |r| jansen(ev, i, r))))
        .collect();
    let total = (0..d)
        .map(|i| {
            Estimate::new(
                total_variance[i].value / v,
                batch_se(n, |r| jansen(ev, i, r.clone()) / moments(ev, r).1),
            )
        })
        .collect();
    let first = ev.g_b.as_ref().map(|_| {
        (0..d)
            .map(|i| {
                Estimate::new(
                    first_partial(ev, form, i, 0..n, g0) / v,
                    batch_se(n, |r| {
                        let (m, vb) = moments(ev, r.clone());
                        first_partial(ev, form, i, r, m) / vb
                    }),
                )
            })
            .collect()
    });
    Ok(SobolEstimates {
        mean: g0,
        variance,
        first,
        first_form: form,
        total,
        total_variance,
        cost: ev.cost,
    })
}

/// `V_ij^super = mean([G(A) - G(A_B^i) - G(A_B^j) + G(A_B^ij)]^2) / 4`,
/// costing `N` evaluations of `A_B^ij`.
pub fn estimate_superset(
    f: &ModelFunction,
    pf: &PickFreezeDesign,
    ev: &PickFreezeEvaluations,
    i: usize,
    j: usize,
) -> Result<Estimate> {
    let d = pf.dimension();
    if i >= d || j >= d || i == j {
        return Err(Error::InvalidParameter(format!(
            "superset pair ({}, {}) invalid for d = {d}",
            i + 1,
            j + 1
        )));
    }
    need_rows(pf.len())?;
    let g_ij = f.evaluate_rows(&pf.a_b_pair(i, j))?;
    let terms: Vec<f64> = (0..pf.len())
        .map(|k| 0.25 * (ev.g_a[k] - ev.g_ab[i][k] - ev.g_ab[j][k] + g_ij[k]).powi(2))
        .collect();
    Ok(mean_estimate(&terms))
}

#[derive(Debug, Clone, Serialize)]
pub struct MorrisMeasures {
    pub mu: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Elementary effects, `effects[i][t]` for input `i` and trajectory `t`.
    pub effects: Vec<Vec<f64>>,
    pub cost: LedgerSnapshot,
}

/// Elementary effects per unit-cube step; `R (d + 1)` evaluations.
pub fn morris_measures(f: &ModelFunction, design: &MorrisDesign) -> Result<MorrisMeasures> {
    let r = design.trajectories.len();
    if r < 2 {
        return Err(Error::EmptySample(format!(
            "sigma needs at least 2 trajectories, got {r}"
        )));
    }
    let d = f.dimension();
    let before = f.ledger();
    let mut effects = vec![Vec::with_capacity(r); d];
    for t in &design.trajectories {
        if t.points.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: t.points.ncols(),
            });
        }
        let g = f.evaluate_rows(&t.points)?;
        for (k, (&axis, &step)) in t.order.iter().zip(&t.steps).enumerate() {
            effects[axis].push((g[k + 1] - g[k]) / step);
        }
    }
    let cost = f.ledger().since(&before);
    let mu: Vec<f64> = effects.iter().map(|e| mean(e)).collect();
    let mu_star = effects
        .iter()
        .map(|e| mean(&e.iter().map(|v| v.abs()).collect::<Vec<_>>()))
        .collect();
    let sigma = effects
        .iter()
        .zip(&mu)
        .map(|(e, m)| (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt())
        .collect();
    Ok(MorrisMeasures {
        mu,
        mu_star,
        sigma,
        effects,
        cost,
    })
}

/// Dense `N x d` matrix helper used by tests and callers building designs by hand.
pub fn design_from_rows(space: &InputSpace, rows: &[Vec<f64>]) -> Result<SampleDesign> {
    let d = space.dimension();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let points = Array2::from_shape_vec((rows.len(), d), flat)
        .map_err(|e| Error::InvalidParameter(format!("rows must have length {d}: {e}")))?;
    SampleDesign::from_points(space, points)
}
