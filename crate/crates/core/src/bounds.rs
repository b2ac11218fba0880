//! Lower and upper bounds on total Sobol' indices from derivative measures.
//!
//! Uniform inputs on `[a, b]` are handled on the rescaled variable
//! `t = (x - a) / (b - a)`, so `nu`, `sigma` and `w^(m)` below are always the
//! unit-interval versions.

use std::f64::consts::PI;

use serde::Serialize;

use crate::distributions::{InputDistribution, InputSpace, PoincareRule};
use crate::error::{Error, Result};
use crate::estimators::{mean_estimate, unit_scale, DgsmEstimates, Estimate, PairEstimate};
use crate::functions::{GradientSample, LedgerSnapshot, ModelFunction};
use crate::par::map_rows;
use crate::sampling::SampleDesign;

pub const M_MIN: f64 = 0.05;
pub const M_MAX: f64 = 200.0;
pub const M_GRID: usize = 200;
pub const M_TOL: f64 = 1e-3;

/// `num / V`, with zero numerators giving zero even when `V = 0`.
fn ratio(num: f64, v: f64) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(v));
    }
    Ok(num / v)
}

/// `G(x)`, `G(a_i, z)` and `G(b_i, z)` on a design, for every input.
#[derive(Debug, Clone)]
pub struct LowerBoundSample {
    pub g_x: Vec<f64>,
    /// `g_lo[i][r]` is `G` at row `r` with `x_i` moved to its lower end.
    pub g_lo: Vec<Vec<f64>>,
    pub g_hi: Vec<Vec<f64>>,
    pub cost: LedgerSnapshot,
}

/// Adds `2 N d` evaluations (plus `N` when `grads` carries no values).
pub fn lower_bound_sample(
    f: &ModelFunction,
    space: &InputSpace,
    design: &SampleDesign,
    grads: &GradientSample,
) -> Result<LowerBoundSample> {
    let d = space.dimension();
    let ends = (0..d)
        .map(|i| {
            unit_scale(space.marginal(i))
                .map(|(lo, w)| (lo, lo + w))
                .ok_or_else(|| Error::UnsupportedMeasure {
                    measure: "LB1/LB2",
                    input: i + 1,
                    reason: format!("needs a uniform marginal, got {}", space.marginal(i)),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let before = f.ledger();
    let g_x = match &grads.values {
        Some(v) => v.clone(),
        None => f.evaluate_rows(&design.points)?,
    };
    let rows = map_rows(design.len(), f.concurrent(), |r| {
        let mut x = design.points.row(r).to_vec();
        let mut out = Vec::with_capacity(2 * d);
        for (i, &(lo, hi)) in ends.iter().enumerate() {
            let keep = x[i];
            x[i] = lo;
            out.push(f.evaluate(&x)?);
            x[i] = hi;
            out.push(f.evaluate(&x)?);
            x[i] = keep;
        }
        Ok(out)
    })?;
    let g_lo = (0..d).map(|i| rows.iter().map(|r| r[2 * i]).collect()).collect();
    let g_hi = (0..d).map(|i| rows.iter().map(|r| r[2 * i + 1]).collect()).collect();
    Ok(LowerBoundSample {
        g_x,
        g_lo,
        g_hi,
        cost: f.ledger().since(&before),
    })
}

fn unit_grads(grads: &GradientSample, space: &InputSpace, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, width) = unit_scale(space.marginal(i)).ok_or_else(|| Error::UnsupportedMeasure {
        measure: "LB1/LB2",
        input: i + 1,
        reason: format!("needs a uniform marginal, got {}", space.marginal(i)),
    })?;
    let t = grads.points.column(i).iter().map(|x| (x - lo) / width).collect();
    let g = grads.grads.column(i).iter().map(|g| g * width).collect();
    Ok((t, g))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lb1 {
    pub estimate: Estimate,
    /// `nu_i = 0` on the sample; the bound is reported as zero.
    pub degenerate: bool,
}

fn lb1_value(num: &[f64], nu: &[f64], v: f64) -> f64 {
    let n = num.len() as f64;
    let mean_num = num.iter().sum::<f64>() / n;
    let mean_nu = nu.iter().sum::<f64>() / n;
    if mean_nu == 0.0 {
        return 0.0;
    }
    mean_num * mean_num / (4.0 * mean_nu * v)
}

/// `(E[(G(1,z) - G(0,z)) (G(1,z) + G(0,z) - 2 G(x))])^2 / (4 nu_i V)`.
pub fn lb1(lbs: &LowerBoundSample, grads: &GradientSample, space: &InputSpace, v: f64) -> Result<Vec<Lb1>> {
    let n = lbs.g_x.len();
    (0..space.dimension())
        .map(|i| {
            let (_, g) = unit_grads(grads, space, i)?;
            let nu: Vec<f64> = g.iter().map(|g| g * g).collect();
            let num: Vec<f64> = (0..n)
                .map(|r| {
                    let (lo, hi) = (lbs.g_lo[i][r], lbs.g_hi[i][r]);
                    (hi - lo) * (hi + lo - 2.0 * lbs.g_x[r])
                })
                .collect();
            if nu.iter().all(|&x| x == 0.0) {
                return Ok(Lb1 {
                    estimate: Estimate::new(0.0, 0.0),
                    degenerate: true,
                });
            }
            if !(v > 0.0) {
                return Err(Error::DegenerateVariance(v));
            }
            let value = lb1_value(&num, &nu, v);
            let size = n / 10;
            let se = if size >= 1 {
                let vals: Vec<f64> = (0..10)
                    .map(|k| {
                        let r = k * size..if k == 9 { n } else { (k + 1) * size };
                        lb1_value(&num[r.clone()], &nu[r], v)
                    })
                    .collect();
                let m = vals.iter().sum::<f64>() / 10.0;
                (vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 90.0).sqrt()
            } else {
                f64::NAN
            };
            Ok(Lb1 {
                estimate: Estimate::new(value, se),
                degenerate: false,
            })
        })
        .collect()
}

/// Precomputed pieces of `gamma(m)` for one input.
#[derive(Debug, Clone)]
pub struct GammaTerms {
    /// `E[G(1, z) - G(x)]`
    pub end_gap: f64,
    t: Vec<f64>,
    g: Vec<f64>,
    v: f64,
}

impl GammaTerms {
    pub fn new(lbs: &LowerBoundSample, grads: &GradientSample, space: &InputSpace, i: usize, v: f64) -> Result<Self> {
        let (t, g) = unit_grads(grads, space, i)?;
        let gaps: Vec<f64> = lbs.g_hi[i].iter().zip(&lbs.g_x).map(|(h, x)| h - x).collect();
        Ok(Self {
            end_gap: mean_estimate(&gaps).value,
            t,
            g,
            v,
        })
    }

    /// `w^(m)` on the unit scale.
    pub fn w_m(&self, m: f64) -> f64 {
        let terms: Vec<f64> = self.t.iter().zip(&self.g).map(|(t, g)| t.powf(m) * g).collect();
        mean_estimate(&terms).value
    }

    pub fn gamma(&self, m: f64) -> Result<f64> {
        let inner = self.end_gap - self.w_m(m + 1.0);
        ratio((2.0 * m + 1.0) * inner * inner / (m + 1.0).powi(2), self.v)
    }
}

/// `gamma(m) = (2m + 1) [E(G(1,z) - G(x)) - w^(m+1)]^2 / ((m + 1)^2 V)` per input.
pub fn gamma(lbs: &LowerBoundSample, grads: &GradientSample, space: &InputSpace, v: f64, m: f64) -> Result<Vec<f64>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma needs m > 0, got {m}")));
    }
    (0..space.dimension())
        .map(|i| GammaTerms::new(lbs, grads, space, i, v)?.gamma(m))
        .collect()
}

/// Log-spaced grid on `[M_MIN, M_MAX]`.
pub fn m_grid() -> Vec<f64> {
    let (a, b) = (M_MIN.ln(), M_MAX.ln());
    (0..M_GRID)
        .map(|k| (a + (b - a) * k as f64 / (M_GRID - 1) as f64).exp())
        .collect()
}

/// Grid scan followed by golden-section refinement around the best grid
/// point. Returns `None` when `gamma` is zero everywhere on the grid.
pub fn maximize_gamma_fn(mut gamma: impl FnMut(f64) -> f64) -> Option<(f64, f64)> {
    let grid = m_grid();
    let vals: Vec<f64> = grid.iter().map(|&m| gamma(m)).collect();
    let (k, &best) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(best > 0.0) {
        return None;
    }
    let mut lo = grid[k.saturating_sub(1)];
    let mut hi = grid[(k + 1).min(M_GRID - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (gamma(c), gamma(d));
    while hi - lo >= M_TOL {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = gamma(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = gamma(d);
        }
    }
    let m = 0.5 * (lo + hi);
    let fm = gamma(m);
    if fm >= best {
        Some((m, fm))
    } else {
        Some((grid[k], best))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lb2 {
    pub m_star: Option<f64>,
    pub value: f64,
}

pub fn maximize_gamma(lbs: &LowerBoundSample, grads: &GradientSample, space: &InputSpace, v: f64) -> Result<Vec<Lb2>> {
    (0..space.dimension())
        .map(|i| {
            let terms = GammaTerms::new(lbs, grads, space, i, v)?;
            let mut err = None;
            let found = maximize_gamma_fn(|m| match terms.gamma(m) {
                Ok(g) => g,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(match found {
                Some((m, g)) => Lb2 { m_star: Some(m), value: g },
                None => Lb2 { m_star: None, value: 0.0 },
            })
        })
        .collect()
}

pub fn lb_star(lb1: f64, lb2: f64) -> f64 {
    lb1.max(lb2)
}

/// `nu / (pi^2 V)` with `nu` on the unit scale.
pub fn ub1(nu: f64, v: f64) -> Result<f64> {
    // Same operation order as `ub_poincare` with the unit-interval constant.
    ratio(1.0 / (PI * PI) * nu, v)
}

pub fn ub2(sigma_small: f64, v: f64) -> Result<f64> {
    ratio(sigma_small, v)
}

pub fn ub_poincare(nu: f64, constant: f64, v: f64) -> Result<f64> {
    ratio(constant * nu, v)
}

/// `sigma^4 w^2 / ((mu^2 + sigma^2) V)` for a normal input.
pub fn normal_lower_bound(w: f64, marginal: &InputDistribution, v: f64) -> Result<f64> {
    match *marginal {
        InputDistribution::Normal { mu, sigma } => {
            ratio(sigma.powi(4) * w * w / (mu * mu + sigma * sigma), v)
        }
        ref other => Err(Error::UnsupportedMeasure {
            measure: "normal lower bound",
            input: 0,
            reason: format!("needs a normal marginal, got {other}"),
        }),
    }
}

/// `[sigma_i^2 c^2 / V, sigma_i^2 C^2 / V]` given `c <= |dG/dx_i| <= C`.
pub fn theorem1_range(c: f64, upper: f64, v: f64, marginal: &InputDistribution) -> Result<(f64, f64)> {
    if !(c >= 0.0) || !(c <= upper) {
        return Err(Error::InvalidParameter(format!(
            "derivative envelope needs 0 <= c <= C, got c = {c}, C = {upper}"
        )));
    }
    let s2 = marginal.variance();
    if !s2.is_finite() {
        return Err(Error::InvalidParameter(format!("{marginal} has no finite variance")));
    }
    Ok((ratio(s2 * c * c, v)?, ratio(s2 * upper * upper, v)?))
}

/// Heuristic only: `(min, max)` of `|dG/dx_i|` over the design points.
/// It is not a guaranteed envelope and is never used in place of one.
pub fn empirical_envelope(grads: &GradientSample) -> Vec<(f64, f64)> {
    (0..grads.dimension())
        .map(|i| {
            grads.grads.column(i).iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), g| {
                (lo.min(g.abs()), hi.max(g.abs()))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupBound {
    pub group: Vec<usize>,
    pub tau: f64,
    /// `24 tau / (pi^2 V)` for uniform groups, `2 tau / V` for normal groups.
    pub ub: f64,
    /// Equals the total index of the group when `G` is linear in its members.
    pub linear_value: f64,
}

pub fn group_bounds(tau: f64, v: f64, space: &InputSpace, group: &[usize]) -> Result<GroupBound> {
    if group.is_empty() {
        return Ok(GroupBound {
            group: Vec::new(),
            tau: 0.0,
            ub: 0.0,
            linear_value: 0.0,
        });
    }
    for &i in group {
        if i >= space.dimension() {
            return Err(Error::InvalidParameter(format!("group member x{} out of range", i + 1)));
        }
    }
    let uniform = group.iter().all(|&i| space.marginal(i).is_uniform());
    let normal = group.iter().all(|&i| space.marginal(i).is_normal());
    let (ub, linear_value) = if uniform {
        (ratio(24.0 * tau / (PI * PI), v)?, ratio(tau, v)?)
    } else if normal {
        (ratio(2.0 * tau, v)?, ratio(2.0 * tau, v)?)
    } else {
        return Err(Error::UnsupportedMeasure {
            measure: "group bound",
            input: group[0] + 1,
            reason: "group members must be all uniform or all normal".into(),
        });
    };
    Ok(GroupBound {
        group: group.to_vec(),
        tau,
        ub,
        linear_value,
    })
}

pub fn superset_ub(nu_ij: f64, c_i: f64, c_j: f64, v: f64) -> Result<f64> {
    ratio(c_i * c_j * nu_ij, v)
}

#[derive(Debug, Clone, Serialize)]
pub struct InputBounds {
    pub lb1: Option<Lb1>,
    pub lb2: Option<Lb2>,
    pub lb_star: Option<f64>,
    pub ub1: Option<f64>,
    pub ub2: Option<f64>,
    pub poincare_constant: Option<f64>,
    pub poincare_rule: Option<PoincareRule>,
    pub ub_poincare: Option<f64>,
    pub normal_lb: Option<f64>,
    pub theorem1_range: Option<(f64, f64)>,
    /// Labelled heuristic, see [`empirical_envelope`].
    pub empirical_envelope: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct PairBound {
    pub i: usize,
    pub j: usize,
    pub nu_ij: f64,
    pub ub: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub variance: f64,
    /// Set when `V <= 0`; no bounds are computed then.
    pub degenerate: bool,
    pub inputs: Vec<InputBounds>,
    pub groups: Vec<GroupBound>,
    pub pairs: Vec<PairBound>,
}

#[derive(Debug, Clone, Default)]
pub struct BoundsOptions<'a> {
    /// Enables LB1, LB2 and LB*; needs the extra endpoint evaluations.
    pub lower: Option<&'a LowerBoundSample>,
    /// User-supplied `(c, C)` per input.
    pub envelopes: Option<Vec<(f64, f64)>>,
    pub groups: Vec<Vec<usize>>,
    pub crossed: Option<&'a [PairEstimate]>,
}

pub fn bounds_report(
    space: &InputSpace,
    grads: &GradientSample,
    dgsm: &DgsmEstimates,
    v: f64,
    opts: &BoundsOptions<'_>,
) -> Result<BoundsReport> {
    let d = space.dimension();
    if !(v > 0.0) {
        return Ok(BoundsReport {
            variance: v,
            degenerate: true,
            inputs: Vec::new(),
            groups: Vec::new(),
            pairs: Vec::new(),
        });
    }
    let (lb1s, lb2s) = match opts.lower {
        Some(lbs) => (
            Some(lb1(lbs, grads, space, v)?),
            Some(maximize_gamma(lbs, grads, space, v)?),
        ),
        None => (None, None),
    };
    let envelope = empirical_envelope(grads);
    let constants: Vec<Option<(f64, PoincareRule)>> = (0..d)
        .map(|i| space.marginal(i).poincare_constant_with_rule().ok())
        .collect();
    let mut inputs = Vec::with_capacity(d);
    for i in 0..d {
        let m = space.marginal(i);
        let nu = dgsm.nu[i].value;
        let width = unit_scale(m).map(|(_, w)| w);
        let l1 = lb1s.as_ref().map(|l| l[i]);
        let l2 = lb2s.as_ref().map(|l| l[i]);
        inputs.push(InputBounds {
            lb1: l1,
            lb2: l2,
            lb_star: l1.zip(l2).map(|(a, b)| lb_star(a.estimate.value, b.value)),
            ub1: width.map(|w| ub1(nu * w * w, v)).transpose()?,
            ub2: dgsm.sigma_small[i].map(|s| ub2(s.value, v)).transpose()?,
            poincare_constant: constants[i].map(|c| c.0),
            poincare_rule: constants[i].map(|c| c.1),
            ub_poincare: constants[i].map(|c| ub_poincare(nu, c.0, v)).transpose()?,
            normal_lb: if m.is_normal() {
                Some(normal_lower_bound(dgsm.w[i].value, m, v)?)
            } else {
                None
            },
            theorem1_range: opts
                .envelopes
                .as_ref()
                .map(|e| theorem1_range(e[i].0, e[i].1, v, m))
                .transpose()?,
            empirical_envelope: envelope[i],
        });
    }
    let groups = opts
        .groups
        .iter()
        .map(|g| {
            let tau = if g.is_empty() {
                0.0
            } else {
                crate::estimators::estimate_tau(grads, space, g)?.value
            };
            group_bounds(tau, v, space, g)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = opts
        .crossed
        .unwrap_or(&[])
        .iter()
        .map(|p| {
            let ub = match (constants[p.i], constants[p.j]) {
                (Some(ci), Some(cj)) => Some(superset_ub(p.estimate.value, ci.0, cj.0, v)?),
                _ => None,
            };
            Ok(PairBound {
                i: p.i,
                j: p.j,
                nu_ij: p.estimate.value,
                ub,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsReport {
        variance: v,
        degenerate: false,
        inputs,
        groups,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{GFunction, LinearInOne};
    use approx::assert_abs_diff_eq;

    #[test]
    fn m_star_on_closed_forms() {
        for a in [vec![0.0, 1.0], vec![0.0, 1.0, 4.5, 9.0], vec![0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0]] {
            let g = GFunction::new(a);
            for i in 0..g.dimension() {
                let (m, _) = maximize_gamma_fn(|m| g.gamma(i, m)).unwrap();
                assert!((m - 9.64).abs() < 0.05, "m* = {m}");
            }
        }
        let l = LinearInOne::single(1.0);
        let (m, best) = maximize_gamma_fn(|m| l.gamma(m)).unwrap();
        assert!((m - 3.745).abs() < 0.01, "m* = {m}");
        // S^tot = 1 here, so LB* / S^tot is the maximum itself.
        assert!((0.47..=0.49).contains(&best), "{best}");
    }

    #[test]
    fn zero_gamma_has_no_maximiser() {
        assert!(maximize_gamma_fn(|_| 0.0).is_none());
    }

    #[test]
    fn theorem1_and_normal_examples() {
        let u = InputDistribution::unit_uniform();
        let (lo, hi) = theorem1_range(2.0, 2.0, 4.0 / 12.0, &u).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-14);
        let n = InputDistribution::normal(0.0, 2.0).unwrap();
        assert_abs_diff_eq!(theorem1_range(0.0, 3.0, 36.0, &n).unwrap().1, 1.0, epsilon = 1e-14);
        assert_eq!(theorem1_range(0.0, 3.0, 36.0, &n).unwrap().0, 0.0);
        assert!(theorem1_range(2.0, 1.0, 1.0, &u).is_err());
        let s = 1.7;
        let n = InputDistribution::normal(0.0, s).unwrap();
        assert_abs_diff_eq!(normal_lower_bound(1.0, &n, s * s).unwrap(), 1.0, epsilon = 1e-14);
        let n = InputDistribution::normal(2.0, s).unwrap();
        assert_abs_diff_eq!(
            normal_lower_bound(1.0, &n, s * s).unwrap(),
            s * s / (4.0 + s * s),
            epsilon = 1e-14
        );
        assert!(normal_lower_bound(1.0, &u, 1.0).is_err());
    }

    #[test]
    fn group_rules() {
        let space = InputSpace::new(vec![
            InputDistribution::unit_uniform(),
            InputDistribution::normal(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(group_bounds(1.0, 1.0, &space, &[]).unwrap().ub, 0.0);
        assert_abs_diff_eq!(group_bounds(1.0, 2.0, &space, &[0]).unwrap().ub, 12.0 / (PI * PI));
        assert_abs_diff_eq!(group_bounds(1.0, 2.0, &space, &[1]).unwrap().ub, 1.0);
        assert!(group_bounds(1.0, 2.0, &space, &[0, 1]).is_err());
    }

    #[test]
    fn degenerate_ratios() {
        assert_eq!(ub1(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(ub1(1.0, 0.0), Err(Error::DegenerateVariance(_))));
        assert_eq!(ub_poincare(0.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(lb_star(0.0, 0.0), 0.0);
    }
}
