//! Tensor-grid Gauss–Legendre reference values for small models (`d <= 4`).
//!
//! Each axis carries a Gauss–Legendre rule in probability space, mapped
//! through the marginal quantile. Models that declare breakpoints get one
//! panel per smooth piece, which keeps the rule exact on piecewise
//! polynomials such as the g-function.

use serde::Serialize;

use crate::distributions::{InputDistribution, InputSpace};
use crate::error::{Error, Result};
use crate::estimators::unit_scale;
use crate::functions::ModelFunction;

pub const MAX_ORACLE_DIM: usize = 4;
pub const DEFAULT_ORDER: usize = 32;
const CHECK_TOLERANCE: f64 = 1e-8;
/// Step of the central difference of the analytic gradient used for `nu_ij`.
const CROSS_DELTA: f64 = 1e-6;

/// Gauss–Legendre nodes and weights on `[0, 1]`; weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn gauss_legendre(n: usize) -> GaussLegendre {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = 0.5 * (1.0 - x);
        nodes[n - 1 - k] = 0.5 * (1.0 + x);
        weights[k] = 0.5 * w;
        weights[n - 1 - k] = 0.5 * w;
    }
    GaussLegendre { nodes, weights }
}

/// Nodes (in input space) and probability weights for one axis.
#[derive(Debug, Clone)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Splits `(0, 1)` in probability space at the breakpoints and puts
/// `order / panels` Gauss points (at least 4) on each panel.
pub fn axis_rule(marginal: &InputDistribution, order: usize, breakpoints: &[f64]) -> Result<AxisRule> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .map(|&b| marginal.cdf(b))
        .filter(|&p| p > 0.0 && p < 1.0)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(1.0);
    let panels = edges.len() - 1;
    let per_panel = (order / panels).max(4);
    let gl = gauss_legendre(per_panel);
    let mut nodes = Vec::with_capacity(per_panel * panels);
    let mut weights = Vec::with_capacity(per_panel * panels);
    for w in edges.windows(2) {
        let width = w[1] - w[0];
        for (t, wt) in gl.nodes.iter().zip(&gl.weights) {
            nodes.push(marginal.quantile(w[0] + width * t)?);
            weights.push(width * wt);
        }
    }
    Ok(AxisRule { nodes, weights })
}

/// Model values on the full tensor grid.
struct Grid {
    axes: Vec<AxisRule>,
    strides: Vec<usize>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    len: usize,
}

impl Grid {
    fn new(f: &ModelFunction, space: &InputSpace, order: usize) -> Result<Self> {
        let d = space.dimension();
        if d > MAX_ORACLE_DIM {
            return Err(Error::InvalidParameter(format!(
                "quadrature oracle supports d <= {MAX_ORACLE_DIM}, got {d}"
            )));
        }
        if f.dimension() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.dimension(),
            });
        }
        let axes = (0..d)
            .map(|i| axis_rule(space.marginal(i), order, &f.breakpoints(i)))
            .collect::<Result<Vec<_>>>()?;
        let sizes: Vec<usize> = axes.iter().map(|a| a.nodes.len()).collect();
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let len: usize = sizes.iter().product();
        let mut points = Vec::with_capacity(len);
        let mut weights = Vec::with_capacity(len);
        for flat in 0..len {
            let mut x = vec![0.0; d];
            let mut w = 1.0;
            for i in 0..d {
                let k = (flat / strides[i]) % sizes[i];
                x[i] = axes[i].nodes[k];
                w *= axes[i].weights[k];
            }
            points.push(x);
            weights.push(w);
        }
        Ok(Self {
            axes,
            strides,
            points,
            weights,
            len,
        })
    }

    fn size(&self, axis: usize) -> usize {
        self.axes[axis].nodes.len()
    }

    fn index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.size(axis)
    }

    fn mean(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// `E[G | x_keep]` on the sub-grid of kept axes, with its weights.
    fn conditional_mean(&self, values: &[f64], keep: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let sizes: Vec<usize> = keep.iter().map(|&a| self.size(a)).collect();
        let len: usize = sizes.iter().product();
        let mut sums = vec![0.0; len];
        let mut other_weight = vec![0.0; len];
        for (flat, &value) in values.iter().enumerate().take(self.len) {
            let mut sub = 0;
            let mut keep_w = 1.0;
            for (&a, &s) in keep.iter().zip(&sizes) {
                let k = self.index(flat, a);
                sub = sub * s + k;
                keep_w *= self.axes[a].weights[k];
            }
            let w_other = self.weights[flat] / keep_w;
            sums[sub] += w_other * value;
            other_weight[sub] = keep_w;
        }
        (sums, other_weight)
    }

    fn closed_variance(&self, values: &[f64], keep: &[usize], g0: f64) -> f64 {
        let (means, w) = self.conditional_mean(values, keep);
        means.iter().zip(&w).map(|(m, w)| w * (m - g0).powi(2)).sum()
    }

    /// `E_{~i} Var_i[G]`.
    fn total_variance(&self, values: &[f64], axis: usize) -> f64 {
        let n = self.size(axis);
        let stride = self.strides[axis];
        let wa = &self.axes[axis].weights;
        let mut acc = 0.0;
        for base in 0..self.len {
            if self.index(base, axis) != 0 {
                continue;
            }
            let other = self.weights[base] / wa[0];
            let line = (0..n).map(|k| values[base + k * stride]);
            let mean: f64 = line.clone().zip(wa).map(|(v, w)| v * w).sum();
            let var: f64 = line.zip(wa).map(|(v, w)| w * (v - mean).powi(2)).sum();
            acc += other * var;
        }
        acc
    }

    /// `E_{~ij}` of the variance of the doubly-centred `(i, j)` slice.
    fn superset_variance(&self, values: &[f64], i: usize, j: usize) -> f64 {
        let (ni, nj) = (self.size(i), self.size(j));
        let (si, sj) = (self.strides[i], self.strides[j]);
        let (wi, wj) = (&self.axes[i].weights, &self.axes[j].weights);
        let mut acc = 0.0;
        let mut block = vec![0.0; ni * nj];
        for base in 0..self.len {
            if self.index(base, i) != 0 || self.index(base, j) != 0 {
                continue;
            }
            let other = self.weights[base] / (wi[0] * wj[0]);
            for a in 0..ni {
                for b in 0..nj {
                    block[a * nj + b] = values[base + a * si + b * sj];
                }
            }
            let row_mean: Vec<f64> = (0..ni)
                .map(|a| (0..nj).map(|b| wj[b] * block[a * nj + b]).sum())
                .collect();
            let col_mean: Vec<f64> = (0..nj)
                .map(|b| (0..ni).map(|a| wi[a] * block[a * nj + b]).sum())
                .collect();
            let all: f64 = (0..ni).map(|a| wi[a] * row_mean[a]).sum();
            let mut s = 0.0;
            for a in 0..ni {
                for b in 0..nj {
                    let r = block[a * nj + b] - row_mean[a] - col_mean[b] + all;
                    s += wi[a] * wj[b] * r * r;
                }
            }
            acc += other * s;
        }
        acc
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnovaTotals {
    pub mean: f64,
    pub variance: f64,
    /// `V_i`
    pub first: Vec<f64>,
    /// `V_i^tot`
    pub total: Vec<f64>,
    /// `V_ij` (upper triangle, `i < j`; zero elsewhere).
    pub second: Vec<Vec<f64>>,
    /// `V_ij^super` (upper triangle).
    pub superset: Vec<Vec<f64>>,
    /// Set when the order-`q` and order-`3q/4` rules disagree by more than
    /// `1e-8` relative on `V` or any `V_i^tot`.
    pub precision_warning: bool,
}

impl AnovaTotals {
    pub fn first_index(&self, i: usize) -> f64 {
        self.first[i] / self.variance
    }

    pub fn total_index(&self, i: usize) -> f64 {
        self.total[i] / self.variance
    }
}

fn anova_on(grid: &Grid, values: &[f64], d: usize) -> AnovaTotals {
    let g0 = grid.mean(values);
    let variance: f64 = values
        .iter()
        .zip(&grid.weights)
        .map(|(v, w)| w * (v - g0).powi(2))
        .sum();
    let first: Vec<f64> = (0..d).map(|i| grid.closed_variance(values, &[i], g0)).collect();
    let total: Vec<f64> = (0..d).map(|i| grid.total_variance(values, i)).collect();
    let mut second = vec![vec![0.0; d]; d];
    let mut superset = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            second[i][j] = grid.closed_variance(values, &[i, j], g0) - first[i] - first[j];
            superset[i][j] = grid.superset_variance(values, i, j);
        }
    }
    AnovaTotals {
        mean: g0,
        variance,
        first,
        total,
        second,
        superset,
        precision_warning: false,
    }
}

fn grid_values(f: &ModelFunction, grid: &Grid) -> Result<Vec<f64>> {
    grid.points.iter().map(|x| f.evaluate(x)).collect()
}

/// Mean, variance, first-order, total, second-order and superset variances.
pub fn anova_totals(f: &ModelFunction, space: &InputSpace, order: usize) -> Result<AnovaTotals> {
    let d = space.dimension();
    let grid = Grid::new(f, space, order)?;
    let values = grid_values(f, &grid)?;
    let mut out = anova_on(&grid, &values, d);

    let coarse_order = (order * 3 / 4).max(4);
    let coarse = Grid::new(f, space, coarse_order)?;
    let coarse_values = grid_values(f, &coarse)?;
    let g0 = coarse.mean(&coarse_values);
    let v_coarse: f64 = coarse_values
        .iter()
        .zip(&coarse.weights)
        .map(|(v, w)| w * (v - g0).powi(2))
        .sum();
    let scale = out
        .variance
        .max(1e-12 * out.mean * out.mean)
        .max(f64::MIN_POSITIVE);
    let mut worst = (v_coarse - out.variance).abs() / scale;
    for i in 0..d {
        worst = worst.max((coarse.total_variance(&coarse_values, i) - out.total[i]).abs() / scale);
    }
    out.precision_warning = worst > CHECK_TOLERANCE;
    Ok(out)
}

/// Quadrature values of the derivative-based measures.
#[derive(Debug, Clone, Serialize)]
pub struct DgsmExact {
    pub nu: Vec<f64>,
    /// `E[dG/dx_i]`
    pub w: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// `(m, w_i^(m))`, defined for uniform inputs only.
    pub w_m: Vec<(f64, Vec<Option<f64>>)>,
    pub sigma_small: Vec<Option<f64>>,
    pub tau: Vec<Option<f64>>,
    /// `nu_ij` (upper triangle).
    pub nu_cross: Vec<Vec<f64>>,
}

pub fn dgsm_exact(
    f: &ModelFunction,
    space: &InputSpace,
    order: usize,
    m_list: &[f64],
) -> Result<DgsmExact> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient(f.name().to_string()));
    }
    let d = space.dimension();
    let grid = Grid::new(f, space, order)?;
    let scales: Vec<Option<(f64, f64)>> = (0..d).map(|i| unit_scale(space.marginal(i))).collect();

    let mut nu = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut mu_star = vec![0.0; d];
    let mut sigma = vec![0.0; d];
    let mut tau = vec![0.0; d];
    let mut w_m = vec![vec![0.0; d]; m_list.len()];
    let mut nu_cross = vec![vec![0.0; d]; d];

    for (x, &weight) in grid.points.iter().zip(&grid.weights) {
        let g = f.gradient(x)?;
        for i in 0..d {
            let gi = g[i];
            nu[i] += weight * gi * gi;
            w[i] += weight * gi;
            mu_star[i] += weight * gi.abs();
            match (space.marginal(i), scales[i]) {
                (_, Some((lo, width))) => {
                    let t = (x[i] - lo) / width;
                    let gt = gi * width;
                    sigma[i] += weight * 0.5 * t * (1.0 - t) * gt * gt;
                    tau[i] += weight * (1.0 - 3.0 * t + 3.0 * t * t) / 6.0 * gt * gt;
                    for (k, &m) in m_list.iter().enumerate() {
                        w_m[k][i] += weight * t.powf(m) * gt;
                    }
                }
                (InputDistribution::Normal { mu, sigma: s }, None) => {
                    tau[i] += weight * ((x[i] - mu).powi(2) + s * s) / 4.0 * gi * gi;
                }
                _ => {}
            }
        }
        for j in 0..d {
            let mut up = x.clone();
            let mut down = x.clone();
            up[j] += CROSS_DELTA;
            down[j] -= CROSS_DELTA;
            let gu = f.gradient(&up)?;
            let gd = f.gradient(&down)?;
            for i in 0..j {
                let cross = (gu[i] - gd[i]) / (2.0 * CROSS_DELTA);
                nu_cross[i][j] += weight * cross * cross;
            }
        }
    }

    let uniform = |i: usize| scales[i].is_some();
    let tau_defined = |i: usize| uniform(i) || space.marginal(i).is_normal();
    Ok(DgsmExact {
        nu,
        w,
        mu_star,
        w_m: m_list
            .iter()
            .zip(w_m)
            .map(|(&m, vals)| {
                (
                    m,
                    vals.into_iter()
                        .enumerate()
                        .map(|(i, v)| uniform(i).then_some(v))
                        .collect(),
                )
            })
            .collect(),
        sigma_small: sigma
            .into_iter()
            .enumerate()
            .map(|(i, v)| uniform(i).then_some(v))
            .collect(),
        tau: tau
            .into_iter()
            .enumerate()
            .map(|(i, v)| tau_defined(i).then_some(v))
            .collect(),
        nu_cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{builtin, FnModel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let gl = gauss_legendre(8);
        assert_abs_diff_eq!(gl.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        for p in 0..16 {
            let q: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(p)).sum();
            assert_abs_diff_eq!(q, 1.0 / (p as f64 + 1.0), epsilon = 1e-14);
        }
        let one = gauss_legendre(1);
        assert_eq!(one.nodes, vec![0.5]);
    }

    #[test]
    fn bilinear_model_anova() {
        let f = ModelFunction::new(FnModel::new("x1+x1x2", 2, |x| x[0] + x[0] * x[1]));
        let a = anova_totals(&f, &InputSpace::unit_cube(2), DEFAULT_ORDER).unwrap();
        assert_abs_diff_eq!(a.variance, 31.0 / 144.0, epsilon = 1e-13);
        assert_abs_diff_eq!(a.total[0], 7.0 / 36.0, epsilon = 1e-13);
        assert_abs_diff_eq!(a.total[1], 1.0 / 36.0, epsilon = 1e-13);
        assert_abs_diff_eq!(a.superset[0][1], 1.0 / 144.0, epsilon = 1e-13);
        assert_abs_diff_eq!(a.second[0][1], 1.0 / 144.0, epsilon = 1e-13);
        assert!(!a.precision_warning);
    }

    #[test]
    fn constant_model_is_degenerate() {
        let f = ModelFunction::new(FnModel::new("c", 2, |_| 3.0));
        let a = anova_totals(&f, &InputSpace::unit_cube(2), 16).unwrap();
        assert_abs_diff_eq!(a.variance, 0.0, epsilon = 1e-15);
        assert!(a.total.iter().all(|t| t.abs() < 1e-15));
        assert!(!a.precision_warning);
    }

    #[test]
    fn gfunction_variance_with_kink_panels() {
        let a_coef = [0.0, 1.0];
        let f = builtin("gfunction", &a_coef).unwrap();
        let a = anova_totals(&f, &InputSpace::unit_cube(2), DEFAULT_ORDER).unwrap();
        let closed = a_coef.iter().map(|ai| 1.0 + (1.0 / 3.0) / (1.0 + ai).powi(2)).product::<f64>() - 1.0;
        assert_abs_diff_eq!(a.variance, closed, epsilon = 1e-12);
        assert!(!a.precision_warning);
    }

    #[test]
    fn rejects_large_dimension() {
        let f = builtin("linear_sum", &[1.0; 5]).unwrap();
        assert!(anova_totals(&f, &InputSpace::unit_cube(5), 8).is_err());
    }

    #[test]
    fn nonsmooth_model_without_breakpoints_triggers_warning() {
        let f = ModelFunction::new(FnModel::new("kink", 1, |x| (x[0] - 0.3).abs()));
        let a = anova_totals(&f, &InputSpace::unit_cube(1), DEFAULT_ORDER).unwrap();
        assert!(a.precision_warning);
    }

    #[test]
    fn linear_one_var_measures() {
        let c = 3.0;
        let f = builtin("linear_one_var", &[c, 1.0]).unwrap();
        let e = dgsm_exact(&f, &InputSpace::unit_cube(1), 16, &[1.0]).unwrap();
        assert_abs_diff_eq!(e.nu[0], c * c, epsilon = 1e-12);
        assert_abs_diff_eq!(e.sigma_small[0].unwrap(), c * c / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.tau[0].unwrap(), c * c / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.w_m[0].1[0].unwrap(), c / 2.0, epsilon = 1e-12);
    }
}
