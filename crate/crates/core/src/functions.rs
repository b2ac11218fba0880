//! Model functions, built-in test functions, gradient providers and the
//! evaluation ledger.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_rows;
use crate::sampling::SampleDesign;

/// Default forward-difference step.
pub const DEFAULT_FD_DELTA: f64 = 1e-5;

/// A deterministic scalar map on `R^d`.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn has_gradient(&self) -> bool {
        false
    }

    /// Writes `dG/dx_i` into `out`.
    fn gradient(&self, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::MissingGradient(self.name().to_string()))
    }

    /// Points where the model, or its derivative, is not smooth along `axis`.
    /// Quadrature splits its panels there.
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }

    /// Whether concurrent calls to `evaluate` are allowed.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Monotone evaluation counters. Finite-difference derivatives show up as
/// model evaluations; `gradient_evals` counts analytic gradient calls.
#[derive(Debug, Default)]
pub struct CostLedger {
    model_evals: AtomicU64,
    gradient_evals: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub model_evals: u64,
    pub gradient_evals: u64,
}

impl LedgerSnapshot {
    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            model_evals: self.model_evals - earlier.model_evals,
            gradient_evals: self.gradient_evals - earlier.gradient_evals,
        }
    }
}

impl CostLedger {
    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            model_evals: self.model_evals.load(Ordering::SeqCst),
            gradient_evals: self.gradient_evals.load(Ordering::SeqCst),
        }
    }

    fn add_model(&self, n: u64) {
        self.model_evals.fetch_add(n, Ordering::SeqCst);
    }

    fn add_gradient(&self, n: u64) {
        self.gradient_evals.fetch_add(n, Ordering::SeqCst);
    }
}

/// A model together with the ledger charged for every call.
/// Clones share the ledger.
#[derive(Clone)]
pub struct ModelFunction {
    model: Arc<dyn Model>,
    ledger: Arc<CostLedger>,
}

impl fmt::Debug for ModelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelFunction")
            .field("name", &self.model.name())
            .field("dimension", &self.model.dimension())
            .field("ledger", &self.ledger.snapshot())
            .finish()
    }
}

impl ModelFunction {
    pub fn new<M: Model + 'static>(model: M) -> Self {
        Self::from_arc(Arc::new(model))
    }

    pub fn from_arc(model: Arc<dyn Model>) -> Self {
        Self {
            model,
            ledger: Arc::new(CostLedger::default()),
        }
    }

    pub fn name(&self) -> &str {
        self.model.name()
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    pub fn has_gradient(&self) -> bool {
        self.model.has_gradient()
    }

    pub fn breakpoints(&self, axis: usize) -> Vec<f64> {
        self.model.breakpoints(axis)
    }

    pub fn concurrent(&self) -> bool {
        self.model.concurrent()
    }

    pub fn ledger(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        self.ledger.add_model(1);
        self.model.evaluate(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        if !self.model.has_gradient() {
            return Err(Error::MissingGradient(self.name().to_string()));
        }
        self.ledger.add_gradient(1);
        let mut out = vec![0.0; x.len()];
        self.model.gradient(x, &mut out)?;
        Ok(out)
    }

    /// Evaluates every row of `points`, in parallel when the model allows it.
    pub fn evaluate_rows(&self, points: &Array2<f64>) -> Result<Vec<f64>> {
        if points.ncols() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: points.ncols(),
            });
        }
        map_rows(points.nrows(), self.concurrent(), |r| {
            let row = points.row(r).to_vec();
            self.evaluate(&row)
        })
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Model built from closures; handy for one-off analytic models.
pub struct FnModel {
    name: String,
    dimension: usize,
    value: ValueFn,
    gradient: Option<GradientFn>,
    breakpoints: Vec<Vec<f64>>,
}

impl FnModel {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dimension,
            value: Box::new(value),
            gradient: None,
            breakpoints: vec![Vec::new(); dimension],
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    pub fn with_breakpoints(mut self, axis: usize, points: Vec<f64>) -> Self {
        self.breakpoints[axis] = points;
        self
    }
}

impl Model for FnModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok((self.value)(x))
    }
    fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.gradient {
            Some(g) => {
                g(x, out);
                Ok(())
            }
            None => Err(Error::MissingGradient(self.name.clone())),
        }
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        self.breakpoints[axis].clone()
    }
}

/// `G = g0 + c (x - 1/2)` on one input; the equality case of the
/// derivative-envelope bounds.
#[derive(Debug, Clone)]
pub struct LinearOneVar {
    pub c: f64,
    pub g0: f64,
}

impl Model for LinearOneVar {
    fn name(&self) -> &str {
        "linear_one_var"
    }
    fn dimension(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.g0 + self.c * (x[0] - 0.5))
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.c;
        Ok(())
    }
}

/// `G = sum b_i x_i`.
#[derive(Debug, Clone)]
pub struct LinearSum {
    pub b: Vec<f64>,
}

impl Model for LinearSum {
    fn name(&self) -> &str {
        "linear_sum"
    }
    fn dimension(&self) -> usize {
        self.b.len()
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.b.iter().zip(x).map(|(b, x)| b * x).sum())
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.b);
        Ok(())
    }
}

/// Sobol' g-function `prod (|4 x_i - 2| + a_i) / (1 + a_i)`.
///
/// The derivative at the kink `x_i = 1/2` uses `sign(0) = +1`.
#[derive(Debug, Clone)]
pub struct GFunction {
    pub a: Vec<f64>,
}

impl GFunction {
    fn factor(&self, i: usize, x: f64) -> f64 {
        ((4.0 * x - 2.0).abs() + self.a[i]) / (1.0 + self.a[i])
    }
}

impl Model for GFunction {
    fn name(&self) -> &str {
        "gfunction"
    }
    fn dimension(&self) -> usize {
        self.a.len()
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(x.iter().enumerate().map(|(i, &xi)| self.factor(i, xi)).product())
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = x.len();
        let v: Vec<f64> = (0..d).map(|i| self.factor(i, x[i])).collect();
        // prefix/suffix products so a zero factor does not poison the others
        let mut prefix = vec![1.0; d + 1];
        for i in 0..d {
            prefix[i + 1] = prefix[i] * v[i];
        }
        let mut suffix = 1.0;
        for i in (0..d).rev() {
            let sign = if 4.0 * x[i] - 2.0 >= 0.0 { 1.0 } else { -1.0 };
            out[i] = 4.0 * sign / (1.0 + self.a[i]) * prefix[i] * suffix;
            suffix *= v[i];
        }
        Ok(())
    }
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        vec![0.5]
    }
}

/// Reduced Morris test function on four inputs:
/// `sum b_i x_i + sum_{i<=j} b_ij x_i x_j + sum_{i<=j} b_ij4 x_i x_j x_4`.
#[derive(Debug, Clone)]
pub struct MorrisReduced {
    monomials: Vec<(f64, [u8; 4])>,
}

impl MorrisReduced {
    pub const B: [f64; 4] = [0.05, 0.59, 10.0, 0.21];
    pub const B2: [[f64; 4]; 4] = [
        [0.0, 80.0, 60.0, 40.0],
        [0.0, 30.0, 0.73, 0.18],
        [0.0, 0.0, 0.64, 0.93],
        [0.0, 0.0, 0.0, 0.06],
    ];
    pub const B3: [[f64; 4]; 4] = [
        [0.0, 10.0, 0.98, 0.19],
        [0.0, 0.0, 0.49, 50.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ];

    pub fn new() -> Self {
        let mut monomials = Vec::new();
        for i in 0..4 {
            let mut e = [0u8; 4];
            e[i] += 1;
            monomials.push((Self::B[i], e));
        }
        for i in 0..4 {
            for j in i..4 {
                let mut e = [0u8; 4];
                e[i] += 1;
                e[j] += 1;
                monomials.push((Self::B2[i][j], e));
                let mut e3 = e;
                e3[3] += 1;
                monomials.push((Self::B3[i][j], e3));
            }
        }
        monomials.retain(|(c, _)| *c != 0.0);
        Self { monomials }
    }
}

impl Default for MorrisReduced {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for MorrisReduced {
    fn name(&self) -> &str {
        "morris_reduced"
    }
    fn dimension(&self) -> usize {
        4
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self
            .monomials
            .iter()
            .map(|(c, e)| c * (0..4).map(|k| x[k].powi(e[k] as i32)).product::<f64>())
            .sum())
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, e) in &self.monomials {
            for i in 0..4 {
                if e[i] == 0 {
                    continue;
                }
                let mut term = c * e[i] as f64;
                for k in 0..4 {
                    let p = if k == i { e[k] - 1 } else { e[k] };
                    term *= x[k].powi(p as i32);
                }
                out[i] += term;
            }
        }
        Ok(())
    }
}

/// Named built-in model with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Builtin {
    LinearOneVar { c: f64, g0: f64 },
    LinearSum { b: Vec<f64> },
    Gfunction { a: Vec<f64> },
    MorrisReduced,
}

/// Looks up a built-in by name. `params` holds the numeric parameters:
/// `[c, g0]`, `b`, `a`, or nothing.
pub fn builtin(name: &str, params: &[f64]) -> Result<ModelFunction> {
    let spec = match name {
        "linear_one_var" => {
            let c = *params.first().ok_or_else(|| {
                Error::InvalidParameter("linear_one_var needs c (and optionally g0)".into())
            })?;
            Builtin::LinearOneVar {
                c,
                g0: params.get(1).copied().unwrap_or(0.0),
            }
        }
        "linear_sum" => Builtin::LinearSum { b: params.to_vec() },
        "gfunction" => Builtin::Gfunction { a: params.to_vec() },
        "morris_reduced" => Builtin::MorrisReduced,
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    spec.build()
}

impl Builtin {
    pub fn build(&self) -> Result<ModelFunction> {
        Ok(match self {
            Self::LinearOneVar { c, g0 } => ModelFunction::new(LinearOneVar { c: *c, g0: *g0 }),
            Self::LinearSum { b } => {
                if b.is_empty() {
                    return Err(Error::InvalidParameter("linear_sum needs at least one b".into()));
                }
                ModelFunction::new(LinearSum { b: b.clone() })
            }
            Self::Gfunction { a } => {
                if a.is_empty() {
                    return Err(Error::InvalidParameter("gfunction needs at least one a".into()));
                }
                if a.iter().any(|&ai| !(ai > -1.0)) {
                    return Err(Error::InvalidParameter("gfunction requires a_i > -1".into()));
                }
                ModelFunction::new(GFunction { a: a.clone() })
            }
            Self::MorrisReduced => ModelFunction::new(MorrisReduced::new()),
        })
    }
}

/// How partial derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GradientMethod {
    Analytic,
    ForwardFd { delta: f64 },
}

/// Forward difference per axis, falling back to a backward difference where
/// `x_i + delta` would leave the support. `G(x)` is evaluated once, so the
/// cost is exactly `d + 1` evaluations. Returns `(G(x), gradient)`.
pub fn fd_gradient_with_value(
    f: &ModelFunction,
    x: &[f64],
    delta: f64,
    bounds: &[(f64, f64)],
) -> Result<(f64, Vec<f64>)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("fd delta must be > 0, got {delta}")));
    }
    if bounds.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: bounds.len(),
        });
    }
    for (i, (&xi, &(lo, hi))) in x.iter().zip(bounds).enumerate() {
        if !(xi >= lo && xi <= hi) {
            return Err(Error::Domain(format!(
                "x{} = {xi} lies outside [{lo}, {hi}]",
                i + 1
            )));
        }
    }
    let base = f.evaluate(x)?;
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let forward = x[i] + delta <= bounds[i].1;
        probe[i] = if forward { x[i] + delta } else { x[i] - delta };
        let shifted = f.evaluate(&probe)?;
        grad[i] = if forward {
            (shifted - base) / delta
        } else {
            (base - shifted) / delta
        };
        probe[i] = x[i];
    }
    Ok((base, grad))
}

pub fn fd_gradient(
    f: &ModelFunction,
    x: &[f64],
    delta: f64,
    bounds: &[(f64, f64)],
) -> Result<Vec<f64>> {
    fd_gradient_with_value(f, x, delta, bounds).map(|(_, g)| g)
}

/// Partial derivatives at every design point.
#[derive(Debug, Clone)]
pub struct GradientSample {
    pub points: Array2<f64>,
    pub grads: Array2<f64>,
    /// `G` at the design points; available for free in finite-difference mode.
    pub values: Option<Vec<f64>>,
    pub method: GradientMethod,
    /// Cost of producing this sample.
    pub cost: LedgerSnapshot,
}

impl GradientSample {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.points.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.grads.column(i).to_vec()
    }
}

/// Gradients over a design. Finite differences charge exactly `N (d + 1)`
/// model evaluations; analytic mode charges `N` gradient evaluations.
pub fn gradient_sample(
    f: &ModelFunction,
    design: &SampleDesign,
    method: GradientMethod,
) -> Result<GradientSample> {
    let d = f.dimension();
    if design.dimension() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: design.dimension(),
        });
    }
    let n = design.len();
    let before = f.ledger();
    let points = &design.points;
    let (grads, values) = match method {
        GradientMethod::Analytic => {
            if !f.has_gradient() {
                return Err(Error::MissingGradient(f.name().to_string()));
            }
            let rows = map_rows(n, f.concurrent(), |r| f.gradient(&points.row(r).to_vec()))?;
            (stack(rows, d), None)
        }
        GradientMethod::ForwardFd { delta } => {
            let bounds = &design.bounds;
            let rows = map_rows(n, f.concurrent(), |r| {
                fd_gradient_with_value(f, &points.row(r).to_vec(), delta, bounds)
            })?;
            let values = rows.iter().map(|(v, _)| *v).collect();
            (stack(rows.into_iter().map(|(_, g)| g).collect(), d), Some(values))
        }
    };
    Ok(GradientSample {
        points: points.clone(),
        grads,
        values,
        method,
        cost: f.ledger().since(&before),
    })
}

pub(crate) fn stack(rows: Vec<Vec<f64>>, d: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, d), flat).expect("rows have length d")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn builtin_examples() {
        let g = builtin("gfunction", &[0.0]).unwrap();
        assert_eq!(g.evaluate(&[0.5]).unwrap(), 0.0);
        let g = builtin("gfunction", &[1.0, 4.0]).unwrap();
        assert_abs_diff_eq!(g.evaluate(&[0.5, 0.5]).unwrap(), 0.5 * 0.8, epsilon = 1e-15);
        let l = builtin("linear_one_var", &[2.0, 1.0]).unwrap();
        assert_eq!(l.evaluate(&[0.75]).unwrap(), 1.5);
        let m = builtin("morris_reduced", &[]).unwrap();
        assert_eq!(m.evaluate(&[0.0; 4]).unwrap(), 0.0);
        assert!(matches!(builtin("nope", &[]), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn morris_reduced_expands_the_printed_coefficients() {
        let m = MorrisReduced::new();
        let x = [0.3, 0.7, 0.2, 0.9];
        let mut expect = 0.0;
        for i in 0..4 {
            expect += MorrisReduced::B[i] * x[i];
            for j in i..4 {
                expect += MorrisReduced::B2[i][j] * x[i] * x[j];
                expect += MorrisReduced::B3[i][j] * x[i] * x[j] * x[3];
            }
        }
        assert_abs_diff_eq!(m.evaluate(&x).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn fd_examples() {
        let f = builtin("linear_sum", &[3.0, -1.0]).unwrap();
        let g = fd_gradient(&f, &[0.2, 0.2], 1e-5, &[(0.0, 1.0); 2]).unwrap();
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g[1], -1.0, epsilon = 1e-9);

        let f = builtin("gfunction", &[0.0]).unwrap();
        let g = fd_gradient(&f, &[0.75], 1e-5, &[(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-8);

        let f = builtin("linear_one_var", &[2.0, 0.0]).unwrap();
        let before = f.ledger();
        let g = fd_gradient(&f, &[1.0], 1e-5, &[(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-9);
        assert_eq!(f.ledger().since(&before).model_evals, 2);
    }

    #[test]
    fn fd_errors() {
        let f = builtin("linear_sum", &[1.0]).unwrap();
        assert!(fd_gradient(&f, &[0.5], 0.0, &[(0.0, 1.0)]).is_err());
        assert!(fd_gradient(&f, &[0.5], -1e-3, &[(0.0, 1.0)]).is_err());
        assert!(matches!(
            fd_gradient(&f, &[1.5], 1e-5, &[(0.0, 1.0)]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gfunction_gradient_handles_zero_factor() {
        let g = GFunction { a: vec![0.0, 1.0] };
        let mut out = [0.0; 2];
        g.gradient(&[0.5, 0.25], &mut out).unwrap();
        // x1 sits on the kink: sign(0) = +1, v2 = (1 + 1) / 2 = 1.
        assert_eq!(out[0], 4.0);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn fn_model_without_gradient_reports_missing() {
        let f = ModelFunction::new(FnModel::new("sq", 1, |x| x[0] * x[0]));
        assert!(matches!(f.gradient(&[0.1]), Err(Error::MissingGradient(_))));
        assert!(f.evaluate(&[0.1, 0.2]).is_err());
    }
}
