//! Independent input marginals.
//!
//! Every marginal exposes its density, cdf, quantile and a Poincaré constant.
//! The Poincaré constant `C(F)` is the factor in
//! `Var[u(X)] <= C(F) * E[u'(X)^2]` and turns the squared-derivative measure
//! into an upper bound on the total index (see [`crate::bounds::ub_poincare`]).

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Grid size of the Cheeger fallback (quantile grid over `[1e-6, 1 - 1e-6]`).
pub const CHEEGER_GRID: usize = 10_001;
const CHEEGER_TAIL: f64 = 1e-6;

/// `erfc_inv` alone is good to about 1e-10; two Newton steps on the
/// complementary-error-function cdf bring it to rounding level.
fn standard_normal_quantile(p: f64) -> f64 {
    let mut z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if !(density > 0.0) || !z.is_finite() {
            break;
        }
        let err = if z < 0.0 {
            0.5 * erfc(-z / std::f64::consts::SQRT_2) - p
        } else {
            (1.0 - p) - 0.5 * erfc(z / std::f64::consts::SQRT_2)
        };
        z -= err / density;
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    Uniform { a: f64, b: f64 },
    Normal { mu: f64, sigma: f64 },
    /// Rate parameterisation: density `lambda * exp(-lambda x)`.
    Exponential { lambda: f64 },
    /// Gumbel for maxima with location `mu` and scale `beta`.
    Gumbel { mu: f64, beta: f64 },
    /// Shape `k >= 1`, scale `lambda`.
    Weibull { k: f64, lambda: f64 },
    /// `base` restricted to `[a, b]` and renormalised.
    Truncated {
        base: Box<InputDistribution>,
        a: f64,
        b: f64,
    },
}

/// Which rule produced a Poincaré constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoincareRule {
    Tabulated,
    LogConcaveMedian,
    TruncatedLogConcave,
    Cheeger,
}

impl InputDistribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::Uniform { a, b }.validated()
    }

    pub fn unit_uniform() -> Self {
        Self::Uniform { a: 0.0, b: 1.0 }
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::Normal { mu, sigma }.validated()
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        Self::Exponential { lambda }.validated()
    }

    pub fn gumbel(mu: f64, beta: f64) -> Result<Self> {
        Self::Gumbel { mu, beta }.validated()
    }

    pub fn weibull(k: f64, lambda: f64) -> Result<Self> {
        Self::Weibull { k, lambda }.validated()
    }

    pub fn truncated(base: InputDistribution, a: f64, b: f64) -> Result<Self> {
        Self::Truncated {
            base: Box::new(base),
            a,
            b,
        }
        .validated()
    }

    /// Checks the parameter constraints, returning `self` on success.
    pub fn validated(self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let finite = |v: f64| v.is_finite();
        match &self {
            Self::Uniform { a, b } => {
                if !(finite(*a) && finite(*b) && a < b) {
                    return bad(format!("uniform requires a < b, got ({a}, {b})"));
                }
            }
            Self::Normal { mu, sigma } => {
                if !(finite(*mu) && finite(*sigma) && *sigma > 0.0) {
                    return bad(format!("normal requires sigma > 0, got ({mu}, {sigma})"));
                }
            }
            Self::Exponential { lambda } => {
                if !(finite(*lambda) && *lambda > 0.0) {
                    return bad(format!("exponential requires lambda > 0, got {lambda}"));
                }
            }
            Self::Gumbel { mu, beta } => {
                if !(finite(*mu) && finite(*beta) && *beta > 0.0) {
                    return bad(format!("gumbel requires beta > 0, got ({mu}, {beta})"));
                }
            }
            Self::Weibull { k, lambda } => {
                if !(finite(*k) && finite(*lambda) && *k >= 1.0 && *lambda > 0.0) {
                    return bad(format!(
                        "weibull requires k >= 1 and lambda > 0, got ({k}, {lambda})"
                    ));
                }
            }
            Self::Truncated { base, a, b } => {
                base.clone().validated()?;
                if !(a < b) || a.is_nan() || b.is_nan() {
                    return bad(format!("truncation requires a < b, got ({a}, {b})"));
                }
                let mass = base.cdf(*b) - base.cdf(*a);
                if !(mass > 0.0) {
                    return bad(format!(
                        "truncation interval [{a}, {b}] carries no probability mass"
                    ));
                }
            }
        }
        Ok(self)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Uniform { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Self::Exponential { lambda } => {
                if x < 0.0 {
                    0.0
                } else {
                    lambda * (-lambda * x).exp()
                }
            }
            Self::Gumbel { mu, beta } => {
                let z = (x - mu) / beta;
                (-(z + (-z).exp())).exp() / beta
            }
            Self::Weibull { k, lambda } => {
                if x < 0.0 {
                    return 0.0;
                }
                let t = x / lambda;
                if t == 0.0 {
                    // k = 1 has a finite nonzero density at the origin.
                    return if *k == 1.0 { 1.0 / lambda } else { 0.0 };
                }
                (k / lambda) * t.powf(k - 1.0) * (-t.powf(*k)).exp()
            }
            Self::Truncated { base, a, b } => {
                if x < *a || x > *b {
                    0.0
                } else {
                    base.pdf(x) / base.mass(*a, *b)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::Normal { mu, sigma } => {
                0.5 * erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2))
            }
            Self::Exponential { lambda } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-lambda * x).exp_m1()
                }
            }
            Self::Gumbel { mu, beta } => (-(-(x - mu) / beta).exp()).exp(),
            Self::Weibull { k, lambda } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / lambda).powf(*k)).exp_m1()
                }
            }
            Self::Truncated { base, a, b } => {
                if x <= *a {
                    0.0
                } else if x >= *b {
                    1.0
                } else {
                    (base.cdf(x) - base.cdf(*a)) / base.mass(*a, *b)
                }
            }
        }
    }

    /// Inverse cdf on the open interval `0 < p < 1`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile requires 0 < p < 1, got {p}"
            )));
        }
        Ok(self.quantile_unchecked(p))
    }

    /// Inverse cdf on the closed interval, for marginals whose support
    /// endpoints are finite (used by grid designs that touch `0` and `1`).
    pub fn quantile_closed(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "quantile requires 0 <= p <= 1, got {p}"
            )));
        }
        let (lo, hi) = self.support();
        let x = if p == 0.0 {
            lo
        } else if p == 1.0 {
            hi
        } else {
            self.quantile_unchecked(p)
        };
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::Domain(format!(
                "quantile({p}) is infinite for an unbounded marginal"
            )))
        }
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        match self {
            Self::Uniform { a, b } => a + p * (b - a),
            Self::Normal { mu, sigma } => mu + sigma * standard_normal_quantile(p),
            Self::Exponential { lambda } => -(-p).ln_1p() / lambda,
            Self::Gumbel { mu, beta } => mu - beta * (-p.ln()).ln(),
            Self::Weibull { k, lambda } => lambda * (-(-p).ln_1p()).powf(1.0 / k),
            Self::Truncated { base, a, b } => {
                let fa = base.cdf(*a);
                let fb = base.cdf(*b);
                let target = fa + p * (fb - fa);
                let x = if target <= 0.0 || target >= 1.0 {
                    if target <= 0.0 {
                        *a
                    } else {
                        *b
                    }
                } else {
                    base.quantile_unchecked(target)
                };
                x.clamp(*a, *b)
            }
        }
    }

    /// Closed support interval (endpoints may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Uniform { a, b } => (*a, *b),
            Self::Normal { .. } | Self::Gumbel { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Exponential { .. } | Self::Weibull { .. } => (0.0, f64::INFINITY),
            Self::Truncated { base, a, b } => {
                let (lo, hi) = base.support();
                (lo.max(*a), hi.min(*b))
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile_unchecked(0.5)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Normal { mu, .. } => *mu,
            Self::Exponential { lambda } => 1.0 / lambda,
            Self::Gumbel { mu, beta } => mu + beta * EULER_GAMMA,
            Self::Weibull { k, lambda } => lambda * gamma(1.0 + 1.0 / k),
            Self::Truncated { .. } => self.quantile_moment(1, 0.0),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Uniform { a, b } => (b - a).powi(2) / 12.0,
            Self::Normal { sigma, .. } => sigma * sigma,
            Self::Exponential { lambda } => 1.0 / (lambda * lambda),
            Self::Gumbel { beta, .. } => PI * PI * beta * beta / 6.0,
            Self::Weibull { k, lambda } => {
                let g1 = gamma(1.0 + 1.0 / k);
                lambda * lambda * (gamma(1.0 + 2.0 / k) - g1 * g1)
            }
            Self::Truncated { .. } => {
                let m = self.mean();
                self.quantile_moment(2, m)
            }
        }
    }

    /// `E[(X - c)^power]` by Gauss–Legendre quadrature in probability space.
    /// Only used for truncated marginals, whose support is bounded.
    fn quantile_moment(&self, power: i32, center: f64) -> f64 {
        let rule = crate::oracle::gauss_legendre(64);
        // Four panels keep the rule accurate near the endpoints.
        let panels = 4;
        let mut acc = 0.0;
        for panel in 0..panels {
            let lo = panel as f64 / panels as f64;
            let width = 1.0 / panels as f64;
            for (node, weight) in rule.nodes.iter().zip(&rule.weights) {
                let p = lo + width * node;
                acc += width * weight * (self.quantile_unchecked(p) - center).powi(power);
            }
        }
        acc
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Self::Uniform { .. })
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, Self::Normal { .. })
    }

    /// All base kinds here have log-concave densities (Weibull because `k >= 1`),
    /// and truncation preserves log-concavity.
    pub fn is_log_concave(&self) -> bool {
        match self {
            Self::Uniform { .. }
            | Self::Normal { .. }
            | Self::Exponential { .. }
            | Self::Gumbel { .. } => true,
            Self::Weibull { k, .. } => *k >= 1.0,
            Self::Truncated { base, .. } => base.is_log_concave(),
        }
    }

    /// Draws one value by inverse-transform sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_unchecked(u)
    }

    pub fn poincare_constant(&self) -> Result<f64> {
        self.poincare_constant_with_rule().map(|(c, _)| c)
    }

    /// Best available Poincaré constant and the rule that produced it.
    ///
    /// Priority: tabulated constant, then `1 / f(median)^2` for log-concave
    /// densities, then the truncated log-concave formula, then the Cheeger
    /// bound on a quantile grid.
    pub fn poincare_constant_with_rule(&self) -> Result<(f64, PoincareRule)> {
        if let Some(c) = self.tabulated_constant() {
            return Ok((c, PoincareRule::Tabulated));
        }
        if let Self::Truncated { .. } = self {
            return self
                .truncated_constant()
                .map(|c| (c, PoincareRule::TruncatedLogConcave));
        }
        if self.is_log_concave() {
            return self
                .log_concave_constant()
                .map(|c| (c, PoincareRule::LogConcaveMedian));
        }
        self.cheeger_constant().map(|c| (c, PoincareRule::Cheeger))
    }

    /// Best-known constants for the named families.
    pub fn tabulated_constant(&self) -> Option<f64> {
        match self {
            Self::Uniform { a, b } => Some((b - a).powi(2) / (PI * PI)),
            Self::Normal { sigma, .. } => Some(sigma * sigma),
            Self::Exponential { lambda } => Some(4.0 / (lambda * lambda)),
            Self::Gumbel { beta, .. } => Some((2.0 * beta / LN_2).powi(2)),
            Self::Weibull { k, lambda } => {
                Some((2.0 * lambda * LN_2.powf((1.0 - k) / k) / k).powi(2))
            }
            // A truncated uniform is itself uniform.
            Self::Truncated { base, a, b } => match base.as_ref() {
                Self::Uniform { a: ua, b: ub } => {
                    let lo = ua.max(*a);
                    let hi = ub.min(*b);
                    Some((hi - lo).powi(2) / (PI * PI))
                }
                _ => None,
            },
        }
    }

    /// `1 / f(median)^2`, valid for log-concave densities.
    pub fn log_concave_constant(&self) -> Result<f64> {
        if !self.is_log_concave() {
            return Err(Error::ConstantUnavailable(
                "median rule requires a log-concave density".into(),
            ));
        }
        let f = self.pdf(self.median());
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::ConstantUnavailable(format!(
                "density at the median is {f}"
            )));
        }
        Ok(1.0 / (f * f))
    }

    /// `(F(b) - F(a))^2 / f(q((F(a) + F(b)) / 2))^2` for a log-concave base
    /// truncated to `[a, b]`; `F`, `f`, `q` are those of the base.
    pub fn truncated_constant(&self) -> Result<f64> {
        let Self::Truncated { base, a, b } = self else {
            return Err(Error::ConstantUnavailable(
                "truncated rule applies to truncated marginals only".into(),
            ));
        };
        if !base.is_log_concave() {
            return Err(Error::ConstantUnavailable(
                "truncated rule requires a log-concave base".into(),
            ));
        }
        let fa = base.cdf(*a);
        let fb = base.cdf(*b);
        let mid = base.quantile_unchecked(0.5 * (fa + fb));
        let f = base.pdf(mid);
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::ConstantUnavailable(format!(
                "base density at the truncated median is {f}"
            )));
        }
        Ok((fb - fa).powi(2) / (f * f))
    }

    /// Cheeger-type bound `4 [sup min(F, 1 - F) / f]^2`, with the supremum
    /// taken over a fixed quantile grid so that heavy tails are treated alike.
    pub fn cheeger_constant(&self) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for k in 0..CHEEGER_GRID {
            let p = CHEEGER_TAIL + (1.0 - 2.0 * CHEEGER_TAIL) * k as f64 / (CHEEGER_GRID - 1) as f64;
            let x = self.quantile_unchecked(p);
            let f = self.pdf(x);
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::ConstantUnavailable(format!(
                    "density vanishes inside the support (f({x}) = {f})"
                )));
            }
            sup = sup.max(p.min(1.0 - p) / f);
        }
        Ok(4.0 * sup * sup)
    }
}

impl fmt::Display for InputDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { a, b } => write!(f, "uniform({a}, {b})"),
            Self::Normal { mu, sigma } => write!(f, "normal({mu}, {sigma})"),
            Self::Exponential { lambda } => write!(f, "exponential({lambda})"),
            Self::Gumbel { mu, beta } => write!(f, "gumbel({mu}, {beta})"),
            Self::Weibull { k, lambda } => write!(f, "weibull({k}, {lambda})"),
            Self::Truncated { base, a, b } => write!(f, "truncated({base}, {a}, {b})"),
        }
    }
}

/// Parses specs such as `uniform(0, 1)`, `normal(0, 3)` or
/// `truncated(normal(0, 1), -1, 2)`.
impl FromStr for InputDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::InvalidParameter(format!("expected kind(params), got '{s}'")))?;
        if !s.ends_with(')') {
            return Err(Error::InvalidParameter(format!("missing ')' in '{s}'")));
        }
        let kind = s[..open].trim().to_ascii_lowercase();
        let inner = &s[open + 1..s.len() - 1];
        let args = split_top_level(inner);
        let nums = |count: usize| -> Result<Vec<f64>> {
            if args.len() != count {
                return Err(Error::InvalidParameter(format!(
                    "{kind} takes {count} parameter(s), got {}",
                    args.len()
                )));
            }
            args.iter()
                .map(|a| {
                    a.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidParameter(format!("'{}' is not a number", a.trim()))
                    })
                })
                .collect()
        };
        match kind.as_str() {
            "uniform" => {
                let p = nums(2)?;
                Self::uniform(p[0], p[1])
            }
            "normal" => {
                let p = nums(2)?;
                Self::normal(p[0], p[1])
            }
            "exponential" => {
                let p = nums(1)?;
                Self::exponential(p[0])
            }
            "gumbel" => {
                let p = nums(2)?;
                Self::gumbel(p[0], p[1])
            }
            "weibull" => {
                let p = nums(2)?;
                Self::weibull(p[0], p[1])
            }
            "truncated" => {
                if args.len() != 3 {
                    return Err(Error::InvalidParameter(
                        "truncated takes (base, a, b)".into(),
                    ));
                }
                let base: InputDistribution = args[0].parse()?;
                let bound = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("'{}' is not a number", t.trim())))
                };
                Self::truncated(base, bound(args[1])?, bound(args[2])?)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown distribution '{other}'"
            ))),
        }
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() || !parts.is_empty() {
        parts.push(&s[start..]);
    }
    parts
}

/// Ordered list of independent marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpace {
    marginals: Vec<InputDistribution>,
}

impl InputSpace {
    pub fn new(marginals: Vec<InputDistribution>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter(
                "input space needs at least one marginal".into(),
            ));
        }
        let marginals = marginals
            .into_iter()
            .map(InputDistribution::validated)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { marginals })
    }

    /// `d` copies of `Uniform(0, 1)`.
    pub fn unit_cube(d: usize) -> Self {
        Self {
            marginals: vec![InputDistribution::unit_uniform(); d.max(1)],
        }
    }

    pub fn dimension(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[InputDistribution] {
        &self.marginals
    }

    pub fn marginal(&self, i: usize) -> &InputDistribution {
        &self.marginals[i]
    }

    pub fn supports(&self) -> Vec<(f64, f64)> {
        self.marginals.iter().map(InputDistribution::support).collect()
    }

    /// Maps a unit-cube point through the per-axis quantiles.
    pub fn map_unit(&self, unit: &[f64], out: &mut [f64]) -> Result<()> {
        for ((o, u), m) in out.iter_mut().zip(unit).zip(&self.marginals) {
            *o = m.quantile(*u)?;
        }
        Ok(())
    }
}
