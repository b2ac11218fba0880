//! Flat `key = value` configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Lists are comma
//! separated. Every key is consumed exactly once, so typos surface as
//! "unknown key" errors instead of being silently ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use dgsm_core::estimators::FirstOrderForm;
use dgsm_core::exprmodel::ExprModel;
use dgsm_core::functions::DEFAULT_FD_DELTA;
use dgsm_core::{builtin, Generator, GradientMethod, InputDistribution, InputSpace, ModelFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    Dgsm,
    Bounds,
    Sobol,
    Morris,
    Crossed,
    Oracle,
}

impl FromStr for Analysis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "dgsm" => Self::Dgsm,
            "bounds" => Self::Bounds,
            "sobol" => Self::Sobol,
            "morris" => Self::Morris,
            "crossed" => Self::Crossed,
            "oracle" => Self::Oracle,
            other => {
                return Err(format!(
                    "unknown analysis '{other}' (expected dgsm, bounds, sobol, morris, crossed, oracle)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Fd,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceSource {
    /// Sample variance of `G` over the DGSM design.
    Sample,
    /// Pooled variance from the pick-freeze run.
    Sobol,
    /// Quadrature oracle.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    Builtin { name: String, params: Vec<f64> },
    Expression { text: String, dimension: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct MorrisParams {
    pub r: usize,
    pub p: usize,
    pub delta_levels: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Raw entries as read, echoed into the JSON report.
    pub raw: BTreeMap<String, String>,
    pub model: ModelSpec,
    pub space: InputSpace,
    pub generator: Generator,
    pub seed: u64,
    pub n: usize,
    pub analyses: BTreeSet<Analysis>,
    pub grad_mode: GradMode,
    pub fd_delta: f64,
    pub m_list: Vec<f64>,
    pub sobol_n: Option<usize>,
    pub first_order: Option<FirstOrderForm>,
    pub variance_source: VarianceSource,
    pub morris: MorrisParams,
    pub oracle_order: usize,
    pub groups: Vec<Vec<usize>>,
    pub envelopes: BTreeMap<usize, (f64, f64)>,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
}

impl AnalysisConfig {
    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    pub fn has(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    pub fn gradient_method(&self) -> GradientMethod {
        match self.grad_mode {
            GradMode::Fd => GradientMethod::ForwardFd { delta: self.fd_delta },
            GradMode::Analytic => GradientMethod::Analytic,
        }
    }

    pub fn build_model(&self) -> Result<ModelFunction> {
        build_model(&self.model)
    }
}

fn build_model(spec: &ModelSpec) -> Result<ModelFunction> {
    match spec {
        ModelSpec::Builtin { name, params } => {
            builtin(name, params).map_err(|e| ConfigError::new(param_key(name), e))
        }
        ModelSpec::Expression { text, dimension } => ExprModel::new(text, *dimension)
            .map(ModelFunction::new)
            .map_err(|e| ConfigError::new("model.expression", e)),
    }
}

fn param_key(name: &str) -> &'static str {
    match name {
        "linear_one_var" => "model.params.c",
        "linear_sum" => "model.params.b",
        "gfunction" => "model.params.a",
        _ => "model.builtin",
    }
}

/// Splits text into `key -> value`, rejecting duplicates and malformed lines.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::new(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got '{line}'"),
            ));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::new(format!("line {}", lineno + 1), "empty key"));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError::new(key, "duplicate key"));
        }
    }
    Ok(out)
}

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| ConfigError::new(key, "missing required key"))
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.take(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError::new(key, format!("'{v}': {e}"))))
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.take(key).map(|v| parse_list(key, &v)).transpose()
    }
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| ConfigError::new(key, format!("'{s}' is not a number")))
        })
        .collect()
}

fn input_index(key: &str, suffix: &str, d: usize) -> Result<usize> {
    let idx = suffix
        .strip_prefix('x')
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&i| i >= 1)
        .ok_or_else(|| ConfigError::new(key, "expected an input name x1, x2, ..."))?;
    if idx > d {
        return Err(ConfigError::new(
            key,
            format!("input x{idx} exceeds the model dimension {d}"),
        ));
    }
    Ok(idx - 1)
}

impl FromStr for AnalysisConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self> {
        let raw = parse_entries(text)?;
        let mut e = Entries { map: raw.clone() };

        let model = match (e.take("model.builtin"), e.take("model.expression")) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "model.expression",
                    "conflicts with model.builtin; set only one",
                ))
            }
            (None, None) => {
                return Err(ConfigError::new(
                    "model.builtin",
                    "missing required key (or set model.expression)",
                ))
            }
            (Some(name), None) => {
                let params = match name.as_str() {
                    "linear_one_var" => {
                        let c = e.parse::<f64>("model.params.c")?.ok_or_else(|| {
                            ConfigError::new("model.params.c", "missing required key")
                        })?;
                        let g0 = e.parse::<f64>("model.params.g0")?.unwrap_or(0.0);
                        vec![c, g0]
                    }
                    "linear_sum" => e
                        .list("model.params.b")?
                        .ok_or_else(|| ConfigError::new("model.params.b", "missing required key"))?,
                    "gfunction" => e
                        .list("model.params.a")?
                        .ok_or_else(|| ConfigError::new("model.params.a", "missing required key"))?,
                    "morris_reduced" => Vec::new(),
                    other => {
                        return Err(ConfigError::new(
                            "model.builtin",
                            format!(
                                "unknown model '{other}' (expected linear_one_var, linear_sum, gfunction, morris_reduced)"
                            ),
                        ))
                    }
                };
                ModelSpec::Builtin { name, params }
            }
            (None, Some(text)) => {
                let dimension = e
                    .parse::<usize>("model.dimension")?
                    .ok_or_else(|| ConfigError::new("model.dimension", "missing required key"))?;
                ModelSpec::Expression { text, dimension }
            }
        };
        let probe = build_model(&model)?;
        let d = probe.dimension();
        if let (ModelSpec::Builtin { .. }, Some(dim)) = (&model, e.parse::<usize>("model.dimension")?) {
            if dim != d {
                return Err(ConfigError::new(
                    "model.dimension",
                    format!("model has dimension {d}, config says {dim}"),
                ));
            }
        }

        let default_marginal = match e.take("space.all") {
            Some(s) => s
                .parse::<InputDistribution>()
                .map_err(|err| ConfigError::new("space.all", err))?,
            None => InputDistribution::unit_uniform(),
        };
        let mut marginals = vec![default_marginal; d];
        let space_keys: Vec<String> = e
            .map
            .keys()
            .filter(|k| k.starts_with("space."))
            .cloned()
            .collect();
        for key in space_keys {
            let i = input_index(&key, &key["space.".len()..], d)?;
            let v = e.take(&key).unwrap();
            marginals[i] = v
                .parse::<InputDistribution>()
                .map_err(|err| ConfigError::new(key.clone(), err))?;
        }
        let space = InputSpace::new(marginals).map_err(|err| ConfigError::new("space.all", err))?;

        let seed = e.parse::<u64>("sampler.seed")?.unwrap_or(0);
        let skip = e.parse::<u64>("sampler.skip")?;
        let generator = match e.take("sampler.kind").as_deref() {
            None | Some("lowdiscrepancy") | Some("sobol") => Generator::LowDiscrepancy {
                skip: skip.unwrap_or(0),
            },
            Some("pseudo") => {
                if skip.is_some() {
                    return Err(ConfigError::new(
                        "sampler.skip",
                        "only meaningful for sampler.kind = lowdiscrepancy",
                    ));
                }
                Generator::Pseudo { seed }
            }
            Some(other) => {
                return Err(ConfigError::new(
                    "sampler.kind",
                    format!("'{other}' (expected pseudo or lowdiscrepancy)"),
                ))
            }
        };
        let n = e
            .parse::<usize>("sampler.n")?
            .ok_or_else(|| ConfigError::new("sampler.n", "missing required key"))?;
        if n == 0 {
            return Err(ConfigError::new("sampler.n", "must be >= 1"));
        }

        let analyses_text = e.require("analyses")?;
        let mut analyses = BTreeSet::new();
        for a in analyses_text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            analyses.insert(a.parse::<Analysis>().map_err(|m| ConfigError::new("analyses", m))?);
        }
        if analyses.is_empty() {
            return Err(ConfigError::new("analyses", "must list at least one analysis"));
        }
        // Bounds and crossed DGSM are built on the DGSM sample.
        if analyses.contains(&Analysis::Bounds) || analyses.contains(&Analysis::Crossed) {
            analyses.insert(Analysis::Dgsm);
        }

        let grad_mode = match e.take("grad.mode").as_deref() {
            None | Some("fd") => GradMode::Fd,
            Some("analytic") => {
                if !probe.has_gradient() {
                    return Err(ConfigError::new(
                        "grad.mode",
                        format!("model '{}' has no analytic gradient", probe.name()),
                    ));
                }
                GradMode::Analytic
            }
            Some(other) => {
                return Err(ConfigError::new(
                    "grad.mode",
                    format!("'{other}' (expected fd or analytic)"),
                ))
            }
        };
        let fd_delta = e.parse::<f64>("fd.delta")?.unwrap_or(DEFAULT_FD_DELTA);
        if !(fd_delta > 0.0 && fd_delta < 0.5) {
            return Err(ConfigError::new("fd.delta", "must lie in (0, 0.5)"));
        }
        let m_list = e.list("dgsm.m")?.unwrap_or_default();
        if m_list.iter().any(|&m| !(m > 0.0)) {
            return Err(ConfigError::new("dgsm.m", "weight exponents must be > 0"));
        }

        let sobol_n = e.parse::<usize>("sobol.n")?;
        if sobol_n == Some(0) {
            return Err(ConfigError::new("sobol.n", "must be >= 1"));
        }
        let first_order = match e.take("sobol.first_order").as_deref() {
            None | Some("difference") => Some(FirstOrderForm::Difference),
            Some("covariance") => Some(FirstOrderForm::Covariance),
            Some("none") => None,
            Some(other) => {
                return Err(ConfigError::new(
                    "sobol.first_order",
                    format!("'{other}' (expected difference, covariance or none)"),
                ))
            }
        };

        let variance_source = match e.take("bounds.variance").as_deref() {
            None | Some("sample") => VarianceSource::Sample,
            Some("sobol") => VarianceSource::Sobol,
            Some("oracle") => VarianceSource::Oracle,
            Some(other) => {
                return Err(ConfigError::new(
                    "bounds.variance",
                    format!("'{other}' (expected sample, sobol or oracle)"),
                ))
            }
        };
        if variance_source == VarianceSource::Oracle && d > dgsm_core::oracle::MAX_ORACLE_DIM {
            return Err(ConfigError::new(
                "bounds.variance",
                format!("the oracle supports d <= {}", dgsm_core::oracle::MAX_ORACLE_DIM),
            ));
        }

        let morris = MorrisParams {
            r: e.parse("morris.r")?.unwrap_or(20),
            p: e.parse("morris.p")?.unwrap_or(4),
            delta_levels: e.parse("morris.delta_levels")?.unwrap_or(2),
            seed: e.parse("morris.seed")?.unwrap_or(seed),
        };
        let oracle_order = e
            .parse::<usize>("oracle.order")?
            .unwrap_or(dgsm_core::oracle::DEFAULT_ORDER);
        if analyses.contains(&Analysis::Oracle) && d > dgsm_core::oracle::MAX_ORACLE_DIM {
            return Err(ConfigError::new(
                "analyses",
                format!("oracle supports d <= {}, model has d = {d}", dgsm_core::oracle::MAX_ORACLE_DIM),
            ));
        }

        let groups = match e.take("groups") {
            None => Vec::new(),
            Some(v) => parse_groups(&v, d)?,
        };

        let mut envelopes = BTreeMap::new();
        let env_keys: Vec<String> = e
            .map
            .keys()
            .filter(|k| k.starts_with("envelope."))
            .cloned()
            .collect();
        for key in env_keys {
            let i = input_index(&key, &key["envelope.".len()..], d)?;
            let v = e.take(&key).unwrap();
            let vals = parse_list(&key, &v)?;
            if vals.len() != 2 || !(vals[0] >= 0.0 && vals[0] <= vals[1]) {
                return Err(ConfigError::new(key, "expected `c, C` with 0 <= c <= C"));
            }
            envelopes.insert(i, (vals[0], vals[1]));
        }

        let output_path = e.take("output.path").map(PathBuf::from);
        let output_format = match e.take("output.format").as_deref() {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some("both") => OutputFormat::Both,
            Some(other) => {
                return Err(ConfigError::new(
                    "output.format",
                    format!("'{other}' (expected csv, json or both)"),
                ))
            }
        };
        if output_format == OutputFormat::Both && output_path.is_none() {
            return Err(ConfigError::new("output.path", "required when output.format = both"));
        }

        if let Some(key) = e.map.keys().next() {
            return Err(ConfigError::new(key.clone(), "unknown key"));
        }
        Ok(Self {
            raw,
            model,
            space,
            generator,
            seed,
            n,
            analyses,
            grad_mode,
            fd_delta,
            m_list,
            sobol_n,
            first_order,
            variance_source,
            morris,
            oracle_order,
            groups,
            envelopes,
            output_path,
            output_format,
        })
    }
}

/// `x1 x2; x3` or `1 2; 3`: groups separated by `;`, members by spaces or commas.
fn parse_groups(v: &str, d: usize) -> Result<Vec<Vec<usize>>> {
    v.split(';')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(|g| {
            g.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    let name = if s.starts_with('x') { s.to_string() } else { format!("x{s}") };
                    input_index("groups", &name, d)
                })
                .collect()
        })
        .collect()
}
