//! The run configuration file.
//!
//! A TOML document with six tables. Every key has a default except the
//! problem definition itself; unknown keys are errors.
//!
//! ```toml
//! [problem]
//! zoo = "z1"                 # or a full definition, see ProblemSection
//!
//! [network]
//! width = 16
//! depth = 2
//! activation = "tanh"
//! seed = 0
//!
//! [optimizer]
//! max_iters = 5000
//!
//! [run]
//! n_corrections = 1
//! bprime = "exact"
//! output = "out"
//! ```
//!
//! `[correction_network]` and `[correction_optimizer]` default to copies of
//! `[network]` and `[optimizer]` when absent. When present, their missing keys
//! take the ordinary defaults.

use nnde_core::trainer::{SolveAndCorrectConfig, CorrectionScale, OptimizerConfig};
use nnde_core::{
    manufacture, Activation, BPrimeForm, BoundaryMode, DomainSpec, Expr, LinearOpSpec, NetworkConfig,
    NonlinearitySpec, ProblemSpec, SourceSpec, Zoo,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid configuration: {0}")]
    Core(#[from] nnde_core::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_network: Option<NetworkSection>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_optimizer: Option<OptimizerSection>,
    #[serde(default)]
    pub run: RunSection,
}

/// One expression or one per output component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exprs {
    One(String),
    Many(Vec<String>),
}

impl Exprs {
    fn texts(&self) -> Vec<&str> {
        match self {
            Exprs::One(s) => vec![s.as_str()],
            Exprs::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSetting {
    #[default]
    Soft,
    Hard,
}

/// Either `zoo = "z1".."z4"` alone, or a full definition:
///
/// | key | default |
/// |---|---|
/// | `dim` | required |
/// | `lower`, `upper` | unit box |
/// | `c0`, `c1` (one per axis), `c2` | `"0"`, zeros, `"1"` (the Laplacian) |
/// | `nonlinearity` | `"zero"`; also `quadratic`, `polynomial`, `sinh`, `exp` |
/// | `coefficients` | `[1.0]`; for `polynomial`, `a_2, a_3, ...` |
/// | `source` | required: `"manufactured"` or expression(s) |
/// | `phi` | required for `"manufactured"` |
/// | `boundary` | `phi` |
/// | `mode` | `"soft"` |
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zoo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Exprs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Exprs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Exprs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeSetting>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub width: usize,
    pub depth: usize,
    pub activation: String,
    pub seed: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            width: 16,
            depth: 2,
            activation: "tanh".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub max_iters: usize,
    pub stop_window: usize,
    pub stop_ratio: f64,
    pub resample_every: usize,
    pub seed: u64,
    pub boundary_weight: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self::from(&OptimizerConfig::default())
    }
}

impl From<&OptimizerConfig> for OptimizerSection {
    fn from(o: &OptimizerConfig) -> Self {
        Self {
            learning_rate: o.learning_rate,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
            n_interior: o.n_interior,
            n_boundary: o.n_boundary,
            max_iters: o.max_iters,
            stop_window: o.stop_window,
            stop_ratio: o.stop_ratio,
            resample_every: o.resample_every,
            seed: o.seed,
            boundary_weight: o.boundary_weight,
        }
    }
}

impl OptimizerSection {
    pub fn to_core(&self) -> Result<OptimizerConfig, ConfigError> {
        let o = OptimizerConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            n_interior: self.n_interior,
            n_boundary: self.n_boundary,
            max_iters: self.max_iters,
            stop_window: self.stop_window,
            stop_ratio: self.stop_ratio,
            resample_every: self.resample_every,
            seed: self.seed,
            boundary_weight: self.boundary_weight,
        };
        o.validate()?;
        Ok(o)
    }
}

/// `"auto"` or a positive number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSetting {
    Named(String),
    Fixed(f64),
}

impl Default for ScaleSetting {
    fn default() -> Self {
        ScaleSetting::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_corrections: usize,
    /// `"exact"` or `"taylor:K"`.
    pub bprime: String,
    pub output: String,
    /// Record `wall_ms = 0` so that training logs are reproducible byte for byte.
    pub deterministic: bool,
    pub correction_scale: ScaleSetting,
    pub validate_points: usize,
    pub grid_res: usize,
    pub validate_seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_corrections: 1,
            bprime: "exact".into(),
            output: "out".into(),
            deterministic: true,
            correction_scale: ScaleSetting::default(),
            validate_points: 1000,
            grid_res: 101,
            validate_seed: 12345,
        }
    }
}

impl RunSection {
    pub fn form(&self) -> Result<BPrimeForm, ConfigError> {
        Ok(self.bprime.parse()?)
    }

    pub fn scale(&self) -> Result<CorrectionScale, ConfigError> {
        match &self.correction_scale {
            ScaleSetting::Named(s) if s == "auto" => Ok(CorrectionScale::Auto),
            ScaleSetting::Named(s) => invalid(format!("correction_scale must be \"auto\" or a number, got `{s}`")),
            ScaleSetting::Fixed(v) if *v > 0.0 && v.is_finite() => Ok(CorrectionScale::Fixed(*v)),
            ScaleSetting::Fixed(v) => invalid(format!("correction_scale must be positive, got {v}")),
        }
    }
}

fn parse_all(e: &Exprs, dim: usize, key: &str) -> Result<Vec<Expr>, ConfigError> {
    e.texts()
        .into_iter()
        .map(|t| Expr::parse(t, dim).map_err(|err| ConfigError::Invalid(format!("problem.{key} `{t}`: {err}"))))
        .collect()
}

impl ProblemSection {
    pub fn zoo(z: Zoo) -> Self {
        Self {
            zoo: Some(z.name().into()),
            ..Default::default()
        }
    }

    pub fn build(&self) -> Result<ProblemSpec, ConfigError> {
        if let Some(name) = &self.zoo {
            let rest = Self {
                zoo: None,
                ..self.clone()
            };
            if rest != Self::default() {
                return invalid("problem.zoo cannot be combined with other problem keys");
            }
            return Zoo::from_name(name)
                .map(Zoo::build)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown zoo problem `{name}` (expected z1..z4)")));
        }
        let Some(d) = self.dim else {
            return invalid("problem needs either `zoo` or `dim`");
        };
        if d == 0 {
            return invalid("problem.dim must be at least 1");
        }
        let domain = DomainSpec::new(
            self.lower.clone().unwrap_or_else(|| vec![0.0; d]),
            self.upper.clone().unwrap_or_else(|| vec![1.0; d]),
        )?;
        if domain.dim() != d {
            return invalid(format!("bounds have {} entries, dim is {d}", domain.dim()));
        }
        let scalar = |v: &Option<String>, default: &str, key: &str| -> Result<Expr, ConfigError> {
            parse_all(&Exprs::One(v.clone().unwrap_or_else(|| default.into())), d, key).map(|mut v| v.remove(0))
        };
        let linear = LinearOpSpec {
            c0: scalar(&self.c0, "0", "c0")?,
            c1: match &self.c1 {
                Some(c) => parse_all(&Exprs::Many(c.clone()), d, "c1")?,
                None => vec![Expr::Const(0.0); d],
            },
            c2: scalar(&self.c2, "1", "c2")?,
        };
        let nonlinearity = self.nonlinearity()?;
        let phi = self.phi.as_ref().map(|e| parse_all(e, d, "phi")).transpose()?;
        let mut spec = match &self.source {
            None => return invalid("problem.source is required (\"manufactured\" or an expression)"),
            Some(Exprs::One(s)) if s == "manufactured" => {
                let Some(phi) = phi else {
                    return invalid("a manufactured source needs problem.phi");
                };
                manufacture(phi, linear, nonlinearity, domain)?
            }
            Some(src) => {
                let source = parse_all(src, d, "source")?;
                let boundary = match (&self.boundary, &phi) {
                    (Some(b), _) => parse_all(b, d, "boundary")?,
                    (None, Some(phi)) => phi.clone(),
                    (None, None) => return invalid("problem.boundary is required when phi is not given"),
                };
                ProblemSpec {
                    domain,
                    linear,
                    nonlinearity,
                    output_dim: source.len(),
                    source: SourceSpec::Explicit(source),
                    boundary,
                    solution: phi,
                    mode: BoundaryMode::Soft,
                }
            }
        };
        if let (Some(b), Some(Exprs::One(s))) = (&self.boundary, &self.source) {
            if s == "manufactured" {
                spec.boundary = parse_all(b, d, "boundary")?;
            }
        }
        spec.mode = match self.mode.unwrap_or_default() {
            ModeSetting::Soft => BoundaryMode::Soft,
            ModeSetting::Hard => BoundaryMode::Hard,
        };
        spec.check()?;
        Ok(spec)
    }

    fn nonlinearity(&self) -> Result<NonlinearitySpec, ConfigError> {
        let coeffs = self.coefficients.clone().unwrap_or_else(|| vec![1.0]);
        let single = |name: &str| -> Result<f64, ConfigError> {
            match coeffs.as_slice() {
                [a] => Ok(*a),
                _ => invalid(format!("nonlinearity `{name}` takes exactly one coefficient")),
            }
        };
        match self.nonlinearity.as_deref().unwrap_or("zero") {
            "zero" => Ok(NonlinearitySpec::Zero),
            "quadratic" => Ok(NonlinearitySpec::Quadratic(single("quadratic")?)),
            "polynomial" if !coeffs.is_empty() => Ok(NonlinearitySpec::Polynomial(coeffs)),
            "polynomial" => invalid("polynomial nonlinearity needs coefficients a_2, a_3, ..."),
            "sinh" => Ok(NonlinearitySpec::Sinh(single("sinh")?)),
            "exp" => Ok(NonlinearitySpec::Exp(single("exp")?)),
            other => invalid(format!(
                "unknown nonlinearity `{other}` (expected zero, quadratic, polynomial, sinh or exp)"
            )),
        }
    }
}

impl NetworkSection {
    pub fn to_core(&self, input_dim: usize, output_dim: usize) -> Result<NetworkConfig, ConfigError> {
        let mut n = NetworkConfig::new(input_dim, output_dim, self.width, self.depth);
        n.activation = self
            .activation
            .parse::<Activation>()
            .map_err(|e| ConfigError::Invalid(format!("network.activation: {e}")))?;
        n.seed = self.seed;
        n.validate()?;
        Ok(n)
    }
}

/// Everything a run needs, checked and converted to core types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: ProblemSpec,
    pub algorithm: SolveAndCorrectConfig,
}

impl RunConfig {
    pub fn from_zoo(z: Zoo) -> Self {
        Self {
            problem: ProblemSection::zoo(z),
            network: NetworkSection::default(),
            correction_network: None,
            optimizer: OptimizerSection::default(),
            correction_optimizer: None,
            run: RunSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let problem = self.problem.build()?;
        let (d, out) = (problem.dim(), problem.output_dim);
        let primary_net = self.network.to_core(d, out)?;
        let correction_net = self.correction_network.as_ref().unwrap_or(&self.network).to_core(d, out)?;
        let primary_opt = self.optimizer.to_core()?;
        let correction_opt = self.correction_optimizer.as_ref().unwrap_or(&self.optimizer).to_core()?;
        Ok(Resolved {
            problem,
            algorithm: SolveAndCorrectConfig {
                primary_net,
                correction_net,
                primary_opt,
                correction_opt,
                n_corrections: self.run.n_corrections,
                form: self.run.form()?,
                scale: self.run.scale()?,
            },
        })
    }
}
