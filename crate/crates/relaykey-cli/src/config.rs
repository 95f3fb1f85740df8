//! Config-file loading: flat JSON schemas with strict key checking and
//! `--set` overrides applied before the typed parse.

use relaykey::sim::SchemeSpec;
use serde::Deserialize;
use std::fmt;
use std::path::Path;

/// Appended to `--help`: the full key reference for every config schema.
pub const CONFIG_KEY_HELP: &str = "\
CONFIG KEYS (JSON, unknown keys abort):
  simulate: c_ar, c_br   LOS power fractions in [0,1] of the two keygen links
            rho_db       total SNR budget in dB
            beta         probing power fraction in (0,1), or \"optimize\"
            L            coherence blocks per round (= broadcast blocklength)
            rounds       protocol rounds per trial
            trials       Monte Carlo trials
            scheme       \"optimal\" | \"min\" | {\"intermediate\":{\"switch_on\":N}}
            epsilon      target conditional bit-error rate of quantization
            outage_model \"asymptotic_marcum_q\" | \"finite_blocklength\"
            seed         RNG seed (u64)
            key_source   \"practical\" (default) | \"fluid\"
  sweep:    sweep        swept variable: \"beta\" | \"c\" | \"rho_db\"
            start, stop, step   sweep grid (inclusive endpoints)
            c, rho_db, beta     fixed values for the un-swept variables
            weight       \"full\" (default) | \"half\"  LOS weighting of P_out/Theta
            L, epsilon, scheme  optional; enable the practical columns
  optimize: c, rho_db    operating point
            method       \"grid_throughput\" | \"gradient_lower_bound\" |
                         \"grid_lower_bound\" | \"newton_constrained\" |
                         \"grid_constrained\"
            eta          outage budget (required by the constrained methods)
            weight       \"full\" | \"half\" (default)  for grid_throughput
OVERRIDES:
  --set KEY=VALUE        override any config key from the command line
                         (JSON values; bare words read as strings)
ENVIRONMENT:
  RELAYKEY_THREADS       default worker thread count (--threads overrides)";

#[derive(Debug)]
pub enum CliError {
    /// Bad config / arguments: exit 2.
    Config(String),
    /// Computation or validation failure: exit 1.
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Run(m) => f.write_str(m),
        }
    }
}

impl From<relaykey::ModelError> for CliError {
    fn from(e: relaykey::ModelError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("io error: {e}"))
    }
}

/// Loads `path`, applies `key=value` overrides, then parses into `T`.
/// Unknown keys and malformed values abort before any computation, with the
/// offending key or line in the message.
pub fn load_config<T: serde::de::DeserializeOwned>(
    path: &Path,
    overrides: &[String],
) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}: parse error at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let map = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{}: top level must be an object", path.display())))?;
    for kv in overrides {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set needs KEY=VALUE, got {kv:?}")))?;
        let parsed = serde_json::from_str::<serde_json::Value>(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        map.insert(key.to_string(), parsed);
    }
    serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Which LOS weighting the closed-form outage uses.
#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightSpec {
    #[default]
    Full,
    Half,
}

impl WeightSpec {
    pub fn to_weight(self) -> relaykey::rate::LosWeight {
        match self {
            WeightSpec::Full => relaykey::rate::LosWeight::Full,
            WeightSpec::Half => relaykey::rate::LosWeight::Half,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Beta,
    C,
    RhoDb,
}

/// Grid sweep over one variable with the others held fixed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sweep: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub rho_db: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub weight: WeightSpec,
    /// Present (with `epsilon`) to add the practical keygen columns.
    #[serde(rename = "L", default)]
    pub l: Option<u32>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub scheme: Option<SchemeSpec>,
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(CliError::Config(format!("step must be > 0, got {}", self.step)));
        }
        if self.stop < self.start {
            return Err(CliError::Config("stop must be >= start".into()));
        }
        let n = ((self.stop - self.start) / self.step + 1.0 + 1e-9).floor() as usize;
        Ok((0..n).map(|i| self.start + self.step * i as f64).collect())
    }

    fn fixed(&self, name: &str, v: Option<f64>) -> Result<f64, CliError> {
        v.ok_or_else(|| CliError::Config(format!("config key {name:?} is required (not swept)")))
    }

    /// (c, rho_db, beta) for one grid value of the swept variable.
    pub fn point(&self, x: f64) -> Result<(f64, f64, f64), CliError> {
        Ok(match self.sweep {
            SweepVariable::Beta => {
                (self.fixed("c", self.c)?, self.fixed("rho_db", self.rho_db)?, x)
            }
            SweepVariable::C => {
                (x, self.fixed("rho_db", self.rho_db)?, self.fixed("beta", self.beta)?)
            }
            SweepVariable::RhoDb => {
                (self.fixed("c", self.c)?, x, self.fixed("beta", self.beta)?)
            }
        })
    }

    pub fn practical_enabled(&self) -> Result<bool, CliError> {
        match (self.l, self.epsilon) {
            (Some(_), Some(_)) => Ok(true),
            (None, None) => Ok(false),
            _ => Err(CliError::Config(
                "practical columns need both \"L\" and \"epsilon\"".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMethod {
    GridThroughput,
    GradientLowerBound,
    GridLowerBound,
    NewtonConstrained,
    GridConstrained,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub c: f64,
    pub rho_db: f64,
    pub method: OptimizeMethod,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_half")]
    pub weight: WeightSpec,
}

fn default_half() -> WeightSpec {
    WeightSpec::Half
}
