//! Scenario files and result records.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::EfficiencyReport;
use crate::error::{Error, Result};
use crate::mechanism::{marginals, BandMode, MarketParams, UtilitySpec};
use crate::polymatroid::{partition_threshold, quantize, CapacityTable};
use crate::rounded::StrategyKind;
use crate::setfn::{RankFunction, TOL};

/// Where a scenario's rank function came from.
#[derive(Clone, Debug, PartialEq)]
pub enum RankSource {
    Example1,
    Example2,
    Tightness(f64),
    UniformCap { cap: f64, total: f64 },
    Table(RankFunction),
}

impl fmt::Display for RankSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankSource::Example1 => write!(f, "example1"),
            RankSource::Example2 => write!(f, "example2"),
            RankSource::Tightness(eta) => write!(f, "tightness({eta})"),
            RankSource::UniformCap { cap, total } => write!(f, "uniform_cap({cap}, {total})"),
            RankSource::Table(_) => write!(f, "table"),
        }
    }
}

fn call_args<'a>(name: &'a str, prefix: &str) -> Option<Vec<&'a str>> {
    let inner = name.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

fn parse_number(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Scenario(format!("expected a number, got {s:?}")))
}

impl RankSource {
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "example1" => return Ok(RankSource::Example1),
            "example2" => return Ok(RankSource::Example2),
            _ => {}
        }
        if let Some(args) = call_args(name, "tightness") {
            if let [eta] = args[..] {
                return Ok(RankSource::Tightness(parse_number(eta)?));
            }
        }
        if let Some(args) = call_args(name, "uniform_cap") {
            if let [cap, total] = args[..] {
                return Ok(RankSource::UniformCap {
                    cap: parse_number(cap)?,
                    total: parse_number(total)?,
                });
            }
        }
        Err(Error::Scenario(format!("unknown rank function {name:?}")))
    }

    pub fn build(&self, n_agents: usize) -> Result<RankFunction> {
        match self {
            RankSource::Example1 => Ok(RankFunction::example1()),
            RankSource::Example2 => Ok(RankFunction::example2()),
            RankSource::Tightness(eta) => RankFunction::tightness(*eta),
            RankSource::UniformCap { cap, total } => RankFunction::uniform_cap(n_agents, *cap, *total),
            RankSource::Table(f) => Ok(f.clone()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RankField {
    Named(String),
    Table(RankFunction),
}

#[derive(Serialize, Deserialize)]
struct ParamsField {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RoundingField {
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    rank_function: RankField,
    agents: Vec<UtilitySpec>,
    params: ParamsField,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    partitions: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rounding: Option<RoundingField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategies: Option<Vec<StrategyKind>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    band: BandMode,
    #[serde(rename = "oracle_M", default, skip_serializing_if = "Option::is_none")]
    oracle_partitions: Option<u64>,
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub name: Option<String>,
    pub source: RankSource,
    pub rank_function: RankFunction,
    pub agents: Vec<UtilitySpec>,
    pub params: MarketParams,
    pub partitions: Option<u64>,
    /// `ε` for the rounded mechanism.
    pub rounding: Option<f64>,
    pub strategies: Option<Vec<StrategyKind>>,
    pub seed: u64,
    pub band: BandMode,
    pub oracle_partitions: Option<u64>,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(file: ScenarioFile) -> Result<Self> {
        let source = match file.rank_function {
            RankField::Named(name) => RankSource::parse(&name)?,
            RankField::Table(f) => RankSource::Table(f),
        };
        Scenario::new(source, file.agents, file.params.alpha, file.params.beta)?
            .with_partitions(file.partitions)
            .with_rounding(file.rounding.map(|r| r.epsilon))
            .with_strategies(file.strategies)
            .map(|s| Scenario {
                name: file.name,
                seed: file.seed,
                band: file.band,
                oracle_partitions: file.oracle_partitions,
                ..s
            })
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile {
            name: s.name,
            rank_function: match s.source {
                RankSource::Table(f) => RankField::Table(f),
                named => RankField::Named(named.to_string()),
            },
            agents: s.agents,
            params: ParamsField {
                alpha: s.params.alpha,
                beta: s.params.beta,
            },
            partitions: s.partitions,
            rounding: s.rounding.map(|epsilon| RoundingField { epsilon }),
            strategies: s.strategies,
            seed: s.seed,
            band: s.band,
            oracle_partitions: s.oracle_partitions,
        }
    }
}

fn linear(slopes: &[f64]) -> Vec<UtilitySpec> {
    slopes.iter().map(|&slope| UtilitySpec::Linear { slope }).collect()
}

impl Scenario {
    pub fn new(source: RankSource, agents: Vec<UtilitySpec>, alpha: f64, beta: f64) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::Scenario("no agents".into()));
        }
        let rank_function = source.build(agents.len())?;
        if rank_function.n_agents() != agents.len() {
            return Err(Error::Scenario(format!(
                "{} agents but the rank function has {}",
                agents.len(),
                rank_function.n_agents()
            )));
        }
        for u in &agents {
            u.validate()?;
        }
        let params = MarketParams::new(alpha, beta, agents.len())?;
        Ok(Scenario {
            name: None,
            source,
            rank_function,
            agents,
            params,
            partitions: None,
            rounding: None,
            strategies: None,
            seed: 0,
            band: BandMode::Strict,
            oracle_partitions: None,
        })
    }

    pub fn with_partitions(mut self, partitions: Option<u64>) -> Self {
        self.partitions = partitions;
        self
    }

    pub fn with_rounding(mut self, epsilon: Option<f64>) -> Self {
        self.rounding = epsilon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_strategies(mut self, strategies: Option<Vec<StrategyKind>>) -> Result<Self> {
        if let Some(s) = &strategies {
            if s.len() != self.agents.len() {
                return Err(Error::Scenario(format!(
                    "{} strategies for {} agents",
                    s.len(),
                    self.agents.len()
                )));
            }
        }
        self.strategies = strategies;
        Ok(self)
    }

    /// Two agents with caps 0.6, linear utilities `2x` and `x`.
    pub fn example1() -> Self {
        Self::new(RankSource::Example1, linear(&[2.0, 1.0]), 2.5, 0.5)
            .expect("static scenario")
            .named("example1")
    }

    /// Three symmetric agents, linear utilities `1.2x`, `1.1x`, `x`.
    pub fn example2() -> Self {
        Self::new(RankSource::Example2, linear(&[1.2, 1.1, 1.0]), 1.5, 0.5)
            .expect("static scenario")
            .named("example2")
    }

    /// Two agents with `u1 = 2x`, `u2 = x`, `α = 2`, `β = 1`, `M = 3`.
    pub fn tightness(eta: f64) -> Result<Self> {
        Ok(Self::new(RankSource::Tightness(eta), linear(&[2.0, 1.0]), 2.0, 1.0)?
            .with_partitions(Some(3))
            .named(&format!("tightness({eta})")))
    }

    fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    /// Built-in scenario by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match RankSource::parse(name)? {
            RankSource::Example1 => Ok(Self::example1()),
            RankSource::Example2 => Ok(Self::example2()),
            RankSource::Tightness(eta) => Self::tightness(eta),
            _ => Err(Error::Scenario(format!("{name:?} is not a built-in scenario"))),
        }
    }

    /// A file path, or the name of a built-in scenario.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            Self::from_json(&std::fs::read_to_string(path)?)
        } else {
            Self::builtin(spec)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&compact))
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioValidation {
    pub is_valid: bool,
    pub min_distance: Option<f64>,
    #[serde(rename = "M_min")]
    pub min_partitions: Option<u64>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

/// Everything that can be checked about a scenario without running it.
pub fn validate_scenario(s: &Scenario) -> ScenarioValidation {
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    let f = &s.rank_function;

    let report = f.validate(TOL);
    checks.push(Check::new(
        "rank_function",
        report.is_valid,
        format!("{} violations", report.violations.len()),
    ));
    let normalized = (f.total() - 1.0).abs() <= TOL;
    checks.push(Check::new("normalized_total", normalized, format!("f(N) = {}", f.total())));

    let min_distance = f.min_distance().ok();
    let min_partitions = min_distance.and_then(|d| partition_threshold(d).ok());
    if let Some(d) = min_distance {
        checks.push(Check::new(
            "min_distance",
            d > 0.0 || s.partitions.is_some(),
            format!("min distance {d}"),
        ));
    }

    let mut partitions = s.partitions.or(min_partitions);
    if report.is_valid && normalized {
        match quantize(f, s.partitions) {
            Ok(region) => {
                partitions = Some(region.partitions());
                checks.push(Check::new(
                    "integral_polymatroid",
                    true,
                    format!("M = {} gives an integral polymatroid", region.partitions()),
                ));
            }
            Err(e) => checks.push(Check::new("integral_polymatroid", false, e.to_string())),
        }
    }

    for (agent, u) in s.agents.iter().enumerate() {
        match u.validate() {
            Ok(()) => {}
            Err(e) => checks.push(Check::new(format!("utility_{agent}"), false, e.to_string())),
        }
    }
    if let Some(m) = partitions {
        let (low, high) = (s.params.beta / m as f64, s.params.alpha / m as f64);
        let out_of_band = s.agents.iter().enumerate().find_map(|(agent, u)| {
            let v = marginals(u, m, m).ok()?;
            v.iter()
                .any(|x| *x < low - TOL || *x > high + TOL)
                .then_some(agent)
        });
        let detail = match out_of_band {
            Some(agent) => format!("agent {agent} has marginals outside [beta/M, alpha/M]"),
            None => "all marginals within [beta/M, alpha/M]".into(),
        };
        match (out_of_band, s.band) {
            (Some(_), BandMode::Clamp) => warnings.push(format!("{detail}; they will be clamped")),
            (found, _) => checks.push(Check::new("marginal_band", found.is_none(), detail)),
        }
    }

    if let Some(epsilon) = s.rounding {
        checks.push(Check::new("epsilon_positive", epsilon > 0.0, format!("epsilon = {epsilon}")));
        if epsilon > s.params.beta / 2.0 + TOL {
            warnings.push(format!(
                "epsilon = {epsilon} exceeds beta/2 = {}; rounding guarantees do not apply",
                s.params.beta / 2.0
            ));
        }
    }
    if let (Some(strategies), Some(m)) = (&s.strategies, partitions) {
        let odd_ceiloor = m % 2 == 1 && strategies.contains(&StrategyKind::Ceiloor);
        checks.push(Check::new(
            "ceiloor_parity",
            !odd_ceiloor,
            format!("M = {m}"),
        ));
    }

    ScenarioValidation {
        is_valid: checks.iter().all(|c| c.passed),
        min_distance,
        min_partitions,
        checks,
        warnings,
    }
}

/// One command's output, reproducible from the scenario and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub mode: Option<String>,
    pub scenario: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub outcome: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyReport>,
    /// Only filled in on request, since it breaks byte-for-byte
    /// reproducibility.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl ResultRecord {
    pub fn new(scenario: &Scenario, command: &str, mode: Option<&str>, outcome: serde_json::Value) -> Self {
        ResultRecord {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            mode: mode.map(str::to_string),
            scenario: scenario.name.clone().unwrap_or_else(|| scenario.source.to_string()),
            scenario_digest: scenario.digest(),
            seed: scenario.seed,
            outcome,
            efficiency: None,
            elapsed_ms: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_sources() {
        assert_eq!(RankSource::parse("example1").unwrap(), RankSource::Example1);
        assert_eq!(RankSource::parse("tightness(0.001)").unwrap(), RankSource::Tightness(0.001));
        assert_eq!(
            RankSource::parse("uniform_cap(0.4, 1)").unwrap(),
            RankSource::UniformCap { cap: 0.4, total: 1.0 }
        );
        assert!(RankSource::parse("tightness()").is_err());
        assert!(RankSource::parse("nope").is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "rank_function": "example1",
            "agents": [{"family": "linear", "slope": 2.0}, {"family": "linear", "slope": 1.0}],
            "params": {"alpha": 2.5, "beta": 0.5},
            "M": 10,
            "rounding": {"epsilon": 0.05},
            "strategies": ["floor", "ceiling"],
            "seed": 7
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.partitions, Some(10));
        assert_eq!(s.rounding, Some(0.05));
        assert_eq!(s.strategies.as_deref(), Some(&[StrategyKind::Floor, StrategyKind::Ceiling][..]));
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.digest(), s.digest());
    }

    #[test]
    fn table_scenario() {
        let text = r#"{
            "rank_function": {"n_agents": 2, "values": {"0": "0", "1": "0.6", "2": "0.6", "3": "1"}},
            "agents": [{"family": "linear", "slope": 2.0}, {"family": "linear", "slope": 1.0}],
            "params": {"alpha": 2.5, "beta": 0.5}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.rank_function, RankFunction::example1());
        assert!(matches!(s.source, RankSource::Table(_)));
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let empty = r#"{"rank_function": "example1", "agents": [], "params": {"alpha": 2.5, "beta": 0.5}}"#;
        assert!(Scenario::from_json(empty).is_err());
        let mismatch = r#"{"rank_function": "example2", "agents": [{"family": "linear", "slope": 1.0}],
            "params": {"alpha": 2.5, "beta": 0.5}}"#;
        assert!(Scenario::from_json(mismatch).is_err());
        let unknown = r#"{"rank_function": "example1", "agents": [], "params": {"alpha": 2.5, "beta": 0.5}, "x": 1}"#;
        assert!(Scenario::from_json(unknown).is_err());
    }

    #[test]
    fn validation_reports() {
        let v = validate_scenario(&Scenario::example1());
        assert!(v.is_valid, "{v:?}");
        assert_eq!(v.min_partitions, Some(10));
        assert!((v.min_distance.unwrap() - 0.2).abs() < 1e-12);

        let v = validate_scenario(&Scenario::example1().with_rounding(Some(0.3)));
        assert!(v.warnings.iter().any(|w| w.contains("beta/2")));

        let v = validate_scenario(&Scenario::example2().with_partitions(Some(3)));
        assert!(!v.is_valid);
    }

    #[test]
    fn builtins() {
        let t = Scenario::builtin("tightness(0.001)").unwrap();
        assert_eq!(t.partitions, Some(3));
        assert_eq!(Scenario::load("example2").unwrap(), Scenario::example2());
        assert!(Scenario::builtin("uniform_cap(0.4, 1)").is_err());
    }
}
