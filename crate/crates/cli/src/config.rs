//! Experiment configuration: a JSON document with named distributions and
//! channels, one section per scenario, simulation parameters and output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hdpower::multihop::{Flow, Link, NetworkGraph, NodeId, SourceAccounting};
use hdpower::{ArrivalMode, ChannelModel, DiscreteDistribution};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Singlehop,
    DpVerify,
    Multihop,
    Reproduce,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Singlehop => "singlehop",
            Self::DpVerify => "dp_verify",
            Self::Multihop => "multihop",
            Self::Reproduce => "reproduce",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    pub values: Vec<f64>,
    /// Equal weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Name of a distribution of raw gains.
    pub gains: String,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    FrameStart,
    PerSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    pub mode: ArrivalKind,
    /// Distribution of the batch present at the first slot.
    pub frame_start: String,
    /// Distribution of the arrivals in every later slot (per-slot mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_slot: Option<String>,
}

fn m_min_default() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleHopSpec {
    pub channel: String,
    pub arrivals: ArrivalSpec,
    #[serde(default = "m_min_default")]
    pub m_min: u32,
    pub m_max: u32,
}

pub const DP_FRAME_CAP: u32 = 4;

fn dp_m_max() -> u32 {
    DP_FRAME_CAP
}
fn dp_points() -> usize {
    2000
}
fn dp_tolerance() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpVerifySpec {
    pub channel: String,
    pub arrivals: ArrivalSpec,
    #[serde(default = "dp_m_max")]
    pub m_max: u32,
    #[serde(default = "dp_points")]
    pub n_points: usize,
    #[serde(default = "dp_points")]
    pub n_rate_points: usize,
    /// Largest accepted relative gap between DP and closed form.
    #[serde(default = "dp_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub id: u32,
    pub source: NodeId,
    pub destination: NodeId,
    pub arrivals: String,
    pub deadline: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadlineOverride {
    pub src: NodeId,
    pub dst: NodeId,
    pub slots: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingSpec {
    #[default]
    Buffered,
    IdleOnly,
}

impl From<AccountingSpec> for SourceAccounting {
    fn from(a: AccountingSpec) -> Self {
        match a {
            AccountingSpec::Buffered => Self::Buffered,
            AccountingSpec::IdleOnly => Self::IdleOnly,
        }
    }
}

fn k_default() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub links: Vec<LinkSpec>,
    pub flows: Vec<FlowSpec>,
    /// Explicit frame lengths; a set's slot count is the largest override
    /// among its links (1 when none).
    #[serde(default)]
    pub deadline_overrides: Vec<DeadlineOverride>,
    #[serde(default = "k_default")]
    pub k_paths: usize,
    #[serde(default)]
    pub accounting: AccountingSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Table1,
    Table2,
    Multiuser,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Table1 => "table1",
            Self::Table2 => "table2",
            Self::Multiuser => "multiuser",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceSpec {
    pub target: Target,
}

fn frames_default() -> u64 {
    1_000_000
}
fn cycles_default() -> u64 {
    100_000
}
fn seed_default() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "frames_default")]
    pub n_frames: u64,
    #[serde(default = "cycles_default")]
    pub n_cycles: u64,
    #[serde(default = "seed_default")]
    pub seed: u64,
    /// Relative tolerance for simulation against theory; unchecked when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n_frames: frames_default(),
            n_cycles: cycles_default(),
            seed: seed_default(),
            tolerance: None,
        }
    }
}

fn out_default() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "out_default")]
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: out_default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Free text, ignored by the tool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub distributions: BTreeMap<String, DistSpec>,
    #[serde(default)]
    pub channels: BTreeMap<String, ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singlehop: Option<SingleHopSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp_verify: Option<DpVerifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduce: Option<ReproduceSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A configuration problem, anchored to a position in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.path, self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Source text kept around to anchor semantic errors.
pub struct ConfigSource {
    pub path: String,
    pub text: String,
}

impl ConfigSource {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            line: 0,
            column: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Ok(Self {
            path: path.display().to_string(),
            text,
        })
    }

    /// Error at the first occurrence of `"needle"` (a quoted key or value),
    /// or at the top of the file.
    pub fn error_at(&self, needle: &str, message: impl Into<String>) -> ConfigError {
        let quoted = format!("\"{needle}\"");
        let (line, column) = self
            .text
            .find(&quoted)
            .map(|at| {
                let before = &self.text[..at];
                let line = before.matches('\n').count() + 1;
                let column = at - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, column)
            })
            .unwrap_or((1, 1));
        ConfigError {
            path: self.path.clone(),
            line,
            column,
            message: message.into(),
        }
    }

    pub fn parse(&self) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(&self.text).map_err(|e| ConfigError {
            path: self.path.clone(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate(self)?;
        Ok(cfg)
    }
}

pub fn to_json(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

impl ExperimentConfig {
    pub fn distribution(&self, src: &ConfigSource, name: &str) -> Result<DiscreteDistribution, ConfigError> {
        let spec = self
            .distributions
            .get(name)
            .ok_or_else(|| src.error_at(name, format!("unknown distribution `{name}`")))?;
        let built = match &spec.probs {
            Some(p) => DiscreteDistribution::new(spec.values.clone(), p.clone()),
            None => DiscreteDistribution::uniform(spec.values.clone()),
        };
        built.map_err(|e| src.error_at(name, format!("distribution `{name}`: {e}")))
    }

    pub fn channel(&self, src: &ConfigSource, name: &str) -> Result<ChannelModel, ConfigError> {
        let spec = self
            .channels
            .get(name)
            .ok_or_else(|| src.error_at(name, format!("unknown channel `{name}`")))?;
        let gains = self.distribution(src, &spec.gains)?;
        ChannelModel::new(gains, spec.gamma, spec.sigma2)
            .map_err(|e| src.error_at(name, format!("channel `{name}`: {e}")))
    }

    pub fn arrival_mode(&self, src: &ConfigSource, spec: &ArrivalSpec) -> Result<ArrivalMode, ConfigError> {
        let frame_start = self.distribution(src, &spec.frame_start)?;
        match (spec.mode, &spec.per_slot) {
            (ArrivalKind::FrameStart, None) => Ok(ArrivalMode::FrameStart { frame_start }),
            (ArrivalKind::PerSlot, Some(p)) => Ok(ArrivalMode::PerSlot {
                frame_start,
                per_slot: self.distribution(src, p)?,
            }),
            (ArrivalKind::FrameStart, Some(_)) => {
                Err(src.error_at("per_slot", "frame_start mode takes no per_slot distribution"))
            }
            (ArrivalKind::PerSlot, None) => {
                Err(src.error_at("mode", "per_slot mode needs a per_slot distribution"))
            }
        }
    }

    pub fn graph(&self, src: &ConfigSource, net: &NetworkSpec) -> Result<NetworkGraph, ConfigError> {
        let mut g = NetworkGraph::new();
        for l in &net.links {
            let ch = self.channel(src, &l.channel)?;
            if g.channel(Link::new(l.src, l.dst)).is_ok() {
                return Err(src.error_at("links", format!("link ({},{}) declared twice", l.src, l.dst)));
            }
            g.add_link(l.src, l.dst, ch)
                .map_err(|e| src.error_at("links", format!("link ({},{}): {e}", l.src, l.dst)))?;
        }
        Ok(g)
    }

    pub fn flows(
        &self,
        src: &ConfigSource,
        net: &NetworkSpec,
        g: &NetworkGraph,
    ) -> Result<Vec<Flow>, ConfigError> {
        let mut ids = std::collections::BTreeSet::new();
        net.flows
            .iter()
            .map(|f| {
                if !ids.insert(f.id) {
                    return Err(src.error_at("flows", format!("flow id {} used twice", f.id)));
                }
                for n in [f.source, f.destination] {
                    if !g.contains_node(n) {
                        return Err(src.error_at("flows", format!("flow {}: node {n} has no links", f.id)));
                    }
                }
                let a = self.distribution(src, &f.arrivals)?;
                Flow::new(f.id, f.source, f.destination, a, f.deadline)
                    .map_err(|e| src.error_at("flows", e.to_string()))
            })
            .collect()
    }

    /// Checks everything the scenario needs: names resolve, distributions and
    /// channels are valid, required sections are present.
    pub fn validate(&self, src: &ConfigSource) -> Result<(), ConfigError> {
        for name in self.distributions.keys() {
            self.distribution(src, name)?;
        }
        for name in self.channels.keys() {
            self.channel(src, name)?;
        }
        let missing = |section: &str| {
            src.error_at(
                "scenario",
                format!("scenario {} needs a `{section}` section", self.scenario),
            )
        };
        match self.scenario {
            Scenario::Singlehop => {
                let s = self.singlehop.as_ref().ok_or_else(|| missing("singlehop"))?;
                self.channel(src, &s.channel)?;
                self.arrival_mode(src, &s.arrivals)?;
                if s.m_min == 0 || s.m_max < s.m_min {
                    return Err(src.error_at("m_max", "need 1 <= m_min <= m_max"));
                }
            }
            Scenario::DpVerify => {
                let s = self.dp_verify.as_ref().ok_or_else(|| missing("dp_verify"))?;
                self.channel(src, &s.channel)?;
                self.arrival_mode(src, &s.arrivals)?;
                if s.m_max == 0 || s.m_max > DP_FRAME_CAP {
                    return Err(src.error_at("m_max", format!("m_max must lie in 1..={DP_FRAME_CAP}")));
                }
                if s.n_points < 2 || s.n_rate_points < 2 {
                    return Err(src.error_at("dp_verify", "grids need at least 2 points"));
                }
                if !(s.tolerance > 0.0) {
                    return Err(src.error_at("tolerance", "tolerance must be > 0"));
                }
            }
            Scenario::Multihop => {
                let net = self.network.as_ref().ok_or_else(|| missing("network"))?;
                let g = self.graph(src, net)?;
                let flows = self.flows(src, net, &g)?;
                if flows.is_empty() {
                    return Err(src.error_at("flows", "at least one flow is required"));
                }
                for o in &net.deadline_overrides {
                    if g.channel(Link::new(o.src, o.dst)).is_err() {
                        return Err(src.error_at(
                            "deadline_overrides",
                            format!("override for unknown link ({},{})", o.src, o.dst),
                        ));
                    }
                    if o.slots == 0 {
                        return Err(src.error_at("deadline_overrides", "override slots must be >= 1"));
                    }
                }
                if net.k_paths == 0 {
                    return Err(src.error_at("k_paths", "k_paths must be >= 1"));
                }
            }
            Scenario::Reproduce => {
                self.reproduce.as_ref().ok_or_else(|| missing("reproduce"))?;
            }
        }
        if self.simulation.n_frames == 0 || self.simulation.n_cycles == 0 {
            return Err(src.error_at("simulation", "n_frames and n_cycles must be >= 1"));
        }
        if let Some(t) = self.simulation.tolerance {
            if !(t > 0.0) {
                return Err(src.error_at("tolerance", "tolerance must be > 0"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(text: &str) -> ConfigSource {
        ConfigSource {
            path: "test.json".into(),
            text: text.into(),
        }
    }

    const SINGLE: &str = r#"{
  "scenario": "singlehop",
  "distributions": {
    "a": { "values": [0.5, 1.0, 1.5] },
    "h": { "values": [0.25, 0.37, 0.5, 0.62], "probs": [0.25, 0.25, 0.25, 0.25] }
  },
  "channels": { "c": { "gains": "h" } },
  "singlehop": {
    "channel": "c",
    "arrivals": { "mode": "frame_start", "frame_start": "a" },
    "m_max": 6
  }
}"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = source(SINGLE).parse().unwrap();
        assert_eq!(cfg.simulation, SimulationSpec::default());
        let text = to_json(&cfg);
        let again = source(&text).parse().unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, to_json(&again));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = source("{\n  \"scenario\": \"singlehop\",\n  \"bogus\": 1\n}")
            .parse()
            .unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("bogus"), "{err}");
    }

    #[test]
    fn unknown_name_is_anchored_at_reference() {
        let text = SINGLE.replace("\"channel\": \"c\"", "\"channel\": \"nope\"");
        let err = source(&text).parse().unwrap_err();
        assert!(err.message.contains("unknown channel `nope`"));
        assert_eq!(err.line, 9);
        assert_eq!(
            err.to_string(),
            format!("test.json:9:{}: {}", err.column, err.message)
        );
    }

    #[test]
    fn invalid_distribution_reported() {
        let text = SINGLE.replace("[0.25, 0.25, 0.25, 0.25]", "[0.5, 0.5, 0.5, 0.5]");
        let err = source(&text).parse().unwrap_err();
        assert!(err.message.contains("distribution `h`"));
        assert_eq!(err.line, 5);
    }

    #[test]
    fn missing_section_and_mode_mismatch() {
        let err = source(r#"{"scenario": "multihop"}"#).parse().unwrap_err();
        assert!(err.message.contains("`network`"));
        let text = SINGLE.replace("\"mode\": \"frame_start\"", "\"mode\": \"per_slot\"");
        let err = source(&text).parse().unwrap_err();
        assert!(err.message.contains("per_slot distribution"));
    }
}
