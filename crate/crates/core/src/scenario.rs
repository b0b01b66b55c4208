//! Scenario files: link, controller, priorities, flows, classifier and
//! simulation settings in TOML. See `docs/scenario-format.md` for the grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::controller::ScriptEntry;
use crate::types::{Bandwidth, FlowId, PriorityPolicy, TrafficClass};

pub const DEFAULT_STEP_S: f64 = 0.1;
pub const DEFAULT_DURATION_S: f64 = 25.0;

const TIME_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: parse error: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: invalid {field}: {message}")]
    Validation {
        origin: String,
        field: String,
        message: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    link: RawLink,
    controller: RawController,
    #[serde(default)]
    priorities: Vec<RawPriority>,
    #[serde(default)]
    flows: Vec<RawFlow>,
    #[serde(default)]
    classifier: Option<RawClassifier>,
    #[serde(default)]
    sim: Option<RawSim>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    b_max_mbps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    period_s: f64,
    #[serde(default)]
    b_min_mbps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPriority {
    class: String,
    q_mbps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    id: String,
    #[serde(default)]
    source_label: String,
    class: String,
    rate_mbps: f64,
    start_s: f64,
    end_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawMode {
    GroundTruth,
    Scripted,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassifier {
    mode: RawMode,
    #[serde(default)]
    script: Vec<RawScriptEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScriptEntry {
    from_epoch: u64,
    observations: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration_s: Option<f64>,
    step_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: FlowId,
    /// Tenant or base-station the flow originates from; informational.
    pub source_label: String,
    pub class: TrafficClass,
    pub rate_mbps: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl FlowSpec {
    /// Whether the flow offers traffic at time `t` (`start_s <= t < end_s`).
    pub fn active_at(&self, t: f64) -> bool {
        t + TIME_EPSILON >= self.start_s && t + TIME_EPSILON < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifierSpec {
    GroundTruth,
    Scripted(Vec<ScriptEntry>),
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub b_max: Bandwidth,
    pub period_s: f64,
    pub b_min: Bandwidth,
    pub priorities: Vec<(TrafficClass, Bandwidth)>,
    pub flows: Vec<FlowSpec>,
    pub classifier: ClassifierSpec,
    pub duration_s: f64,
    pub step_s: f64,
}

impl ScenarioSpec {
    pub fn policy(&self) -> PriorityPolicy {
        PriorityPolicy::with_goals(self.priorities.iter().cloned(), self.b_min).expect("priorities validated on load")
    }

    pub fn steps_per_period(&self) -> u64 {
        (self.period_s / self.step_s).round() as u64
    }

    pub fn total_steps(&self) -> u64 {
        (self.duration_s / self.step_s - TIME_EPSILON).ceil().max(0.0) as u64
    }

    /// Number of epoch boundaries that fall inside the run.
    pub fn epochs(&self) -> u64 {
        self.total_steps().div_ceil(self.steps_per_period())
    }

    pub fn flow(&self, id: &FlowId) -> Option<&FlowSpec> {
        self.flows.iter().find(|f| &f.id == id)
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} flows, b_max={} Mbps, T={} s, b_min={} Mbps, {} priorities",
            self.name,
            self.flows.len(),
            self.b_max,
            self.period_s,
            self.b_min,
            self.priorities.len()
        )
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    parse_scenario(&text, &path.display().to_string(), &fallback)
}

/// Parses scenario text. `origin` names the source in error messages;
/// `fallback_name` is used when the file has no `name` key.
pub fn parse_scenario(text: &str, origin: &str, fallback_name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    Validator { origin }.validate(raw, fallback_name)
}

struct Validator<'a> {
    origin: &'a str,
}

impl Validator<'_> {
    fn fail<T>(&self, field: impl Into<String>, message: impl Into<String>) -> Result<T, ScenarioError> {
        Err(ScenarioError::Validation {
            origin: self.origin.to_string(),
            field: field.into(),
            message: message.into(),
        })
    }

    fn bandwidth(&self, field: &str, value: f64) -> Result<Bandwidth, ScenarioError> {
        if !value.is_finite() || value < 0.0 {
            return self.fail(field, format!("must be a finite number >= 0, got {value}"));
        }
        match Bandwidth::from_f64(value) {
            Ok(b) => Ok(b),
            Err(e) => self.fail(field, e.to_string()),
        }
    }

    fn positive_time(&self, field: &str, value: f64) -> Result<f64, ScenarioError> {
        if !(value.is_finite() && value > 0.0) {
            return self.fail(field, format!("must be > 0, got {value}"));
        }
        Ok(value)
    }

    fn label(&self, field: &str, value: &str) -> Result<(), ScenarioError> {
        if value.is_empty() {
            return self.fail(field, "must not be empty");
        }
        if value
            .chars()
            .any(|c| c.is_whitespace() || c == ',' || c == '"' || c == '=')
        {
            return self.fail(
                field,
                format!("'{value}' must not contain whitespace, ',', '\"' or '='"),
            );
        }
        Ok(())
    }

    fn validate(&self, raw: RawScenario, fallback_name: &str) -> Result<ScenarioSpec, ScenarioError> {
        let b_max = self.bandwidth("link.b_max_mbps", raw.link.b_max_mbps)?;
        if b_max.is_zero() {
            return self.fail("link.b_max_mbps", "must be > 0");
        }
        let period_s = self.positive_time("controller.period_s", raw.controller.period_s)?;
        let b_min = self.bandwidth("controller.b_min_mbps", raw.controller.b_min_mbps)?;

        let mut priorities = Vec::with_capacity(raw.priorities.len());
        let mut seen_classes = BTreeSet::new();
        for (i, p) in raw.priorities.iter().enumerate() {
            let field = format!("priorities[{i}]");
            self.label(&format!("{field}.class"), &p.class)?;
            if !seen_classes.insert(p.class.clone()) {
                return self.fail(format!("{field}.class"), format!("duplicate class '{}'", p.class));
            }
            let q = self.bandwidth(&format!("{field}.q_mbps"), p.q_mbps)?;
            if q.is_zero() {
                return self.fail(format!("{field}.q_mbps"), "must be > 0");
            }
            priorities.push((TrafficClass::new(p.class.clone()).expect("checked non-empty"), q));
        }

        let mut flows = Vec::with_capacity(raw.flows.len());
        let mut seen_flows = BTreeSet::new();
        for (i, f) in raw.flows.into_iter().enumerate() {
            let field = format!("flows[{i}]");
            self.label(&format!("{field}.id"), &f.id)?;
            if !seen_flows.insert(f.id.clone()) {
                return self.fail(format!("{field}.id"), format!("duplicate flow id '{}'", f.id));
            }
            self.label(&format!("{field}.class"), &f.class)?;
            if !(f.rate_mbps.is_finite() && f.rate_mbps >= 0.0) {
                return self.fail(
                    format!("{field}.rate_mbps"),
                    format!("must be >= 0, got {}", f.rate_mbps),
                );
            }
            if !(f.start_s.is_finite() && f.start_s >= 0.0) {
                return self.fail(format!("{field}.start_s"), format!("must be >= 0, got {}", f.start_s));
            }
            if !(f.end_s.is_finite() && f.start_s < f.end_s) {
                return self.fail(
                    format!("{field}.end_s"),
                    format!("must be greater than start_s ({}), got {}", f.start_s, f.end_s),
                );
            }
            flows.push(FlowSpec {
                id: FlowId::new(f.id).expect("checked non-empty"),
                source_label: f.source_label,
                class: TrafficClass::new(f.class).expect("checked non-empty"),
                rate_mbps: f.rate_mbps,
                start_s: f.start_s,
                end_s: f.end_s,
            });
        }

        let classifier = match raw.classifier {
            None => ClassifierSpec::GroundTruth,
            Some(RawClassifier {
                mode: RawMode::GroundTruth,
                script,
            }) => {
                if !script.is_empty() {
                    return self.fail("classifier.script", "only allowed with mode = \"scripted\"");
                }
                ClassifierSpec::GroundTruth
            }
            Some(RawClassifier {
                mode: RawMode::Scripted,
                script,
            }) => {
                let mut entries = Vec::with_capacity(script.len());
                let mut seen_epochs = BTreeSet::new();
                for (i, entry) in script.into_iter().enumerate() {
                    let field = format!("classifier.script[{i}]");
                    if !seen_epochs.insert(entry.from_epoch) {
                        return self.fail(
                            format!("{field}.from_epoch"),
                            format!("duplicate from_epoch {}", entry.from_epoch),
                        );
                    }
                    let mut labels = BTreeMap::new();
                    for (flow, class) in entry.observations {
                        let key = format!("{field}.observations.{flow}");
                        if !seen_flows.contains(&flow) {
                            return self.fail(key, format!("unknown flow '{flow}'"));
                        }
                        self.label(&key, &class)?;
                        labels.insert(
                            FlowId::new(flow).expect("known flow"),
                            TrafficClass::new(class).expect("checked non-empty"),
                        );
                    }
                    entries.push(ScriptEntry {
                        from_epoch: entry.from_epoch,
                        labels,
                    });
                }
                ClassifierSpec::Scripted(entries)
            }
        };

        let (duration_s, step_s) = match raw.sim {
            Some(sim) => (
                sim.duration_s.unwrap_or(DEFAULT_DURATION_S),
                sim.step_s.unwrap_or(DEFAULT_STEP_S),
            ),
            None => (DEFAULT_DURATION_S, DEFAULT_STEP_S),
        };
        let duration_s = self.positive_time("sim.duration_s", duration_s)?;
        let step_s = self.positive_time("sim.step_s", step_s)?;
        let ratio = period_s / step_s;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > TIME_EPSILON * ratio.max(1.0) {
            return self.fail(
                "controller.period_s",
                format!("must be an integer multiple of sim.step_s ({step_s}), got {period_s}"),
            );
        }

        Ok(ScenarioSpec {
            name: raw.name.unwrap_or_else(|| fallback_name.to_string()),
            b_max,
            period_s,
            b_min,
            priorities,
            flows,
            classifier,
            duration_s,
            step_s,
        })
    }
}
