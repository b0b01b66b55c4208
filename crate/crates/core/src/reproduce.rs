//! Bundled reference scenarios and their steady-state comparison.

use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;

use crate::scenario::{parse_scenario, ScenarioError, ScenarioSpec};
use crate::sim::RunOutput;
use crate::types::FlowId;

/// A scenario compiled into the library.
#[derive(Debug, Clone, Copy)]
pub struct Bundled {
    pub name: &'static str,
    pub alias: Option<&'static str>,
    pub source: &'static str,
    pub expected: Option<&'static str>,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled {
        name: "fig3_baseline",
        alias: Some("fig3"),
        source: include_str!("../scenarios/fig3_baseline.toml"),
        expected: Some(include_str!("../scenarios/fig3_baseline.expected.toml")),
    },
    Bundled {
        name: "fig4a_single_priority",
        alias: Some("fig4a"),
        source: include_str!("../scenarios/fig4a_single_priority.toml"),
        expected: Some(include_str!("../scenarios/fig4a_single_priority.expected.toml")),
    },
    Bundled {
        name: "fig4b_multi_priority",
        alias: Some("fig4b"),
        source: include_str!("../scenarios/fig4b_multi_priority.toml"),
        expected: Some(include_str!("../scenarios/fig4b_multi_priority.expected.toml")),
    },
    Bundled {
        name: "dynamic_reclassify",
        alias: Some("dynamic"),
        source: include_str!("../scenarios/dynamic_reclassify.toml"),
        expected: None,
    },
];

/// Looks a bundled scenario up by name or alias.
pub fn bundled(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name || b.alias == Some(name))
}

impl Bundled {
    pub fn scenario(&self) -> Result<ScenarioSpec, ScenarioError> {
        parse_scenario(self.source, &format!("<bundled {}>", self.name), self.name)
    }

    pub fn expectation(&self) -> Option<Result<SteadyState, ScenarioError>> {
        self.expected
            .map(|text| SteadyState::parse(text, &format!("<bundled {}.expected>", self.name)))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSteadyState {
    scenario: String,
    steady_after_s: f64,
    tolerance_mbps: f64,
    delivered: BTreeMap<String, f64>,
}

/// Expected delivered rate per flow once the run has settled.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub scenario: String,
    pub steady_after_s: f64,
    pub tolerance_mbps: f64,
    pub delivered: BTreeMap<FlowId, f64>,
}

impl SteadyState {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let raw: RawSteadyState = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let mut delivered = BTreeMap::new();
        for (flow, rate) in raw.delivered {
            let id = FlowId::new(flow).map_err(|e| ScenarioError::Validation {
                origin: origin.to_string(),
                field: "delivered".to_string(),
                message: e.to_string(),
            })?;
            delivered.insert(id, rate);
        }
        Ok(Self {
            scenario: raw.scenario,
            steady_after_s: raw.steady_after_s,
            tolerance_mbps: raw.tolerance_mbps,
            delivered,
        })
    }

    /// Compares every sample stamped after `steady_after_s`.
    pub fn compare(&self, run: &RunOutput) -> Comparison {
        let flows = self
            .delivered
            .iter()
            .map(|(flow, &expected)| {
                let samples: Vec<f64> = run
                    .records
                    .iter()
                    .filter(|r| &r.flow_id == flow && r.time_s > self.steady_after_s + 1e-9)
                    .map(|r| r.delivered_mbps)
                    .collect();
                let max_error = samples.iter().map(|v| (v - expected).abs()).fold(0.0, f64::max);
                let mean = if samples.is_empty() {
                    f64::NAN
                } else {
                    samples.iter().sum::<f64>() / samples.len() as f64
                };
                FlowComparison {
                    flow: flow.clone(),
                    expected,
                    mean,
                    max_error,
                    samples: samples.len(),
                }
            })
            .collect();
        Comparison {
            tolerance: self.tolerance_mbps,
            flows,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowComparison {
    pub flow: FlowId,
    pub expected: f64,
    pub mean: f64,
    pub max_error: f64,
    pub samples: usize,
}

impl FlowComparison {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.samples > 0 && self.max_error <= tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub tolerance: f64,
    pub flows: Vec<FlowComparison>,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        !self.flows.is_empty() && self.flows.iter().all(|f| f.passes(self.tolerance))
    }

    /// One line per failing flow.
    pub fn failures(&self) -> Vec<String> {
        self.flows
            .iter()
            .filter(|f| !f.passes(self.tolerance))
            .map(|f| {
                format!(
                    "{}: expected {:.6}, mean {:.6}, max error {:.3e} over {} samples",
                    f.flow, f.expected, f.mean, f.max_error, f.samples
                )
            })
            .collect()
    }
}

impl fmt::Display for Comparison {
    /// `f1=6.000 f2=2.000 f3=2.000 PASS`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for flow in &self.flows {
            write!(f, "{}={:.3} ", flow.flow, flow.mean)?;
        }
        f.write_str(if self.passed() { "PASS" } else { "FAIL" })
    }
}
