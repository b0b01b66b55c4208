//! Priority-driven bandwidth provisioning for a multi-tenant bottleneck link.
//!
//! A controller classifies the traffic it sees every monitoring period,
//! turns the classes that match configured priorities into per-flow meter,
//! drop or forward rules, and installs them on a simulated OpenFlow-style
//! switch whose meters cap rates before the flows share the egress link.
//!
//! * [`types`]: classes, exact bandwidths, policies, observations, rule sets
//! * [`rules`]: rule generation and decision traces
//! * [`dataplane`]: flow/meter tables and the fluid link model
//! * [`controller`]: classifiers, southbound messages, the control loop
//! * [`northbound`]: the policy line protocol
//! * [`scenario`], [`sim`], [`metrics`], [`reproduce`]: scenario files,
//!   simulation driver, CSV export and the bundled reference runs

pub mod controller;
pub mod dataplane;
pub mod metrics;
pub mod northbound;
pub mod reproduce;
pub mod rules;
pub mod scenario;
pub mod sim;
pub mod types;

pub use controller::{Classifier, Controller, GroundTruth, MonitoringConfig, Scripted, SimSwitch};
pub use dataplane::{link_share, DataPlaneState, RateVector};
pub use metrics::{export_csv, write_csv, MetricsRecord};
pub use rules::{generate_rules, trace_rules, DecisionTrace, RuleEngineInput, RuleError};
pub use scenario::{load_scenario, ScenarioError, ScenarioSpec};
pub use sim::{run_scenario, RunOutput, Simulation};
pub use types::{
    classes_of, priority_intersection, Bandwidth, FlowId, PriorityPolicy, QosRuleSet, RuleAction, TrafficClass,
    TrafficObservation,
};
