//! Fluid model of one OpenFlow-style switch feeding a bottleneck link.
//!
//! The switch holds a flow table and a meter table with drop bands. Meters are
//! steady-state rate caps; traffic that survives metering then shares the
//! egress link max-min fairly. Rates are `f64` Mbps from here on.

use std::collections::BTreeMap;
use std::fmt;

use crate::types::{Bandwidth, FlowId, QosRuleSet, RuleAction, RATE_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeterId(u32);

impl MeterId {
    pub fn get(&self) -> u32 {
        self.0
    }
}

impl fmt::Display for MeterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "meter:{}", self.0)
    }
}

/// A meter with a single drop band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeterEntry {
    pub id: MeterId,
    pub rate: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction {
    GotoMeter(MeterId),
    DropAll,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEntry {
    pub flow: FlowId,
    pub instruction: Instruction,
}

/// Flow table, meter table and egress capacity of the simulated switch.
/// Flows without an entry are forwarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPlaneState {
    flow_table: BTreeMap<FlowId, FlowEntry>,
    meter_table: BTreeMap<MeterId, MeterEntry>,
    link_capacity: Bandwidth,
}

impl DataPlaneState {
    /// Default (empty) tables. Panics if `link_capacity` is zero.
    pub fn new(link_capacity: Bandwidth) -> Self {
        assert!(!link_capacity.is_zero(), "link capacity must be > 0");
        Self {
            flow_table: BTreeMap::new(),
            meter_table: BTreeMap::new(),
            link_capacity,
        }
    }

    pub fn link_capacity(&self) -> Bandwidth {
        self.link_capacity
    }

    pub fn is_default(&self) -> bool {
        self.flow_table.is_empty() && self.meter_table.is_empty()
    }

    pub fn flow_entries(&self) -> impl Iterator<Item = &FlowEntry> {
        self.flow_table.values()
    }

    pub fn meter_entries(&self) -> impl Iterator<Item = &MeterEntry> {
        self.meter_table.values()
    }

    pub fn flow_entry(&self, flow: &FlowId) -> Option<&FlowEntry> {
        self.flow_table.get(flow)
    }

    pub fn meter(&self, id: MeterId) -> Option<&MeterEntry> {
        self.meter_table.get(&id)
    }

    /// Rate of the meter a flow is attached to, if any.
    pub fn meter_rate_for(&self, flow: &FlowId) -> Option<Bandwidth> {
        match self.flow_table.get(flow)?.instruction {
            Instruction::GotoMeter(id) => self.meter_table.get(&id).map(|m| m.rate),
            _ => None,
        }
    }

    /// Returns the tables that result from installing `rules`. Provisioning
    /// replaces every prior entry; meters are numbered from 1 in flow order so
    /// installing the same rule set twice yields identical tables.
    pub fn apply_ruleset(&self, rules: &QosRuleSet) -> DataPlaneState {
        let mut next = DataPlaneState::new(self.link_capacity);
        let QosRuleSet::Provision(entries) = rules else {
            return next;
        };
        let mut next_meter = 1u32;
        for (flow, action) in entries {
            let instruction = match action {
                RuleAction::Meter(rate) => {
                    let id = MeterId(next_meter);
                    next_meter += 1;
                    next.meter_table.insert(id, MeterEntry { id, rate: *rate });
                    Instruction::GotoMeter(id)
                }
                RuleAction::Drop => Instruction::DropAll,
                RuleAction::Unmetered => Instruction::Forward,
            };
            next.flow_table.insert(
                flow.clone(),
                FlowEntry {
                    flow: flow.clone(),
                    instruction,
                },
            );
        }
        next
    }

    /// Per-flow output of the meter stage.
    pub fn meter_pass(&self, offered: &RateVector) -> RateVector {
        offered
            .iter()
            .map(|(flow, &rate)| {
                let out = match self.flow_table.get(flow).map(|e| e.instruction) {
                    Some(Instruction::DropAll) => 0.0,
                    Some(Instruction::GotoMeter(id)) => {
                        let cap = self.meter_table[&id].rate.to_f64();
                        rate.min(cap)
                    }
                    Some(Instruction::Forward) | None => rate,
                };
                (flow.clone(), out)
            })
            .collect()
    }

    /// Delivered throughput for one simulation step.
    pub fn step(&self, offered: &RateVector) -> RateVector {
        link_share(self.link_capacity.to_f64(), &self.meter_pass(offered))
    }
}

/// Per-flow rates in Mbps for one simulation step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateVector(BTreeMap<FlowId, f64>);

impl RateVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a negative or non-finite rate.
    pub fn insert(&mut self, flow: FlowId, mbps: f64) {
        assert!(
            mbps.is_finite() && mbps >= 0.0,
            "rate for {flow} must be finite and >= 0, got {mbps}"
        );
        self.0.insert(flow, mbps);
    }

    pub fn get(&self, flow: &FlowId) -> Option<f64> {
        self.0.get(flow).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FlowId, &f64)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }
}

impl FromIterator<(FlowId, f64)> for RateVector {
    fn from_iter<I: IntoIterator<Item = (FlowId, f64)>>(iter: I) -> Self {
        let mut v = RateVector::new();
        for (flow, rate) in iter {
            v.insert(flow, rate);
        }
        v
    }
}

/// Shares `capacity` among `demands`. Undersubscribed links deliver every
/// demand; otherwise the result is the max-min fair (water-filling)
/// allocation and sums to `capacity`.
pub fn link_share(capacity: f64, demands: &RateVector) -> RateVector {
    if demands.total() <= capacity + RATE_EPSILON {
        return demands.clone();
    }
    let mut order: Vec<(&FlowId, f64)> = demands.iter().map(|(f, &d)| (f, d)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));

    let mut out = RateVector::new();
    let mut remaining = capacity;
    let mut left = order.len();
    for (flow, demand) in order {
        let fair = remaining / left as f64;
        let grant = demand.min(fair).max(0.0);
        out.insert(flow.clone(), grant);
        remaining -= grant;
        left -= 1;
    }
    out
}
