//! Periodic monitor, classify and provision loop.
//!
//! Every period the controller asks its [`Classifier`] for the traffic classes
//! of the active flows, runs the rule engine against the current policy and
//! pushes the result to the switch over the [`Southbound`] boundary. Policy
//! changes arrive as northbound text commands; the controller is a single
//! actor, so commands and ticks never interleave within one another.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;

use log::{debug, warn};
use thiserror::Error;

use crate::dataplane::{DataPlaneState, RateVector};
use crate::northbound;
use crate::rules::{trace_rules, DecisionTrace, RuleEngineInput, RuleError};
use crate::types::{Bandwidth, FlowId, PriorityPolicy, QosRuleSet, TrafficClass, TrafficObservation};

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringConfig {
    period_s: f64,
    pub policy: PriorityPolicy,
}

impl MonitoringConfig {
    pub fn new(period_s: f64, policy: PriorityPolicy) -> Result<Self, ControllerError> {
        if !(period_s.is_finite() && period_s > 0.0) {
            return Err(ControllerError::InvalidPeriod(period_s));
        }
        Ok(Self { period_s, policy })
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }
}

/// What the classifier gets to see of one active flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub id: FlowId,
    /// The class the flow really carries.
    pub class: TrafficClass,
    pub offered_mbps: f64,
}

pub trait Classifier: Send {
    /// Labels exactly the flows in `active`.
    fn classify(&self, epoch: u64, active: &[FlowState]) -> TrafficObservation;
}

/// Reports every flow's true class.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth;

impl Classifier for GroundTruth {
    fn classify(&self, epoch: u64, active: &[FlowState]) -> TrafficObservation {
        let mut obs = TrafficObservation::new(epoch);
        for flow in active {
            // Flow ids are unique among active flows.
            let _ = obs.insert(flow.id.clone(), flow.class.clone());
        }
        obs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub from_epoch: u64,
    pub labels: BTreeMap<FlowId, TrafficClass>,
}

/// Replays labels from a per-epoch script. The entry with the greatest
/// `from_epoch <= epoch` applies; flows it does not mention, and epochs before
/// the first entry, fall back to the true class.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    entries: Vec<ScriptEntry>,
}

impl Scripted {
    pub fn new(mut entries: Vec<ScriptEntry>) -> Self {
        entries.sort_by_key(|e| e.from_epoch);
        Self { entries }
    }

    fn entry_for(&self, epoch: u64) -> Option<&ScriptEntry> {
        self.entries.iter().rev().find(|e| e.from_epoch <= epoch)
    }
}

impl Classifier for Scripted {
    fn classify(&self, epoch: u64, active: &[FlowState]) -> TrafficObservation {
        let entry = self.entry_for(epoch);
        let mut obs = TrafficObservation::new(epoch);
        for flow in active {
            let class = entry
                .and_then(|e| e.labels.get(&flow.id))
                .unwrap_or(&flow.class)
                .clone();
            let _ = obs.insert(flow.id.clone(), class);
        }
        obs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SouthboundMessage {
    InstallRules { rules: QosRuleSet, epoch: u64 },
    QueryStats { epoch: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SouthboundReply {
    /// The tables now reflect the installed rule set.
    Ack,
    Stats(RateVector),
}

/// Synchronous request/reply channel to a switch.
pub trait Southbound {
    fn request(&mut self, msg: SouthboundMessage) -> SouthboundReply;
}

/// In-process switch backed by [`DataPlaneState`].
#[derive(Debug, Clone)]
pub struct SimSwitch {
    state: DataPlaneState,
    last_delivered: RateVector,
    installs: u64,
}

impl SimSwitch {
    pub fn new(link_capacity: Bandwidth) -> Self {
        Self {
            state: DataPlaneState::new(link_capacity),
            last_delivered: RateVector::new(),
            installs: 0,
        }
    }

    pub fn state(&self) -> &DataPlaneState {
        &self.state
    }

    pub fn installs(&self) -> u64 {
        self.installs
    }

    /// Runs one simulation step through the current tables.
    pub fn forward(&mut self, offered: &RateVector) -> RateVector {
        let delivered = self.state.step(offered);
        self.last_delivered = delivered.clone();
        delivered
    }
}

impl Southbound for SimSwitch {
    fn request(&mut self, msg: SouthboundMessage) -> SouthboundReply {
        match msg {
            SouthboundMessage::InstallRules { rules, epoch } => {
                // Swap in a fully built table set; no partial state is visible.
                self.state = self.state.apply_ruleset(&rules);
                self.installs += 1;
                debug!("epoch {epoch}: installed {rules}");
                SouthboundReply::Ack
            }
            SouthboundMessage::QueryStats { .. } => SouthboundReply::Stats(self.last_delivered.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("monitoring period must be > 0, got {0}")]
    InvalidPeriod(f64),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("switch did not acknowledge rule installation for epoch {0}")]
    NotAcknowledged(u64),
}

/// Outcome of one successful tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub epoch: u64,
    pub observation: TrafficObservation,
    pub rules: QosRuleSet,
    pub trace: DecisionTrace,
    /// Flows whose observed class is a matched priority class.
    pub priority_flows: BTreeSet<FlowId>,
    /// False when the rule set equals the one installed by the previous tick.
    pub changed: bool,
}

pub struct Controller {
    config: MonitoringConfig,
    classifier: Box<dyn Classifier>,
    b_max: Bandwidth,
    installed: Option<QosRuleSet>,
    priority_flows: BTreeSet<FlowId>,
}

impl Controller {
    pub fn new(
        config: MonitoringConfig,
        classifier: Box<dyn Classifier>,
        b_max: Bandwidth,
    ) -> Result<Self, ControllerError> {
        if b_max.is_zero() {
            return Err(RuleError::NonPositiveCapacity.into());
        }
        Ok(Self {
            config,
            classifier,
            b_max,
            installed: None,
            priority_flows: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &MonitoringConfig {
        &self.config
    }

    pub fn policy(&self) -> &PriorityPolicy {
        &self.config.policy
    }

    pub fn b_max(&self) -> Bandwidth {
        self.b_max
    }

    /// Last rule set the switch acknowledged.
    pub fn installed(&self) -> Option<&QosRuleSet> {
        self.installed.as_ref()
    }

    /// Priority flows under the last installed rule set.
    pub fn priority_flows(&self) -> &BTreeSet<FlowId> {
        &self.priority_flows
    }

    pub fn classify(&self, epoch: u64, active: &[FlowState]) -> TrafficObservation {
        self.classifier.classify(epoch, active)
    }

    /// Computes the rule set for `epoch` without installing it.
    pub fn plan(
        &self,
        epoch: u64,
        active: &[FlowState],
    ) -> Result<(TrafficObservation, QosRuleSet, DecisionTrace), ControllerError> {
        let obs = self.classify(epoch, active);
        let input = RuleEngineInput::new(&self.config.policy, &obs, self.b_max)?;
        let (rules, trace) = trace_rules(&input)?;
        Ok((obs, rules, trace))
    }

    /// One monitoring period: classify, generate, install. On error the
    /// switch keeps its previous tables.
    pub fn tick(
        &mut self,
        epoch: u64,
        active: &[FlowState],
        switch: &mut dyn Southbound,
    ) -> Result<TickReport, ControllerError> {
        let (observation, rules, trace) = match self.plan(epoch, active) {
            Ok(planned) => planned,
            Err(e) => {
                warn!("epoch {epoch}: keeping previous tables: {e}");
                return Err(e);
            }
        };
        let reply = switch.request(SouthboundMessage::InstallRules {
            rules: rules.clone(),
            epoch,
        });
        if reply != SouthboundReply::Ack {
            warn!("epoch {epoch}: switch replied {reply:?} to rule installation");
            return Err(ControllerError::NotAcknowledged(epoch));
        }
        let priority_flows: BTreeSet<FlowId> = if rules.is_reset() {
            BTreeSet::new()
        } else {
            observation
                .iter()
                .filter(|(_, class)| trace.matched.contains(*class))
                .map(|(flow, _)| flow.clone())
                .collect()
        };
        let changed = self.installed.as_ref() != Some(&rules);
        self.installed = Some(rules.clone());
        self.priority_flows = priority_flows.clone();
        Ok(TickReport {
            epoch,
            observation,
            rules,
            trace,
            priority_flows,
            changed,
        })
    }

    /// Handles one northbound command line. Policy changes apply from the
    /// next tick on.
    pub fn handle_northbound(&mut self, line: &str) -> String {
        northbound::handle_line(&mut self.config.policy, line)
    }

    /// Serves every request already queued in `inbox`, in arrival order.
    pub fn drain_northbound(&mut self, inbox: &NorthboundInbox) -> usize {
        let mut served = 0;
        while let Ok(req) = inbox.rx.try_recv() {
            let reply = self.handle_northbound(&req.line);
            let _ = req.reply.send(reply);
            served += 1;
        }
        served
    }
}

struct NorthboundRequest {
    line: String,
    reply: mpsc::Sender<String>,
}

/// Sending half of the northbound queue; cheap to clone across threads.
#[derive(Clone)]
pub struct NorthboundClient {
    tx: mpsc::Sender<NorthboundRequest>,
}

impl NorthboundClient {
    /// Queues `line` and waits for the controller's reply.
    pub fn send(&self, line: &str) -> String {
        let (reply_tx, reply_rx) = mpsc::channel();
        let req = NorthboundRequest {
            line: line.to_string(),
            reply: reply_tx,
        };
        if self.tx.send(req).is_err() {
            return "ERR controller stopped".to_string();
        }
        reply_rx.recv().unwrap_or_else(|_| "ERR controller stopped".to_string())
    }
}

/// Receiving half of the northbound queue, drained by the controller's owner.
pub struct NorthboundInbox {
    rx: mpsc::Receiver<NorthboundRequest>,
}

pub fn northbound_channel() -> (NorthboundClient, NorthboundInbox) {
    let (tx, rx) = mpsc::channel();
    (NorthboundClient { tx }, NorthboundInbox { rx })
}
