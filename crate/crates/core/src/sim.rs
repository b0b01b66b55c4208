//! Drives a scenario through the controller and the simulated switch.
//!
//! Time advances in fixed steps of `step_s`. Step `n` covers
//! `[n * step_s, (n + 1) * step_s)` and its samples are stamped with the end
//! of that interval. When `n * step_s` is an epoch boundary the controller
//! ticks first, so rules computed at boundary `k * T` govern the samples in
//! `(k * T, (k + 1) * T]`.

use std::fmt;

use thiserror::Error;

use crate::controller::{
    Classifier, Controller, ControllerError, FlowState, GroundTruth, MonitoringConfig, Scripted, SimSwitch,
};
use crate::dataplane::{Instruction, RateVector};
use crate::metrics::{Action, MetricsRecord};
use crate::rules::DecisionTrace;
use crate::scenario::{ClassifierSpec, ScenarioSpec};
use crate::types::{QosRuleSet, TrafficObservation};

#[derive(Debug, Clone, PartialEq)]
pub enum TickOutcome {
    Installed {
        rules: QosRuleSet,
        changed: bool,
    },
    /// Rule generation failed; the previous tables stayed in force.
    Failed(String),
}

/// Controller activity at one epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub epoch: u64,
    pub time_s: f64,
    pub outcome: TickOutcome,
}

impl fmt::Display for TickRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            TickOutcome::Installed { rules, changed } => write!(
                f,
                "t={} epoch={} install{} {rules}",
                self.time_s,
                self.epoch,
                if *changed { "" } else { " (unchanged)" }
            ),
            TickOutcome::Failed(e) => write!(f, "t={} epoch={} error {e}", self.time_s, self.epoch),
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub ticks: Vec<TickRecord>,
}

impl RunOutput {
    pub fn failed_ticks(&self) -> impl Iterator<Item = &TickRecord> {
        self.ticks
            .iter()
            .filter(|t| matches!(t.outcome, TickOutcome::Failed(_)))
    }
}

/// Output of a single [`Simulation::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub tick: Option<TickRecord>,
    pub records: Vec<MetricsRecord>,
}

pub fn build_classifier(spec: &ClassifierSpec) -> Box<dyn Classifier> {
    match spec {
        ClassifierSpec::GroundTruth => Box::new(GroundTruth),
        ClassifierSpec::Scripted(entries) => Box::new(Scripted::new(entries.clone())),
    }
}

fn build_controller(spec: &ScenarioSpec) -> Result<Controller, ControllerError> {
    let config = MonitoringConfig::new(spec.period_s, spec.policy())?;
    Controller::new(config, build_classifier(&spec.classifier), spec.b_max)
}

pub struct Simulation {
    spec: ScenarioSpec,
    controller: Controller,
    switch: SimSwitch,
    next_step: u64,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self, ControllerError> {
        Ok(Self {
            controller: build_controller(spec)?,
            switch: SimSwitch::new(spec.b_max),
            spec: spec.clone(),
            next_step: 0,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    /// Northbound commands go through here.
    pub fn controller_mut(&mut self) -> &mut Controller {
        &mut self.controller
    }

    pub fn switch(&self) -> &SimSwitch {
        &self.switch
    }

    /// Start of the next step to simulate.
    pub fn time_s(&self) -> f64 {
        self.next_step as f64 * self.spec.step_s
    }

    pub fn is_finished(&self) -> bool {
        self.next_step >= self.spec.total_steps()
    }

    fn active_flows(&self, t: f64) -> Vec<FlowState> {
        self.spec
            .flows
            .iter()
            .filter(|f| f.active_at(t))
            .map(|f| FlowState {
                id: f.id.clone(),
                class: f.class.clone(),
                offered_mbps: f.rate_mbps,
            })
            .collect()
    }

    /// Advances one step; `None` once the run is over.
    pub fn step(&mut self) -> Option<StepOutput> {
        if self.is_finished() {
            return None;
        }
        let n = self.next_step;
        let per_period = self.spec.steps_per_period();
        let epoch = n / per_period;
        let start = n as f64 * self.spec.step_s;
        let active = self.active_flows(start);

        let tick = n.is_multiple_of(per_period).then(|| {
            let outcome = match self.controller.tick(epoch, &active, &mut self.switch) {
                Ok(report) => TickOutcome::Installed {
                    rules: report.rules,
                    changed: report.changed,
                },
                Err(e) => TickOutcome::Failed(e.to_string()),
            };
            TickRecord {
                epoch,
                time_s: start,
                outcome,
            }
        });

        let offered: RateVector = active.iter().map(|f| (f.id.clone(), f.offered_mbps)).collect();
        let delivered = self.switch.forward(&offered);
        let time_s = (n + 1) as f64 * self.spec.step_s;
        let state = self.switch.state();
        let priority = self.controller.priority_flows();
        let records = active
            .iter()
            .map(|f| {
                let (action, meter_mbps) = match state.flow_entry(&f.id).map(|e| e.instruction) {
                    Some(Instruction::GotoMeter(_)) => (Action::Meter, state.meter_rate_for(&f.id).map(|b| b.to_f64())),
                    Some(Instruction::DropAll) => (Action::Drop, None),
                    Some(Instruction::Forward) => (Action::Forward, None),
                    None => (Action::Default, None),
                };
                MetricsRecord {
                    time_s,
                    flow_id: f.id.clone(),
                    generated_mbps: f.offered_mbps,
                    delivered_mbps: delivered.get(&f.id).unwrap_or(0.0),
                    meter_mbps,
                    action,
                    priority: priority.contains(&f.id),
                    epoch,
                }
            })
            .collect();
        self.next_step += 1;
        Some(StepOutput { tick, records })
    }

    /// Runs to the end, collecting every record and tick.
    pub fn run(mut self) -> RunOutput {
        let mut out = RunOutput::default();
        while let Some(step) = self.step() {
            out.ticks.extend(step.tick);
            out.records.extend(step.records);
        }
        out
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunOutput, ControllerError> {
    Ok(Simulation::new(spec)?.run())
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("epoch {epoch} is outside the run (epochs 0..{epochs})")]
    EpochOutOfRange { epoch: u64, epochs: u64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Rule-engine decision at boundary `epoch` under the scenario's own policy.
pub fn trace_epoch(
    spec: &ScenarioSpec,
    epoch: u64,
) -> Result<(TrafficObservation, QosRuleSet, DecisionTrace), TraceError> {
    let epochs = spec.epochs();
    if epoch >= epochs {
        return Err(TraceError::EpochOutOfRange { epoch, epochs });
    }
    let sim = Simulation::new(spec)?;
    let t = (epoch * spec.steps_per_period()) as f64 * spec.step_s;
    let active = sim.active_flows(t);
    Ok(sim.controller.plan(epoch, &active)?)
}
