//! Priority-driven QoS rule generation.
//!
//! Given the priority policy, the classified traffic of one monitoring period
//! and the bottleneck capacity, [`generate_rules`] decides per flow whether it
//! is metered (and at which rate), dropped, or left alone. Three situations
//! are distinguished:
//!
//! * exactly one priority class observed alongside other traffic,
//! * several priority classes observed,
//! * anything else, which restores the default flow table.
//!
//! All arithmetic is exact. [`trace_rules`] additionally reports which branch
//! of the decision procedure fired together with its intermediate values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::types::{
    classes_of, format_decimal, priority_intersection, Bandwidth, FlowId, PriorityPolicy, QosRuleSet, Rational,
    RuleAction, TrafficClass, TrafficObservation,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("link capacity must be > 0")]
    NonPositiveCapacity,
    #[error(
        "infeasible floor: {non_priority_flows} non-priority flows x b_min {b_min} Mbps exceeds b_max {b_max} Mbps"
    )]
    InfeasibleFloor {
        non_priority_flows: usize,
        b_min: Bandwidth,
        b_max: Bandwidth,
    },
    #[error("no goal configured for matched class {0}")]
    MissingGoal(TrafficClass),
}

/// Everything the rule engine looks at.
#[derive(Debug, Clone, Copy)]
pub struct RuleEngineInput<'a> {
    policy: &'a PriorityPolicy,
    obs: &'a TrafficObservation,
    b_max: Bandwidth,
}

impl<'a> RuleEngineInput<'a> {
    pub fn new(policy: &'a PriorityPolicy, obs: &'a TrafficObservation, b_max: Bandwidth) -> Result<Self, RuleError> {
        if b_max.is_zero() {
            return Err(RuleError::NonPositiveCapacity);
        }
        Ok(Self { policy, obs, b_max })
    }

    pub fn policy(&self) -> &PriorityPolicy {
        self.policy
    }

    pub fn observation(&self) -> &TrafficObservation {
        self.obs
    }

    pub fn b_max(&self) -> Bandwidth {
        self.b_max
    }
}

/// Factor applied to every priority goal when their sum exceeds the budget
/// left after the non-priority floors. Lies in `[0, 1)`; zero only when the
/// floors consume the whole link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalingFactor(Rational);

impl ScalingFactor {
    pub fn value(&self) -> Rational {
        self.0
    }
}

impl fmt::Display for ScalingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_decimal(&self.0))
    }
}

/// Which branch of the decision procedure produced a rule set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// One priority class whose goal exceeds the residual; floors metered.
    SingleOverloadFloor,
    /// One priority class whose goal exceeds the link; others dropped.
    SingleOverloadDrop,
    /// One priority class within budget; priority metered at its goal.
    SingleWithinGoal,
    /// One priority class within budget and `b_min = 0`; priority left unmetered.
    SingleWithinGoalNoFloor,
    /// Several priority classes, goals scaled down by `r`; floors metered.
    MultiOverloadFloor,
    /// Several priority classes, goals scaled down by `r`; others dropped.
    MultiOverloadDrop,
    /// Several priority classes, every goal met; others share the remainder.
    MultiWithinGoal,
    /// No usable priority match; the flow table goes back to default.
    Reset,
}

impl Branch {
    /// Pseudocode lines of the published procedure this branch executes.
    pub fn lines(&self) -> &'static str {
        match self {
            Branch::SingleOverloadFloor => "lines 2-5",
            Branch::SingleOverloadDrop => "lines 2, 6-7",
            Branch::SingleWithinGoal => "lines 9-13",
            Branch::SingleWithinGoalNoFloor => "lines 9-10, 13",
            Branch::MultiOverloadFloor => "lines 15-19",
            Branch::MultiOverloadDrop => "lines 15-17, 20-21",
            Branch::MultiWithinGoal => "lines 23-24",
            Branch::Reset => "line 27",
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Branch::SingleOverloadFloor => "single priority, goal exceeds residual, floors metered",
            Branch::SingleOverloadDrop => "single priority, goal exceeds link, non-priority dropped",
            Branch::SingleWithinGoal => "single priority, goal met",
            Branch::SingleWithinGoalNoFloor => "single priority, goal met, priority unmetered",
            Branch::MultiOverloadFloor => "multiple priorities, goals scaled, floors metered",
            Branch::MultiOverloadDrop => "multiple priorities, goals scaled, non-priority dropped",
            Branch::MultiWithinGoal => "multiple priorities, goals met",
            Branch::Reset => "no priority match, reset to default",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.lines(), self.describe())
    }
}

/// Intermediate values behind one rule-engine decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTrace {
    pub epoch: u64,
    pub branch: Branch,
    pub observed_classes: usize,
    pub matched: BTreeSet<TrafficClass>,
    pub non_priority_classes: usize,
    pub non_priority_flows: usize,
    /// Q of the matched class, or the sum of Q over all matched classes.
    pub goal_sum: Option<Bandwidth>,
    /// Capacity left after the non-priority floors.
    pub residual: Option<Bandwidth>,
    pub scaling: Option<ScalingFactor>,
    /// Per-flow share computed for non-priority flows, when one was.
    pub non_priority_share: Option<Bandwidth>,
}

impl DecisionTrace {
    fn new(epoch: u64, branch: Branch) -> Self {
        Self {
            epoch,
            branch,
            observed_classes: 0,
            matched: BTreeSet::new(),
            non_priority_classes: 0,
            non_priority_flows: 0,
            goal_sum: None,
            residual: None,
            scaling: None,
            non_priority_share: None,
        }
    }
}

impl fmt::Display for DecisionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "epoch={}", self.epoch)?;
        writeln!(f, "branch={}", self.branch)?;
        writeln!(f, "observed_classes={}", self.observed_classes)?;
        let matched: Vec<&str> = self.matched.iter().map(TrafficClass::as_str).collect();
        writeln!(f, "matched={}", matched.join(","))?;
        writeln!(f, "non_priority_classes={}", self.non_priority_classes)?;
        writeln!(f, "non_priority_flows={}", self.non_priority_flows)?;
        if let Some(sum) = self.goal_sum {
            writeln!(f, "goal_sum={sum}")?;
        }
        if let Some(residual) = self.residual {
            writeln!(f, "residual={residual}")?;
        }
        if let Some(r) = self.scaling {
            writeln!(f, "r={r}")?;
        }
        if let Some(share) = self.non_priority_share {
            writeln!(f, "non_priority_share={share}")?;
        }
        Ok(())
    }
}

/// Computes the rule set for one observation.
pub fn generate_rules(input: &RuleEngineInput<'_>) -> Result<QosRuleSet, RuleError> {
    trace_rules(input).map(|(rules, _)| rules)
}

/// Like [`generate_rules`], also returning the decision trace.
pub fn trace_rules(input: &RuleEngineInput<'_>) -> Result<(QosRuleSet, DecisionTrace), RuleError> {
    let policy = input.policy;
    let obs = input.obs;
    let b_max = input.b_max;
    let b_min = policy.b_min();

    let observed = classes_of(obs);
    let matched = priority_intersection(policy, obs);

    let mut goals = BTreeMap::new();
    for class in &matched {
        let goal = policy
            .goal(class)
            .ok_or_else(|| RuleError::MissingGoal(class.clone()))?;
        goals.insert(class.clone(), goal);
    }

    let (priority_flows, other_flows): (Vec<(&FlowId, &TrafficClass)>, Vec<_>) =
        obs.iter().partition(|(_, class)| matched.contains(*class));
    let non_priority_classes = observed.len() - matched.len();

    let branch_kind = if matched.len() == 1 && observed.len() > 1 {
        Some(false)
    } else if matched.len() > 1 {
        Some(true)
    } else {
        None
    };
    let Some(multi) = branch_kind else {
        let mut trace = DecisionTrace::new(obs.epoch(), Branch::Reset);
        trace.observed_classes = observed.len();
        trace.matched = matched;
        trace.non_priority_classes = non_priority_classes;
        trace.non_priority_flows = other_flows.len();
        return Ok((QosRuleSet::ResetToDefault, trace));
    };

    if b_min.times(other_flows.len()) > b_max {
        return Err(RuleError::InfeasibleFloor {
            non_priority_flows: other_flows.len(),
            b_min,
            b_max,
        });
    }
    // Non-negative: the floor check above bounds the class count too.
    let residual = b_max
        .checked_sub(b_min.times(non_priority_classes))
        .expect("floor total bounded by b_max");
    let goal_sum: Bandwidth = goals.values().sum();
    let floors = !b_min.is_zero();

    let mut trace = DecisionTrace::new(obs.epoch(), Branch::Reset);
    trace.observed_classes = observed.len();
    trace.non_priority_classes = non_priority_classes;
    trace.non_priority_flows = other_flows.len();
    trace.goal_sum = Some(goal_sum);
    trace.residual = Some(residual);

    let mut entries = BTreeMap::new();
    let mut set_priority = |action: &dyn Fn(&TrafficClass) -> RuleAction| {
        for (flow, class) in &priority_flows {
            entries.insert((*flow).clone(), action(class));
        }
    };

    let non_priority_action;
    if !multi {
        if goal_sum > residual {
            if floors {
                trace.branch = Branch::SingleOverloadFloor;
                set_priority(&|_| RuleAction::Meter(residual));
                non_priority_action = Some(RuleAction::Meter(b_min));
            } else {
                trace.branch = Branch::SingleOverloadDrop;
                set_priority(&|_| RuleAction::Unmetered);
                non_priority_action = Some(RuleAction::Drop);
            }
        } else {
            let share = (b_max.checked_sub(goal_sum).expect("goal within b_max")).split(non_priority_classes);
            trace.non_priority_share = Some(share);
            if floors {
                trace.branch = Branch::SingleWithinGoal;
                set_priority(&|_| RuleAction::Meter(goal_sum));
            } else {
                trace.branch = Branch::SingleWithinGoalNoFloor;
                set_priority(&|_| RuleAction::Unmetered);
            }
            non_priority_action = Some(RuleAction::Meter(share));
        }
    } else if goal_sum > residual {
        let r = residual.as_rational() / goal_sum.as_rational();
        debug_assert!(r >= Rational::zero() && r < Rational::one());
        trace.scaling = Some(ScalingFactor(r));
        set_priority(&|class| RuleAction::Meter(goals[class].scale(r)));
        if floors {
            trace.branch = Branch::MultiOverloadFloor;
            non_priority_action = Some(RuleAction::Meter(b_min));
        } else {
            trace.branch = Branch::MultiOverloadDrop;
            non_priority_action = Some(RuleAction::Drop);
        }
    } else {
        trace.branch = Branch::MultiWithinGoal;
        set_priority(&|class| RuleAction::Meter(goals[class]));
        non_priority_action = if non_priority_classes > 0 {
            let share = b_max
                .checked_sub(goal_sum)
                .expect("goal sum within b_max")
                .split(non_priority_classes);
            trace.non_priority_share = Some(share);
            Some(RuleAction::Meter(share))
        } else {
            None
        };
    }

    if let Some(action) = non_priority_action {
        for (flow, _) in &other_flows {
            entries.insert((*flow).clone(), action);
        }
    }
    trace.matched = matched;
    Ok((QosRuleSet::Provision(entries), trace))
}
