//! Adapters between library types and the test oracles, plus the input
//! generators shared by the property suites.

#![allow(dead_code)]

use std::collections::HashMap;

use meterqos::rules::{trace_rules, DecisionTrace, RuleEngineInput, RuleError};
use meterqos::types::Rational;
use meterqos::{Bandwidth, FlowId, PriorityPolicy, QosRuleSet, RuleAction, TrafficClass, TrafficObservation};
use num_rational::Ratio;
use proptest::prelude::*;

use super::oracle::{rule_oracle, OracleAction, OracleOutcome, Q64};

/// Rule-engine case in plain values.
#[derive(Debug, Clone)]
pub struct Case {
    pub goals: Vec<(String, Q64)>,
    pub b_min: Q64,
    pub b_max: Q64,
    pub obs: Vec<(String, String)>,
}

pub fn to_bw(q: Q64) -> Bandwidth {
    Bandwidth::from_ratio(*q.numer() as i128, *q.denom() as i128)
}

fn to_q64(b: Bandwidth) -> Q64 {
    let r = b.as_rational();
    Q64::new(*r.numer() as i64, *r.denom() as i64)
}

impl Case {
    pub fn policy(&self) -> PriorityPolicy {
        PriorityPolicy::with_goals(
            self.goals
                .iter()
                .map(|(c, q)| (TrafficClass::new(c.clone()).unwrap(), to_bw(*q))),
            to_bw(self.b_min),
        )
        .unwrap()
    }

    pub fn observation(&self) -> TrafficObservation {
        TrafficObservation::from_pairs(
            0,
            self.obs
                .iter()
                .map(|(f, c)| (FlowId::new(f.clone()).unwrap(), TrafficClass::new(c.clone()).unwrap())),
        )
        .unwrap()
    }

    pub fn run(&self) -> Result<(QosRuleSet, DecisionTrace), RuleError> {
        let policy = self.policy();
        let obs = self.observation();
        trace_rules(&RuleEngineInput::new(&policy, &obs, to_bw(self.b_max)).unwrap())
    }

    pub fn oracle(&self) -> OracleOutcome {
        let goals: HashMap<String, Q64> = self.goals.iter().cloned().collect();
        rule_oracle(&goals, self.b_min, self.b_max, &self.obs)
    }

    /// Every rate multiplied by `k`.
    pub fn scaled(&self, k: Q64) -> Case {
        Case {
            goals: self.goals.iter().map(|(c, q)| (c.clone(), q * k)).collect(),
            b_min: self.b_min * k,
            b_max: self.b_max * k,
            obs: self.obs.clone(),
        }
    }

    pub fn is_priority(&self, class: &str) -> bool {
        self.goals.iter().any(|(c, _)| c == class)
    }

    pub fn goal(&self, class: &str) -> Option<Q64> {
        self.goals.iter().find(|(c, _)| c == class).map(|(_, q)| *q)
    }
}

/// The library outcome in the oracle's vocabulary.
pub fn as_oracle(result: &Result<(QosRuleSet, DecisionTrace), RuleError>) -> OracleOutcome {
    match result {
        Err(RuleError::InfeasibleFloor { .. }) => OracleOutcome::InfeasibleFloor,
        Err(e) => panic!("unexpected engine error {e}"),
        Ok((QosRuleSet::ResetToDefault, _)) => OracleOutcome::Reset,
        Ok((QosRuleSet::Provision(entries), _)) => OracleOutcome::Rules(
            entries
                .iter()
                .map(|(f, a)| {
                    let action = match a {
                        RuleAction::Meter(rate) => OracleAction::Meter(to_q64(*rate)),
                        RuleAction::Drop => OracleAction::Drop,
                        RuleAction::Unmetered => OracleAction::Untouched,
                    };
                    (f.as_str().to_string(), action)
                })
                .collect(),
        ),
    }
}

/// All cases with up to four observed classes (one flow each), each either
/// non-priority or a priority with Q in 1..=12, b_min in {0, 1, 2},
/// b_max = 10. Each combination is also tried with an extra unobserved
/// priority class.
pub fn exhaustive_grid() -> impl Iterator<Item = Case> {
    (0..=4usize).flat_map(|n| {
        let combos = 13usize.pow(n as u32);
        (0..combos).flat_map(move |mut code| {
            let mut goals = Vec::new();
            let mut obs = Vec::new();
            for i in 0..n {
                let q = code % 13;
                code /= 13;
                let class = format!("c{i}");
                if q > 0 {
                    goals.push((class.clone(), Q64::from_integer(q as i64)));
                }
                obs.push((format!("f{i}"), class));
            }
            (0..=2i64).flat_map(move |b_min| {
                let base = Case {
                    goals: goals.clone(),
                    b_min: Q64::from_integer(b_min),
                    b_max: Q64::from_integer(10),
                    obs: obs.clone(),
                };
                let mut with_extra = base.clone();
                with_extra.goals.push(("unseen".to_string(), Q64::from_integer(5)));
                [base, with_extra]
            })
        })
    })
}

fn rational(max_numer: i64, max_denom: i64) -> impl Strategy<Value = Q64> {
    (1..=max_numer, 1..=max_denom).prop_map(|(n, d)| Ratio::new(n, d))
}

/// Random cases with one flow per class: 1..=5 classes, rational rates.
pub fn arb_case() -> impl Strategy<Value = Case> {
    let class = (any::<bool>(), rational(60, 4));
    (
        proptest::collection::vec(class, 1..=5),
        prop_oneof![
            Just(Q64::from_integer(0)),
            (0..=8i64, 1..=4i64).prop_map(|(n, d)| Ratio::new(n, d))
        ],
        rational(80, 2),
    )
        .prop_map(|(classes, b_min, b_max)| {
            let mut goals = Vec::new();
            let mut obs = Vec::new();
            for (i, (priority, q)) in classes.into_iter().enumerate() {
                let class = format!("c{i}");
                if priority {
                    goals.push((class.clone(), q));
                }
                obs.push((format!("f{i}"), class));
            }
            Case {
                goals,
                b_min,
                b_max,
                obs,
            }
        })
}

pub fn meter_of(rules: &QosRuleSet, flow: &str) -> Option<Rational> {
    match rules.action(&FlowId::new(flow).unwrap()) {
        Some(RuleAction::Meter(b)) => Some(b.as_rational()),
        _ => None,
    }
}
