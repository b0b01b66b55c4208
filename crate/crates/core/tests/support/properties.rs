//! Invariant checks shared by the property tests and the acceptance suite.

#![allow(dead_code)]

use meterqos::dataplane::{link_share, DataPlaneState, RateVector};
use meterqos::rules::{Branch, RuleError};
use meterqos::types::{Rational, RATE_EPSILON};
use meterqos::{Bandwidth, FlowId, QosRuleSet, RuleAction};
use num_traits::Zero;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::glue::{as_oracle, meter_of, to_bw, Case};
use super::oracle::{is_max_min_fair, water_level, Q64};

type Check = Result<(), TestCaseError>;

fn non_priority_flows(case: &Case) -> impl Iterator<Item = &String> {
    case.obs.iter().filter(|(_, c)| !case.is_priority(c)).map(|(f, _)| f)
}

/// Infeasible floors are reported exactly when the floors overrun the link
/// in a provisioning branch.
fn expect_consistent_error(case: &Case, err: &RuleError) -> Check {
    let infeasible = matches!(err, RuleError::InfeasibleFloor { .. });
    prop_assert!(infeasible, "unexpected error {err}");
    let floors = Q64::from_integer(non_priority_flows(case).count() as i64) * case.b_min;
    prop_assert!(floors > case.b_max);
    Ok(())
}

pub fn budget_soundness(case: &Case) -> Check {
    match case.run() {
        Err(e) => expect_consistent_error(case, &e),
        Ok((QosRuleSet::Provision(entries), _)) => {
            let all_metered = entries.values().all(|a| matches!(a, RuleAction::Meter(_)));
            if all_metered {
                let total: Bandwidth = entries
                    .values()
                    .map(|a| match a {
                        RuleAction::Meter(b) => *b,
                        _ => unreachable!(),
                    })
                    .sum();
                let b_max = to_bw(case.b_max);
                prop_assert!(total <= b_max, "metered {total} > b_max {b_max}");
                prop_assert!(total.to_f64() <= b_max.to_f64() + RATE_EPSILON);
            }
            Ok(())
        }
        Ok(_) => Ok(()),
    }
}

pub fn floor_guarantee(case: &Case) -> Check {
    if case.b_min.is_zero() {
        return Ok(());
    }
    let b_min = to_bw(case.b_min).as_rational();
    match case.run() {
        Err(e) => expect_consistent_error(case, &e),
        Ok((rules @ QosRuleSet::Provision(_), _)) => {
            for flow in non_priority_flows(case) {
                let rate = meter_of(&rules, flow);
                prop_assert!(rate.is_some(), "{flow} not metered");
                prop_assert!(rate.unwrap() >= b_min, "{flow} below floor");
            }
            Ok(())
        }
        Ok(_) => Ok(()),
    }
}

pub fn ratio_preservation(case: &Case) -> Check {
    let Ok((rules, trace)) = case.run() else { return Ok(()) };
    if trace.scaling.is_none() {
        return Ok(());
    }
    prop_assert!(matches!(
        trace.branch,
        Branch::MultiOverloadFloor | Branch::MultiOverloadDrop
    ));
    let priority: Vec<(&String, Rational)> = case
        .obs
        .iter()
        .filter_map(|(f, c)| case.goal(c).map(|q| (f, to_bw(q).as_rational())))
        .collect();
    for (f1, q1) in &priority {
        for (f2, q2) in &priority {
            let m1 = meter_of(&rules, f1).expect("priority flow metered");
            let m2 = meter_of(&rules, f2).expect("priority flow metered");
            // m1 / m2 == q1 / q2, cross-multiplied to allow zero meters.
            prop_assert_eq!(m1 * q2, m2 * q1);
        }
    }
    Ok(())
}

pub fn goal_attainment(case: &Case) -> Check {
    let Ok((rules, trace)) = case.run() else { return Ok(()) };
    let (Some(sum), Some(residual)) = (trace.goal_sum, trace.residual) else {
        return Ok(());
    };
    if sum > residual {
        return Ok(());
    }
    for (flow, class) in &case.obs {
        if let Some(q) = case.goal(class) {
            match rules.action(&FlowId::new(flow.clone()).unwrap()) {
                Some(RuleAction::Meter(rate)) => prop_assert_eq!(rate, to_bw(q)),
                Some(RuleAction::Unmetered) => {
                    prop_assert_eq!(trace.branch, Branch::SingleWithinGoalNoFloor)
                }
                other => prop_assert!(false, "priority flow {flow} got {other:?}"),
            }
        }
    }
    Ok(())
}

pub fn scale_equivariance(case: &Case, k: Q64) -> Check {
    let base = case.run();
    let scaled = case.scaled(k).run();
    match (base, scaled) {
        (Err(a), Err(b)) => {
            let both_infeasible =
                matches!(a, RuleError::InfeasibleFloor { .. }) && matches!(b, RuleError::InfeasibleFloor { .. });
            prop_assert!(both_infeasible, "unexpected errors {a} / {b}");
        }
        (Ok((r1, t1)), Ok((r2, t2))) => {
            prop_assert_eq!(t1.branch, t2.branch);
            let k = to_bw(k).as_rational();
            match (&r1, &r2) {
                (QosRuleSet::ResetToDefault, QosRuleSet::ResetToDefault) => {}
                (QosRuleSet::Provision(a), QosRuleSet::Provision(b)) => {
                    prop_assert_eq!(a.len(), b.len());
                    for (flow, action) in a {
                        let expected = match action {
                            RuleAction::Meter(rate) => RuleAction::Meter(rate.scale(k)),
                            other => *other,
                        };
                        prop_assert_eq!(Some(&expected), b.get(flow));
                    }
                }
                _ => prop_assert!(false, "structure changed under scaling: {r1} vs {r2}"),
            }
        }
        (a, b) => prop_assert!(false, "outcome kind changed under scaling: {a:?} vs {b:?}"),
    }
    Ok(())
}

pub fn determinism(case: &Case) -> Check {
    let mut reversed = case.clone();
    reversed.goals.reverse();
    reversed.obs.reverse();
    let a = case.run();
    prop_assert_eq!(&a, &case.run());
    prop_assert_eq!(&a, &reversed.run());
    Ok(())
}

pub fn oracle_agreement(case: &Case) -> Check {
    let ours = as_oracle(&case.run());
    let reference = case.oracle();
    prop_assert_eq!(ours, reference, "case {:?}", case);
    Ok(())
}

fn rate_vector(rates: &[f64]) -> RateVector {
    rates
        .iter()
        .enumerate()
        .map(|(i, r)| (FlowId::new(format!("f{i}")).unwrap(), *r))
        .collect()
}

pub fn arb_demands() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![Just(0.0), 0.0..20.0f64], 1..=5)
}

/// Meter actions for `n` flows: `None` drops, `Some(None)` forwards.
pub fn arb_actions(n: usize) -> impl Strategy<Value = Vec<Option<Option<f64>>>> {
    proptest::collection::vec(
        prop_oneof![Just(None), Just(Some(None)), (0.0..15.0f64).prop_map(|r| Some(Some(r)))],
        n..=n,
    )
}

fn install(capacity: f64, actions: &[Option<Option<f64>>]) -> DataPlaneState {
    let entries = actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let action = match a {
                None => RuleAction::Drop,
                Some(None) => RuleAction::Unmetered,
                Some(Some(r)) => RuleAction::Meter(Bandwidth::from_f64(*r).unwrap()),
            };
            (FlowId::new(format!("f{i}")).unwrap(), action)
        })
        .collect();
    DataPlaneState::new(Bandwidth::from_f64(capacity).unwrap()).apply_ruleset(&QosRuleSet::Provision(entries))
}

pub fn delivery_bounds(capacity: f64, offered: &[f64], actions: &[Option<Option<f64>>]) -> Check {
    let state = install(capacity, actions);
    let offered_v = rate_vector(offered);
    let delivered = state.step(&offered_v);
    let cap = state.link_capacity().to_f64();
    prop_assert!(
        delivered.total() <= cap + RATE_EPSILON,
        "sum {} > {}",
        delivered.total(),
        cap
    );
    for (flow, rate) in offered_v.iter() {
        let got = delivered.get(flow).unwrap();
        prop_assert!(got >= 0.0 && got <= rate + RATE_EPSILON, "{flow}: {got} > {rate}");
    }
    Ok(())
}

pub fn fairness_matches_oracle(capacity: f64, demands: &[f64]) -> Check {
    let ours = link_share(capacity, &rate_vector(demands));
    let ours: Vec<f64> = (0..demands.len())
        .map(|i| ours.get(&FlowId::new(format!("f{i}")).unwrap()).unwrap())
        .collect();
    let reference = water_level(capacity, demands);
    for (a, b) in ours.iter().zip(&reference) {
        prop_assert!((a - b).abs() <= 1e-9, "{ours:?} vs oracle {reference:?}");
    }
    prop_assert!(
        is_max_min_fair(capacity, demands, &ours, 1e-9),
        "{ours:?} not max-min fair for {demands:?}"
    );
    Ok(())
}

pub fn meter_monotonicity(offered: &[f64], actions: &[Option<Option<f64>>], raise: f64) -> Check {
    let before = install(1000.0, actions);
    let raised: Vec<Option<Option<f64>>> = actions.iter().map(|a| a.map(|m| m.map(|r| r + raise))).collect();
    let after = install(1000.0, &raised);
    let offered = rate_vector(offered);
    let a = before.meter_pass(&offered);
    let b = after.meter_pass(&offered);
    for (flow, rate) in a.iter() {
        prop_assert!(b.get(flow).unwrap() + RATE_EPSILON >= *rate);
    }
    Ok(())
}
