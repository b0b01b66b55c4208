//! Workload builders for the benchmarks.

use meterqos::{Bandwidth, FlowId, PriorityPolicy, RateVector, TrafficClass, TrafficObservation};

/// `classes` observed classes with one flow each; every other class is a
/// priority class with goal `i + 1` Mbps.
pub fn policy_and_observation(classes: usize) -> (PriorityPolicy, TrafficObservation) {
    let class = |i: usize| TrafficClass::new(format!("c{i}")).unwrap();
    let goals = (0..classes)
        .step_by(2)
        .map(|i| (class(i), Bandwidth::from_mbps(i as u64 + 1)));
    let policy = PriorityPolicy::with_goals(goals, Bandwidth::from_ratio(1, 10)).unwrap();
    let obs = TrafficObservation::from_pairs(
        0,
        (0..classes).map(|i| (FlowId::new(format!("f{i}")).unwrap(), class(i))),
    )
    .unwrap();
    (policy, obs)
}

/// `flows` demands spread over 0.5..=20 Mbps.
pub fn demands(flows: usize) -> RateVector {
    (0..flows)
        .map(|i| (FlowId::new(format!("f{i}")).unwrap(), 0.5 + (i * 7 % 40) as f64 * 0.5))
        .collect()
}
