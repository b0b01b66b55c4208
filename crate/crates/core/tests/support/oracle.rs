//! Reference implementations used only by tests.
//!
//! `rule_oracle` follows the rule-generation steps one statement at a time over
//! plain strings and `Ratio<i64>`, sharing no code with the library.
//! `water_level` computes max-min fair shares by bisecting on the fill level
//! instead of sorting demands.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;

pub type Q64 = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleAction {
    Meter(Q64),
    Drop,
    /// Not touched by any statement.
    Untouched,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Reset,
    Rules(HashMap<String, OracleAction>),
    InfeasibleFloor,
}

/// `obs` is (flow, class); `goals` maps priority class to Q.
pub fn rule_oracle(goals: &HashMap<String, Q64>, b_min: Q64, b_max: Q64, obs: &[(String, String)]) -> OracleOutcome {
    let zero = Q64::from_integer(0);
    let c_t: HashSet<&str> = obs.iter().map(|(_, c)| c.as_str()).collect();
    let c_p: HashSet<&str> = goals.keys().map(String::as_str).collect();
    let both: HashSet<&str> = c_p.intersection(&c_t).copied().collect();
    let t_minus_p: HashSet<&str> = c_t.difference(&c_p).copied().collect();

    let flows_of = |classes: &HashSet<&str>| -> Vec<String> {
        obs.iter()
            .filter(|(_, c)| classes.contains(c.as_str()))
            .map(|(f, _)| f.clone())
            .collect()
    };
    let n = |k: usize| Q64::from_integer(k as i64);

    let mut table: HashMap<String, OracleAction> = HashMap::new();
    let mut set_meter = |flows: Vec<String>, rate: Q64| {
        for f in flows {
            table.insert(f, OracleAction::Meter(rate));
        }
    };

    let entering_case = (both.len() == 1 && c_t.len() > 1) || both.len() > 1;
    if entering_case && n(flows_of(&t_minus_p).len()) * b_min > b_max {
        return OracleOutcome::InfeasibleFloor;
    }

    // line 1
    if both.len() == 1 && c_t.len() > 1 {
        let p = *both.iter().next().unwrap();
        let q = goals[p];
        // line 2
        if q > b_max - (n(c_t.len()) - n(1)) * b_min {
            // line 3
            if b_min > zero {
                // line 4
                set_meter(flows_of(&both), b_max - (n(c_t.len()) - n(1)) * b_min);
                // line 5
                set_meter(flows_of(&t_minus_p), b_min);
            } else {
                // line 7
                for f in flows_of(&t_minus_p) {
                    table.insert(f, OracleAction::Drop);
                }
            }
        } else {
            // line 10
            if b_min > zero {
                // line 11
                set_meter(flows_of(&both), q);
            }
            // line 13
            set_meter(flows_of(&t_minus_p), (b_max - q) / (n(c_t.len()) - n(1)));
        }
    } else if both.len() > 1 {
        let sum: Q64 = both.iter().map(|d| goals[*d]).fold(zero, |a, b| a + b);
        if sum > b_max - n(t_minus_p.len()) * b_min {
            let r = (b_max - n(t_minus_p.len()) * b_min) / sum;
            for d in &both {
                let single: HashSet<&str> = HashSet::from([*d]);
                set_meter(flows_of(&single), r * goals[*d]);
            }
            if b_min > zero {
                set_meter(flows_of(&t_minus_p), b_min);
            } else {
                for f in flows_of(&t_minus_p) {
                    table.insert(f, OracleAction::Drop);
                }
            }
        } else {
            for d in &both {
                let single: HashSet<&str> = HashSet::from([*d]);
                set_meter(flows_of(&single), goals[*d]);
            }
            let rest = flows_of(&t_minus_p);
            if !rest.is_empty() {
                set_meter(rest, (b_max - sum) / n(t_minus_p.len()));
            }
        }
    } else {
        return OracleOutcome::Reset;
    }

    for (f, _) in obs {
        table.entry(f.clone()).or_insert(OracleAction::Untouched);
    }
    OracleOutcome::Rules(table)
}

/// Max-min fair allocation of `capacity` over `demands` via bisection on the
/// common fill level.
pub fn water_level(capacity: f64, demands: &[f64]) -> Vec<f64> {
    let total: f64 = demands.iter().sum();
    if total <= capacity {
        return demands.to_vec();
    }
    let filled = |level: f64| demands.iter().map(|d| d.min(level)).sum::<f64>();
    let (mut lo, mut hi) = (0.0_f64, demands.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if filled(mid) > capacity {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    demands.iter().map(|d| d.min(lo)).collect()
}

/// True if no flow can gain without some flow with an equal or smaller
/// allocation losing: every flow short of its demand holds the maximum
/// allocation, and the link is full.
pub fn is_max_min_fair(capacity: f64, demands: &[f64], alloc: &[f64], eps: f64) -> bool {
    let total: f64 = alloc.iter().sum();
    if demands.iter().sum::<f64>() <= capacity + eps {
        return demands.iter().zip(alloc).all(|(d, a)| (d - a).abs() <= eps);
    }
    if (total - capacity).abs() > eps {
        return false;
    }
    let top = alloc.iter().cloned().fold(0.0, f64::max);
    demands
        .iter()
        .zip(alloc)
        .all(|(d, a)| *a <= d + eps && (*a >= d - eps || *a >= top - eps))
}
