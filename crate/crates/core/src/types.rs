//! Domain vocabulary shared by the rule engine, data plane and controller.
//!
//! Rates in this module are exact rationals. The data plane converts them to
//! `f64` at its own boundary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational used for every rate computation in the rule engine.
pub type Rational = Ratio<i128>;

/// Tolerance for comparisons once rates have left exact arithmetic.
pub const RATE_EPSILON: f64 = 1e-9;

/// A traffic class label, e.g. `"emergency-video"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrafficClass(String);

impl TrafficClass {
    pub fn new(name: impl Into<String>) -> Result<Self, TypeError> {
        let name = name.into();
        if name.is_empty() {
            return Err(TypeError::EmptyName("traffic class"));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TrafficClass {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// Identity of one tenant flow. The tenant / base-station label the flow
/// originates from is scenario metadata and lives on the scenario's flow spec.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(String);

impl FlowId {
    pub fn new(id: impl Into<String>) -> Result<Self, TypeError> {
        let id = id.into();
        if id.is_empty() {
            return Err(TypeError::EmptyName("flow id"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for FlowId {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("{0} must not be empty")]
    EmptyName(&'static str),
    #[error("bandwidth must be >= 0, got {0}")]
    NegativeBandwidth(String),
    #[error("goal for class {0} must be > 0")]
    NonPositiveGoal(TrafficClass),
    #[error("flow {0} already present in observation")]
    DuplicateFlow(FlowId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRateError {
    #[error("malformed number '{0}'")]
    Malformed(String),
    #[error("number '{0}' has too many digits")]
    Overflow(String),
    #[error("bandwidth must be >= 0, got {0}")]
    Negative(String),
}

/// Parses a plain decimal (`"5"`, `"5.4"`, `"-1.25"`) into an exact rational.
/// Exponents and thousands separators are rejected.
pub fn parse_decimal(text: &str) -> Result<Rational, ParseRateError> {
    let malformed = || ParseRateError::Malformed(text.to_string());
    let (negative, body) = match text.as_bytes().first() {
        Some(b'-') => (true, &text[1..]),
        Some(b'+') => (false, &text[1..]),
        _ => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    // i128 holds 38 full decimal digits.
    if int_part.len() + frac_part.len() > 36 {
        return Err(ParseRateError::Overflow(text.to_string()));
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = if digits.is_empty() {
        0
    } else {
        digits.parse().map_err(|_| malformed())?
    };
    let denom = 10i128.pow(frac_part.len() as u32);
    let value = Rational::new(numer, denom);
    Ok(if negative { -value } else { value })
}

/// Converts a finite `f64` to the rational of its shortest round-trip decimal
/// form, so `5.4_f64` becomes exactly `27/5`.
pub fn rational_from_f64(value: f64) -> Result<Rational, ParseRateError> {
    if !value.is_finite() {
        return Err(ParseRateError::Malformed(value.to_string()));
    }
    parse_decimal(&value.to_string())
}

/// Renders a rational as a decimal with at least one fractional digit.
/// Terminating fractions are rendered exactly; others are rounded to six
/// places.
pub fn format_decimal(value: &Rational) -> String {
    let mut denom = *value.denom();
    let mut places = 0u32;
    while denom % 10 == 0 {
        denom /= 10;
        places += 1;
    }
    while denom % 2 == 0 {
        denom /= 2;
        places += 1;
    }
    while denom % 5 == 0 {
        denom /= 5;
        places += 1;
    }
    let exact = denom == 1 && places <= 18;
    let places = if exact { places } else { 6 };
    let scale = 10i128.pow(places);
    let scaled = value * Rational::from_integer(scale);
    let scaled = if exact {
        scaled.to_integer()
    } else {
        scaled.round().to_integer()
    };
    let sign = if scaled < 0 { "-" } else { "" };
    let magnitude = scaled.abs();
    let (int_part, frac_part) = magnitude.div_rem(&scale);
    if places == 0 {
        return format!("{sign}{int_part}.0");
    }
    let mut frac = format!("{:0width$}", frac_part, width = places as usize);
    while frac.len() > 1 && frac.ends_with('0') {
        frac.pop();
    }
    format!("{sign}{int_part}.{frac}")
}

/// A non-negative rate in Mbps, carried exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bandwidth(Rational);

impl Bandwidth {
    pub const ZERO: Bandwidth = Bandwidth(Ratio::new_raw(0, 1));

    pub fn new(value: Rational) -> Result<Self, TypeError> {
        if value.is_negative() {
            return Err(TypeError::NegativeBandwidth(format_decimal(&value)));
        }
        Ok(Self(value))
    }

    pub fn from_mbps(mbps: u64) -> Self {
        Self(Rational::from_integer(mbps as i128))
    }

    /// `numer / denom` Mbps. Panics if `denom` is zero or the result negative.
    pub fn from_ratio(numer: i128, denom: i128) -> Self {
        Self::new(Rational::new(numer, denom)).expect("bandwidth must be non-negative")
    }

    pub fn from_f64(mbps: f64) -> Result<Self, ParseRateError> {
        let value = rational_from_f64(mbps)?;
        Self::new(value).map_err(|_| ParseRateError::Negative(mbps.to_string()))
    }

    pub fn as_rational(&self) -> Rational {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn checked_sub(self, other: Bandwidth) -> Option<Bandwidth> {
        Self::new(self.0 - other.0).ok()
    }

    /// Scales by a non-negative factor.
    pub fn scale(self, factor: Rational) -> Bandwidth {
        Self::new(self.0 * factor).expect("scale factor must be non-negative")
    }

    /// Splits evenly across `parts` (> 0).
    pub fn split(self, parts: usize) -> Bandwidth {
        assert!(parts > 0, "cannot split a bandwidth into zero parts");
        Bandwidth(self.0 / Rational::from_integer(parts as i128))
    }

    /// Multiplies by a count.
    pub fn times(self, count: usize) -> Bandwidth {
        Bandwidth(self.0 * Rational::from_integer(count as i128))
    }
}

impl Add for Bandwidth {
    type Output = Bandwidth;

    fn add(self, rhs: Bandwidth) -> Bandwidth {
        Bandwidth(self.0 + rhs.0)
    }
}

impl Mul<Rational> for Bandwidth {
    type Output = Bandwidth;

    fn mul(self, rhs: Rational) -> Bandwidth {
        self.scale(rhs)
    }
}

impl Sum for Bandwidth {
    fn sum<I: Iterator<Item = Bandwidth>>(iter: I) -> Bandwidth {
        iter.fold(Bandwidth::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Bandwidth> for Bandwidth {
    fn sum<I: Iterator<Item = &'a Bandwidth>>(iter: I) -> Bandwidth {
        iter.copied().sum()
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_decimal(&self.0))
    }
}

impl FromStr for Bandwidth {
    type Err = ParseRateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let value = parse_decimal(s)?;
        Self::new(value).map_err(|_| ParseRateError::Negative(s.to_string()))
    }
}

/// Predefined priority classes with their bandwidth goals, plus the floor
/// granted to each non-priority flow while priority traffic is present.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PriorityPolicy {
    goals: BTreeMap<TrafficClass, Bandwidth>,
    b_min: Bandwidth,
}

impl PriorityPolicy {
    pub fn new(b_min: Bandwidth) -> Self {
        Self {
            goals: BTreeMap::new(),
            b_min,
        }
    }

    pub fn with_goals(
        goals: impl IntoIterator<Item = (TrafficClass, Bandwidth)>,
        b_min: Bandwidth,
    ) -> Result<Self, TypeError> {
        let mut policy = Self::new(b_min);
        for (class, goal) in goals {
            policy.set_goal(class, goal)?;
        }
        Ok(policy)
    }

    /// Inserts or replaces the goal of `class`.
    pub fn set_goal(&mut self, class: TrafficClass, goal: Bandwidth) -> Result<(), TypeError> {
        if goal.is_zero() {
            return Err(TypeError::NonPositiveGoal(class));
        }
        self.goals.insert(class, goal);
        Ok(())
    }

    pub fn remove_goal(&mut self, class: &TrafficClass) -> Option<Bandwidth> {
        self.goals.remove(class)
    }

    pub fn set_b_min(&mut self, b_min: Bandwidth) {
        self.b_min = b_min;
    }

    pub fn goal(&self, class: &TrafficClass) -> Option<Bandwidth> {
        self.goals.get(class).copied()
    }

    /// Goals in class-name order.
    pub fn goals(&self) -> &BTreeMap<TrafficClass, Bandwidth> {
        &self.goals
    }

    pub fn b_min(&self) -> Bandwidth {
        self.b_min
    }

    pub fn priority_classes(&self) -> BTreeSet<TrafficClass> {
        self.goals.keys().cloned().collect()
    }
}

/// Classified traffic for one monitoring period: which class each active flow
/// carries. Several flows may carry the same class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrafficObservation {
    epoch: u64,
    observed: BTreeMap<FlowId, TrafficClass>,
}

impl TrafficObservation {
    pub fn new(epoch: u64) -> Self {
        Self {
            epoch,
            observed: BTreeMap::new(),
        }
    }

    pub fn from_pairs(epoch: u64, pairs: impl IntoIterator<Item = (FlowId, TrafficClass)>) -> Result<Self, TypeError> {
        let mut obs = Self::new(epoch);
        for (flow, class) in pairs {
            obs.insert(flow, class)?;
        }
        Ok(obs)
    }

    pub fn insert(&mut self, flow: FlowId, class: TrafficClass) -> Result<(), TypeError> {
        if self.observed.contains_key(&flow) {
            return Err(TypeError::DuplicateFlow(flow));
        }
        self.observed.insert(flow, class);
        Ok(())
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn class_of(&self, flow: &FlowId) -> Option<&TrafficClass> {
        self.observed.get(flow)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FlowId, &TrafficClass)> {
        self.observed.iter()
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowId> {
        self.observed.keys()
    }
}

/// The distinct classes present in an observation (C_t).
pub fn classes_of(obs: &TrafficObservation) -> BTreeSet<TrafficClass> {
    obs.observed.values().cloned().collect()
}

/// Observed classes that also have a priority goal (C_p ∩ C_t).
pub fn priority_intersection(policy: &PriorityPolicy, obs: &TrafficObservation) -> BTreeSet<TrafficClass> {
    obs.observed
        .values()
        .filter(|class| policy.goals.contains_key(*class))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleAction {
    Meter(Bandwidth),
    Drop,
    /// Explicitly left at the default forwarding behavior.
    Unmetered,
}

impl fmt::Display for RuleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleAction::Meter(rate) => write!(f, "meter {rate}"),
            RuleAction::Drop => f.write_str("drop"),
            RuleAction::Unmetered => f.write_str("unmetered"),
        }
    }
}

/// Output of the rule engine for one observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QosRuleSet {
    Provision(BTreeMap<FlowId, RuleAction>),
    ResetToDefault,
}

impl QosRuleSet {
    pub fn action(&self, flow: &FlowId) -> Option<RuleAction> {
        match self {
            QosRuleSet::Provision(entries) => entries.get(flow).copied(),
            QosRuleSet::ResetToDefault => None,
        }
    }

    pub fn is_reset(&self) -> bool {
        matches!(self, QosRuleSet::ResetToDefault)
    }

    /// Sum of all meter rates; drops and unmetered entries contribute nothing.
    pub fn metered_total(&self) -> Bandwidth {
        match self {
            QosRuleSet::Provision(entries) => entries
                .values()
                .filter_map(|a| match a {
                    RuleAction::Meter(rate) => Some(*rate),
                    _ => None,
                })
                .sum(),
            QosRuleSet::ResetToDefault => Bandwidth::ZERO,
        }
    }
}

impl fmt::Display for QosRuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QosRuleSet::ResetToDefault => f.write_str("reset-to-default"),
            QosRuleSet::Provision(entries) => {
                f.write_str("provision")?;
                for (flow, action) in entries {
                    write!(f, " {flow}:{action}")?;
                }
                Ok(())
            }
        }
    }
}
