//! Edge-triggered alarm rules with sample-count debounce.
//!
//! A rule watches one scalar field of one node. It fires once when its
//! predicate has held for `debounce` consecutive readings of that field and
//! re-arms only after the predicate goes false again.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::medium::SimTime;
use crate::nodes::{NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl Comparator {
    pub fn holds(self, value: i64, threshold: i64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Eq => value == threshold,
            Comparator::Ne => value != threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub node: NodeId,
    pub field: String,
    pub comparator: Comparator,
    pub threshold: i64,
    /// Consecutive matching samples required before firing.
    pub debounce: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MotorStop,
    SprinklerOn,
    PowerCutoffFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmRule {
    pub id: String,
    pub predicate: Predicate,
    pub actions: Vec<Action>,
    #[serde(default = "armed_default")]
    pub armed: bool,
}

fn armed_default() -> bool {
    true
}

pub const DEFAULT_FIRE_RULE_ID: &str = "fire";

/// Flame ADC above zero on a single sample stops the motor, opens the
/// sprinklers and cuts power.
pub fn default_fire_rule() -> AlarmRule {
    AlarmRule {
        id: DEFAULT_FIRE_RULE_ID.to_string(),
        predicate: Predicate {
            node: NodeId::FLAME,
            field: "adc".to_string(),
            comparator: Comparator::Gt,
            threshold: 0,
            debounce: 1,
        },
        actions: vec![Action::MotorStop, Action::SprinklerOn, Action::PowerCutoffFlag],
        armed: true,
    }
}

pub fn fields_of(kind: NodeKind) -> &'static [&'static str] {
    match kind {
        NodeKind::Flame | NodeKind::Soil => &["adc"],
        NodeKind::Dht => &["temp_c", "humidity_pct"],
        NodeKind::Motor => &["speed", "direction"],
    }
}

impl AlarmRule {
    /// Every problem with the rule, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.id.trim().is_empty() {
            issues.push("id must not be empty".to_string());
        }
        if self.predicate.debounce < 1 {
            issues.push("predicate.debounce must be at least 1".to_string());
        }
        if self.actions.is_empty() {
            issues.push("actions must not be empty".to_string());
        }
        let fields = fields_of(self.predicate.node.kind());
        if !fields.contains(&self.predicate.field.as_str()) {
            issues.push(format!(
                "predicate.field {:?} is not a field of {} (expected one of {:?})",
                self.predicate.field, self.predicate.node, fields
            ));
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action: Action,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub rule_id: String,
    pub at_us: SimTime,
    pub timestamp: String,
    pub node: NodeId,
    pub field: String,
    pub value: i64,
    pub actions: Vec<ActionOutcome>,
}

/// A rule that just fired; its actions still have to be carried out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigger {
    pub rule_id: String,
    pub node: NodeId,
    pub field: String,
    pub value: i64,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct EdgeState {
    consecutive: u32,
    fired: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AlarmEngine {
    rules: BTreeMap<String, (AlarmRule, EdgeState)>,
}

impl AlarmEngine {
    pub fn new(rules: impl IntoIterator<Item = AlarmRule>) -> Result<Self, Vec<String>> {
        let mut engine = AlarmEngine::default();
        for rule in rules {
            engine.upsert(rule)?;
        }
        Ok(engine)
    }

    /// Inserts or replaces a rule. Replacing resets its edge state.
    pub fn upsert(&mut self, rule: AlarmRule) -> Result<(), Vec<String>> {
        let issues = rule.validate();
        if !issues.is_empty() {
            return Err(issues);
        }
        self.rules
            .insert(rule.id.clone(), (rule, EdgeState::default()));
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<AlarmRule> {
        self.rules.remove(id).map(|(r, _)| r)
    }

    pub fn rules(&self) -> Vec<AlarmRule> {
        self.rules.values().map(|(r, _)| r.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&AlarmRule> {
        self.rules.get(id).map(|(r, _)| r)
    }

    /// Feeds one reading. Rules that do not watch this node and field are
    /// left untouched.
    pub fn evaluate(&mut self, node: NodeId, values: &BTreeMap<String, i64>) -> Vec<Trigger> {
        let mut fired = Vec::new();
        for (rule, state) in self.rules.values_mut() {
            let p = &rule.predicate;
            if p.node != node {
                continue;
            }
            let Some(&value) = values.get(&p.field) else {
                continue;
            };
            if !rule.armed {
                *state = EdgeState::default();
                continue;
            }
            if p.comparator.holds(value, p.threshold) {
                state.consecutive = state.consecutive.saturating_add(1);
                if !state.fired && state.consecutive >= p.debounce {
                    state.fired = true;
                    fired.push(Trigger {
                        rule_id: rule.id.clone(),
                        node,
                        field: p.field.clone(),
                        value,
                        actions: rule.actions.clone(),
                    });
                }
            } else {
                *state = EdgeState::default();
            }
        }
        fired
    }
}

/// Sprinkler and power-cutoff outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actuators {
    pub sprinkler_on: bool,
    pub power_cutoff: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flame(adc: i64) -> BTreeMap<String, i64> {
        BTreeMap::from([("adc".to_string(), adc)])
    }

    fn rule_with_debounce(debounce: u32) -> AlarmRule {
        let mut r = default_fire_rule();
        r.predicate.debounce = debounce;
        r
    }

    /// Counts runs of `true` at least `debounce` long.
    fn brute_force_events(series: &[bool], debounce: usize) -> usize {
        series
            .split(|b| !*b)
            .filter(|run| !run.is_empty() && run.len() >= debounce)
            .count()
    }

    #[test]
    fn default_rule_shape() {
        let r = default_fire_rule();
        assert!(r.validate().is_empty());
        assert_eq!(
            r.actions,
            vec![Action::MotorStop, Action::SprinklerOn, Action::PowerCutoffFlag]
        );
    }

    #[test]
    fn zero_debounce_invalid() {
        let issues = rule_with_debounce(0).validate();
        assert_eq!(issues.len(), 1);
        let mut r = rule_with_debounce(0);
        r.actions.clear();
        r.predicate.field = "temp_c".into();
        assert_eq!(r.validate().len(), 3);
    }

    #[test]
    fn sustained_fire_fires_once() {
        let mut e = AlarmEngine::new([default_fire_rule()]).unwrap();
        let mut fired = 0;
        for adc in [0, 1023, 1023, 1023, 0] {
            fired += e.evaluate(NodeId::FLAME, &flame(adc)).len();
        }
        assert_eq!(fired, 1);
    }

    #[test]
    fn debounce_two_ignores_single_sample() {
        let mut e = AlarmEngine::new([rule_with_debounce(2)]).unwrap();
        let fired: usize = [0, 1023, 0, 0]
            .iter()
            .map(|&adc| e.evaluate(NodeId::FLAME, &flame(adc)).len())
            .sum();
        assert_eq!(fired, 0);
    }

    #[test]
    fn disarmed_rule_is_silent() {
        let mut r = default_fire_rule();
        r.armed = false;
        let mut e = AlarmEngine::new([r]).unwrap();
        assert!(e.evaluate(NodeId::FLAME, &flame(1023)).is_empty());
    }

    #[test]
    fn other_nodes_do_not_disturb_state() {
        let mut e = AlarmEngine::new([rule_with_debounce(2)]).unwrap();
        e.evaluate(NodeId::FLAME, &flame(5));
        e.evaluate(NodeId::SOIL, &flame(0));
        assert_eq!(e.evaluate(NodeId::FLAME, &flame(5)).len(), 1);
    }

    #[test]
    fn replacing_a_rule_resets_its_edge() {
        let mut e = AlarmEngine::new([default_fire_rule()]).unwrap();
        assert_eq!(e.evaluate(NodeId::FLAME, &flame(5)).len(), 1);
        assert_eq!(e.evaluate(NodeId::FLAME, &flame(5)).len(), 0);
        e.upsert(default_fire_rule()).unwrap();
        assert_eq!(e.evaluate(NodeId::FLAME, &flame(5)).len(), 1);
    }

    proptest! {
        #[test]
        fn events_match_brute_force(series in proptest::collection::vec(any::<bool>(), 0..200), debounce in 1u32..6) {
            let mut e = AlarmEngine::new([rule_with_debounce(debounce)]).unwrap();
            let fired: usize = series
                .iter()
                .map(|&b| e.evaluate(NodeId::FLAME, &flame(if b { 900 } else { 0 })).len())
                .sum();
            prop_assert_eq!(fired, brute_force_events(&series, debounce as usize));
        }
    }
}
