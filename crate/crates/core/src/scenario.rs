//! Scenario files: JSON documents describing the run window, radios, loss
//! model, environment curves and alarm rules. See `docs/scenario.schema.json`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alarms::{default_fire_rule, AlarmRule};
use crate::clock::{parse_clock_time, parse_console_date, SimClock, US_PER_MINUTE};
use crate::frame::{Address, MAX_CHANNEL};
use crate::medium::{DataRate, LossModel, SimTime, DEFAULT_TX_CURRENT_MA, MAX_RETRIES_LIMIT};
use crate::nodes::{NodeId, DEFAULT_FLAME_PEAK};
use crate::payload::ADC_MAX;
use crate::profile::{Curve, FlameWindow, ScenarioProfile};

/// The embedded paper-day scenario.
pub const PAPER_SCENARIO_JSON: &str = include_str!("../scenarios/paper_day.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scenario violates the schema:\n  - {}", .0.join("\n  - "))]
    SchemaViolation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    #[serde(default)]
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySpec {
    #[serde(default = "default_gateway_address")]
    pub address: String,
    #[serde(default = "default_channel")]
    pub channel: u8,
    #[serde(default)]
    pub data_rate: DataRate,
    #[serde(default = "default_retries")]
    pub max_retries: u8,
    #[serde(default = "default_tx_current")]
    pub tx_current_ma: u32,
    #[serde(default = "default_api_key")]
    pub api_key: String,
    #[serde(default = "default_uplink_base")]
    pub uplink_base: String,
    /// Delay from each grid instant to the cloud update.
    #[serde(default = "default_uplink_delay")]
    pub uplink_delay_ms: u64,
}

impl Default for GatewaySpec {
    fn default() -> Self {
        GatewaySpec {
            address: default_gateway_address(),
            channel: default_channel(),
            data_rate: DataRate::default(),
            max_retries: default_retries(),
            tx_current_ma: default_tx_current(),
            api_key: default_api_key(),
            uplink_base: default_uplink_base(),
            uplink_delay_ms: default_uplink_delay(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub address: Option<String>,
    pub channel: Option<u8>,
    pub data_rate: Option<DataRate>,
    pub max_retries: Option<u8>,
    pub tx_current_ma: Option<u32>,
    /// Delay from the grid instant to the start of transmission.
    pub tx_offset_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvePoint {
    pub at: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlameWindowSpec {
    pub start: String,
    pub end: String,
    #[serde(default = "default_flame_peak")]
    pub peak: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub flame_windows: Vec<FlameWindowSpec>,
    #[serde(default)]
    pub soil_curve: Vec<CurvePoint>,
    #[serde(default)]
    pub temp_curve: Vec<CurvePoint>,
    #[serde(default)]
    pub humidity_curve: Vec<CurvePoint>,
    #[serde(default)]
    pub soil_threshold: Option<u16>,
}

/// The document as written on disk. Optional fields are filled by
/// [`ScenarioFile::filled`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: Option<u64>,
    #[serde(default = "default_date")]
    pub date: String,
    pub run_window: WindowSpec,
    pub first_sample: Option<String>,
    #[serde(default = "default_interval")]
    pub sample_interval_min: u64,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub gateway: GatewaySpec,
    #[serde(default)]
    pub nodes: BTreeMap<String, NodeSpec>,
    #[serde(default)]
    pub profile: ProfileSpec,
    pub alarms: Option<Vec<AlarmRule>>,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_date() -> String {
    "09-07-2020".into()
}
fn default_interval() -> u64 {
    30
}
fn default_gateway_address() -> String {
    "E7:E7:E7:E7:E7".into()
}
fn default_channel() -> u8 {
    76
}
fn default_retries() -> u8 {
    MAX_RETRIES_LIMIT
}
fn default_tx_current() -> u32 {
    DEFAULT_TX_CURRENT_MA
}
fn default_api_key() -> String {
    "WSNTWIN0000000000".into()
}
fn default_uplink_base() -> String {
    "http://127.0.0.1:8080".into()
}
fn default_uplink_delay() -> u64 {
    1_000
}
fn default_flame_peak() -> u16 {
    DEFAULT_FLAME_PEAK
}

const DEFAULT_SOIL: f64 = 512.0;
const DEFAULT_TEMP: f64 = 25.0;
const DEFAULT_HUMIDITY: f64 = 50.0;

impl ScenarioFile {
    /// Copy with every default written out explicitly.
    pub fn filled(&self) -> ScenarioFile {
        let mut f = self.clone();
        if f.first_sample.is_none() {
            f.first_sample = Some(f.run_window.start.clone());
        }
        for id in NodeId::ALL {
            let spec = f.nodes.entry(id.to_string()).or_insert(NodeSpec {
                address: None,
                channel: None,
                data_rate: None,
                max_retries: None,
                tx_current_ma: None,
                tx_offset_ms: None,
            });
            spec.address
                .get_or_insert_with(|| format!("C2:C2:C2:C2:{:02X}", id.index()));
            spec.channel.get_or_insert(f.gateway.channel);
            spec.data_rate.get_or_insert(f.gateway.data_rate);
            spec.max_retries.get_or_insert(MAX_RETRIES_LIMIT);
            spec.tx_current_ma.get_or_insert(DEFAULT_TX_CURRENT_MA);
            spec.tx_offset_ms.get_or_insert(5 * id.index() as u64);
        }
        let start = f.run_window.start.clone();
        for (curve, value) in [
            (&mut f.profile.soil_curve, DEFAULT_SOIL),
            (&mut f.profile.temp_curve, DEFAULT_TEMP),
            (&mut f.profile.humidity_curve, DEFAULT_HUMIDITY),
        ] {
            if curve.is_empty() {
                curve.push(CurvePoint {
                    at: start.clone(),
                    value,
                });
            }
        }
        if f.alarms.is_none() {
            f.alarms = Some(vec![default_fire_rule()]);
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRadio {
    pub address: Address,
    pub channel: u8,
    pub data_rate: DataRate,
    pub max_retries: u8,
    pub tx_current_ma: u32,
    pub tx_offset: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayRadio {
    pub address: Address,
    pub channel: u8,
    pub data_rate: DataRate,
    pub max_retries: u8,
    pub tx_current_ma: u32,
    pub api_key: String,
    pub uplink_base: String,
    pub uplink_delay: SimTime,
}

/// A validated scenario with times resolved to simulated microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub clock: SimClock,
    pub profile: ScenarioProfile,
    pub loss: LossModel,
    pub gateway: GatewayRadio,
    pub nodes: BTreeMap<NodeId, NodeRadio>,
    pub alarms: Vec<AlarmRule>,
    /// The source document with defaults filled in.
    pub file: ScenarioFile,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Scenario::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json(&text)
    }

    pub fn paper() -> Scenario {
        Scenario::from_json(PAPER_SCENARIO_JSON).expect("embedded paper scenario is valid")
    }

    /// Sample instants on the grid.
    pub fn grid(&self) -> Vec<SimTime> {
        self.profile.sample_instants()
    }

    /// Simulated time of an `HH:MM` clock reading on the scenario date.
    pub fn at_clock(&self, hhmm: &str) -> Option<SimTime> {
        let t = parse_clock_time(hhmm).ok()?;
        self.clock.sim_time_of_clock(t).ok()
    }

    pub fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let file = file.filled();
        let mut issues = Vec::new();
        let mut v = Validator {
            issues: &mut issues,
        };

        let seed = v.require(file.seed, "seed is required (determinism is mandatory)");
        let date = v.ok(parse_console_date(&file.date), "date");
        let start = v.ok(parse_clock_time(&file.run_window.start), "run_window.start");
        let end = v.ok(parse_clock_time(&file.run_window.end), "run_window.end");
        if let (Some(s), Some(e)) = (start, end) {
            if s >= e {
                v.push(format!(
                    "run_window.start {} must precede run_window.end {}",
                    file.run_window.start, file.run_window.end
                ));
            }
        }
        let window_minutes = match (start, end) {
            (Some(s), Some(e)) if s < e => Some((e - s).num_minutes() as u64),
            _ => None,
        };
        let to_sim = |t: NaiveTime| -> Option<SimTime> {
            let s = start?;
            (t >= s).then(|| (t - s).num_microseconds().unwrap_or(0) as SimTime)
        };
        let run_end = window_minutes.map(|m| m * US_PER_MINUTE);
        let in_window = |t: SimTime| run_end.is_some_and(|e| t <= e);

        let clock_field = |v: &mut Validator, text: &str, what: &str| -> Option<SimTime> {
            let t = v.ok(parse_clock_time(text), what)?;
            match to_sim(t) {
                Some(sim) if in_window(sim) => Some(sim),
                _ if start.is_none() || run_end.is_none() => None,
                _ => {
                    v.push(format!(
                        "{what} {text} lies outside run_window {}..{}",
                        file.run_window.start, file.run_window.end
                    ));
                    None
                }
            }
        };

        let first_sample = file
            .first_sample
            .as_deref()
            .and_then(|t| clock_field(&mut v, t, "first_sample"));
        if file.sample_interval_min == 0 {
            v.push("sample_interval_min must be positive".into());
        }
        let p = file.loss.probability;
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            v.push(format!("loss.probability {p} must lie in [0, 1]"));
        }

        let mut addresses: BTreeMap<Address, String> = BTreeMap::new();
        let mut check_radio = |v: &mut Validator,
                               who: &str,
                               address: &str,
                               channel: u8,
                               max_retries: u8|
         -> Option<Address> {
            if channel > MAX_CHANNEL {
                v.push(format!("{who}.channel {channel} exceeds {MAX_CHANNEL}"));
            }
            if max_retries > MAX_RETRIES_LIMIT {
                v.push(format!("{who}.max_retries {max_retries} exceeds {MAX_RETRIES_LIMIT}"));
            }
            let addr = match address.parse::<Address>() {
                Ok(a) => a,
                Err(e) => {
                    v.push(format!("{who}.address: {e}"));
                    return None;
                }
            };
            if let Some(other) = addresses.insert(addr, who.to_string()) {
                v.push(format!("{who}.address {addr} duplicates {other}"));
            }
            Some(addr)
        };

        let g = &file.gateway;
        let gw_addr = check_radio(&mut v, "gateway", &g.address, g.channel, g.max_retries);

        let mut nodes = BTreeMap::new();
        for (key, spec) in &file.nodes {
            let id = match key.parse::<NodeId>() {
                Ok(id) => id,
                Err(e) => {
                    v.push(format!("nodes: {e}"));
                    continue;
                }
            };
            let who = format!("nodes.{key}");
            let addr = check_radio(
                &mut v,
                &who,
                spec.address.as_deref().unwrap_or_default(),
                spec.channel.unwrap_or_default(),
                spec.max_retries.unwrap_or_default(),
            );
            if let Some(address) = addr {
                nodes.insert(
                    id,
                    NodeRadio {
                        address,
                        channel: spec.channel.unwrap_or_default(),
                        data_rate: spec.data_rate.unwrap_or_default(),
                        max_retries: spec.max_retries.unwrap_or_default(),
                        tx_current_ma: spec.tx_current_ma.unwrap_or_default(),
                        tx_offset: spec.tx_offset_ms.unwrap_or_default() * 1_000,
                    },
                );
            }
        }

        let curve = |v: &mut Validator, name: &str, points: &[CurvePoint], range: Option<(f64, f64)>| {
            let mut knots = Vec::new();
            for (i, pt) in points.iter().enumerate() {
                let what = format!("profile.{name}[{i}].at");
                let Some(t) = clock_field(v, &pt.at, &what) else {
                    continue;
                };
                if !pt.value.is_finite() {
                    v.push(format!("profile.{name}[{i}].value must be finite"));
                }
                if let Some((lo, hi)) = range {
                    if pt.value < lo || pt.value > hi {
                        v.push(format!(
                            "profile.{name}[{i}].value {} outside [{lo}, {hi}]",
                            pt.value
                        ));
                    }
                }
                knots.push((t, pt.value));
            }
            if knots.len() != points.len() {
                return None;
            }
            let c = Curve::new(knots);
            if c.is_none() {
                v.push(format!("profile.{name} points must be strictly increasing in time"));
            }
            c
        };
        let soil = curve(&mut v, "soil_curve", &file.profile.soil_curve, Some((0.0, ADC_MAX as f64)));
        let temp = curve(&mut v, "temp_curve", &file.profile.temp_curve, None);
        let humidity = curve(&mut v, "humidity_curve", &file.profile.humidity_curve, Some((0.0, 100.0)));

        let mut flame_windows = Vec::new();
        for (i, w) in file.profile.flame_windows.iter().enumerate() {
            let s = clock_field(&mut v, &w.start, &format!("profile.flame_windows[{i}].start"));
            let e = clock_field(&mut v, &w.end, &format!("profile.flame_windows[{i}].end"));
            if w.peak > ADC_MAX {
                v.push(format!("profile.flame_windows[{i}].peak {} exceeds {ADC_MAX}", w.peak));
            }
            if let (Some(s), Some(e)) = (s, e) {
                if s >= e {
                    v.push(format!("profile.flame_windows[{i}] start must precede end"));
                } else {
                    flame_windows.push(FlameWindow {
                        start: s,
                        end: e,
                        peak: w.peak,
                    });
                }
            }
        }
        if let Some(th) = file.profile.soil_threshold {
            if th > ADC_MAX {
                v.push(format!("profile.soil_threshold {th} exceeds {ADC_MAX}"));
            }
        }

        let alarms = file.alarms.clone().unwrap_or_default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, rule) in alarms.iter().enumerate() {
            for issue in rule.validate() {
                v.push(format!("alarms[{i}]: {issue}"));
            }
            if !seen.insert(rule.id.clone()) {
                v.push(format!("alarms[{i}]: duplicate id {:?}", rule.id));
            }
        }

        if !issues.is_empty() {
            return Err(ScenarioError::SchemaViolation(issues));
        }

        let origin = date.unwrap().and_time(start.unwrap());
        let profile = ScenarioProfile {
            flame_windows,
            soil_curve: soil.unwrap(),
            temp_curve: temp.unwrap(),
            humidity_curve: humidity.unwrap(),
            first_sample: first_sample.unwrap(),
            sample_interval: file.sample_interval_min * US_PER_MINUTE,
            run_window: (0, run_end.unwrap()),
            soil_threshold: file.profile.soil_threshold,
        };
        let g = &file.gateway;
        Ok(Scenario {
            name: file.name.clone(),
            seed: seed.unwrap(),
            clock: SimClock::new(origin),
            profile,
            loss: LossModel {
                loss_probability: file.loss.probability,
                seed: seed.unwrap(),
            },
            gateway: GatewayRadio {
                address: gw_addr.unwrap(),
                channel: g.channel,
                data_rate: g.data_rate,
                max_retries: g.max_retries,
                tx_current_ma: g.tx_current_ma,
                api_key: g.api_key.clone(),
                uplink_base: g.uplink_base.clone(),
                uplink_delay: g.uplink_delay_ms * 1_000,
            },
            nodes,
            alarms,
            file,
        })
    }
}

struct Validator<'a> {
    issues: &'a mut Vec<String>,
}

impl Validator<'_> {
    fn push(&mut self, issue: String) {
        self.issues.push(issue);
    }

    fn require<T>(&mut self, value: Option<T>, message: &str) -> Option<T> {
        if value.is_none() {
            self.push(message.to_string());
        }
        value
    }

    fn ok<T, E: std::fmt::Display>(&mut self, r: Result<T, E>, what: &str) -> Option<T> {
        r.map_err(|e| self.push(format!("{what}: {e}"))).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "seed": 1,
            "run_window": {"start": "10:00", "end": "11:00"}
        })
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_json(&minimal().to_string()).unwrap();
        assert_eq!(s.nodes.len(), 4);
        assert_eq!(s.alarms, vec![default_fire_rule()]);
        assert_eq!(s.grid().len(), 3);
        assert_eq!(s.file.first_sample.as_deref(), Some("10:00"));
        assert_eq!(s.nodes[&NodeId::DHT].address.to_string(), "C2:C2:C2:C2:03");
    }

    #[test]
    fn paper_scenario_grid() {
        let s = Scenario::paper();
        assert_eq!(s.grid().len(), 9);
        assert_eq!(s.clock.console_time(s.grid()[0]), "10:30");
        assert_eq!(s.clock.console_time(*s.grid().last().unwrap()), "14:30");
        assert_eq!(s.clock.console_date(0), "09-07-2020");
    }

    #[test]
    fn missing_seed_is_violation() {
        let mut doc = minimal();
        doc.as_object_mut().unwrap().remove("seed");
        match Scenario::from_json(&doc.to_string()) {
            Err(ScenarioError::SchemaViolation(issues)) => {
                assert!(issues.iter().any(|i| i.contains("seed")))
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn curve_point_outside_window_is_violation() {
        let mut doc = minimal();
        doc["profile"] = serde_json::json!({"soil_curve": [{"at": "12:00", "value": 10}]});
        match Scenario::from_json(&doc.to_string()) {
            Err(ScenarioError::SchemaViolation(issues)) => {
                assert!(issues.iter().any(|i| i.contains("outside run_window")), "{issues:?}")
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn every_failure_listed() {
        let doc = serde_json::json!({
            "run_window": {"start": "11:00", "end": "10:00"},
            "sample_interval_min": 0,
            "loss": {"probability": 2.0},
            "nodes": {"node9": {}},
            "alarms": [{"id": "x", "predicate": {"node": "node1", "field": "adc", "comparator": "gt", "threshold": 0, "debounce": 0}, "actions": []}]
        });
        match Scenario::from_json(&doc.to_string()) {
            Err(ScenarioError::SchemaViolation(issues)) => assert!(issues.len() >= 6, "{issues:?}"),
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        match Scenario::from_json("{\n  \"seed\": 1,\n  oops\n}") {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_addresses_rejected() {
        let mut doc = minimal();
        doc["nodes"] = serde_json::json!({"node1": {"address": "E7:E7:E7:E7:E7"}});
        assert!(matches!(
            Scenario::from_json(&doc.to_string()),
            Err(ScenarioError::SchemaViolation(_))
        ));
    }
}
