//! The assembled network driven by one discrete-event loop.
//!
//! Sampling and uplink events sit in a time-ordered queue; radio traffic is
//! resolved by the [`Medium`]. At equal instants the medium goes first, so
//! a frame that ends at `t` is delivered before anything scheduled at `t`
//! starts.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::alarms::{
    Action, ActionOutcome, Actuators, AlarmEngine, AlarmEvent, AlarmRule, Trigger,
};
use crate::frame::RadioRole;
use crate::gateway::{
    classify_reply, send_with_retry, CommandEntry, CommandOrigin, CommandStatus, FrameOutcome,
    Gateway, GatewayConfig, GatewayCounters, GatewayError, HttpReply, UplinkEntry, UplinkOutcome,
    UplinkTransport, LCD_COLS, LCD_ROWS,
};
use crate::ingest::{split_url, Ingest, IngestEntry};
use crate::medium::{
    Completion, Medium, MediumError, MediumStats, RadioConfig, SimTime, StepOutput,
    TxId,
};
use crate::nodes::{
    dht11_with_error, sample_flame, sample_soil, MotorNode, MotorState, NodeError, NodeId,
    Reading, SensorNode,
};
use crate::payload::MotorCommand;
use crate::scenario::Scenario;
use crate::telemetry::{NewRecord, RecordKind, StoreError, TelemetryStore};

/// Journal node name for records written by the cloud ingest.
pub const CLOUD_NODE: &str = "cloud";
/// Journal node name for the gateway's own records.
pub const GATEWAY_NODE: &str = "gateway";

/// Node 4's delay between receiving a command and starting its status frame.
pub const MOTOR_TURNAROUND_US: SimTime = 130;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid alarm rules: {}", .0.join("; "))]
    Rules(Vec<String>),
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("power cutoff is active; clear it before commanding the motor")]
    PowerCutoff,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Sample(NodeId),
    Uplink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TxOwner {
    Node(NodeId),
    Command,
}

/// Per-node transmission totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub failed: u64,
    pub attempts: u64,
    pub airtime_us: u64,
    pub energy_maus: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeView {
    pub kind: String,
    pub values: BTreeMap<String, i64>,
    pub seq: u8,
    pub received_at_us: SimTime,
    pub received_at: String,
}

/// One row of the latest-readings table; `reading` is null before the
/// node's first frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSlot {
    pub stale: bool,
    pub reading: Option<NodeView>,
}

/// Everything an operator console needs, at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub scenario: String,
    pub now_us: SimTime,
    pub timestamp: String,
    pub date: String,
    pub time: String,
    pub finished: bool,
    pub nodes: BTreeMap<String, NodeSlot>,
    /// The gateway's view of the motor.
    pub motor: MotorState,
    /// The motor node's actual state.
    pub motor_node: MotorState,
    pub actuators: Actuators,
    pub lcd: Vec<String>,
    pub commands: Vec<CommandEntry>,
    pub alarm_events: Vec<AlarmEvent>,
    pub rules: Vec<AlarmRule>,
    pub counters: GatewayCounters,
    pub medium: MediumStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub date: String,
    pub grid: Vec<String>,
    pub finished_at: String,
    pub records: usize,
    pub readings_by_node: BTreeMap<String, u64>,
    pub links: BTreeMap<String, LinkStats>,
    pub medium: MediumStats,
    pub delivery_ratio: f64,
    pub alarm_events: Vec<AlarmEvent>,
    pub commands: Vec<CommandEntry>,
    pub uplinks: Vec<UplinkEntry>,
    pub counters: GatewayCounters,
    pub actuators: Actuators,
    pub lcd: Vec<String>,
    pub violations: Vec<String>,
}

/// Error-free readings of every sensor at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpotCheck {
    pub time: String,
    pub temp_c: i8,
    pub humidity_pct: u8,
    pub soil_adc: u16,
    pub flame_adc: u16,
}

pub fn spot_check(scenario: &Scenario, at: SimTime) -> Result<SpotCheck, NodeError> {
    let p = &scenario.profile;
    let dht = dht11_with_error(p, at, 0, 0)?;
    Ok(SpotCheck {
        time: scenario.clock.console_time(at),
        temp_c: dht.temp_c,
        humidity_pct: dht.humidity_pct,
        soil_adc: sample_soil(p, at)?.adc,
        flame_adc: sample_flame(p, at)?.adc,
    })
}

pub struct Simulation {
    scenario: Scenario,
    medium: Medium,
    sensors: BTreeMap<NodeId, SensorNode>,
    motor: MotorNode,
    gateway: Gateway,
    store: TelemetryStore,
    alarms: AlarmEngine,
    actuators: Actuators,
    ingest: Ingest,
    transport: Option<Box<dyn UplinkTransport + Send>>,
    events: Vec<AlarmEvent>,
    queue: BTreeMap<(SimTime, u64), Event>,
    next_event: u64,
    now: SimTime,
    owners: BTreeMap<TxId, TxOwner>,
    links: BTreeMap<NodeId, LinkStats>,
    violations: Vec<String>,
}

impl Simulation {
    /// Builds the network and schedules every sample and uplink in the run
    /// window. Uplinks go to an in-process ingest until a transport is set.
    pub fn new(scenario: Scenario, store: TelemetryStore) -> Result<Self, SimError> {
        let mut medium = Medium::new(scenario.loss)?;
        let g = &scenario.gateway;
        let gw_radio = medium.register_radio(RadioConfig {
            data_rate: g.data_rate,
            max_retries: g.max_retries,
            tx_current_ma: g.tx_current_ma,
            ..RadioConfig::new(g.address, g.channel, RadioRole::Receiver)
        })?;

        let mut radios = BTreeMap::new();
        for (&id, n) in &scenario.nodes {
            let role = if id == NodeId::MOTOR {
                RadioRole::Receiver
            } else {
                RadioRole::Transmitter
            };
            let handle = medium.register_radio(RadioConfig {
                data_rate: n.data_rate,
                max_retries: n.max_retries,
                tx_current_ma: n.tx_current_ma,
                ..RadioConfig::new(n.address, n.channel, role)
            })?;
            radios.insert(id, handle);
        }

        let mut sensors = BTreeMap::new();
        for id in [NodeId::FLAME, NodeId::SOIL, NodeId::DHT] {
            let n = &scenario.nodes[&id];
            sensors.insert(
                id,
                SensorNode::new(
                    id,
                    radios[&id],
                    n.address,
                    n.channel,
                    g.address,
                    n.tx_offset,
                    scenario.seed,
                )?,
            );
        }
        let m = &scenario.nodes[&NodeId::MOTOR];
        let motor = MotorNode::new(radios[&NodeId::MOTOR], m.address, m.channel, g.address);

        let gateway = Gateway::new(
            GatewayConfig {
                address: g.address,
                channel: g.channel,
                motor_node: m.address,
                address_book: scenario.nodes.iter().map(|(&id, n)| (n.address, id)).collect(),
                sample_interval: scenario.profile.sample_interval,
                api_key: g.api_key.clone(),
                uplink_base: g.uplink_base.clone(),
            },
            gw_radio,
        );
        let alarms = AlarmEngine::new(scenario.alarms.clone()).map_err(SimError::Rules)?;

        let mut sim = Simulation {
            ingest: Ingest::new(g.api_key.clone()),
            medium,
            sensors,
            motor,
            gateway,
            store,
            alarms,
            actuators: Actuators::default(),
            transport: None,
            events: Vec::new(),
            queue: BTreeMap::new(),
            next_event: 0,
            now: 0,
            owners: BTreeMap::new(),
            links: NodeId::ALL.iter().map(|&id| (id, LinkStats::default())).collect(),
            violations: Vec::new(),
            scenario,
        };
        let uplink_delay = sim.scenario.gateway.uplink_delay;
        let uplinks = !sim.scenario.gateway.api_key.is_empty();
        for t in sim.scenario.grid() {
            for id in [NodeId::FLAME, NodeId::SOIL, NodeId::DHT] {
                sim.schedule(t, Event::Sample(id));
            }
            if uplinks {
                sim.schedule(t + uplink_delay, Event::Uplink);
            }
        }
        Ok(sim)
    }

    /// Sends uplinks through `transport` instead of the in-process ingest.
    pub fn set_transport(&mut self, transport: Box<dyn UplinkTransport + Send>) {
        self.transport = Some(transport);
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        self.queue.insert((at, self.next_event), event);
        self.next_event += 1;
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn store(&self) -> &TelemetryStore {
        &self.store
    }

    pub fn into_store(self) -> TelemetryStore {
        self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn motor_node(&self) -> MotorState {
        self.motor.state()
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn actuators(&self) -> Actuators {
        self.actuators
    }

    pub fn alarm_events(&self) -> &[AlarmEvent] {
        &self.events
    }

    pub fn rules(&self) -> Vec<AlarmRule> {
        self.alarms.rules()
    }

    pub fn links(&self) -> &BTreeMap<NodeId, LinkStats> {
        &self.links
    }

    pub fn ingest_entries(&self) -> &[IngestEntry] {
        self.ingest.entries()
    }

    /// Earliest pending event, radio or scheduled.
    pub fn next_event_time(&self) -> Option<SimTime> {
        let q = self.queue.keys().next().map(|&(t, _)| t);
        match (q, self.medium.next_event_time()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.queue.is_empty() && !self.medium.has_pending()
    }

    /// Processes every event up to and including `target`, then sets the
    /// clock to `target`. Earlier targets are ignored.
    pub fn advance_to(&mut self, target: SimTime) -> Result<(), SimError> {
        loop {
            let queued = self.queue.keys().next().map(|&(t, _)| t);
            let radio = self.medium.next_event_time();
            let radio_first = match (radio, queued) {
                (Some(r), Some(q)) => r <= q,
                (Some(_), None) => true,
                _ => false,
            };
            let Some(next) = (if radio_first { radio } else { queued }) else {
                break;
            };
            if next > target {
                break;
            }
            self.now = self.now.max(next);
            if radio_first {
                let out = self.medium.step(next)?;
                self.handle_radio(out)?;
            } else {
                let ((at, _), event) = self.queue.pop_first().expect("peeked");
                self.handle_event(at, event)?;
            }
        }
        self.now = self.now.max(target);
        Ok(())
    }

    /// Runs until nothing is left to do.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while let Some(t) = self.next_event_time() {
            self.advance_to(t)?;
        }
        Ok(())
    }

    fn handle_event(&mut self, at: SimTime, event: Event) -> Result<(), SimError> {
        match event {
            Event::Sample(id) => {
                let node = self.sensors.get_mut(&id).expect("sensor nodes 1-3 exist");
                if let Some(tx) = node.tick(&mut self.medium, &self.scenario.profile, at)? {
                    self.owners.insert(tx.tx, TxOwner::Node(id));
                    self.links.entry(id).or_default().sent += 1;
                }
            }
            Event::Uplink => self.uplink(at)?,
        }
        Ok(())
    }

    fn uplink(&mut self, at: SimTime) -> Result<(), SimError> {
        let request = match self.gateway.prepare_uplink(at) {
            Ok(Some(r)) => r,
            Ok(None) | Err(_) => return Ok(()),
        };
        let (attempts, result) = match self.transport.as_mut() {
            Some(t) => send_with_retry(t.as_mut(), &request.url),
            None => {
                let (_, query) = split_url(&request.url);
                let query = query.to_string();
                let id = self.ingest_at(&query, at)?;
                (
                    1,
                    Ok(HttpReply {
                        status: 200,
                        body: id.to_string(),
                    }),
                )
            }
        };
        let outcome = match &result {
            Ok(reply) => classify_reply(reply),
            Err(reason) => UplinkOutcome::Unreachable {
                reason: reason.clone(),
            },
        };
        let note = match &outcome {
            UplinkOutcome::Accepted { entry_id } => format!("accepted entry {entry_id}"),
            UplinkOutcome::Rejected => "rejected".to_string(),
            UplinkOutcome::HttpStatus { status } => format!("http status {status}"),
            UplinkOutcome::Unreachable { reason } => format!("unreachable: {reason}"),
        };
        let mut record = NewRecord::new(at, GATEWAY_NODE, RecordKind::Uplink)
            .value("attempts", attempts as i64)
            .note(note);
        for (n, v) in &request.fields {
            record = record.value(&format!("field{n}"), *v);
        }
        self.store.append(record)?;
        self.gateway.record_uplink(UplinkEntry {
            at_us: at,
            request,
            attempts,
            outcome,
        });
        Ok(())
    }

    fn handle_radio(&mut self, out: StepOutput) -> Result<(), SimError> {
        for d in out.deliveries {
            if d.receiver == self.gateway.radio() {
                let outcome = self
                    .gateway
                    .handle_frame(d.from, &d.bytes, d.at, &mut self.store)?;
                if let FrameOutcome::Stored { node, reading, .. } = outcome {
                    self.evaluate_alarms(node, &reading, d.at)?;
                }
            } else if d.receiver == self.motor.radio {
                match self.motor.receive(&d.bytes) {
                    Ok(Some(status)) => {
                        let radio = self.motor.radio;
                        self.medium.set_role(radio, RadioRole::Transmitter)?;
                        let submitted =
                            self.medium
                                .submit(radio, &status, d.at + MOTOR_TURNAROUND_US);
                        self.medium.set_role(radio, RadioRole::Receiver)?;
                        let tx = submitted?;
                        self.owners.insert(tx, TxOwner::Node(NodeId::MOTOR));
                        self.links.entry(NodeId::MOTOR).or_default().sent += 1;
                    }
                    Ok(None) => {}
                    Err(e) => self
                        .violations
                        .push(format!("motor node rejected a frame at {} µs: {e}", d.at)),
                }
            }
        }
        for c in out.completions {
            self.completed(c)?;
        }
        Ok(())
    }

    fn completed(&mut self, c: Completion) -> Result<(), SimError> {
        let r = &c.report;
        let config = self.medium.config(c.sender)?;
        if r.attempts < 1 || r.attempts > config.max_retries as u32 + 1 {
            self.violations
                .push(format!("tx {:?} reported {} attempts", c.tx, r.attempts));
        }
        if r.delivered == r.failure_reason.is_some() {
            self.violations
                .push(format!("tx {:?} delivered flag disagrees with failure reason", c.tx));
        }
        if r.energy_maus != config.tx_current_ma as u64 * r.airtime_us_total {
            self.violations
                .push(format!("tx {:?} energy is not current times airtime", c.tx));
        }
        match self.owners.remove(&c.tx) {
            Some(TxOwner::Node(id)) => {
                let l = self.links.entry(id).or_default();
                l.attempts += r.attempts as u64;
                l.airtime_us += r.airtime_us_total;
                l.energy_maus += r.energy_maus;
                if r.delivered {
                    l.delivered += 1;
                } else {
                    l.failed += 1;
                }
            }
            Some(TxOwner::Command) => {
                self.gateway
                    .command_completed(c.tx, &c.report, c.at, &mut self.store)?;
            }
            None => self
                .violations
                .push(format!("completion for unknown tx {:?}", c.tx)),
        }
        Ok(())
    }

    fn evaluate_alarms(&mut self, node: NodeId, reading: &Reading, at: SimTime) -> Result<(), SimError> {
        let values: BTreeMap<String, i64> = reading
            .fields()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for trigger in self.alarms.evaluate(node, &values) {
            self.fire(trigger, at)?;
        }
        Ok(())
    }

    fn fire(&mut self, trigger: Trigger, at: SimTime) -> Result<(), SimError> {
        let mut outcomes = Vec::new();
        for &action in &trigger.actions {
            let (ok, detail) = match action {
                Action::MotorStop if self.actuators.power_cutoff => {
                    (false, "suppressed: power cutoff active".to_string())
                }
                Action::MotorStop => match self.command(
                    MotorCommand::STOP,
                    CommandOrigin::Alarm(trigger.rule_id.clone()),
                    at,
                )? {
                    Ok(id) => (true, format!("stop command {id} issued")),
                    Err(e) => (false, e),
                },
                Action::SprinklerOn => {
                    self.actuators.sprinkler_on = true;
                    (true, "sprinkler on".to_string())
                }
                Action::PowerCutoffFlag => {
                    self.actuators.power_cutoff = true;
                    (true, "power cut off".to_string())
                }
            };
            outcomes.push(ActionOutcome { action, ok, detail });
        }
        let names: Vec<String> = trigger
            .actions
            .iter()
            .map(|a| serde_json::to_value(a).expect("action serializes").as_str().unwrap_or_default().to_string())
            .collect();
        self.store.append(
            NewRecord::new(at, trigger.node.to_string(), RecordKind::Alarm)
                .value(&trigger.field, trigger.value)
                .note(format!("rule={} actions={}", trigger.rule_id, names.join(","))),
        )?;
        self.events.push(AlarmEvent {
            rule_id: trigger.rule_id,
            at_us: at,
            timestamp: self.scenario.clock.iso(at),
            node: trigger.node,
            field: trigger.field,
            value: trigger.value,
            actions: outcomes,
        });
        Ok(())
    }

    /// Inner result is the command id, or the reason the medium refused it.
    fn command(
        &mut self,
        cmd: MotorCommand,
        origin: CommandOrigin,
        at: SimTime,
    ) -> Result<Result<u64, String>, SimError> {
        match self
            .gateway
            .send_motor_command(cmd, origin, at, &mut self.medium, &mut self.store)
        {
            Ok(id) => {
                let tx = self.gateway.command(id).and_then(|c| c.tx).expect("submitted");
                self.owners.insert(tx, TxOwner::Command);
                Ok(Ok(id))
            }
            Err(GatewayError::Store(e)) => Err(e.into()),
            Err(e) => Ok(Err(e.to_string())),
        }
    }

    /// Queues an operator command at the current instant. Refused while the
    /// power cutoff is set. A command the medium refuses still gets an id and
    /// is journaled as failed.
    pub fn submit_motor_command(&mut self, cmd: MotorCommand) -> Result<u64, CommandError> {
        if self.actuators.power_cutoff {
            return Err(CommandError::PowerCutoff);
        }
        match self.command(cmd, CommandOrigin::Operator, self.now)? {
            Ok(id) => Ok(id),
            Err(_) => Ok(self.gateway.commands().last().map_or(0, |c| c.id)),
        }
    }

    /// Journals each radio's transmission totals at the current instant.
    pub fn journal_link_stats(&mut self) -> Result<(), SimError> {
        for (id, l) in &self.links {
            self.store.append(
                NewRecord::new(self.now, id.to_string(), RecordKind::Link)
                    .value("sent", l.sent as i64)
                    .value("delivered", l.delivered as i64)
                    .value("failed", l.failed as i64)
                    .value("attempts", l.attempts as i64)
                    .value("airtime_us", l.airtime_us as i64)
                    .value("energy_maus", l.energy_maus as i64),
            )?;
        }
        let mut gw = LinkStats::default();
        for r in self.gateway.commands().iter().filter_map(|c| c.report.as_ref()) {
            gw.sent += 1;
            gw.attempts += r.attempts as u64;
            gw.airtime_us += r.airtime_us_total;
            gw.energy_maus += r.energy_maus;
            if r.delivered {
                gw.delivered += 1;
            } else {
                gw.failed += 1;
            }
        }
        self.store.append(
            NewRecord::new(self.now, GATEWAY_NODE, RecordKind::Link)
                .value("sent", gw.sent as i64)
                .value("delivered", gw.delivered as i64)
                .value("failed", gw.failed as i64)
                .value("attempts", gw.attempts as i64)
                .value("airtime_us", gw.airtime_us as i64)
                .value("energy_maus", gw.energy_maus as i64),
        )?;
        Ok(())
    }

    /// Resets sprinkler and power cutoff.
    pub fn clear_actuators(&mut self) -> Result<Actuators, SimError> {
        let before = self.actuators;
        self.actuators = Actuators::default();
        self.store.append(
            NewRecord::new(self.now, GATEWAY_NODE, RecordKind::Alarm)
                .value("sprinkler_on", before.sprinkler_on as i64)
                .value("power_cutoff", before.power_cutoff as i64)
                .note("cleared"),
        )?;
        Ok(before)
    }

    pub fn upsert_rule(&mut self, rule: AlarmRule) -> Result<(), Vec<String>> {
        self.alarms.upsert(rule)
    }

    pub fn remove_rule(&mut self, id: &str) -> Option<AlarmRule> {
        self.alarms.remove(id)
    }

    /// The cloud update endpoint. Returns the new entry id, or 0 when the
    /// update is rejected. Accepted updates are journaled under `cloud`.
    pub fn ingest_update(&mut self, query: &str) -> Result<u64, SimError> {
        let at = self.now;
        self.ingest_at(query, at)
    }

    fn ingest_at(&mut self, query: &str, at: SimTime) -> Result<u64, SimError> {
        let id = self.ingest.accept_query(query, at);
        if id == 0 {
            return Ok(0);
        }
        let entry = self.ingest.entries().last().expect("just accepted");
        let mut record = NewRecord::new(at, CLOUD_NODE, RecordKind::Uplink).value("entry_id", id as i64);
        let mut opaque = Vec::new();
        for (n, v) in &entry.fields {
            match v.trim().parse::<i64>() {
                Ok(v) => record = record.value(&format!("field{n}"), v),
                Err(_) => opaque.push(format!("field{n}={v}")),
            }
        }
        if !opaque.is_empty() {
            record = record.note(opaque.join("&"));
        }
        self.store.append(record)?;
        Ok(id)
    }

    pub fn snapshot(&self) -> Snapshot {
        let clock = &self.scenario.clock;
        let table = self.gateway.table();
        let nodes = NodeId::ALL
            .iter()
            .map(|&id| {
                let reading = table.get(id).map(|e| NodeView {
                    kind: e.reading.kind_name().to_string(),
                    values: e
                        .reading
                        .fields()
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v))
                        .collect(),
                    seq: e.seq,
                    received_at_us: e.received_at,
                    received_at: clock.iso(e.received_at),
                });
                let slot = NodeSlot {
                    stale: self.gateway.is_stale(id, self.now),
                    reading,
                };
                (id.to_string(), slot)
            })
            .collect();
        Snapshot {
            scenario: self.scenario.name.clone(),
            now_us: self.now,
            timestamp: clock.iso(self.now),
            date: clock.console_date(self.now),
            time: clock.console_time(self.now),
            finished: self.is_finished(),
            nodes,
            motor: *self.gateway.motor(),
            motor_node: self.motor.state(),
            actuators: self.actuators,
            lcd: self.gateway.lcd().rows().to_vec(),
            commands: self.gateway.commands().to_vec(),
            alarm_events: self.events.clone(),
            rules: self.alarms.rules(),
            counters: self.gateway.counters().clone(),
            medium: self.medium.stats().clone(),
        }
    }

    pub fn summary(&self) -> RunSummary {
        let clock = &self.scenario.clock;
        let mut readings_by_node: BTreeMap<String, u64> = [NodeId::FLAME, NodeId::SOIL, NodeId::DHT]
            .iter()
            .map(|n| (n.to_string(), 0))
            .collect();
        for r in self.store.records().iter().filter(|r| r.kind.is_sensor()) {
            *readings_by_node.entry(r.node.clone()).or_insert(0) += 1;
        }
        let m = self.medium.stats();
        RunSummary {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            date: clock.console_date(0),
            grid: self.scenario.grid().iter().map(|&t| clock.console_time(t)).collect(),
            finished_at: clock.iso(self.now),
            records: self.store.len(),
            readings_by_node,
            links: self.links.iter().map(|(id, l)| (id.to_string(), l.clone())).collect(),
            medium: m.clone(),
            delivery_ratio: if m.submitted == 0 {
                0.0
            } else {
                m.delivered as f64 / m.submitted as f64
            },
            alarm_events: self.events.clone(),
            commands: self.gateway.commands().to_vec(),
            uplinks: self.gateway.uplinks().to_vec(),
            counters: self.gateway.counters().clone(),
            actuators: self.actuators,
            lcd: self.gateway.lcd().rows().to_vec(),
            violations: self.check_invariants(),
        }
    }

    /// Cross-checks between components. Empty when the run is consistent.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = self.violations.clone();
        let m = self.medium.stats();
        let link_energy: u64 = self.links.values().map(|l| l.energy_maus).sum();
        let command_energy: u64 = self
            .gateway
            .commands()
            .iter()
            .filter_map(|c| c.report.as_ref())
            .map(|r| r.energy_maus)
            .sum();
        if link_energy + command_energy != m.energy_maus_total {
            out.push(format!(
                "energy ledger mismatch: links {} + commands {} != medium {}",
                link_energy, command_energy, m.energy_maus_total
            ));
        }
        if !self.medium.has_pending() && m.delivered + m.failed != m.submitted {
            out.push(format!(
                "medium resolved {} + {} of {} submissions",
                m.delivered, m.failed, m.submitted
            ));
        }
        let rows = self.gateway.lcd().rows();
        if rows.len() != LCD_ROWS
            || rows
                .iter()
                .any(|r| r.len() != LCD_COLS || !r.bytes().all(|b| (0x20..0x7F).contains(&b)))
        {
            out.push(format!("LCD buffer malformed: {rows:?}"));
        }
        let records = self.store.records();
        if records.windows(2).any(|w| w[1].at_us < w[0].at_us) {
            out.push("journal is not in time order".to_string());
        }
        for id in [NodeId::FLAME, NodeId::SOIL, NodeId::DHT] {
            let name = id.to_string();
            let stored = records
                .iter()
                .filter(|r| r.kind.is_sensor() && r.node == name)
                .count() as u64;
            let delivered = self.links.get(&id).map_or(0, |l| l.delivered);
            if stored != delivered {
                out.push(format!("{name}: {stored} readings stored, {delivered} frames delivered"));
            }
        }
        for c in self.gateway.commands() {
            if c.status == CommandStatus::Acknowledged && !c.report.as_ref().is_some_and(|r| r.delivered) {
                out.push(format!("command {} acknowledged without delivery", c.id));
            }
        }
        let settled = self
            .gateway
            .commands()
            .iter()
            .all(|c| c.status != CommandStatus::Pending);
        let last_acked = self
            .gateway
            .commands()
            .last()
            .is_some_and(|c| c.status == CommandStatus::Acknowledged);
        if settled && last_acked && *self.gateway.motor() != self.motor.state() {
            out.push("gateway motor mirror disagrees with motor node".to_string());
        }
        out
    }
}
