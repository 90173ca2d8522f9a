//! Cluster-tree root: collects node frames, keeps the latest readings,
//! drives the 16x4 LCD, uplinks to the cloud and relays motor commands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{decode_frame, Address, LinkFrame, RadioRole};
use crate::ingest::update_url;
use crate::medium::{DeliveryReport, Medium, MediumError, RadioHandle, SimTime, TxId};
use crate::nodes::{apply_motor_command, MotorState, NodeId, Reading};
use crate::payload::{decode_payload, encode_payload, MotorCommand, SensorPayload};
use crate::telemetry::{NewRecord, RecordKind, StoreError, TelemetryStore};

pub const LCD_ROWS: usize = 4;
pub const LCD_COLS: usize = 16;
/// A reading goes stale after this many sample intervals without a frame.
pub const STALE_INTERVALS: u64 = 2;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("motor command could not be submitted: {0}")]
    Submit(#[from] MediumError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no api key configured for uplink")]
    MissingApiKey,
    #[error("uplink endpoint unreachable after {attempts} attempts: {reason}")]
    UplinkUnreachable { attempts: u32, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub reading: Reading,
    pub received_at: SimTime,
    pub seq: u8,
}

/// Most recent reading per node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LatestTable {
    entries: BTreeMap<NodeId, TableEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableUpdate {
    Applied,
    Duplicate,
    /// Older than the entry already held; the table keeps the newer one.
    OutOfOrder,
}

impl LatestTable {
    pub fn get(&self, node: NodeId) -> Option<&TableEntry> {
        self.entries.get(&node)
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, &TableEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn update(&mut self, node: NodeId, reading: Reading, at: SimTime, seq: u8) -> TableUpdate {
        if let Some(prev) = self.entries.get(&node) {
            if prev.seq == seq {
                return TableUpdate::Duplicate;
            }
            if at < prev.received_at {
                return TableUpdate::OutOfOrder;
            }
        }
        self.entries.insert(
            node,
            TableEntry {
                reading,
                received_at: at,
                seq,
            },
        );
        TableUpdate::Applied
    }

    pub fn is_stale(&self, node: NodeId, now: SimTime, sample_interval: SimTime) -> bool {
        self.entries.get(&node).is_none_or(|e| {
            now.saturating_sub(e.received_at) > STALE_INTERVALS * sample_interval
        })
    }

    /// The entry for `node` unless it is missing or stale.
    pub fn fresh(&self, node: NodeId, now: SimTime, sample_interval: SimTime) -> Option<&TableEntry> {
        if self.is_stale(node, now, sample_interval) {
            None
        } else {
            self.entries.get(&node)
        }
    }
}

/// Character grid of the gateway's 16x4 display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LcdBuffer {
    rows: [String; LCD_ROWS],
}

impl LcdBuffer {
    fn from_lines(lines: [String; LCD_ROWS]) -> Self {
        LcdBuffer {
            rows: lines.map(|line| {
                let mut row: String = line
                    .chars()
                    .map(|c| if c.is_ascii_graphic() || c == ' ' { c } else { '?' })
                    .take(LCD_COLS)
                    .collect();
                while row.len() < LCD_COLS {
                    row.push(' ');
                }
                row
            }),
        }
    }

    pub fn rows(&self) -> &[String; LCD_ROWS] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &str {
        &self.rows[i]
    }
}

impl std::fmt::Display for LcdBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for row in &self.rows {
            writeln!(f, "|{row}|")?;
        }
        Ok(())
    }
}

/// Renders the fixed four-line layout. Missing readings show as `---`.
pub fn render_lcd(table: &LatestTable, motor: &MotorState) -> LcdBuffer {
    let (temp, hum) = match table.get(NodeId::DHT).map(|e| e.reading) {
        Some(Reading::Dht {
            temp_c,
            humidity_pct,
        }) => (temp_c.to_string(), humidity_pct.to_string()),
        _ => ("---".to_string(), "---".to_string()),
    };
    let adc = |node| match table.get(node).map(|e| e.reading) {
        Some(Reading::Soil { adc }) | Some(Reading::Flame { adc }) => adc.to_string(),
        _ => "---".to_string(),
    };
    LcdBuffer::from_lines([
        format!("T:{temp:>3}C H:{hum:>3}%"),
        format!("SOIL:{:>4}", adc(NodeId::SOIL)),
        format!("FLAME:{:>4}", adc(NodeId::FLAME)),
        format!("M:{:>3} {}", motor.speed_pwm, motor.direction.lcd_label()),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStatus {
    Pending,
    Acknowledged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "rule")]
pub enum CommandOrigin {
    Operator,
    Alarm(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub id: u64,
    pub command: MotorCommand,
    pub origin: CommandOrigin,
    pub issued_at: SimTime,
    pub status: CommandStatus,
    #[serde(skip)]
    pub tx: Option<TxId>,
    pub report: Option<DeliveryReport>,
    pub resolved_at: Option<SimTime>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayCounters {
    pub frames_received: u64,
    pub readings_applied: u64,
    pub duplicates: u64,
    pub decode_errors: u64,
    pub unknown_senders: u64,
    pub out_of_order: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Stored {
        node: NodeId,
        reading: Reading,
        record_id: u64,
    },
    Duplicate {
        node: NodeId,
    },
    OutOfOrder {
        node: NodeId,
    },
    Rejected(String),
    UnknownSender(Address),
}

/// A prepared cloud update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UplinkRequest {
    pub url: String,
    pub fields: BTreeMap<u8, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum UplinkOutcome {
    Accepted { entry_id: u64 },
    /// The endpoint answered `0`.
    Rejected,
    HttpStatus { status: u16 },
    Unreachable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UplinkEntry {
    pub at_us: SimTime,
    pub request: UplinkRequest,
    pub attempts: u32,
    pub outcome: UplinkOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Carries a GET request to the cloud endpoint.
pub trait UplinkTransport {
    fn get(&mut self, url: &str) -> Result<HttpReply, String>;
}

/// Interprets an HTTP reply per the ThingSpeak convention.
pub fn classify_reply(reply: &HttpReply) -> UplinkOutcome {
    if !(200..300).contains(&reply.status) {
        return UplinkOutcome::HttpStatus {
            status: reply.status,
        };
    }
    match reply.body.trim().parse::<u64>() {
        Ok(0) | Err(_) => UplinkOutcome::Rejected,
        Ok(entry_id) => UplinkOutcome::Accepted { entry_id },
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub address: Address,
    pub channel: u8,
    pub motor_node: Address,
    pub address_book: BTreeMap<Address, NodeId>,
    pub sample_interval: SimTime,
    pub api_key: String,
    pub uplink_base: String,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    config: GatewayConfig,
    radio: RadioHandle,
    table: LatestTable,
    motor: MotorState,
    lcd: LcdBuffer,
    counters: GatewayCounters,
    commands: Vec<CommandEntry>,
    uplinks: Vec<UplinkEntry>,
    seq: u8,
}

impl Gateway {
    pub fn new(config: GatewayConfig, radio: RadioHandle) -> Self {
        let table = LatestTable::default();
        let motor = MotorState::default();
        let lcd = render_lcd(&table, &motor);
        Gateway {
            config,
            radio,
            table,
            motor,
            lcd,
            counters: GatewayCounters::default(),
            commands: Vec::new(),
            uplinks: Vec::new(),
            seq: 0,
        }
    }

    pub fn radio(&self) -> RadioHandle {
        self.radio
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn table(&self) -> &LatestTable {
        &self.table
    }

    /// Node 4's last reported state.
    pub fn motor(&self) -> &MotorState {
        &self.motor
    }

    pub fn lcd(&self) -> &LcdBuffer {
        &self.lcd
    }

    pub fn counters(&self) -> &GatewayCounters {
        &self.counters
    }

    pub fn commands(&self) -> &[CommandEntry] {
        &self.commands
    }

    pub fn command(&self, id: u64) -> Option<&CommandEntry> {
        self.commands.iter().find(|c| c.id == id)
    }

    pub fn uplinks(&self) -> &[UplinkEntry] {
        &self.uplinks
    }

    pub fn is_stale(&self, node: NodeId, now: SimTime) -> bool {
        self.table.is_stale(node, now, self.config.sample_interval)
    }

    /// Processes one received frame. Errors are counted, never propagated,
    /// except for journal i/o.
    pub fn handle_frame(
        &mut self,
        from: Address,
        bytes: &[u8],
        at: SimTime,
        store: &mut TelemetryStore,
    ) -> Result<FrameOutcome, StoreError> {
        self.counters.frames_received += 1;
        let Some(&node) = self.config.address_book.get(&from) else {
            self.counters.unknown_senders += 1;
            return Ok(FrameOutcome::UnknownSender(from));
        };
        let decoded = decode_frame(bytes)
            .map_err(|e| e.to_string())
            .and_then(|f| {
                decode_payload(&f.payload)
                    .map(|p| (f, p))
                    .map_err(|e| e.to_string())
            })
            .and_then(|(f, p)| {
                Reading::from_payload(&p)
                    .map(|r| (f, r))
                    .ok_or_else(|| "motor command sent to gateway".to_string())
            });
        let (frame, reading) = match decoded {
            Ok(v) => v,
            Err(e) => {
                self.counters.decode_errors += 1;
                return Ok(FrameOutcome::Rejected(e));
            }
        };
        match self.table.update(node, reading, at, frame.seq) {
            TableUpdate::Duplicate => {
                self.counters.duplicates += 1;
                return Ok(FrameOutcome::Duplicate { node });
            }
            TableUpdate::OutOfOrder => {
                self.counters.out_of_order += 1;
                return Ok(FrameOutcome::OutOfOrder { node });
            }
            TableUpdate::Applied => {}
        }
        self.counters.readings_applied += 1;
        if let Reading::MotorStatus { speed, direction } = reading {
            let status = MotorCommand { speed, direction };
            self.motor = apply_motor_command(status);
            self.acknowledge(status, at, store)?;
        }
        self.lcd = render_lcd(&self.table, &self.motor);
        let kind = match reading {
            Reading::Flame { .. } => RecordKind::Flame,
            Reading::Soil { .. } => RecordKind::Soil,
            Reading::Dht { .. } => RecordKind::Dht,
            Reading::MotorStatus { .. } => RecordKind::MotorStatus,
        };
        let mut record = NewRecord::new(at, node.to_string(), kind);
        for (field, v) in reading.fields() {
            record = record.value(field, v);
        }
        let record_id = store.append(record)?;
        Ok(FrameOutcome::Stored {
            node,
            reading,
            record_id,
        })
    }

    fn acknowledge(
        &mut self,
        status: MotorCommand,
        at: SimTime,
        store: &mut TelemetryStore,
    ) -> Result<(), StoreError> {
        let entry = self.commands.iter_mut().find(|c| {
            c.status == CommandStatus::Pending
                && c.command == status
                && c.report.as_ref().is_some_and(|r| r.delivered)
        });
        if let Some(entry) = entry {
            entry.status = CommandStatus::Acknowledged;
            entry.resolved_at = Some(at);
            let id = entry.id;
            store.append(
                NewRecord::new(at, NodeId::MOTOR.to_string(), RecordKind::CommandOutcome)
                    .value("command_id", id as i64)
                    .note("acknowledged"),
            )?;
        }
        Ok(())
    }

    /// Frames a motor command for Node 4 and hands it to the medium.
    ///
    /// The radio is switched to transmit for the submission and back to
    /// receive afterwards.
    pub fn send_motor_command(
        &mut self,
        command: MotorCommand,
        origin: CommandOrigin,
        now: SimTime,
        medium: &mut Medium,
        store: &mut TelemetryStore,
    ) -> Result<u64, GatewayError> {
        let id = self.commands.len() as u64 + 1;
        let frame = LinkFrame {
            channel: self.config.channel,
            address: self.config.motor_node,
            ack_requested: true,
            role: RadioRole::Transmitter,
            seq: self.seq,
            payload: encode_payload(&SensorPayload::MotorCommand(command))
                .expect("motor commands always encode")
                .to_vec(),
        };
        self.seq = self.seq.wrapping_add(1);
        let origin_note = match &origin {
            CommandOrigin::Operator => "origin=operator".to_string(),
            CommandOrigin::Alarm(rule) => format!("origin=alarm:{rule}"),
        };
        store.append(
            NewRecord::new(now, NodeId::MOTOR.to_string(), RecordKind::MotorCommand)
                .value("command_id", id as i64)
                .value("speed", command.speed as i64)
                .value("direction", command.direction.code() as i64)
                .note(origin_note),
        )?;
        medium.set_role(self.radio, RadioRole::Transmitter)?;
        let submitted = medium.submit(self.radio, &frame, now);
        medium.set_role(self.radio, RadioRole::Receiver)?;
        let mut entry = CommandEntry {
            id,
            command,
            origin,
            issued_at: now,
            status: CommandStatus::Pending,
            tx: None,
            report: None,
            resolved_at: None,
            failure: None,
        };
        match submitted {
            Ok(tx) => {
                entry.tx = Some(tx);
                self.commands.push(entry);
                Ok(id)
            }
            Err(e) => {
                entry.status = CommandStatus::Failed;
                entry.failure = Some(e.to_string());
                entry.resolved_at = Some(now);
                self.commands.push(entry);
                store.append(
                    NewRecord::new(now, NodeId::MOTOR.to_string(), RecordKind::CommandOutcome)
                        .value("command_id", id as i64)
                        .note(format!("failed: {e}")),
                )?;
                Err(e.into())
            }
        }
    }

    /// Records the medium's verdict on a command frame. Returns the command
    /// id if `tx` belonged to one.
    pub fn command_completed(
        &mut self,
        tx: TxId,
        report: &DeliveryReport,
        at: SimTime,
        store: &mut TelemetryStore,
    ) -> Result<Option<u64>, StoreError> {
        let Some(entry) = self.commands.iter_mut().find(|c| c.tx == Some(tx)) else {
            return Ok(None);
        };
        entry.report = Some(report.clone());
        if !report.delivered {
            let reason = report
                .failure_reason
                .map(|r| format!("{r:?}"))
                .unwrap_or_default();
            entry.status = CommandStatus::Failed;
            entry.failure = Some(reason.clone());
            entry.resolved_at = Some(at);
            let id = entry.id;
            store.append(
                NewRecord::new(at, NodeId::MOTOR.to_string(), RecordKind::CommandOutcome)
                    .value("command_id", id as i64)
                    .note(format!("failed: {reason}")),
            )?;
        }
        Ok(Some(entry.id))
    }

    /// Builds the cloud update from every non-stale reading. `None` when
    /// there is nothing fresh to send.
    pub fn prepare_uplink(&self, now: SimTime) -> Result<Option<UplinkRequest>, GatewayError> {
        if self.config.api_key.is_empty() {
            return Err(GatewayError::MissingApiKey);
        }
        let interval = self.config.sample_interval;
        let mut fields = BTreeMap::new();
        if let Some(Reading::Dht {
            temp_c,
            humidity_pct,
        }) = self.table.fresh(NodeId::DHT, now, interval).map(|e| e.reading)
        {
            fields.insert(1, temp_c as i64);
            fields.insert(2, humidity_pct as i64);
        }
        if let Some(Reading::Soil { adc }) = self.table.fresh(NodeId::SOIL, now, interval).map(|e| e.reading) {
            fields.insert(3, adc as i64);
        }
        if let Some(Reading::Flame { adc }) = self.table.fresh(NodeId::FLAME, now, interval).map(|e| e.reading) {
            fields.insert(4, adc as i64);
        }
        if fields.is_empty() {
            return Ok(None);
        }
        fields.insert(5, self.motor.speed_pwm as i64);
        let url = update_url(&self.config.uplink_base, &self.config.api_key, &fields);
        Ok(Some(UplinkRequest { url, fields }))
    }

    pub fn record_uplink(&mut self, entry: UplinkEntry) {
        self.uplinks.push(entry);
    }

    /// Prepares, sends (retrying once on transport failure) and journals a
    /// cloud update.
    pub fn uplink_latest(
        &mut self,
        now: SimTime,
        transport: &mut dyn UplinkTransport,
    ) -> Result<Option<UplinkEntry>, GatewayError> {
        let Some(request) = self.prepare_uplink(now)? else {
            return Ok(None);
        };
        let (attempts, result) = send_with_retry(transport, &request.url);
        let outcome = match &result {
            Ok(reply) => classify_reply(reply),
            Err(reason) => UplinkOutcome::Unreachable {
                reason: reason.clone(),
            },
        };
        let entry = UplinkEntry {
            at_us: now,
            request,
            attempts,
            outcome,
        };
        self.uplinks.push(entry.clone());
        match result {
            Ok(_) => Ok(Some(entry)),
            Err(reason) => Err(GatewayError::UplinkUnreachable { attempts, reason }),
        }
    }
}

/// One retry after a transport failure. Returns the attempt count and the
/// last result.
pub fn send_with_retry(
    transport: &mut dyn UplinkTransport,
    url: &str,
) -> (u32, Result<HttpReply, String>) {
    match transport.get(url) {
        Ok(reply) => (1, Ok(reply)),
        Err(_) => (2, transport.get(url)),
    }
}
