//! Append-only telemetry journal.
//!
//! Records are kept in memory and, when the store is backed by a file,
//! mirrored to disk as newline-delimited JSON (one record per line). CSV is
//! an export format only.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{SimClock, ISO_FORMAT};
use crate::medium::SimTime;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("journal i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("journal {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("inverted range: from {from} is after to {to}")]
    InvertedRange { from: NaiveDateTime, to: NaiveDateTime },
    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Flame,
    Soil,
    Dht,
    MotorStatus,
    MotorCommand,
    CommandOutcome,
    Alarm,
    Uplink,
    /// End-of-run transmission totals for one radio.
    Link,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Flame => "flame",
            RecordKind::Soil => "soil",
            RecordKind::Dht => "dht",
            RecordKind::MotorStatus => "motor_status",
            RecordKind::MotorCommand => "motor_command",
            RecordKind::CommandOutcome => "command_outcome",
            RecordKind::Alarm => "alarm",
            RecordKind::Uplink => "uplink",
            RecordKind::Link => "link",
        }
    }

    pub const ALL: [RecordKind; 9] = [
        RecordKind::Flame,
        RecordKind::Soil,
        RecordKind::Dht,
        RecordKind::MotorStatus,
        RecordKind::MotorCommand,
        RecordKind::CommandOutcome,
        RecordKind::Alarm,
        RecordKind::Uplink,
        RecordKind::Link,
    ];

    pub fn is_sensor(self) -> bool {
        matches!(self, RecordKind::Flame | RecordKind::Soil | RecordKind::Dht)
    }

    /// Sensor readings plus the motor node's status reports.
    pub fn is_reading(self) -> bool {
        self.is_sensor() || self == RecordKind::MotorStatus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sampled,
    Replayed,
}

mod iso_seconds {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&t.format(super::ISO_FORMAT))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&s, super::ISO_FORMAT).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub id: u64,
    /// Simulated microseconds since scenario start.
    pub at_us: SimTime,
    /// ISO-8601, whole seconds.
    #[serde(with = "iso_seconds")]
    pub timestamp: NaiveDateTime,
    /// Console style `DD-MM-YYYY`.
    pub date: String,
    /// Console style `HH:MM`.
    pub time: String,
    pub node: String,
    pub kind: RecordKind,
    pub values: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub source: Source,
}

/// A record before the store assigns its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewRecord {
    pub at_us: SimTime,
    pub node: String,
    pub kind: RecordKind,
    pub values: BTreeMap<String, i64>,
    pub note: Option<String>,
    pub source: Source,
}

impl NewRecord {
    pub fn new(at_us: SimTime, node: impl Into<String>, kind: RecordKind) -> Self {
        NewRecord {
            at_us,
            node: node.into(),
            kind,
            values: BTreeMap::new(),
            note: None,
            source: Source::Sampled,
        }
    }

    pub fn value(mut self, field: &str, v: i64) -> Self {
        self.values.insert(field.to_string(), v);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug)]
pub struct TelemetryStore {
    clock: SimClock,
    records: Vec<TelemetryRecord>,
    next_id: u64,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl TelemetryStore {
    pub fn in_memory(clock: SimClock) -> Self {
        TelemetryStore {
            clock,
            records: Vec::new(),
            next_id: 1,
            sink: None,
        }
    }

    /// Starts a fresh journal at `path`, truncating any previous content.
    pub fn create(path: &Path, clock: SimClock) -> Result<Self, StoreError> {
        let file = File::create(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(TelemetryStore {
            clock,
            records: Vec::new(),
            next_id: 1,
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    /// Opens an existing journal (or creates an empty one) and appends to it.
    pub fn open(path: &Path, clock: SimClock) -> Result<Self, StoreError> {
        let records = if path.exists() {
            read_journal(path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| StoreError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let next_id = records.last().map_or(1, |r| r.id + 1);
        Ok(TelemetryStore {
            clock,
            records,
            next_id,
            sink: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn append(&mut self, new: NewRecord) -> Result<u64, StoreError> {
        let record = TelemetryRecord {
            id: self.next_id,
            at_us: new.at_us,
            timestamp: self.clock.stamp(new.at_us),
            date: self.clock.console_date(new.at_us),
            time: self.clock.console_time(new.at_us),
            node: new.node,
            kind: new.kind,
            values: new.values,
            note: new.note,
            source: new.source,
        };
        if let Some((path, writer)) = &mut self.sink {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(writer, "{line}")
                .and_then(|_| writer.flush())
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        self.next_id += 1;
        let id = record.id;
        self.records.push(record);
        Ok(id)
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of `node` with `from <= timestamp <= to`, ascending by time.
    pub fn query_range(
        &self,
        node: &str,
        from: NaiveDateTime,
        to: NaiveDateTime,
    ) -> Result<Vec<TelemetryRecord>, StoreError> {
        query_records(&self.records, node, from, to)
    }

    pub fn export_csv(&self, filter: &ExportFilter) -> Result<String, StoreError> {
        export_csv(&self.records, filter)
    }
}

/// Loads every record from an NDJSON journal.
pub fn read_journal(path: &Path) -> Result<Vec<TelemetryRecord>, StoreError> {
    let file = File::open(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TelemetryRecord =
            serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

pub fn query_records(
    records: &[TelemetryRecord],
    node: &str,
    from: NaiveDateTime,
    to: NaiveDateTime,
) -> Result<Vec<TelemetryRecord>, StoreError> {
    if from > to {
        return Err(StoreError::InvertedRange { from, to });
    }
    let mut out: Vec<_> = records
        .iter()
        .filter(|r| r.node == node && from <= r.timestamp && r.timestamp <= to)
        .cloned()
        .collect();
    out.sort_by_key(|r| (r.timestamp, r.at_us, r.id));
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ExportFilter {
    pub nodes: Option<Vec<String>>,
    pub kinds: Option<Vec<RecordKind>>,
    pub from: Option<NaiveDateTime>,
    pub to: Option<NaiveDateTime>,
}

impl ExportFilter {
    fn admits(&self, r: &TelemetryRecord) -> bool {
        self.nodes.as_ref().is_none_or(|n| n.contains(&r.node))
            && self.kinds.as_ref().is_none_or(|k| k.contains(&r.kind))
            && self.from.is_none_or(|f| r.timestamp >= f)
            && self.to.is_none_or(|t| r.timestamp <= t)
    }
}

pub const CSV_HEADER: [&str; 5] = ["timestamp", "node", "kind", "field", "value"];

/// One row per scalar field, ordered by (timestamp, node, field).
pub fn export_csv(records: &[TelemetryRecord], filter: &ExportFilter) -> Result<String, StoreError> {
    if let (Some(from), Some(to)) = (filter.from, filter.to) {
        if from > to {
            return Err(StoreError::InvertedRange { from, to });
        }
    }
    let mut rows: Vec<(NaiveDateTime, &str, &str, u64, &str, i64)> = Vec::new();
    for r in records.iter().filter(|r| filter.admits(r)) {
        for (field, value) in &r.values {
            rows.push((r.timestamp, &r.node, field, r.id, r.kind.as_str(), *value));
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for (ts, node, field, _, kind, value) in rows {
        let ts = ts.format(ISO_FORMAT).to_string();
        let value = value.to_string();
        w.write_record([ts.as_str(), node, kind, field, value.as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{parse_console_date, parse_clock_time, parse_iso, US_PER_MINUTE};

    fn clock() -> SimClock {
        SimClock::new(
            parse_console_date("09-07-2020")
                .unwrap()
                .and_time(parse_clock_time("10:00").unwrap()),
        )
    }

    fn table_one(at: SimTime) -> NewRecord {
        NewRecord::new(at, "node3", RecordKind::Dht)
            .value("temp_c", 33)
            .value("humidity_pct", 70)
    }

    #[test]
    fn table_one_row_queryable_immediately() {
        let mut s = TelemetryStore::in_memory(clock());
        let id = s.append(table_one(28 * US_PER_MINUTE)).unwrap();
        let rows = s
            .query_range(
                "node3",
                parse_iso("2020-07-09T10:28").unwrap(),
                parse_iso("2020-07-09T10:28").unwrap(),
            )
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].id, id);
        assert_eq!(rows[0].date, "09-07-2020");
        assert_eq!(rows[0].time, "10:28");
    }

    #[test]
    fn ids_strictly_increase() {
        let mut s = TelemetryStore::in_memory(clock());
        let a = s.append(table_one(0)).unwrap();
        let b = s.append(table_one(0)).unwrap();
        assert!(b > a);
    }

    #[test]
    fn reopen_preserves_order_and_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndjson");
        {
            let mut s = TelemetryStore::create(&path, clock()).unwrap();
            s.append(table_one(0)).unwrap();
            s.append(table_one(US_PER_MINUTE)).unwrap();
        }
        let mut s = TelemetryStore::open(&path, clock()).unwrap();
        assert_eq!(s.len(), 2);
        let id = s.append(table_one(2 * US_PER_MINUTE)).unwrap();
        assert_eq!(id, 3);
        let back = read_journal(&path).unwrap();
        let ids: Vec<_> = back.iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn corrupt_journal_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndjson");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            TelemetryStore::open(&path, clock()),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn range_queries() {
        let mut s = TelemetryStore::in_memory(clock());
        for k in 0..5 {
            s.append(table_one(k * 30 * US_PER_MINUTE)).unwrap();
        }
        let t = |hm: &str| parse_iso(&format!("2020-07-09T{hm}")).unwrap();
        assert_eq!(s.query_range("node3", t("10:00"), t("12:00")).unwrap().len(), 5);
        assert_eq!(s.query_range("node3", t("10:31"), t("10:59")).unwrap().len(), 0);
        assert_eq!(s.query_range("node3", t("10:30"), t("10:30")).unwrap().len(), 1);
        assert_eq!(s.query_range("node2", t("10:00"), t("12:00")).unwrap().len(), 0);
        assert!(matches!(
            s.query_range("node3", t("12:00"), t("10:00")),
            Err(StoreError::InvertedRange { .. })
        ));
    }

    #[test]
    fn csv_rows_for_table_one() {
        let mut s = TelemetryStore::in_memory(clock());
        s.append(table_one(28 * US_PER_MINUTE)).unwrap();
        let csv = s.export_csv(&ExportFilter::default()).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "timestamp,node,kind,field,value");
        assert_eq!(lines[1], "2020-07-09T10:28:00,node3,dht,humidity_pct,70");
        assert_eq!(lines[2], "2020-07-09T10:28:00,node3,dht,temp_c,33");
    }

    #[test]
    fn csv_empty_store_is_header_only() {
        let s = TelemetryStore::in_memory(clock());
        assert_eq!(s.export_csv(&ExportFilter::default()).unwrap(), "timestamp,node,kind,field,value\n");
    }

    #[test]
    fn csv_quotes_awkward_node_names() {
        let mut s = TelemetryStore::in_memory(clock());
        s.append(NewRecord::new(0, "gate,way", RecordKind::Uplink).value("field1", 1))
            .unwrap();
        let csv = s.export_csv(&ExportFilter::default()).unwrap();
        assert!(csv.contains("\"gate,way\""));
    }
}
