//! Summaries computed from a journal alone, without re-running anything.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::telemetry::{RecordKind, TelemetryRecord};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinkTotals {
    pub sent: i64,
    pub delivered: i64,
    pub failed: i64,
    pub attempts: i64,
    pub airtime_us: i64,
    pub energy_maus: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmLine {
    pub timestamp: String,
    pub node: String,
    pub values: BTreeMap<String, i64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CommandTotals {
    pub issued: u64,
    pub acknowledged: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JournalSummary {
    pub records: usize,
    pub first: Option<String>,
    pub last: Option<String>,
    pub readings_by_node: BTreeMap<String, u64>,
    pub links: BTreeMap<String, LinkTotals>,
    pub totals: LinkTotals,
    pub delivery_ratio: Option<f64>,
    /// Mean transmit current implied by the totals, mA.
    pub mean_tx_current_ma: Option<f64>,
    pub alarm_events: Vec<AlarmLine>,
    pub commands: CommandTotals,
    pub uplinks: BTreeMap<String, u64>,
}

fn iso(r: &TelemetryRecord) -> String {
    r.timestamp.format(crate::clock::ISO_FORMAT).to_string()
}

/// Link totals come from the last `link` record per node, so a journal
/// appended to by several runs reports the latest one.
pub fn summarize_journal(records: &[TelemetryRecord]) -> JournalSummary {
    let mut readings_by_node = BTreeMap::new();
    let mut links: BTreeMap<String, LinkTotals> = BTreeMap::new();
    let mut alarm_events = Vec::new();
    let mut commands = CommandTotals::default();
    let mut uplinks = BTreeMap::new();
    for r in records {
        match r.kind {
            k if k.is_reading() => *readings_by_node.entry(r.node.clone()).or_insert(0) += 1,
            RecordKind::Link => {
                let v = |f: &str| r.values.get(f).copied().unwrap_or(0);
                links.insert(
                    r.node.clone(),
                    LinkTotals {
                        sent: v("sent"),
                        delivered: v("delivered"),
                        failed: v("failed"),
                        attempts: v("attempts"),
                        airtime_us: v("airtime_us"),
                        energy_maus: v("energy_maus"),
                    },
                );
            }
            RecordKind::Alarm if r.note.as_deref() != Some("cleared") => alarm_events.push(AlarmLine {
                timestamp: iso(r),
                node: r.node.clone(),
                values: r.values.clone(),
                note: r.note.clone(),
            }),
            RecordKind::MotorCommand => commands.issued += 1,
            RecordKind::CommandOutcome => {
                if r.note.as_deref() == Some("acknowledged") {
                    commands.acknowledged += 1;
                } else {
                    commands.failed += 1;
                }
            }
            RecordKind::Uplink => *uplinks.entry(r.node.clone()).or_insert(0) += 1,
            _ => {}
        }
    }
    let mut totals = LinkTotals::default();
    for l in links.values() {
        totals.sent += l.sent;
        totals.delivered += l.delivered;
        totals.failed += l.failed;
        totals.attempts += l.attempts;
        totals.airtime_us += l.airtime_us;
        totals.energy_maus += l.energy_maus;
    }
    JournalSummary {
        records: records.len(),
        first: records.first().map(iso),
        last: records.last().map(iso),
        readings_by_node,
        delivery_ratio: (totals.sent > 0).then(|| totals.delivered as f64 / totals.sent as f64),
        mean_tx_current_ma: (totals.airtime_us > 0)
            .then(|| totals.energy_maus as f64 / totals.airtime_us as f64),
        links,
        totals,
        alarm_events,
        commands,
        uplinks,
    }
}
