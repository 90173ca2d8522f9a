//! Browser bindings. Every export takes plain numbers and strings and
//! returns a JSON string, so the same functions are tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;
use wsn_twin::medium::{LossModel, RadioConfig, MAX_RETRIES_LIMIT};
use wsn_twin::telemetry::{RecordKind, TelemetryStore};
use wsn_twin::{
    airtime_us, crc16, decode_frame, decode_payload, encode_frame, encode_payload, Address, DataRate,
    Direction, LinkFrame, Medium, MotorCommand, RadioRole, Scenario, SensorPayload, Simulation,
};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

fn fail(message: impl ToString) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// CRC-16/CCITT-FALSE of the UTF-8 bytes of `text`, as `0xABCD`.
#[wasm_bindgen]
pub fn crc16_of(text: &str) -> String {
    format!("{:#06X}", crc16(text.as_bytes())).replace("0X", "0x")
}

fn payload_for(kind: &str, a: f64, b: f64) -> Result<SensorPayload, String> {
    let adc = || u16::try_from(a as i64).map_err(|_| format!("value {a} out of range"));
    Ok(match kind {
        "flame" => SensorPayload::Flame { adc: adc()? },
        "soil" => SensorPayload::Soil { adc: adc()? },
        "dht" => SensorPayload::Dht {
            temp_c: a as i8,
            humidity_pct: b as u8,
        },
        "motor" => SensorPayload::MotorCommand(MotorCommand {
            speed: a.clamp(0.0, 255.0) as u8,
            direction: match b as i64 {
                1 => Direction::Forward,
                2 => Direction::Reverse,
                _ => Direction::Stop,
            },
        }),
        other => return Err(format!("unknown payload kind {other:?}")),
    })
}

/// Encodes one uplink frame and, when `flip_bit >= 0`, decodes a copy with
/// that bit inverted.
#[wasm_bindgen]
pub fn frame_explorer(channel: u8, address: &str, kind: &str, a: f64, b: f64, flip_bit: i32) -> String {
    let address: Address = match address.parse() {
        Ok(addr) => addr,
        Err(e) => return fail(e),
    };
    let payload = match payload_for(kind, a, b).and_then(|p| encode_payload(&p).map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let frame = LinkFrame {
        channel,
        address,
        ack_requested: true,
        role: RadioRole::Transmitter,
        seq: 0,
        payload: payload.to_vec(),
    };
    let bytes = match encode_frame(&frame) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    let crc = u16::from_be_bytes([bytes[bytes.len() - 2], bytes[bytes.len() - 1]]);
    let mut out = json!({
        "bytes": hex(&bytes),
        "length": bytes.len(),
        "bits": bytes.len() * 8,
        "crc": format!("0x{crc:04X}"),
        "payload": format!("{:?}", decode_payload(&payload).ok()),
    });
    if flip_bit >= 0 {
        let bit = flip_bit as usize;
        if bit >= bytes.len() * 8 {
            return fail(format!("bit {bit} is past the end of a {}-bit frame", bytes.len() * 8));
        }
        let mut flipped = bytes.clone();
        flipped[bit / 8] ^= 0x80 >> (bit % 8);
        out["flipped"] = json!({
            "bit": bit,
            "bytes": hex(&flipped),
            "result": match decode_frame(&flipped) {
                Ok(f) => format!("accepted: {f:?}"),
                Err(e) => format!("rejected: {e}"),
            },
        });
    }
    out.to_string()
}

/// Airtime, analytic and simulated delivery for one link setting, plus the
/// analytic delivery curve over every retry budget.
#[wasm_bindgen]
pub fn link_budget(loss: f64, max_retries: u8, payload_len: u32, rate: &str, trials: u32, seed: u32) -> String {
    let rate: DataRate = match serde_json::from_value(Value::String(rate.into())) {
        Ok(r) => r,
        Err(_) => return fail(format!("unknown data rate {rate:?} (250kbps, 1mbps, 2mbps)")),
    };
    let airtime = match airtime_us(payload_len as usize, rate) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let mut medium = match Medium::new(LossModel {
        loss_probability: loss,
        seed: seed as u64,
    }) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    if max_retries > MAX_RETRIES_LIMIT {
        return fail(format!("max_retries {max_retries} > {MAX_RETRIES_LIMIT}"));
    }
    let to = Address([0xE7; 5]);
    let tx = medium
        .register_radio(RadioConfig {
            max_retries,
            data_rate: rate,
            ..RadioConfig::new(Address([0xC2, 0xC2, 0xC2, 0xC2, 0x01]), 76, RadioRole::Transmitter)
        })
        .expect("fresh medium");
    medium
        .register_radio(RadioConfig {
            data_rate: rate,
            ..RadioConfig::new(to, 76, RadioRole::Receiver)
        })
        .expect("fresh medium");
    let frame = LinkFrame {
        channel: 76,
        address: to,
        ack_requested: true,
        role: RadioRole::Transmitter,
        seq: 0,
        payload: vec![0; payload_len as usize],
    };
    let (mut delivered, mut attempts, mut energy) = (0u64, 0u64, 0u64);
    let mut t = 0;
    for _ in 0..trials {
        let r = medium.transmit(tx, &frame, t).expect("registered radio");
        delivered += r.delivered as u64;
        attempts += r.attempts as u64;
        energy += r.energy_maus;
        t = medium.now() + 1_000;
    }
    let n = trials.max(1) as f64;
    let curve: Vec<f64> = (0..=MAX_RETRIES_LIMIT as i32).map(|r| 1.0 - loss.powi(r + 1)).collect();
    json!({
        "airtime_us": airtime,
        "analytic_delivery": 1.0 - loss.powi(max_retries as i32 + 1),
        "simulated_delivery": delivered as f64 / n,
        "mean_attempts": attempts as f64 / n,
        "mean_energy_maus": energy as f64 / n,
        "curve": curve,
    })
    .to_string()
}

fn paper_with_loss(loss: f64) -> Result<Scenario, String> {
    let mut file = Scenario::paper().file;
    file.loss.probability = loss;
    Scenario::from_file(file).map_err(|e| e.to_string())
}

/// Sim time allowed after `hhmm` so that sample's frames have landed.
const SETTLE_US: u64 = 500_000;

/// The reference day with the given link loss: every stored sample, plus
/// the gateway display and actuators just after the `hhmm` sample.
#[wasm_bindgen]
pub fn paper_day(hhmm: &str, loss: f64) -> String {
    let scenario = match paper_with_loss(loss) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let Some(at) = scenario.at_clock(hhmm).filter(|&t| scenario.profile.in_window(t)) else {
        return fail(format!("{hhmm:?} is not a time inside the run window"));
    };
    let run = |until: Option<u64>| -> Result<Simulation, String> {
        let store = TelemetryStore::in_memory(scenario.clock);
        let mut sim = Simulation::new(scenario.clone(), store).map_err(|e| e.to_string())?;
        match until {
            Some(t) => sim.advance_to(t + SETTLE_US),
            None => sim.run_to_end(),
        }
        .map_err(|e| e.to_string())?;
        Ok(sim)
    };
    let (full, partial) = match (run(None), run(Some(at))) {
        (Ok(f), Ok(p)) => (f, p),
        (Err(e), _) | (_, Err(e)) => return fail(e),
    };
    let samples: Vec<Value> = full
        .store()
        .records()
        .iter()
        .filter(|r| r.kind.is_sensor())
        .map(|r| json!({ "time": r.time, "node": r.node, "kind": r.kind.as_str(), "values": r.values }))
        .collect();
    let alarms: Vec<&str> = full
        .store()
        .records()
        .iter()
        .filter(|r| r.kind == RecordKind::Alarm)
        .map(|r| r.time.as_str())
        .collect();
    let snap = partial.snapshot();
    json!({
        "samples": samples,
        "alarms": alarms,
        "delivery_ratio": full.summary().delivery_ratio,
        "at": snap.time,
        "lcd": snap.lcd,
        "actuators": snap.actuators,
        "motor": snap.motor_node,
    })
    .to_string()
}
