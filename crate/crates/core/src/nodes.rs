//! Emulated sensor and actuator nodes.
//!
//! Node 1 carries the IR flame sensor, Node 2 the soil probe, Node 3 the
//! DHT11 and Node 4 the DC motor behind an L298N driver. Nodes 1-3 sample
//! on the scenario grid and send one frame per sample to the gateway.
//! Node 4 only speaks when it receives a motor command, answering with a
//! status frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{decode_frame, Address, FrameError, LinkFrame, RadioRole};
use crate::medium::{Medium, MediumError, RadioHandle, SimTime, TxId};
use crate::payload::{
    decode_payload, encode_payload, Direction, MotorCommand, PayloadError, SensorPayload, ADC_MAX,
};
use crate::profile::ScenarioProfile;

pub const DHT_TEMP_RANGE: (i32, i32) = (0, 50);
pub const DHT_HUMIDITY_RANGE: (i32, i32) = (20, 90);
/// Default flame ADC reported inside a flame window.
pub const DEFAULT_FLAME_PEAK: u16 = ADC_MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("t = {0} µs lies outside the run window")]
    OutOfWindow(SimTime),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error("node {0} cannot sample, it is an actuator")]
    NotASensor(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(u8);

impl NodeId {
    pub const FLAME: NodeId = NodeId(1);
    pub const SOIL: NodeId = NodeId(2);
    pub const DHT: NodeId = NodeId(3);
    pub const MOTOR: NodeId = NodeId(4);
    pub const ALL: [NodeId; 4] = [NodeId(1), NodeId(2), NodeId(3), NodeId(4)];

    pub fn new(n: u8) -> Option<Self> {
        (1..=4).contains(&n).then_some(NodeId(n))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn kind(self) -> NodeKind {
        match self.0 {
            1 => NodeKind::Flame,
            2 => NodeKind::Soil,
            3 => NodeKind::Dht,
            _ => NodeKind::Motor,
        }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "node{}", self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("node")
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(NodeId::new)
            .ok_or_else(|| format!("unknown node {s:?}, expected node1..node4"))
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Flame,
    Soil,
    Dht,
    Motor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlameReading {
    pub adc: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoilReading {
    pub adc: u16,
    /// Digital output of the probe, present only when a threshold is configured.
    pub dry: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhtReading {
    pub temp_c: i8,
    pub humidity_pct: u8,
}

/// A decoded measurement or actuator report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reading {
    Flame { adc: u16 },
    Soil { adc: u16 },
    Dht { temp_c: i8, humidity_pct: u8 },
    MotorStatus { speed: u8, direction: Direction },
}

impl Reading {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Reading::Flame { .. } => "flame",
            Reading::Soil { .. } => "soil",
            Reading::Dht { .. } => "dht",
            Reading::MotorStatus { .. } => "motor_status",
        }
    }

    /// Scalar fields in a fixed order.
    pub fn fields(&self) -> Vec<(&'static str, i64)> {
        match *self {
            Reading::Flame { adc } | Reading::Soil { adc } => vec![("adc", adc as i64)],
            Reading::Dht {
                temp_c,
                humidity_pct,
            } => vec![
                ("temp_c", temp_c as i64),
                ("humidity_pct", humidity_pct as i64),
            ],
            Reading::MotorStatus { speed, direction } => vec![
                ("speed", speed as i64),
                ("direction", direction.code() as i64),
            ],
        }
    }

    pub fn from_payload(payload: &SensorPayload) -> Option<Reading> {
        Some(match *payload {
            SensorPayload::Flame { adc } => Reading::Flame { adc },
            SensorPayload::Soil { adc } => Reading::Soil { adc },
            SensorPayload::Dht {
                temp_c,
                humidity_pct,
            } => Reading::Dht {
                temp_c,
                humidity_pct,
            },
            SensorPayload::MotorStatus(cmd) => Reading::MotorStatus {
                speed: cmd.speed,
                direction: cmd.direction,
            },
            SensorPayload::MotorCommand(_) => return None,
        })
    }

    pub fn to_payload(&self) -> SensorPayload {
        match *self {
            Reading::Flame { adc } => SensorPayload::Flame { adc },
            Reading::Soil { adc } => SensorPayload::Soil { adc },
            Reading::Dht {
                temp_c,
                humidity_pct,
            } => SensorPayload::Dht {
                temp_c,
                humidity_pct,
            },
            Reading::MotorStatus { speed, direction } => {
                SensorPayload::MotorStatus(MotorCommand { speed, direction })
            }
        }
    }
}

pub fn sample_flame(profile: &ScenarioProfile, t: SimTime) -> Result<FlameReading, NodeError> {
    if !profile.in_window(t) {
        return Err(NodeError::OutOfWindow(t));
    }
    let adc = profile
        .flame_windows
        .iter()
        .find(|w| w.contains(t))
        .map_or(0, |w| w.peak.min(ADC_MAX));
    Ok(FlameReading { adc })
}

/// Higher ADC means wetter soil.
pub fn sample_soil(profile: &ScenarioProfile, t: SimTime) -> Result<SoilReading, NodeError> {
    if !profile.in_window(t) {
        return Err(NodeError::OutOfWindow(t));
    }
    let v = profile.soil_curve.value_at(t).round();
    let adc = v.clamp(0.0, ADC_MAX as f64) as u16;
    Ok(SoilReading {
        adc,
        dry: profile.soil_threshold.map(|th| adc <= th),
    })
}

/// Profile truth rounded to whole units, as `(temp_c, humidity_pct)`.
pub fn dht11_truth(profile: &ScenarioProfile, t: SimTime) -> (i32, i32) {
    (
        profile.temp_curve.value_at(t).round() as i32,
        profile.humidity_curve.value_at(t).round() as i32,
    )
}

/// DHT11 reading with explicit error terms, each expected in `-1..=1`.
pub fn dht11_with_error(
    profile: &ScenarioProfile,
    t: SimTime,
    temp_error: i32,
    humidity_error: i32,
) -> Result<DhtReading, NodeError> {
    if !profile.in_window(t) {
        return Err(NodeError::OutOfWindow(t));
    }
    let (temp, hum) = dht11_truth(profile, t);
    Ok(DhtReading {
        temp_c: (temp + temp_error).clamp(DHT_TEMP_RANGE.0, DHT_TEMP_RANGE.1) as i8,
        humidity_pct: (hum + humidity_error).clamp(DHT_HUMIDITY_RANGE.0, DHT_HUMIDITY_RANGE.1)
            as u8,
    })
}

/// ±1 unit uniform error on each channel, then clamped to the DHT11's range.
pub fn sample_dht11<R: Rng + ?Sized>(
    profile: &ScenarioProfile,
    t: SimTime,
    rng: &mut R,
) -> Result<DhtReading, NodeError> {
    if !profile.in_window(t) {
        return Err(NodeError::OutOfWindow(t));
    }
    let temp_error = rng.gen_range(-1..=1);
    let humidity_error = rng.gen_range(-1..=1);
    dht11_with_error(profile, t, temp_error, humidity_error)
}

/// Electrical state of the L298N channel driving the motor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorState {
    pub speed_pwm: u8,
    pub direction: Direction,
    pub duty_cycle: f64,
    pub in3: bool,
    pub in4: bool,
}

impl Default for MotorState {
    fn default() -> Self {
        apply_motor_command(MotorCommand::STOP)
    }
}

impl MotorState {
    pub fn as_command(&self) -> MotorCommand {
        MotorCommand {
            speed: self.speed_pwm,
            direction: self.direction,
        }
    }
}

/// The new state depends only on the command; stop forces zero duty and
/// both direction pins low.
pub fn apply_motor_command(cmd: MotorCommand) -> MotorState {
    let (in3, in4) = match cmd.direction {
        Direction::Forward => (true, false),
        Direction::Reverse => (false, true),
        Direction::Stop => (false, false),
    };
    let duty_cycle = match cmd.direction {
        Direction::Stop => 0.0,
        _ => cmd.speed as f64 / 255.0,
    };
    MotorState {
        speed_pwm: cmd.speed,
        direction: cmd.direction,
        duty_cycle,
        in3,
        in4,
    }
}

/// One of the three sampling nodes.
#[derive(Debug, Clone)]
pub struct SensorNode {
    pub id: NodeId,
    pub radio: RadioHandle,
    pub address: Address,
    pub channel: u8,
    pub gateway: Address,
    /// Offset from the grid instant to the start of transmission.
    pub tx_offset: SimTime,
    seq: u8,
    rng: ChaCha8Rng,
}

/// A frame a node handed to the medium.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub tx: TxId,
    pub seq: u8,
    pub reading: Reading,
    pub sampled_at: SimTime,
}

impl SensorNode {
    pub fn new(
        id: NodeId,
        radio: RadioHandle,
        address: Address,
        channel: u8,
        gateway: Address,
        tx_offset: SimTime,
        seed: u64,
    ) -> Result<Self, NodeError> {
        if id.kind() == NodeKind::Motor {
            return Err(NodeError::NotASensor(id));
        }
        Ok(SensorNode {
            id,
            radio,
            address,
            channel,
            gateway,
            tx_offset,
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ (id.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        })
    }

    pub fn seq(&self) -> u8 {
        self.seq
    }

    pub fn sample(&mut self, profile: &ScenarioProfile, t: SimTime) -> Result<Reading, NodeError> {
        Ok(match self.id.kind() {
            NodeKind::Flame => Reading::Flame {
                adc: sample_flame(profile, t)?.adc,
            },
            NodeKind::Soil => Reading::Soil {
                adc: sample_soil(profile, t)?.adc,
            },
            NodeKind::Dht => {
                let r = sample_dht11(profile, t, &mut self.rng)?;
                Reading::Dht {
                    temp_c: r.temp_c,
                    humidity_pct: r.humidity_pct,
                }
            }
            NodeKind::Motor => return Err(NodeError::NotASensor(self.id)),
        })
    }

    /// Samples and transmits if `t` is on the sampling grid.
    pub fn tick(
        &mut self,
        medium: &mut Medium,
        profile: &ScenarioProfile,
        t: SimTime,
    ) -> Result<Option<Transmission>, NodeError> {
        if !profile.is_sample_instant(t) {
            return Ok(None);
        }
        let reading = self.sample(profile, t)?;
        let frame = LinkFrame {
            channel: self.channel,
            address: self.gateway,
            ack_requested: true,
            role: RadioRole::Transmitter,
            seq: self.seq,
            payload: encode_payload(&reading.to_payload())?.to_vec(),
        };
        let tx = medium.submit(self.radio, &frame, t + self.tx_offset)?;
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        Ok(Some(Transmission {
            tx,
            seq,
            reading,
            sampled_at: t,
        }))
    }
}

/// Node 4: receives motor commands, drives the motor, reports back.
#[derive(Debug, Clone)]
pub struct MotorNode {
    pub radio: RadioHandle,
    pub address: Address,
    pub channel: u8,
    pub gateway: Address,
    state: MotorState,
    seq: u8,
}

impl MotorNode {
    pub fn new(radio: RadioHandle, address: Address, channel: u8, gateway: Address) -> Self {
        MotorNode {
            radio,
            address,
            channel,
            gateway,
            state: MotorState::default(),
            seq: 0,
        }
    }

    pub fn state(&self) -> MotorState {
        self.state
    }

    /// Applies a command and builds the status frame to send back.
    pub fn apply(&mut self, cmd: MotorCommand) -> LinkFrame {
        self.state = apply_motor_command(cmd);
        let payload = encode_payload(&SensorPayload::MotorStatus(self.state.as_command()))
            .expect("motor status always encodes");
        let frame = LinkFrame {
            channel: self.channel,
            address: self.gateway,
            ack_requested: true,
            role: RadioRole::Transmitter,
            seq: self.seq,
            payload: payload.to_vec(),
        };
        self.seq = self.seq.wrapping_add(1);
        frame
    }

    /// Handles a received frame. Frames that are not motor commands are ignored.
    pub fn receive(&mut self, bytes: &[u8]) -> Result<Option<LinkFrame>, NodeError> {
        let frame = decode_frame(bytes)?;
        match decode_payload(&frame.payload)? {
            SensorPayload::MotorCommand(cmd) => Ok(Some(self.apply(cmd))),
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{LossModel, RadioConfig};
    use crate::profile::{Curve, FlameWindow};

    const MIN: SimTime = 60_000_000;

    fn profile() -> ScenarioProfile {
        ScenarioProfile {
            flame_windows: vec![FlameWindow {
                start: 120 * MIN,
                end: 150 * MIN,
                peak: 1023,
            }],
            soil_curve: Curve::new(vec![(0, 300.0), (180 * MIN, 100.0), (270 * MIN, 250.0)]).unwrap(),
            temp_curve: Curve::new(vec![(0, 30.0), (270 * MIN, 40.0)]).unwrap(),
            humidity_curve: Curve::new(vec![(0, 70.0), (270 * MIN, 60.0)]).unwrap(),
            first_sample: 30 * MIN,
            sample_interval: 30 * MIN,
            run_window: (0, 270 * MIN),
            soil_threshold: Some(150),
        }
    }

    #[test]
    fn flame_zero_outside_window() {
        let p = profile();
        assert_eq!(sample_flame(&p, 60 * MIN).unwrap().adc, 0);
        assert_eq!(sample_flame(&p, 135 * MIN).unwrap().adc, 1023);
        assert_eq!(sample_flame(&p, 150 * MIN).unwrap().adc, 0);
        let mut none = p.clone();
        none.flame_windows.clear();
        for t in (0..=270).map(|m| m * MIN) {
            assert_eq!(sample_flame(&none, t).unwrap().adc, 0);
        }
        assert_eq!(sample_flame(&p, 271 * MIN), Err(NodeError::OutOfWindow(271 * MIN)));
    }

    #[test]
    fn soil_knots_and_threshold() {
        let p = profile();
        assert_eq!(sample_soil(&p, 0).unwrap().adc, 300);
        assert_eq!(sample_soil(&p, 180 * MIN).unwrap().adc, 100);
        assert_eq!(sample_soil(&p, 90 * MIN).unwrap().adc, 200);
        assert_eq!(sample_soil(&p, 180 * MIN).unwrap().dry, Some(true));
        assert_eq!(sample_soil(&p, 0).unwrap().dry, Some(false));
        let mut flat = p.clone();
        flat.soil_curve = Curve::new(vec![(0, 500.0), (270 * MIN, 500.0)]).unwrap();
        assert_eq!(sample_soil(&flat, 77 * MIN).unwrap().adc, 500);
    }

    #[test]
    fn soil_clamps_to_adc_range() {
        let mut p = profile();
        p.soil_curve = Curve::new(vec![(0, -50.0), (270 * MIN, 2000.0)]).unwrap();
        assert_eq!(sample_soil(&p, 0).unwrap().adc, 0);
        assert_eq!(sample_soil(&p, 270 * MIN).unwrap().adc, 1023);
    }

    #[test]
    fn dht_clamp() {
        let mut p = profile();
        p.temp_curve = Curve::constant(50.9);
        let r = dht11_with_error(&p, 0, 1, 0).unwrap();
        assert_eq!(r.temp_c, 50);
        p.humidity_curve = Curve::constant(10.0);
        assert_eq!(dht11_with_error(&p, 0, 0, -1).unwrap().humidity_pct, 20);
    }

    #[test]
    fn dht_deterministic_for_seed() {
        let p = profile();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            sample_dht11(&p, 45 * MIN, &mut a).unwrap(),
            sample_dht11(&p, 45 * MIN, &mut b).unwrap()
        );
    }

    #[test]
    fn motor_commands() {
        let s = apply_motor_command(MotorCommand {
            speed: 128,
            direction: Direction::Forward,
        });
        assert!((s.duty_cycle - 128.0 / 255.0).abs() < 1e-12);
        assert!((s.duty_cycle - 0.502).abs() < 1e-3);
        assert_eq!((s.in3, s.in4), (true, false));

        let s = apply_motor_command(MotorCommand {
            speed: 200,
            direction: Direction::Stop,
        });
        assert_eq!(s.duty_cycle, 0.0);
        assert_eq!((s.in3, s.in4), (false, false));

        let s = apply_motor_command(MotorCommand {
            speed: 255,
            direction: Direction::Reverse,
        });
        assert_eq!(s.duty_cycle, 1.0);
        assert_eq!((s.in3, s.in4), (false, true));
    }

    #[test]
    fn motor_pins_follow_direction_for_every_command() {
        let dirs = [Direction::Stop, Direction::Forward, Direction::Reverse];
        let mut node = MotorNode::new(RadioHandle(0), Address([1; 5]), 76, Address([2; 5]));
        for dir in dirs {
            for speed in 0..=255u8 {
                node.apply(MotorCommand { speed, direction: dir });
                let s = node.state();
                let expected = match dir {
                    Direction::Forward => (true, false),
                    Direction::Reverse => (false, true),
                    Direction::Stop => (false, false),
                };
                assert_eq!((s.in3, s.in4), expected);
                assert!((0.0..=1.0).contains(&s.duty_cycle));
                if dir == Direction::Stop {
                    assert_eq!(s.duty_cycle, 0.0);
                }
            }
        }
    }

    #[test]
    fn node_id_text() {
        assert_eq!("node3".parse::<NodeId>().unwrap(), NodeId::DHT);
        assert!("node9".parse::<NodeId>().is_err());
        assert!("3".parse::<NodeId>().is_err());
        assert_eq!(NodeId::MOTOR.to_string(), "node4");
    }

    fn rig() -> (Medium, SensorNode, RadioHandle) {
        let mut m = Medium::new(LossModel::lossless(3)).unwrap();
        let gw_addr = Address([0xE7; 5]);
        let gw = m
            .register_radio(RadioConfig::new(gw_addr, 76, RadioRole::Receiver))
            .unwrap();
        let addr = Address([0xC2, 0xC2, 0xC2, 0xC2, 0x02]);
        let radio = m
            .register_radio(RadioConfig::new(addr, 76, RadioRole::Transmitter))
            .unwrap();
        let node = SensorNode::new(NodeId::SOIL, radio, addr, 76, gw_addr, 0, 1).unwrap();
        (m, node, gw)
    }

    #[test]
    fn tick_off_grid_is_silent() {
        let (mut m, mut node, _) = rig();
        assert_eq!(node.tick(&mut m, &profile(), 31 * MIN).unwrap(), None);
        assert!(!m.has_pending());
    }

    #[test]
    fn tick_on_grid_reaches_gateway() {
        let (mut m, mut node, gw) = rig();
        let p = profile();
        let sent = node.tick(&mut m, &p, 30 * MIN).unwrap().unwrap();
        let out = m.step(31 * MIN).unwrap();
        assert_eq!(out.deliveries.len(), 1);
        assert_eq!(out.deliveries[0].receiver, gw);
        assert!(out.completions[0].report.delivered);
        let frame = decode_frame(&out.deliveries[0].bytes).unwrap();
        let reading = Reading::from_payload(&decode_payload(&frame.payload).unwrap()).unwrap();
        assert_eq!(reading, sent.reading);
    }

    #[test]
    fn seq_wraps_after_256_transmissions() {
        let (mut m, mut node, _) = rig();
        let mut p = profile();
        p.sample_interval = 1_000;
        p.first_sample = 0;
        let initial = node.seq();
        for k in 0..256u64 {
            let t = k * 1_000;
            node.tick(&mut m, &p, t).unwrap().unwrap();
            m.step(t + 999).unwrap();
        }
        assert_eq!(node.seq(), initial);
        assert_eq!((initial as u32 + 256) % 256, initial as u32);
    }

    #[test]
    fn motor_node_answers_commands_only() {
        let mut node = MotorNode::new(RadioHandle(0), Address([1; 5]), 76, Address([2; 5]));
        let cmd = LinkFrame {
            channel: 76,
            address: Address([1; 5]),
            ack_requested: true,
            role: RadioRole::Transmitter,
            seq: 0,
            payload: vec![0x10, 90, 2],
        };
        let bytes = crate::frame::encode_frame(&cmd).unwrap();
        let status = node.receive(&bytes).unwrap().unwrap();
        assert_eq!(status.payload, vec![0x11, 90, 2]);
        assert_eq!((node.state().in3, node.state().in4), (false, true));

        let other = LinkFrame {
            payload: vec![0x02, 0, 5],
            ..cmd
        };
        let bytes = crate::frame::encode_frame(&other).unwrap();
        assert_eq!(node.receive(&bytes).unwrap(), None);
    }
}
