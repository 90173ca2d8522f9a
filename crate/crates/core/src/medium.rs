//! Discrete-event model of the shared 2.4 GHz medium.
//!
//! Transmissions are submitted at a simulated instant and resolved by
//! [`Medium::step`]. Each attempt occupies `[start, start + airtime)` on its
//! channel. Any overlap between attempts from different senders on one
//! channel destroys both (no capture effect). A frame that requests an ack
//! is retried after a fixed 250 µs delay until it gets through or
//! `max_retries` is spent. Loss is a seeded Bernoulli draw per attempt, made
//! only for attempts that survived collision and found a receiver, so the
//! draw sequence is a pure function of the call sequence.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{encode_frame, Address, FrameError, LinkFrame, RadioRole, FRAME_OVERHEAD, MAX_CHANNEL, MAX_PAYLOAD};

/// Simulated time in whole microseconds since scenario start.
pub type SimTime = u64;

pub const RETRY_DELAY_US: SimTime = 250;
pub const MAX_RETRIES_LIMIT: u8 = 15;
pub const DEFAULT_TX_CURRENT_MA: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum DataRate {
    #[serde(rename = "250kbps")]
    Kbps250,
    #[default]
    #[serde(rename = "1mbps")]
    Mbps1,
    #[serde(rename = "2mbps")]
    Mbps2,
}

impl DataRate {
    pub const ALL: [DataRate; 3] = [DataRate::Kbps250, DataRate::Mbps1, DataRate::Mbps2];

    pub fn bits_per_second(self) -> u64 {
        match self {
            DataRate::Kbps250 => 250_000,
            DataRate::Mbps1 => 1_000_000,
            DataRate::Mbps2 => 2_000_000,
        }
    }
}

/// Time a frame with `payload_len` octets occupies the channel, rounded up to
/// whole microseconds.
pub fn airtime_us(payload_len: usize, rate: DataRate) -> Result<SimTime, MediumError> {
    if payload_len > MAX_PAYLOAD {
        return Err(MediumError::Frame(FrameError::PayloadTooLong(payload_len)));
    }
    let bits = (FRAME_OVERHEAD + payload_len) as u64 * 8;
    Ok((bits * 1_000_000).div_ceil(rate.bits_per_second()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub channel: u8,
    pub data_rate: DataRate,
    pub role: RadioRole,
    pub address: Address,
    pub max_retries: u8,
    pub tx_current_ma: u32,
}

impl RadioConfig {
    pub fn new(address: Address, channel: u8, role: RadioRole) -> Self {
        RadioConfig {
            channel,
            data_rate: DataRate::default(),
            role,
            address,
            max_retries: MAX_RETRIES_LIMIT,
            tx_current_ma: DEFAULT_TX_CURRENT_MA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub loss_probability: f64,
    pub seed: u64,
}

impl LossModel {
    pub fn lossless(seed: u64) -> Self {
        LossModel {
            loss_probability: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    MaxRetriesExceeded,
    NoReceiverOnChannel,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub delivered: bool,
    pub attempts: u32,
    pub airtime_us_total: u64,
    pub energy_maus: u64,
    pub failure_reason: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediumError {
    #[error("address {0} already registered")]
    DuplicateAddress(Address),
    #[error("channel {0} out of range 0..=125")]
    InvalidChannel(u8),
    #[error("max_retries {0} exceeds 15")]
    InvalidRetries(u8),
    #[error("loss probability {0} outside [0, 1]")]
    InvalidLossProbability(f64),
    #[error("radio handle {0:?} is not registered")]
    NotRegistered(RadioHandle),
    #[error("time went backwards: {requested} µs < {current} µs")]
    TimeRegression { requested: SimTime, current: SimTime },
    #[error("sender is not in transmitter role")]
    NotTransmitter,
    #[error("frame channel {frame} differs from radio channel {radio}")]
    ChannelMismatch { frame: u8, radio: u8 },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RadioHandle(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxId(pub u64);

/// A frame handed to a receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub receiver: RadioHandle,
    pub from: Address,
    pub tx: TxId,
    pub at: SimTime,
    pub bytes: Vec<u8>,
}

/// Final outcome of a submitted transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub tx: TxId,
    pub sender: RadioHandle,
    pub at: SimTime,
    pub report: DeliveryReport,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub deliveries: Vec<Delivery>,
    pub completions: Vec<Completion>,
}

impl StepOutput {
    pub fn is_empty(&self) -> bool {
        self.deliveries.is_empty() && self.completions.is_empty()
    }

    fn absorb(&mut self, other: StepOutput) {
        self.deliveries.extend(other.deliveries);
        self.completions.extend(other.completions);
    }
}

/// Aggregate counters over every completed transmission.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediumStats {
    pub submitted: u64,
    pub delivered: u64,
    pub failed: u64,
    pub attempts: u64,
    pub failures_by_reason: BTreeMap<FailureReason, u64>,
    pub airtime_us_total: u64,
    pub energy_maus_total: u64,
}

#[derive(Debug, Clone)]
struct Attempt {
    tx: TxId,
    sender: RadioHandle,
    sender_address: Address,
    channel: u8,
    dest: Address,
    bytes: Vec<u8>,
    ack_requested: bool,
    max_retries: u8,
    tx_current_ma: u32,
    airtime: SimTime,
    number: u32,
    start: SimTime,
    end: SimTime,
}

#[derive(Debug, Clone, Copy)]
struct Window {
    tx: TxId,
    channel: u8,
    start: SimTime,
    end: SimTime,
}

impl Window {
    fn overlaps(&self, other: &Window) -> bool {
        self.channel == other.channel
            && self.tx != other.tx
            && self.start < other.end
            && other.start < self.end
    }
}

#[derive(Debug, Clone)]
pub struct Medium {
    radios: BTreeMap<RadioHandle, RadioConfig>,
    next_handle: u32,
    next_tx: u64,
    loss: LossModel,
    rng: ChaCha8Rng,
    now: SimTime,
    in_flight: Vec<Attempt>,
    windows: Vec<Window>,
    carried: StepOutput,
    stats: MediumStats,
}

impl Medium {
    pub fn new(loss: LossModel) -> Result<Self, MediumError> {
        if !(0.0..=1.0).contains(&loss.loss_probability) {
            return Err(MediumError::InvalidLossProbability(loss.loss_probability));
        }
        Ok(Medium {
            radios: BTreeMap::new(),
            next_handle: 0,
            next_tx: 0,
            rng: ChaCha8Rng::seed_from_u64(loss.seed),
            loss,
            now: 0,
            in_flight: Vec::new(),
            windows: Vec::new(),
            carried: StepOutput::default(),
            stats: MediumStats::default(),
        })
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> &MediumStats {
        &self.stats
    }

    pub fn register_radio(&mut self, config: RadioConfig) -> Result<RadioHandle, MediumError> {
        if config.channel > MAX_CHANNEL {
            return Err(MediumError::InvalidChannel(config.channel));
        }
        if config.max_retries > MAX_RETRIES_LIMIT {
            return Err(MediumError::InvalidRetries(config.max_retries));
        }
        if self.radios.values().any(|r| r.address == config.address) {
            return Err(MediumError::DuplicateAddress(config.address));
        }
        let handle = RadioHandle(self.next_handle);
        self.next_handle += 1;
        self.radios.insert(handle, config);
        Ok(handle)
    }

    pub fn unregister_radio(&mut self, handle: RadioHandle) -> Result<RadioConfig, MediumError> {
        self.radios
            .remove(&handle)
            .ok_or(MediumError::NotRegistered(handle))
    }

    pub fn config(&self, handle: RadioHandle) -> Result<&RadioConfig, MediumError> {
        self.radios
            .get(&handle)
            .ok_or(MediumError::NotRegistered(handle))
    }

    /// Half-duplex turnaround: flips a radio between transmit and receive.
    pub fn set_role(&mut self, handle: RadioHandle, role: RadioRole) -> Result<(), MediumError> {
        self.radios
            .get_mut(&handle)
            .ok_or(MediumError::NotRegistered(handle))?
            .role = role;
        Ok(())
    }

    /// Earliest instant at which an in-flight attempt resolves.
    pub fn next_event_time(&self) -> Option<SimTime> {
        self.in_flight.iter().map(|a| a.end).min()
    }

    pub fn has_pending(&self) -> bool {
        !self.in_flight.is_empty()
    }

    /// Queues a frame whose first attempt starts at `now`.
    pub fn submit(
        &mut self,
        sender: RadioHandle,
        frame: &LinkFrame,
        now: SimTime,
    ) -> Result<TxId, MediumError> {
        if now < self.now {
            return Err(MediumError::TimeRegression {
                requested: now,
                current: self.now,
            });
        }
        let config = self.config(sender)?.clone();
        if config.role != RadioRole::Transmitter || frame.role != RadioRole::Transmitter {
            return Err(MediumError::NotTransmitter);
        }
        if frame.channel != config.channel {
            return Err(MediumError::ChannelMismatch {
                frame: frame.channel,
                radio: config.channel,
            });
        }
        let bytes = encode_frame(frame)?;
        let airtime = airtime_us(frame.payload.len(), config.data_rate)?;
        let tx = TxId(self.next_tx);
        self.next_tx += 1;
        let attempt = Attempt {
            tx,
            sender,
            sender_address: config.address,
            channel: config.channel,
            dest: frame.address,
            bytes,
            ack_requested: frame.ack_requested,
            max_retries: config.max_retries,
            tx_current_ma: config.tx_current_ma,
            airtime,
            number: 1,
            start: now,
            end: now + airtime,
        };
        self.stats.submitted += 1;
        self.push_attempt(attempt);
        Ok(tx)
    }

    /// Submits a frame and runs the medium until that transmission resolves.
    ///
    /// Advances the medium clock to the completion instant. Deliveries and
    /// completions produced along the way are held for the next
    /// [`step`](Self::step).
    pub fn transmit(
        &mut self,
        sender: RadioHandle,
        frame: &LinkFrame,
        now: SimTime,
    ) -> Result<DeliveryReport, MediumError> {
        let tx = self.submit(sender, frame, now)?;
        loop {
            let next = self
                .next_event_time()
                .expect("submitted transmission must be in flight");
            let out = self.step(next)?;
            let done = out
                .completions
                .iter()
                .find(|c| c.tx == tx)
                .map(|c| c.report.clone());
            self.carried.absorb(out);
            if let Some(report) = done {
                return Ok(report);
            }
        }
    }

    /// Resolves every attempt that ends at or before `now`, in
    /// (end time, sender address) order.
    pub fn step(&mut self, now: SimTime) -> Result<StepOutput, MediumError> {
        if now < self.now {
            return Err(MediumError::TimeRegression {
                requested: now,
                current: self.now,
            });
        }
        self.now = now;
        let mut out = std::mem::take(&mut self.carried);
        while let Some(idx) = self.next_due(now) {
            let attempt = self.in_flight.swap_remove(idx);
            self.resolve(attempt, &mut out);
        }
        self.prune_windows();
        Ok(out)
    }

    fn next_due(&self, now: SimTime) -> Option<usize> {
        self.in_flight
            .iter()
            .enumerate()
            .filter(|(_, a)| a.end <= now)
            .min_by_key(|(_, a)| (a.end, a.sender_address, a.tx))
            .map(|(i, _)| i)
    }

    fn push_attempt(&mut self, attempt: Attempt) {
        self.windows.push(Window {
            tx: attempt.tx,
            channel: attempt.channel,
            start: attempt.start,
            end: attempt.end,
        });
        self.in_flight.push(attempt);
    }

    fn resolve(&mut self, attempt: Attempt, out: &mut StepOutput) {
        let window = Window {
            tx: attempt.tx,
            channel: attempt.channel,
            start: attempt.start,
            end: attempt.end,
        };
        let collided = self.windows.iter().any(|w| w.overlaps(&window));
        let outcome = if collided {
            Err(FailureReason::Collision)
        } else {
            match self.receiver_for(&attempt) {
                None => Err(FailureReason::NoReceiverOnChannel),
                Some(receiver) => {
                    if self.rng.gen_bool(self.loss.loss_probability) {
                        Err(FailureReason::MaxRetriesExceeded)
                    } else {
                        Ok(receiver)
                    }
                }
            }
        };
        let airtime_so_far = attempt.airtime * attempt.number as u64;
        match outcome {
            Ok(receiver) => {
                out.deliveries.push(Delivery {
                    receiver,
                    from: attempt.sender_address,
                    tx: attempt.tx,
                    at: attempt.end,
                    bytes: attempt.bytes.clone(),
                });
                self.complete(&attempt, airtime_so_far, None, out);
            }
            Err(reason) => {
                if attempt.ack_requested && attempt.number <= attempt.max_retries as u32 {
                    let start = attempt.end + RETRY_DELAY_US;
                    let retry = Attempt {
                        number: attempt.number + 1,
                        start,
                        end: start + attempt.airtime,
                        ..attempt
                    };
                    self.push_attempt(retry);
                } else {
                    self.complete(&attempt, airtime_so_far, Some(reason), out);
                }
            }
        }
    }

    fn receiver_for(&self, attempt: &Attempt) -> Option<RadioHandle> {
        self.radios
            .iter()
            .find(|(handle, cfg)| {
                **handle != attempt.sender
                    && cfg.address == attempt.dest
                    && cfg.channel == attempt.channel
                    && cfg.role == RadioRole::Receiver
            })
            .map(|(handle, _)| *handle)
    }

    fn complete(
        &mut self,
        attempt: &Attempt,
        airtime_total: u64,
        failure: Option<FailureReason>,
        out: &mut StepOutput,
    ) {
        let energy = attempt.tx_current_ma as u64 * airtime_total;
        let report = DeliveryReport {
            delivered: failure.is_none(),
            attempts: attempt.number,
            airtime_us_total: airtime_total,
            energy_maus: energy,
            failure_reason: failure,
        };
        self.stats.attempts += attempt.number as u64;
        self.stats.airtime_us_total += airtime_total;
        self.stats.energy_maus_total += energy;
        match failure {
            None => self.stats.delivered += 1,
            Some(reason) => {
                self.stats.failed += 1;
                *self.stats.failures_by_reason.entry(reason).or_default() += 1;
            }
        }
        out.completions.push(Completion {
            tx: attempt.tx,
            sender: attempt.sender,
            at: attempt.end,
            report,
        });
    }

    fn prune_windows(&mut self) {
        let horizon = self
            .in_flight
            .iter()
            .map(|a| a.start)
            .min()
            .unwrap_or(self.now)
            .min(self.now);
        self.windows.retain(|w| w.end > horizon);
    }
}
