//! Deterministic digital twin of a small 2.4 GHz sensor network: three
//! sensing nodes and a motor node talking to a gateway over a shared
//! radio medium, with a telemetry journal, alarm automation and a
//! ThingSpeak-style cloud uplink.

pub mod alarms;
pub mod clock;
pub mod frame;
pub mod gateway;
pub mod ingest;
pub mod medium;
pub mod nodes;
pub mod payload;
pub mod profile;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod telemetry;

pub use frame::{crc16, decode_frame, encode_frame, Address, FrameError, LinkFrame, RadioRole};
pub use medium::{airtime_us, DataRate, DeliveryReport, FailureReason, Medium, SimTime};
pub use payload::{decode_payload, encode_payload, Direction, MotorCommand, SensorPayload};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{CommandError, RunSummary, SimError, Simulation, Snapshot};
pub use telemetry::{TelemetryRecord, TelemetryStore};
