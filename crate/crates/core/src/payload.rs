//! Application payloads carried inside link frames.
//!
//! Every payload is three octets: a tag followed by a two-octet body.
//!
//! | tag  | meaning        | body                                   |
//! |------|----------------|----------------------------------------|
//! | 0x01 | flame reading  | u16 ADC, big-endian                    |
//! | 0x02 | soil reading   | u16 ADC, big-endian                    |
//! | 0x03 | DHT11 reading  | i8 temperature °C, u8 humidity %       |
//! | 0x10 | motor command  | u8 speed, u8 direction (0/1/2)         |
//! | 0x11 | motor status   | u8 speed, u8 direction (0/1/2)         |

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Full-scale value of the nodes' 10-bit converters.
pub const ADC_MAX: u16 = 1023;

pub const TAG_FLAME: u8 = 0x01;
pub const TAG_SOIL: u8 = 0x02;
pub const TAG_DHT: u8 = 0x03;
pub const TAG_MOTOR_COMMAND: u8 = 0x10;
pub const TAG_MOTOR_STATUS: u8 = 0x11;

const BODY_LEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("unknown payload tag {0:#04x}")]
    UnknownTag(u8),
    #[error("payload body for tag {tag:#04x} is {len} octets, expected 2")]
    BodyLengthMismatch { tag: u8, len: usize },
    #[error("invalid direction code {0}")]
    InvalidDirection(u8),
    #[error("ADC value {0} exceeds 1023")]
    AdcOutOfRange(u16),
    #[error("empty payload")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Stop,
    Forward,
    Reverse,
}

impl Direction {
    pub fn code(self) -> u8 {
        match self {
            Direction::Stop => 0,
            Direction::Forward => 1,
            Direction::Reverse => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, PayloadError> {
        match code {
            0 => Ok(Direction::Stop),
            1 => Ok(Direction::Forward),
            2 => Ok(Direction::Reverse),
            other => Err(PayloadError::InvalidDirection(other)),
        }
    }

    /// Three-letter label used on the LCD.
    pub fn lcd_label(self) -> &'static str {
        match self {
            Direction::Stop => "STP",
            Direction::Forward => "FWD",
            Direction::Reverse => "REV",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Stop => "stop",
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stop" => Ok(Direction::Stop),
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorCommand {
    pub speed: u8,
    pub direction: Direction,
}

impl MotorCommand {
    pub const STOP: MotorCommand = MotorCommand {
        speed: 0,
        direction: Direction::Stop,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorPayload {
    Flame { adc: u16 },
    Soil { adc: u16 },
    Dht { temp_c: i8, humidity_pct: u8 },
    MotorCommand(MotorCommand),
    MotorStatus(MotorCommand),
}

impl SensorPayload {
    pub fn tag(&self) -> u8 {
        match self {
            SensorPayload::Flame { .. } => TAG_FLAME,
            SensorPayload::Soil { .. } => TAG_SOIL,
            SensorPayload::Dht { .. } => TAG_DHT,
            SensorPayload::MotorCommand(_) => TAG_MOTOR_COMMAND,
            SensorPayload::MotorStatus(_) => TAG_MOTOR_STATUS,
        }
    }
}

pub fn encode_payload(payload: &SensorPayload) -> Result<[u8; 3], PayloadError> {
    let body = match *payload {
        SensorPayload::Flame { adc } | SensorPayload::Soil { adc } => {
            if adc > ADC_MAX {
                return Err(PayloadError::AdcOutOfRange(adc));
            }
            adc.to_be_bytes()
        }
        SensorPayload::Dht {
            temp_c,
            humidity_pct,
        } => [temp_c as u8, humidity_pct],
        SensorPayload::MotorCommand(cmd) | SensorPayload::MotorStatus(cmd) => {
            [cmd.speed, cmd.direction.code()]
        }
    };
    Ok([payload.tag(), body[0], body[1]])
}

pub fn decode_payload(bytes: &[u8]) -> Result<SensorPayload, PayloadError> {
    let (&tag, body) = bytes.split_first().ok_or(PayloadError::Empty)?;
    if !matches!(
        tag,
        TAG_FLAME | TAG_SOIL | TAG_DHT | TAG_MOTOR_COMMAND | TAG_MOTOR_STATUS
    ) {
        return Err(PayloadError::UnknownTag(tag));
    }
    if body.len() != BODY_LEN {
        return Err(PayloadError::BodyLengthMismatch {
            tag,
            len: body.len(),
        });
    }
    let adc = || {
        let v = u16::from_be_bytes([body[0], body[1]]);
        if v > ADC_MAX {
            Err(PayloadError::AdcOutOfRange(v))
        } else {
            Ok(v)
        }
    };
    let command = || -> Result<MotorCommand, PayloadError> {
        Ok(MotorCommand {
            speed: body[0],
            direction: Direction::from_code(body[1])?,
        })
    };
    Ok(match tag {
        TAG_FLAME => SensorPayload::Flame { adc: adc()? },
        TAG_SOIL => SensorPayload::Soil { adc: adc()? },
        TAG_DHT => SensorPayload::Dht {
            temp_c: body[0] as i8,
            humidity_pct: body[1],
        },
        TAG_MOTOR_COMMAND => SensorPayload::MotorCommand(command()?),
        _ => SensorPayload::MotorStatus(command()?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_encodings() {
        let dht = SensorPayload::Dht {
            temp_c: 33,
            humidity_pct: 70,
        };
        assert_eq!(encode_payload(&dht).unwrap(), [0x03, 0x21, 0x46]);
        let soil = SensorPayload::Soil { adc: 293 };
        assert_eq!(encode_payload(&soil).unwrap(), [0x02, 0x01, 0x25]);
    }

    #[test]
    fn zero_motor_command() {
        let cmd = SensorPayload::MotorCommand(MotorCommand::STOP);
        assert_eq!(encode_payload(&cmd).unwrap(), [0x10, 0x00, 0x00]);
    }

    #[test]
    fn negative_temperature_survives() {
        let p = SensorPayload::Dht {
            temp_c: -40,
            humidity_pct: 5,
        };
        let bytes = encode_payload(&p).unwrap();
        assert_eq!(decode_payload(&bytes).unwrap(), p);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode_payload(&[0x7F, 0, 0]), Err(PayloadError::UnknownTag(0x7F)));
        assert_eq!(
            decode_payload(&[0x01, 0]),
            Err(PayloadError::BodyLengthMismatch { tag: 1, len: 1 })
        );
        assert_eq!(
            decode_payload(&[0x10, 10, 3]),
            Err(PayloadError::InvalidDirection(3))
        );
        assert_eq!(decode_payload(&[0x02, 0x04, 0x00]), Err(PayloadError::AdcOutOfRange(1024)));
        assert_eq!(decode_payload(&[]), Err(PayloadError::Empty));
    }

    #[test]
    fn adc_over_range_refused_on_encode() {
        assert_eq!(
            encode_payload(&SensorPayload::Flame { adc: 1024 }),
            Err(PayloadError::AdcOutOfRange(1024))
        );
    }
}
