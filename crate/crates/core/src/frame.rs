//! Link-layer frame codec.
//!
//! On-air layout (all multi-octet fields big-endian):
//!
//! ```text
//! [channel:1][address:5][ctrl:1][seq:1][len:1][payload:len][crc:2]
//! ctrl: bit7 = ack_requested, bit1 = mosi, bit0 = miso, other bits zero
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE over every octet that precedes it, the
//! channel octet included. See `docs/PROTOCOL.md`.

use thiserror::Error;

/// Highest legal channel index. Channels are numbered 0..=125.
pub const MAX_CHANNEL: u8 = 125;
/// Payload capacity of a single frame.
pub const MAX_PAYLOAD: usize = 32;
/// Octets of framing around the payload: channel, address, ctrl, seq, len, crc.
pub const FRAME_OVERHEAD: usize = 11;
/// Length of a radio address.
pub const ADDRESS_LEN: usize = 5;

const CTRL_ACK: u8 = 0x80;
const CTRL_MOSI: u8 = 0x02;
const CTRL_MISO: u8 = 0x01;
const CTRL_RESERVED: u8 = !(CTRL_ACK | CTRL_MOSI | CTRL_MISO);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("channel {0} out of range 0..=125")]
    InvalidChannel(u8),
    #[error("payload of {0} octets exceeds the 32-octet limit")]
    PayloadTooLong(usize),
    #[error("frame truncated: {0} octets, need at least 11")]
    Truncated(usize),
    #[error("crc mismatch: frame carries {carried:#06x}, computed {computed:#06x}")]
    CrcMismatch { carried: u16, computed: u16 },
    #[error("length field says {declared} payload octets but frame holds {actual}")]
    LengthFieldMismatch { declared: usize, actual: usize },
    #[error("illegal role flags in ctrl octet {0:#04x}")]
    IllegalRoleFlags(u8),
}

/// A 5-octet radio address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    pub const fn new(octets: [u8; ADDRESS_LEN]) -> Self {
        Address(octets)
    }

    pub fn octets(&self) -> [u8; ADDRESS_LEN] {
        self.0
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d, e] = self.0;
        write!(f, "{a:02X}:{b:02X}:{c:02X}:{d:02X}:{e:02X}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed address {0:?}, expected five hex octets like E7:E7:E7:E7:E7")]
pub struct AddressParseError(pub String);

impl std::str::FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
        if hex.len() != ADDRESS_LEN * 2 || !hex.is_ascii() {
            return Err(AddressParseError(s.to_string()));
        }
        let mut out = [0u8; ADDRESS_LEN];
        for (i, octet) in out.iter_mut().enumerate() {
            *octet = u8::from_str_radix(&hex[i * 2..i * 2 + 2], 16)
                .map_err(|_| AddressParseError(s.to_string()))?;
        }
        Ok(Address(out))
    }
}

impl serde::Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// SPI line polarity selecting transmit or receive mode.
///
/// `(mosi, miso) = (1, 0)` is a transmitter, `(0, 1)` a receiver. The other
/// two combinations are illegal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioRole {
    Transmitter,
    Receiver,
}

impl RadioRole {
    pub fn flags(self) -> (bool, bool) {
        match self {
            RadioRole::Transmitter => (true, false),
            RadioRole::Receiver => (false, true),
        }
    }

    pub fn from_flags(mosi: bool, miso: bool) -> Option<Self> {
        match (mosi, miso) {
            (true, false) => Some(RadioRole::Transmitter),
            (false, true) => Some(RadioRole::Receiver),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkFrame {
    pub channel: u8,
    /// Destination address.
    pub address: Address,
    pub ack_requested: bool,
    pub role: RadioRole,
    pub seq: u8,
    pub payload: Vec<u8>,
}

impl LinkFrame {
    pub fn validate(&self) -> Result<(), FrameError> {
        if self.channel > MAX_CHANNEL {
            return Err(FrameError::InvalidChannel(self.channel));
        }
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLong(self.payload.len()));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }

    fn ctrl(&self) -> u8 {
        let (mosi, miso) = self.role.flags();
        let mut ctrl = 0;
        if self.ack_requested {
            ctrl |= CTRL_ACK;
        }
        if mosi {
            ctrl |= CTRL_MOSI;
        }
        if miso {
            ctrl |= CTRL_MISO;
        }
        ctrl
    }
}

/// Serializes a frame, computing its CRC.
pub fn encode_frame(frame: &LinkFrame) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.push(frame.channel);
    out.extend_from_slice(&frame.address.0);
    out.push(frame.ctrl());
    out.push(frame.seq);
    out.push(frame.payload.len() as u8);
    out.extend_from_slice(&frame.payload);
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Parses and validates an encoded frame. Total over arbitrary input.
pub fn decode_frame(bytes: &[u8]) -> Result<LinkFrame, FrameError> {
    if bytes.len() < FRAME_OVERHEAD {
        return Err(FrameError::Truncated(bytes.len()));
    }
    let declared = bytes[8] as usize;
    let actual = bytes.len() - FRAME_OVERHEAD;
    if declared != actual {
        return Err(FrameError::LengthFieldMismatch { declared, actual });
    }
    let (body, crc_octets) = bytes.split_at(bytes.len() - 2);
    let carried = u16::from_be_bytes([crc_octets[0], crc_octets[1]]);
    let computed = crc16(body);
    if carried != computed {
        return Err(FrameError::CrcMismatch { carried, computed });
    }
    if declared > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLong(declared));
    }
    let channel = bytes[0];
    if channel > MAX_CHANNEL {
        return Err(FrameError::InvalidChannel(channel));
    }
    let ctrl = bytes[6];
    if ctrl & CTRL_RESERVED != 0 {
        return Err(FrameError::IllegalRoleFlags(ctrl));
    }
    let role = RadioRole::from_flags(ctrl & CTRL_MOSI != 0, ctrl & CTRL_MISO != 0)
        .ok_or(FrameError::IllegalRoleFlags(ctrl))?;
    let mut address = [0u8; ADDRESS_LEN];
    address.copy_from_slice(&bytes[1..6]);
    Ok(LinkFrame {
        channel,
        address: Address(address),
        ack_requested: ctrl & CTRL_ACK != 0,
        role,
        seq: bytes[7],
        payload: bytes[9..9 + declared].to_vec(),
    })
}

const CRC_POLY: u16 = 0x1021;
const CRC_INIT: u16 = 0xFFFF;

const CRC_TABLE: [u16; 256] = build_crc_table();

const fn build_crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ CRC_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16(bytes: &[u8]) -> u16 {
    bytes.iter().fold(CRC_INIT, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}
