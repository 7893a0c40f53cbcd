use std::fmt;
use std::str::FromStr;

use crate::error::ParseLineError;

/// Size of a cache line in bytes.
pub const LINE_SIZE: usize = 64;

/// Number of hex characters in the text form of a line.
pub const LINE_HEX_LEN: usize = LINE_SIZE * 2;

/// The 64-byte payload of one cache line.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LineValue([u8; LINE_SIZE]);

impl LineValue {
    pub const ZERO: LineValue = LineValue([0; LINE_SIZE]);

    pub const fn new(bytes: [u8; LINE_SIZE]) -> Self {
        LineValue(bytes)
    }

    /// A line with every byte set to `b`.
    pub const fn splat(b: u8) -> Self {
        LineValue([b; LINE_SIZE])
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; LINE_SIZE] = bytes.try_into().ok()?;
        Some(LineValue(arr))
    }

    pub fn as_bytes(&self) -> &[u8; LINE_SIZE] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        is_zero_line(self)
    }

    /// The line split into four 128-bit words, in transfer order.
    pub fn words128(&self) -> [u128; 4] {
        let mut out = [0u128; 4];
        for (i, chunk) in self.0.chunks_exact(16).enumerate() {
            out[i] = u128::from_le_bytes(chunk.try_into().unwrap());
        }
        out
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(LINE_HEX_LEN);
        for b in self.0.iter() {
            s.push(HEX[(b >> 4) as usize] as char);
            s.push(HEX[(b & 0xf) as usize] as char);
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<Self, ParseLineError> {
        let s = s.as_bytes();
        if s.len() != LINE_HEX_LEN {
            return Err(ParseLineError::Length(s.len()));
        }
        let mut out = [0u8; LINE_SIZE];
        for (i, pair) in s.chunks_exact(2).enumerate() {
            let hi = hex_digit(pair[0]).ok_or(ParseLineError::Digit(pair[0] as char))?;
            let lo = hex_digit(pair[1]).ok_or(ParseLineError::Digit(pair[1] as char))?;
            out[i] = (hi << 4) | lo;
        }
        Ok(LineValue(out))
    }
}

const HEX: &[u8; 16] = b"0123456789abcdef";

fn hex_digit(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

impl Default for LineValue {
    fn default() -> Self {
        LineValue::ZERO
    }
}

impl From<[u8; LINE_SIZE]> for LineValue {
    fn from(bytes: [u8; LINE_SIZE]) -> Self {
        LineValue(bytes)
    }
}

impl FromStr for LineValue {
    type Err = ParseLineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LineValue::from_hex(s)
    }
}

impl fmt::Display for LineValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for LineValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("LineValue(0)");
        }
        write!(f, "LineValue({}…)", &self.to_hex()[..16])
    }
}

impl serde::Serialize for LineValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> serde::Deserialize<'de> for LineValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LineValue::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// True iff all 64 bytes are zero.
pub fn is_zero_line(value: &LineValue) -> bool {
    value.0.iter().all(|&b| b == 0)
}
