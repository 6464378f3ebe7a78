//! Signal database and payload bit-field decoding.
//!
//! Bit numbering within the 64-bit payload:
//! - `little_endian`: LSB-first. Bit `i` is bit `i % 8` (LSB = 0) of byte
//!   `i / 8`; the field's least significant bit is `start_bit`.
//! - `big_endian`: MSB-first. Bit `i` is bit `7 - i % 8` of byte `i / 8`;
//!   the field's most significant bit is `start_bit`.
//!
//! In both cases a field occupies bits `start_bit .. start_bit + bit_length`
//! of its numbering, so `start_bit + bit_length <= 64`.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::frame::CanFrame;
use crate::error::{Error, Result};

pub const SIGNAL_DB_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteOrder {
    BigEndian,
    LittleEndian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalDef {
    pub can_id: u32,
    pub name: String,
    pub start_bit: u32,
    pub bit_length: u32,
    pub byte_order: ByteOrder,
    pub signed: bool,
    pub scale: f64,
    pub offset: f64,
}

impl SignalDef {
    pub fn validate(&self) -> Result<()> {
        let what = "signal definition";
        if self.bit_length == 0 || self.bit_length > 64 {
            return Err(Error::invalid(
                what,
                format!("{}: bit_length {} not in 1..=64", self.name, self.bit_length),
            ));
        }
        if self.start_bit > 63 || self.start_bit + self.bit_length > 64 {
            return Err(Error::invalid(
                what,
                format!(
                    "{}: bits {}..{} exceed the 64-bit payload",
                    self.name,
                    self.start_bit,
                    self.start_bit + self.bit_length
                ),
            ));
        }
        if self.scale == 0.0 || !self.scale.is_finite() || !self.offset.is_finite() {
            return Err(Error::invalid(
                what,
                format!("{}: scale must be finite and non-zero", self.name),
            ));
        }
        if self.can_id > super::frame::MAX_EXTENDED_ID {
            return Err(Error::invalid(what, format!("{}: id out of range", self.name)));
        }
        Ok(())
    }

    /// Payload bytes needed to hold the field.
    pub fn bytes_needed(&self) -> usize {
        (self.start_bit + self.bit_length).div_ceil(8) as usize
    }

    fn mask(&self) -> u64 {
        if self.bit_length == 64 {
            u64::MAX
        } else {
            (1u64 << self.bit_length) - 1
        }
    }

    pub fn raw_to_physical(&self, raw: u64) -> f64 {
        let v = if self.signed && self.bit_length < 64 {
            let shift = 64 - self.bit_length;
            ((raw << shift) as i64 >> shift) as f64
        } else if self.signed {
            raw as i64 as f64
        } else {
            raw as f64
        };
        v * self.scale + self.offset
    }

    /// Nearest representable raw value, saturating at the field limits.
    pub fn physical_to_raw(&self, value: f64) -> u64 {
        let r = ((value - self.offset) / self.scale).round();
        let (lo, hi) = self.raw_limits();
        let r = r.clamp(lo, hi);
        if self.signed {
            (r as i64 as u64) & self.mask()
        } else {
            r as u64
        }
    }

    /// Inclusive range of the integer value before scaling.
    pub fn raw_limits(&self) -> (f64, f64) {
        let n = self.bit_length as i32;
        if self.signed {
            (-(2f64.powi(n - 1)), 2f64.powi(n - 1) - 1.0)
        } else {
            (0.0, 2f64.powi(n) - 1.0)
        }
    }

    /// Largest physical value the field can carry.
    pub fn physical_max(&self) -> f64 {
        let (lo, hi) = self.raw_limits();
        (lo * self.scale + self.offset).max(hi * self.scale + self.offset)
    }
}

/// Extract the raw (unscaled, not sign-extended) bit field, or `None` when
/// the payload is too short.
pub fn extract_raw(payload: &[u8], def: &SignalDef) -> Option<u64> {
    if payload.len() < def.bytes_needed() {
        return None;
    }
    let mut buf = [0u8; 8];
    buf[..payload.len()].copy_from_slice(payload);
    let raw = match def.byte_order {
        ByteOrder::LittleEndian => u64::from_le_bytes(buf) >> def.start_bit,
        ByteOrder::BigEndian => u64::from_be_bytes(buf) >> (64 - def.start_bit - def.bit_length),
    };
    Some(raw & def.mask())
}

/// Write `raw` into the field. The payload must be long enough.
pub fn insert_raw(payload: &mut [u8], def: &SignalDef, raw: u64) {
    assert!(
        payload.len() >= def.bytes_needed(),
        "payload too short for {}",
        def.name
    );
    let mut buf = [0u8; 8];
    buf[..payload.len()].copy_from_slice(payload);
    let raw = raw & def.mask();
    let word = match def.byte_order {
        ByteOrder::LittleEndian => {
            let w = u64::from_le_bytes(buf);
            let m = def.mask() << def.start_bit;
            (w & !m) | (raw << def.start_bit)
        }
        ByteOrder::BigEndian => {
            let w = u64::from_be_bytes(buf);
            let shift = 64 - def.start_bit - def.bit_length;
            let m = def.mask() << shift;
            (w & !m) | (raw << shift)
        }
    };
    let bytes = match def.byte_order {
        ByteOrder::LittleEndian => word.to_le_bytes(),
        ByteOrder::BigEndian => word.to_be_bytes(),
    };
    let n = payload.len();
    payload.copy_from_slice(&bytes[..n]);
}

/// The JSON signal database: `{"version": 1, "signals": [...]}`. Signal order
/// in the file is the canonical feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalDb {
    pub version: u32,
    pub signals: Vec<SignalDef>,
}

impl SignalDb {
    pub fn new(signals: Vec<SignalDef>) -> Result<Self> {
        let db = SignalDb {
            version: SIGNAL_DB_VERSION,
            signals,
        };
        db.validate()?;
        Ok(db)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SIGNAL_DB_VERSION {
            return Err(Error::Schema(format!(
                "unsupported signal DB version {}",
                self.version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.signals {
            s.validate()?;
            if !seen.insert((s.can_id, s.name.as_str())) {
                return Err(Error::invalid(
                    "signal database",
                    format!("duplicate signal {} on id {:#x}", s.name, s.can_id),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let db: SignalDb = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        db.validate()?;
        Ok(db)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("signal DB serializes")
    }

    pub fn for_id(&self, id: u32) -> impl Iterator<Item = &SignalDef> {
        self.signals.iter().filter(move |s| s.can_id == id)
    }
}

/// Decoded samples of one signal. `times` is strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub can_id: u32,
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SignalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// One series per definition, in definition order.
    pub series: Vec<SignalSeries>,
    /// Frames skipped per definition because the payload was too short or
    /// repeated an already-sampled timestamp.
    pub skipped: Vec<usize>,
}

/// Decode every definition over the frame stream.
pub fn decode_signals(frames: &[CanFrame], defs: &[SignalDef]) -> DecodeOutput {
    let mut by_id: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, d) in defs.iter().enumerate() {
        by_id.entry(d.can_id).or_default().push(i);
    }
    let mut series: Vec<SignalSeries> = defs
        .iter()
        .map(|d| SignalSeries {
            can_id: d.can_id,
            name: d.name.clone(),
            times: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    let mut skipped = vec![0usize; defs.len()];

    for f in frames {
        let Some(idxs) = by_id.get(&f.id) else {
            continue;
        };
        for &i in idxs {
            let s = &mut series[i];
            let raw = match extract_raw(f.payload(), &defs[i]) {
                Some(r) => r,
                None => {
                    skipped[i] += 1;
                    continue;
                }
            };
            if s.times.last().is_some_and(|&t| f.timestamp <= t) {
                skipped[i] += 1;
                continue;
            }
            s.times.push(f.timestamp);
            s.values.push(defs[i].raw_to_physical(raw));
        }
    }

    for (d, &n) in defs.iter().zip(&skipped) {
        if n > 0 {
            warn!("signal {} (id {:#x}): skipped {n} frames", d.name, d.can_id);
        }
    }
    DecodeOutput { series, skipped }
}
