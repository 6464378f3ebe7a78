use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use log::warn;

use super::frame::{CanFrame, MAX_PAYLOAD};
use crate::error::{Error, Result};

/// Parse candump log text, one `(<seconds>) <iface> <HEXID>#<HEXDATA>` per
/// line. Blank lines are ignored. Timestamps are returned as written.
pub fn parse_candump(text: &str) -> Result<Vec<CanFrame>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l.trim(), i + 1))
        .collect()
}

pub fn read_candump<R: BufRead>(reader: R) -> Result<Vec<CanFrame>> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if !line.is_empty() {
            frames.push(parse_line(line, i + 1)?);
        }
    }
    Ok(frames)
}

fn parse_line(line: &str, lineno: usize) -> Result<CanFrame> {
    let err = |msg: String| Error::Parse { line: lineno, msg };

    let rest = line
        .strip_prefix('(')
        .ok_or_else(|| err("expected '(' before timestamp".into()))?;
    let (ts, rest) = rest
        .split_once(')')
        .ok_or_else(|| err("unterminated timestamp".into()))?;
    let timestamp: f64 = ts
        .trim()
        .parse()
        .map_err(|_| err(format!("bad timestamp {ts:?}")))?;
    if !(timestamp.is_finite() && timestamp >= 0.0) {
        return Err(err(format!("timestamp {ts:?} out of range")));
    }

    let mut fields = rest.split_whitespace();
    let _iface = fields
        .next()
        .ok_or_else(|| err("missing interface".into()))?;
    let body = fields.next().ok_or_else(|| err("missing frame".into()))?;
    if fields.next().is_some() {
        return Err(err("trailing fields".into()));
    }

    let (hex_id, hex_data) = body
        .split_once('#')
        .ok_or_else(|| err(format!("expected ID#DATA, got {body:?}")))?;
    if hex_data.starts_with('#') || hex_data.starts_with('R') {
        return Err(err("CAN-FD and remote frames are not supported".into()));
    }
    if hex_id.is_empty() || hex_id.len() > 8 {
        return Err(err(format!("bad identifier {hex_id:?}")));
    }
    let id = u32::from_str_radix(hex_id, 16).map_err(|_| err(format!("bad identifier {hex_id:?}")))?;

    if hex_data.len() % 2 != 0 {
        return Err(err(format!("odd number of hex digits in payload {hex_data:?}")));
    }
    if hex_data.len() / 2 > MAX_PAYLOAD {
        return Err(err(format!("DLC {} exceeds {MAX_PAYLOAD}", hex_data.len() / 2)));
    }
    let mut payload = [0u8; MAX_PAYLOAD];
    for (k, pair) in hex_data.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(pair).map_err(|_| err("non-ASCII payload".into()))?;
        payload[k] = u8::from_str_radix(s, 16).map_err(|_| err(format!("bad payload byte {s:?}")))?;
    }

    CanFrame::new(timestamp, id, &payload[..hex_data.len() / 2]).map_err(|e| err(e.to_string()))
}

/// Render frames as candump text on interface `can0`. Standard identifiers
/// use three hex digits, extended ones eight.
pub fn write_candump(frames: &[CanFrame]) -> String {
    let mut out = String::with_capacity(frames.len() * 32);
    for f in frames {
        let _ = write!(out, "({:.6}) can0 ", f.timestamp);
        if f.id > 0x7FF {
            let _ = write!(out, "{:08X}#", f.id);
        } else {
            let _ = write!(out, "{:03X}#", f.id);
        }
        for b in f.payload() {
            let _ = write!(out, "{b:02X}");
        }
        out.push('\n');
    }
    out
}

/// A loaded capture with timestamps shifted to start at zero.
#[derive(Debug, Clone)]
pub struct Capture {
    pub frames: Vec<CanFrame>,
    /// Absolute timestamp of the first frame before normalization.
    pub time_origin: f64,
    /// Number of frames that arrived out of timestamp order.
    pub reordered: usize,
}

impl Capture {
    /// Stable-sort by timestamp and shift so the first frame sits at t = 0.
    pub fn from_frames(mut frames: Vec<CanFrame>) -> Self {
        let reordered = frames
            .windows(2)
            .filter(|w| w[1].timestamp < w[0].timestamp)
            .count();
        if reordered > 0 {
            warn!("{reordered} frames out of timestamp order; stable-sorting");
            frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        }
        let time_origin = frames.first().map_or(0.0, |f| f.timestamp);
        if time_origin != 0.0 {
            for f in &mut frames {
                f.timestamp -= time_origin;
            }
        }
        Capture {
            frames,
            time_origin,
            reordered,
        }
    }
}

pub fn load_capture(path: impl AsRef<Path>) -> Result<Capture> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let frames = read_candump(std::io::BufReader::new(file))?;
    Ok(Capture::from_frames(frames))
}
