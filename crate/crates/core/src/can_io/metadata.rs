use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled attack region in capture-relative seconds, `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackInterval {
    pub name: String,
    pub start: f64,
    pub end: f64,
    pub target_ids: BTreeSet<u32>,
}

impl AttackInterval {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite()) || self.start >= self.end {
            return Err(Error::invalid(
                "attack interval",
                format!("{}: start {} must precede end {}", self.name, self.start, self.end),
            ));
        }
        Ok(())
    }

    /// Length of the intersection with `[start, end)`.
    pub fn overlap(&self, start: f64, end: f64) -> f64 {
        (self.end.min(end) - self.start.max(start)).max(0.0)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MetadataDoc {
    Many(Vec<AttackInterval>),
    One(AttackInterval),
}

/// Parse attack metadata: a JSON list of intervals, or a single interval
/// object.
pub fn parse_attack_metadata(text: &str) -> Result<Vec<AttackInterval>> {
    // Untagged enums swallow field errors; retry the likely shape for a
    // precise message.
    let doc: MetadataDoc = serde_json::from_str(text).map_err(|_| {
        let detail = if text.trim_start().starts_with('[') {
            serde_json::from_str::<Vec<AttackInterval>>(text).err()
        } else {
            serde_json::from_str::<AttackInterval>(text).err()
        };
        Error::Schema(detail.map_or_else(|| "unrecognized metadata".into(), |e| e.to_string()))
    })?;
    let intervals = match doc {
        MetadataDoc::Many(v) => v,
        MetadataDoc::One(a) => vec![a],
    };
    for a in &intervals {
        a.validate()?;
    }
    Ok(intervals)
}

pub fn load_attack_metadata(path: impl AsRef<Path>) -> Result<Vec<AttackInterval>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_attack_metadata(&text)
}
