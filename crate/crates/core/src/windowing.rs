//! Sliding-window partitioning of a frame stream.
//!
//! Window `k` covers `[first + k*delta, first + k*delta + omega)` (time mode,
//! seconds) or message indices `[k*delta, k*delta + omega)` (sample mode).
//! Only complete windows are produced: the trailing partial window is
//! dropped, so a capture spanning less than `omega` yields nothing.

use serde::{Deserialize, Serialize};

use crate::can_io::{AttackInterval, CanFrame};
use crate::error::{Error, Result};

/// Tolerance on window boundaries so that e.g. span = 10, omega = 10 yields
/// one window despite rounding in capture-relative timestamps.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Time,
    Sample,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(WindowMode::Time),
            "sample" => Ok(WindowMode::Sample),
            _ => Err(Error::invalid("window mode", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub mode: WindowMode,
    pub omega: f64,
    pub delta: f64,
}

impl WindowSpec {
    pub fn new(mode: WindowMode, omega: f64, delta: f64) -> Result<Self> {
        let spec = WindowSpec { mode, omega, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn time(omega: f64, delta: f64) -> Result<Self> {
        Self::new(WindowMode::Time, omega, delta)
    }

    pub fn sample(omega: usize, delta: usize) -> Result<Self> {
        Self::new(WindowMode::Sample, omega as f64, delta as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.omega) || !ok(self.delta) {
            return Err(Error::invalid(
                "window spec",
                format!("omega {} and delta {} must be positive", self.omega, self.delta),
            ));
        }
        if self.mode == WindowMode::Sample && (self.omega.fract() != 0.0 || self.delta.fract() != 0.0)
        {
            return Err(Error::invalid(
                "window spec",
                "sample-mode omega and delta must be whole message counts",
            ));
        }
        Ok(())
    }

    /// Number of complete windows over a range of length `span` (seconds in
    /// time mode, message count in sample mode).
    pub fn window_count(&self, span: f64) -> usize {
        if span + BOUNDARY_EPS < self.omega {
            return 0;
        }
        let eps = match self.mode {
            WindowMode::Time => BOUNDARY_EPS,
            WindowMode::Sample => 0.0,
        };
        ((span - self.omega) / self.delta + eps).floor().max(0.0) as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Attack,
}

impl Label {
    pub fn is_attack(self) -> bool {
        self == Label::Attack
    }
}

/// A contiguous run of frames.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub index: usize,
    /// Window bounds in the spec's unit: seconds or message index.
    pub start: f64,
    pub end: f64,
    /// Time extent used for labelling: `[start, end)` in time mode, first and
    /// last frame timestamps in sample mode.
    pub time_start: f64,
    pub time_end: f64,
    pub frames: &'a [CanFrame],
    pub label: Label,
}

impl Window<'_> {
    pub fn duration(&self) -> f64 {
        self.time_end - self.time_start
    }
}

/// Cut a time-sorted frame stream into windows.
pub fn partition<'a>(frames: &'a [CanFrame], spec: &WindowSpec) -> Result<Vec<Window<'a>>> {
    spec.validate()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    Ok(match spec.mode {
        WindowMode::Time => partition_time(frames, spec),
        WindowMode::Sample => partition_sample(frames, spec),
    })
}

fn partition_time<'a>(frames: &'a [CanFrame], spec: &WindowSpec) -> Vec<Window<'a>> {
    let first = frames[0].timestamp;
    let span = frames[frames.len() - 1].timestamp - first;
    let count = spec.window_count(span);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = first + k as f64 * spec.delta;
        let end = start + spec.omega;
        let lo = frames.partition_point(|f| f.timestamp < start);
        let hi = frames.partition_point(|f| f.timestamp < end);
        out.push(Window {
            index: k,
            start,
            end,
            time_start: start,
            time_end: end,
            frames: &frames[lo..hi],
            label: Label::Benign,
        });
    }
    out
}

fn partition_sample<'a>(frames: &'a [CanFrame], spec: &WindowSpec) -> Vec<Window<'a>> {
    let omega = spec.omega as usize;
    let delta = spec.delta as usize;
    let count = spec.window_count(frames.len() as f64);
    (0..count)
        .map(|k| {
            let lo = k * delta;
            let slice = &frames[lo..lo + omega];
            Window {
                index: k,
                start: lo as f64,
                end: (lo + omega) as f64,
                time_start: slice[0].timestamp,
                time_end: slice[omega - 1].timestamp,
                frames: slice,
                label: Label::Benign,
            }
        })
        .collect()
}

/// A window is an attack window iff it shares a strictly positive duration
/// with any interval. Sample-mode windows whose frames share one timestamp
/// count as attack when that instant lies strictly inside an interval.
pub fn label_windows(windows: &mut [Window<'_>], intervals: &[AttackInterval]) {
    for w in windows.iter_mut() {
        let hit = intervals
            .iter()
            .any(|a| a.start < w.time_end && w.time_start < a.end);
        w.label = if hit { Label::Attack } else { Label::Benign };
    }
}

pub fn attack_window_fraction(windows: &[Window<'_>]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Insufficient(
            "attack fraction of an empty window list is undefined".into(),
        ));
    }
    let n = windows.iter().filter(|w| w.label.is_attack()).count();
    Ok(n as f64 / windows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn frames_at(times: &[f64]) -> Vec<CanFrame> {
        times
            .iter()
            .map(|&t| CanFrame::new(t, 0x100, &[]).unwrap())
            .collect()
    }

    fn uniform(span: f64, step: f64) -> Vec<CanFrame> {
        let n = (span / step).round() as usize;
        frames_at(&(0..=n).map(|i| i as f64 * step).collect::<Vec<_>>())
    }

    fn interval(start: f64, end: f64) -> AttackInterval {
        AttackInterval {
            name: "a".into(),
            start,
            end,
            target_ids: BTreeSet::new(),
        }
    }

    #[test]
    fn two_windows_over_ten_seconds() {
        let f = uniform(10.0, 0.5);
        let w = partition(&f, &WindowSpec::time(4.0, 4.0).unwrap()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].start, 0.0);
        assert_eq!(w[1].start, 4.0);
        assert_eq!(w[0].frames.len(), 8);
    }

    #[test]
    fn window_equal_to_span() {
        let f = uniform(10.0, 0.5);
        let w = partition(&f, &WindowSpec::time(10.0, 1.0).unwrap()).unwrap();
        assert_eq!(w.len(), 1);
        // Half-open: the frame at t = 10 is outside.
        assert_eq!(w[0].frames.len(), 20);
    }

    #[test]
    fn span_shorter_than_window() {
        let f = uniform(3.0, 0.5);
        assert!(partition(&f, &WindowSpec::time(4.0, 1.0).unwrap())
            .unwrap()
            .is_empty());
        assert!(partition(&[], &WindowSpec::time(4.0, 1.0).unwrap())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sample_mode_windows() {
        let f = uniform(9.9, 0.1);
        assert_eq!(f.len(), 100);
        let w = partition(&f, &WindowSpec::sample(30, 20).unwrap()).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[3].start, 60.0);
        assert_eq!(w[3].frames.len(), 30);
        assert!((w[3].time_start - 6.0).abs() < 1e-12);
        assert!((w[3].time_end - 8.9).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(WindowSpec::time(0.0, 1.0).is_err());
        assert!(WindowSpec::time(1.0, -1.0).is_err());
        assert!(WindowSpec::new(WindowMode::Sample, 1.5, 1.0).is_err());
    }

    #[test]
    fn labels_use_positive_overlap() {
        let f = uniform(10.0, 0.5);
        let mut w = partition(&f, &WindowSpec::time(4.0, 4.0).unwrap()).unwrap();
        label_windows(&mut w[..1], &[interval(3.9, 10.0)]);
        assert_eq!(w[0].label, Label::Attack);
        label_windows(&mut w[..1], &[interval(4.0, 10.0)]);
        assert_eq!(w[0].label, Label::Benign);
        label_windows(&mut w, &[]);
        assert!(w.iter().all(|w| w.label == Label::Benign));
    }

    #[test]
    fn fraction() {
        let f = uniform(10.0, 0.5);
        let mut w = partition(&f, &WindowSpec::time(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(w.len(), 10);
        assert_eq!(attack_window_fraction(&w).unwrap(), 0.0);
        label_windows(&mut w, &[interval(2.0, 6.0)]);
        assert_eq!(attack_window_fraction(&w).unwrap(), 0.4);
        assert!(attack_window_fraction(&[]).is_err());
    }

    #[test]
    fn disjoint_windows_when_delta_equals_omega() {
        let f = uniform(20.0, 0.05);
        let w = partition(&f, &WindowSpec::time(3.0, 3.0).unwrap()).unwrap();
        let total: usize = w.iter().map(|w| w.frames.len()).sum();
        let covered = f.partition_point(|x| x.timestamp < w.last().unwrap().end);
        assert_eq!(total, covered);
        for pair in w.windows(2) {
            let a = pair[0].frames.last().unwrap().timestamp;
            let b = pair[1].frames[0].timestamp;
            assert!(a < b);
        }
    }
}
