//! Masquerade, fabrication and suspension injection on a time-sorted capture.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{micros, seconds};
use crate::can_io::{extract_raw, insert_raw, AttackInterval, CanFrame, SignalDef};
use crate::error::{Error, Result};
use crate::seed;

/// Produces the payload of each spoofed frame.
pub trait PayloadSource {
    /// `template` is the payload of the victim's last legitimate frame.
    fn payload(&mut self, t: f64, template: &[u8]) -> Vec<u8>;
}

/// Built-in spoofing strategies. An empty `signals` list targets every
/// signal of the victim ID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Spoof {
    /// Largest value the field can carry.
    Max {
        #[serde(default)]
        signals: Vec<String>,
    },
    Constant {
        value: f64,
        #[serde(default)]
        signals: Vec<String>,
    },
    /// Every targeted signal wanders independently from its last legitimate
    /// value, breaking any correlation between them.
    Decorrelate {
        /// Standard deviation of each per-frame step, physical units.
        step: f64,
        #[serde(default)]
        signals: Vec<String>,
    },
}

impl Spoof {
    fn signals(&self) -> &[String] {
        match self {
            Spoof::Max { signals } | Spoof::Constant { signals, .. } | Spoof::Decorrelate { signals, .. } => signals,
        }
    }
}

/// [`PayloadSource`] for a [`Spoof`] over the victim's signal definitions.
pub struct SpoofSource {
    spoof: Spoof,
    defs: Vec<SignalDef>,
    walk: Vec<Option<f64>>,
    rng: ChaCha8Rng,
}

impl SpoofSource {
    /// `defs` are the victim ID's signals; those not named by the spoof are
    /// carried over from the template unchanged.
    pub fn new(spoof: Spoof, defs: Vec<SignalDef>, seed: u64) -> Self {
        let names = spoof.signals();
        let defs: Vec<SignalDef> = defs
            .into_iter()
            .filter(|d| names.is_empty() || names.contains(&d.name))
            .collect();
        SpoofSource {
            walk: vec![None; defs.len()],
            spoof,
            defs,
            rng: seed::rng(seed, 0),
        }
    }

    pub fn targets(&self) -> impl Iterator<Item = &SignalDef> {
        self.defs.iter()
    }
}

impl PayloadSource for SpoofSource {
    fn payload(&mut self, _t: f64, template: &[u8]) -> Vec<u8> {
        let mut out = template.to_vec();
        for (i, def) in self.defs.iter().enumerate() {
            if out.len() < def.bytes_needed() {
                continue;
            }
            let raw = match &self.spoof {
                Spoof::Max { .. } => def.physical_to_raw(def.physical_max()),
                Spoof::Constant { value, .. } => def.physical_to_raw(*value),
                Spoof::Decorrelate { step, .. } => {
                    let current = self.walk[i].unwrap_or_else(|| {
                        def.raw_to_physical(extract_raw(template, def).expect("length checked"))
                    });
                    let next = if *step > 0.0 {
                        current + Normal::new(0.0, *step).expect("positive step").sample(&mut self.rng)
                    } else {
                        current
                    };
                    let (lo, _) = def.raw_limits();
                    let (a, b) = (def.raw_to_physical(lo as u64), def.physical_max());
                    let next = next.clamp(a.min(b), a.max(b));
                    self.walk[i] = Some(next);
                    def.physical_to_raw(next)
                }
            };
            insert_raw(&mut out, def, raw);
        }
        out
    }
}

fn check_interval(start: f64, end: f64) -> Result<()> {
    if !(start.is_finite() && end.is_finite() && start < end) {
        return Err(Error::invalid("attack interval", format!("start {start} must precede end {end}")));
    }
    Ok(())
}

fn merge(mut kept: Vec<CanFrame>, added: Vec<CanFrame>) -> Vec<CanFrame> {
    kept.extend(added);
    kept.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    kept
}

fn interval(name: &str, start: f64, end: f64, id: u32) -> AttackInterval {
    AttackInterval {
        name: name.to_string(),
        start,
        end,
        target_ids: BTreeSet::from([id]),
    }
}

/// Nominal period in microseconds: the median inter-arrival time, refined
/// by a least-squares line through the frames' slot numbers so that the
/// estimate does not drift over long intervals.
fn estimate_period(victim: &[&CanFrame]) -> f64 {
    let ts: Vec<f64> = victim.iter().map(|f| micros(f.timestamp) as f64).collect();
    let mut gaps: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2].max(1.0);
    // Slots advance gap by gap so that a missing frame skips one.
    let mut slots = vec![0.0];
    for w in ts.windows(2) {
        let last = slots[slots.len() - 1];
        slots.push(last + ((w[1] - w[0]) / median).round().max(1.0));
    }
    let n = ts.len() as f64;
    let (mk, mt) = (slots.iter().sum::<f64>() / n, ts.iter().sum::<f64>() / n);
    let sxx: f64 = slots.iter().map(|k| (k - mk).powi(2)).sum();
    let sxy: f64 = slots.iter().zip(&ts).map(|(k, t)| (k - mk) * (t - mt)).sum();
    if sxx > 0.0 {
        (sxy / sxx).max(1.0)
    } else {
        median
    }
}

/// Silence `target_id` over `[start, end)` and transmit as many spoofed frames
/// in its place at the victim's nominal period, anchored to its last frame
/// before `start`, each displaced by a uniform draw in `[-jitter/2, jitter/2]`
/// of the period.
pub fn inject_masquerade(
    frames: &[CanFrame],
    target_id: u32,
    (start, end): (f64, f64),
    source: &mut dyn PayloadSource,
    jitter: f64,
    seed: u64,
    name: &str,
) -> Result<(Vec<CanFrame>, AttackInterval)> {
    check_interval(start, end)?;
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::invalid("masquerade", format!("jitter {jitter} not in [0, 0.5)")));
    }
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => (a.timestamp, b.timestamp),
        _ => return Err(Error::invalid("masquerade", "empty capture")),
    };
    if start < first || end > last {
        return Err(Error::invalid(
            "masquerade",
            format!("interval [{start}, {end}) outside capture span [{first}, {last}]"),
        ));
    }
    let victim: Vec<&CanFrame> = frames.iter().filter(|f| f.id == target_id).collect();
    if victim.is_empty() {
        return Err(Error::invalid("masquerade", format!("target ID {target_id:#x} not in capture")));
    }
    if victim.len() < 2 {
        return Err(Error::Insufficient(format!(
            "target ID {target_id:#x} has one frame; its period is unknown"
        )));
    }
    let period = estimate_period(&victim);
    let (start_us, end_us) = (micros(start), micros(end));

    let (anchor_us, template) = match victim.iter().rev().find(|f| micros(f.timestamp) < start_us) {
        Some(f) => (micros(f.timestamp) as f64, f.payload().to_vec()),
        None => {
            let f = victim[0];
            let t = micros(f.timestamp) as f64;
            let back = ((t - start_us as f64) / period).floor() + 1.0;
            (t - back * period, f.payload().to_vec())
        }
    };
    let mut rng = seed::rng(seed, u64::from(target_id));
    let half = jitter / 2.0;
    // One spoofed frame per silenced one, so the count inside the interval is
    // unchanged; slot times are clamped into the interval.
    let silenced = victim
        .iter()
        .filter(|f| f.timestamp >= start && f.timestamp < end)
        .count();
    let mut spoofed = Vec::with_capacity(silenced);
    for k in 1..=silenced {
        let nominal = anchor_us + k as f64 * period;
        let u = if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
        let t_us = ((nominal + u * period).round() as i64).clamp(start_us, end_us - 1);
        let t = seconds(t_us);
        let payload = source.payload(t, &template);
        spoofed.push(CanFrame::new(t, target_id, &payload)?);
    }
    let kept: Vec<CanFrame> = frames
        .iter()
        .filter(|f| !(f.id == target_id && f.timestamp >= start && f.timestamp < end))
        .cloned()
        .collect();
    Ok((merge(kept, spoofed), interval(name, start, end, target_id)))
}

/// Add frames of `injected_id` carrying `payload` every `1 / rate` seconds
/// from `start` while before `end`. Legitimate frames are untouched.
pub fn inject_fabrication(
    frames: &[CanFrame],
    injected_id: u32,
    (start, end): (f64, f64),
    rate: f64,
    payload: &[u8],
    name: &str,
) -> Result<(Vec<CanFrame>, AttackInterval)> {
    check_interval(start, end)?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid("fabrication", format!("rate {rate} must be positive")));
    }
    let step = 1e6 / rate;
    let (start_us, end_us) = (micros(start), micros(end));
    let mut added = Vec::new();
    for k in 0u64.. {
        let t_us = start_us + (k as f64 * step).round() as i64;
        if t_us >= end_us {
            break;
        }
        added.push(CanFrame::new(seconds(t_us), injected_id, payload)?);
    }
    Ok((merge(frames.to_vec(), added), interval(name, start, end, injected_id)))
}

/// Remove every `target_id` frame in `[start, end)`.
pub fn inject_suspension(
    frames: &[CanFrame],
    target_id: u32,
    (start, end): (f64, f64),
    name: &str,
) -> Result<(Vec<CanFrame>, AttackInterval)> {
    check_interval(start, end)?;
    if !frames.iter().any(|f| f.id == target_id) {
        return Err(Error::invalid("suspension", format!("target ID {target_id:#x} not in capture")));
    }
    let kept = frames
        .iter()
        .filter(|f| !(f.id == target_id && f.timestamp >= start && f.timestamp < end))
        .cloned()
        .collect();
    Ok((kept, interval(name, start, end, target_id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::can_io::decode_signals;
    use crate::synth::{default_scenario, generate_benign, IdSchedule, SignalSpec, TrafficProfile};
    use crate::synth::Generator;

    fn profile(jitter: f64, seed: u64) -> TrafficProfile {
        let id = |id: u32, period: f64| IdSchedule {
            id,
            period,
            jitter,
            phase: None,
            dlc: None,
            shared_walk: None,
            signals: vec![SignalSpec {
                name: format!("s{id:x}"),
                scale: 0.01,
                offset: 0.0,
                generator: Generator::RandomWalk {
                    start: 50.0,
                    step: 0.5,
                    min: 0.0,
                    max: 100.0,
                },
            }],
        };
        TrafficProfile {
            duration: 30.0,
            seed,
            ids: vec![id(0x100, 0.02), id(0x200, 0.05), id(0x300, 0.1)],
        }
    }

    fn count(frames: &[CanFrame], id: u32, start: f64, end: f64) -> i64 {
        frames
            .iter()
            .filter(|f| f.id == id && f.timestamp >= start && f.timestamp < end)
            .count() as i64
    }

    fn masquerade(frames: &[CanFrame], defs: Vec<SignalDef>, jitter: f64, seed: u64) -> Vec<CanFrame> {
        let mut src = SpoofSource::new(Spoof::Max { signals: vec![] }, defs, seed);
        inject_masquerade(frames, 0x200, (10.0, 20.0), &mut src, jitter, seed, "m").unwrap().0
    }

    #[test]
    fn max_spoof_inside_only() {
        let cap = generate_benign(&profile(0.05, 1)).unwrap();
        let defs: Vec<SignalDef> = cap.db.for_id(0x200).cloned().collect();
        let max = defs[0].physical_max();
        let out = masquerade(&cap.frames, defs, 0.05, 1);
        let before = decode_signals(&cap.frames, &cap.db.signals);
        let after = decode_signals(&out, &cap.db.signals);
        let (b, a) = (&before.series[1], &after.series[1]);
        for (t, v) in a.samples() {
            if (10.0..20.0).contains(&t) {
                assert_eq!(v, max);
            }
        }
        let outside = |s: &crate::can_io::SignalSeries| -> Vec<(f64, f64)> {
            s.samples().filter(|(t, _)| !(10.0..20.0).contains(t)).collect()
        };
        assert_eq!(outside(a), outside(b));
        // Other IDs are bit-identical.
        let others = |f: &[CanFrame]| f.iter().filter(|x| x.id != 0x200).cloned().collect::<Vec<_>>();
        assert_eq!(others(&out), others(&cap.frames));
    }

    #[test]
    fn masquerade_preserves_frequency() {
        for seed in 0..20 {
            for jitter in [0.0, 0.05, 0.2] {
                let cap = generate_benign(&profile(jitter, seed)).unwrap();
                let defs: Vec<SignalDef> = cap.db.for_id(0x200).cloned().collect();
                let out = masquerade(&cap.frames, defs, jitter, seed);
                let n0 = count(&cap.frames, 0x200, 10.0, 20.0);
                let n1 = count(&out, 0x200, 10.0, 20.0);
                assert!((n0 - n1).abs() <= 1, "seed {seed} jitter {jitter}: {n0} vs {n1}");
                // Inter-arrival audit: within 2x jitter of the period.
                let ts: Vec<f64> = out.iter().filter(|f| f.id == 0x200).map(|f| f.timestamp).collect();
                for w in ts.windows(2) {
                    let gap = (w[1] - w[0]) / 0.05;
                    assert!((gap - 1.0).abs() <= 2.0 * jitter + 1e-3, "gap {gap}");
                }
            }
        }
    }

    #[test]
    fn masquerade_errors() {
        let cap = generate_benign(&profile(0.0, 2)).unwrap();
        let mut src = SpoofSource::new(Spoof::Max { signals: vec![] }, vec![], 0);
        assert!(inject_masquerade(&cap.frames, 0x999, (1.0, 2.0), &mut src, 0.0, 0, "m").is_err());
        assert!(inject_masquerade(&cap.frames, 0x200, (25.0, 40.0), &mut src, 0.0, 0, "m").is_err());
        assert!(inject_masquerade(&cap.frames, 0x200, (-1.0, 2.0), &mut src, 0.0, 0, "m").is_err());
        assert!(inject_masquerade(&cap.frames, 0x200, (3.0, 2.0), &mut src, 0.0, 0, "m").is_err());
    }

    #[test]
    fn decorrelate_breaks_co_variation() {
        let s = default_scenario();
        let cap = generate_benign(&s.profile).unwrap();
        let defs: Vec<SignalDef> = cap.db.for_id(0x0B0).cloned().collect();
        let mut src = SpoofSource::new(Spoof::Decorrelate { step: 0.5, signals: vec![] }, defs, 3);
        let (out, _) = inject_masquerade(&cap.frames, 0x0B0, (30.0, 90.0), &mut src, 0.05, 3, "c").unwrap();
        let dec = decode_signals(&out, &cap.db.signals);
        let inside = |n: &str| -> Vec<f64> {
            let s = dec.series.iter().find(|x| x.name == n).unwrap();
            s.samples().filter(|(t, _)| (30.0..90.0).contains(t)).map(|(_, v)| v).collect()
        };
        let (a, b) = (inside("wheel_fl"), inside("wheel_rr"));
        let diffs = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        let (da, db) = (diffs(&a), diffs(&b));
        let n = da.len() as f64;
        let (ma, mb) = (da.iter().sum::<f64>() / n, db.iter().sum::<f64>() / n);
        let cov: f64 = da.iter().zip(&db).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = da.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = db.iter().map(|y| (y - mb).powi(2)).sum();
        assert!((cov / (va * vb).sqrt()).abs() < 0.2);
    }

    #[test]
    fn fabrication_adds_frames() {
        let cap = generate_benign(&profile(0.05, 4)).unwrap();
        let (out, a) = inject_fabrication(&cap.frames, 0x7FF, (5.0, 6.0), 100.0, &[0xFF; 8], "f").unwrap();
        let added = out.iter().filter(|f| f.id == 0x7FF).count();
        assert_eq!(added, 100);
        assert!(out.len() > cap.frames.len());
        let legit: Vec<CanFrame> = out.iter().filter(|f| f.id != 0x7FF).cloned().collect();
        assert_eq!(legit, cap.frames);
        assert_eq!(a.target_ids, BTreeSet::from([0x7FF]));
        assert!(inject_fabrication(&cap.frames, 0x7FF, (5.0, 6.0), 0.0, &[], "f").is_err());
    }

    #[test]
    fn suspension_removes_frames() {
        let cap = generate_benign(&profile(0.05, 5)).unwrap();
        let removed = count(&cap.frames, 0x100, 5.0, 10.0);
        let (out, _) = inject_suspension(&cap.frames, 0x100, (5.0, 10.0), "s").unwrap();
        assert_eq!(count(&out, 0x100, 5.0, 10.0), 0);
        assert_eq!(out.len() as i64, cap.frames.len() as i64 - removed);
        let others = |f: &[CanFrame]| f.iter().filter(|x| x.id != 0x100).cloned().collect::<Vec<_>>();
        assert_eq!(others(&out), others(&cap.frames));
        assert!(inject_suspension(&cap.frames, 0x999, (5.0, 10.0), "s").is_err());
    }
}
