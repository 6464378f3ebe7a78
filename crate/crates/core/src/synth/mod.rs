//! Synthetic benign traffic and attack injection.
//!
//! Every ID transmits on a nominal grid `phase + k * period`, each frame
//! displaced by a uniform draw in `[-jitter/2, jitter/2] * period`, so
//! consecutive inter-arrival times stay within `period * (1 +- jitter)`.
//! Timestamps are whole microseconds, which survive the candump text format
//! exactly. Signals are packed as 16-bit unsigned big-endian fields in
//! declaration order.

mod attacks;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use attacks::{
    inject_fabrication, inject_masquerade, inject_suspension, PayloadSource, Spoof, SpoofSource,
};

use crate::can_io::{insert_raw, AttackInterval, ByteOrder, CanFrame, SignalDb, SignalDef};
use crate::error::{Error, Result};
use crate::seed;

const FIELD_BITS: u32 = 16;
const MAX_SIGNALS_PER_ID: usize = 4;
const STREAM_TIMING: u64 = 0x5449_4d45;
const STREAM_VALUES: u64 = 0x5641_4c53;
const STREAM_ATTACK: u64 = 0x4154_4b53;

pub(crate) fn micros(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

pub(crate) fn seconds(us: i64) -> f64 {
    us as f64 / 1e6
}

/// Value process of one signal. `correlated` signals follow the ID's shared
/// random walk: `offset + gain * walk + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Constant {
        value: f64,
    },
    Sine {
        center: f64,
        amplitude: f64,
        /// Seconds per cycle.
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    RandomWalk {
        start: f64,
        /// Standard deviation of each per-frame step.
        step: f64,
        min: f64,
        max: f64,
    },
    Correlated {
        #[serde(default = "one")]
        gain: f64,
        #[serde(default)]
        offset: f64,
        /// Standard deviation of independent per-frame noise.
        #[serde(default)]
        noise: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub name: String,
    /// Physical units per raw count of the 16-bit field.
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    pub generator: Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    pub start: f64,
    pub step: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdSchedule {
    pub id: u32,
    /// Seconds between frames.
    pub period: f64,
    /// Fraction of the period, in `[0, 0.5)`.
    #[serde(default)]
    pub jitter: f64,
    /// Offset of the first nominal slot; drawn in `[0, period)` when absent.
    #[serde(default)]
    pub phase: Option<f64>,
    /// Payload length; defaults to 2 bytes per signal, or 8 with a rolling
    /// counter in byte 0 for IDs without signals.
    #[serde(default)]
    pub dlc: Option<usize>,
    /// Shared process for `correlated` signals.
    #[serde(default)]
    pub shared_walk: Option<WalkSpec>,
    #[serde(default)]
    pub signals: Vec<SignalSpec>,
}

impl IdSchedule {
    fn dlc(&self) -> usize {
        self.dlc.unwrap_or(if self.signals.is_empty() {
            8
        } else {
            2 * self.signals.len()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficProfile {
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    pub ids: Vec<IdSchedule>,
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<()> {
        let what = "traffic profile";
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(what, format!("duration {} must be positive", self.duration)));
        }
        if self.ids.is_empty() {
            return Err(Error::invalid(what, "no IDs"));
        }
        for (i, s) in self.ids.iter().enumerate() {
            if self.ids[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::invalid(what, format!("ID {:#x} listed twice", s.id)));
            }
            if !(s.period.is_finite() && s.period > 0.0) || micros(s.period) < 1 {
                return Err(Error::invalid(what, format!("ID {:#x}: period must be at least 1 us", s.id)));
            }
            if !(0.0..0.5).contains(&s.jitter) {
                return Err(Error::invalid(what, format!("ID {:#x}: jitter {} not in [0, 0.5)", s.id, s.jitter)));
            }
            if let Some(p) = s.phase {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(Error::invalid(what, format!("ID {:#x}: negative phase", s.id)));
                }
            }
            if s.signals.len() > MAX_SIGNALS_PER_ID {
                return Err(Error::invalid(
                    what,
                    format!("ID {:#x}: at most {MAX_SIGNALS_PER_ID} signals fit in 8 bytes", s.id),
                ));
            }
            let dlc = s.dlc();
            if dlc > 8 || dlc < 2 * s.signals.len() {
                return Err(Error::invalid(what, format!("ID {:#x}: dlc {dlc} cannot hold its signals", s.id)));
            }
            for (j, sig) in s.signals.iter().enumerate() {
                if s.signals[..j].iter().any(|o| o.name == sig.name) {
                    return Err(Error::invalid(what, format!("ID {:#x}: signal {} listed twice", s.id, sig.name)));
                }
                if matches!(sig.generator, Generator::Correlated { .. }) && s.shared_walk.is_none() {
                    return Err(Error::invalid(
                        what,
                        format!("ID {:#x}: correlated signal {} needs shared_walk", s.id, sig.name),
                    ));
                }
                if let Generator::Sine { period, .. } = sig.generator {
                    if period.is_nan() || period <= 0.0 {
                        return Err(Error::invalid(what, format!("{}: sine period must be positive", sig.name)));
                    }
                }
            }
        }
        self.signal_db().map(|_| ())
    }

    /// Signal database describing the generated payloads.
    pub fn signal_db(&self) -> Result<SignalDb> {
        let defs = self
            .ids
            .iter()
            .flat_map(|s| {
                s.signals.iter().enumerate().map(move |(k, sig)| SignalDef {
                    can_id: s.id,
                    name: sig.name.clone(),
                    start_bit: FIELD_BITS * k as u32,
                    bit_length: FIELD_BITS,
                    byte_order: ByteOrder::BigEndian,
                    signed: false,
                    scale: sig.scale,
                    offset: sig.offset,
                })
            })
            .collect();
        SignalDb::new(defs)
    }
}

struct WalkState {
    value: f64,
    spec: WalkSpec,
}

impl WalkState {
    fn advance(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let v = self.value;
        if self.spec.step > 0.0 {
            let n = Normal::new(0.0, self.spec.step).expect("positive step");
            self.value = (self.value + n.sample(rng)).clamp(self.spec.min, self.spec.max);
        }
        v
    }
}

/// Frames of one ID, time-ordered, with payloads encoding every signal.
fn id_frames(s: &IdSchedule, defs: &[&SignalDef], duration_us: i64, master: u64) -> Vec<(i64, CanFrame)> {
    let mut timing = seed::rng(seed::derive(master, STREAM_TIMING), s.id as u64);
    let mut values = seed::rng(seed::derive(master, STREAM_VALUES), s.id as u64);
    let period_us = micros(s.period);
    let phase_us = match s.phase {
        Some(p) => micros(p),
        None => timing.random_range(0..period_us),
    };
    let half = s.jitter / 2.0;
    let mut shared = s.shared_walk.map(|spec| WalkState { value: spec.start, spec });
    let mut walks: Vec<Option<WalkState>> = s
        .signals
        .iter()
        .map(|sig| match sig.generator {
            Generator::RandomWalk { start, step, min, max } => Some(WalkState {
                value: start,
                spec: WalkSpec { start, step, min, max },
            }),
            _ => None,
        })
        .collect();
    let dlc = s.dlc();
    let mut out = Vec::new();
    for k in 0i64.. {
        let nominal = phase_us + k * period_us;
        if nominal >= duration_us + period_us {
            break;
        }
        let u = if half > 0.0 { timing.random_range(-half..=half) } else { 0.0 };
        let t_us = (nominal + (u * period_us as f64).round() as i64).max(0);
        let t = seconds(t_us);
        let common = shared.as_mut().map(|w| w.advance(&mut values));
        let mut payload = [0u8; 8];
        if s.signals.is_empty() && dlc > 0 {
            payload[0] = (k % 256) as u8;
        }
        for ((sig, def), walk) in s.signals.iter().zip(defs).zip(walks.iter_mut()) {
            let v = match &sig.generator {
                Generator::Constant { value } => *value,
                Generator::Sine { center, amplitude, period, phase } => {
                    center + amplitude * (std::f64::consts::TAU * t / period + phase).sin()
                }
                Generator::RandomWalk { .. } => walk.as_mut().expect("walk state").advance(&mut values),
                Generator::Correlated { gain, offset, noise } => {
                    let e = if *noise > 0.0 {
                        Normal::new(0.0, *noise).expect("positive noise").sample(&mut values)
                    } else {
                        0.0
                    };
                    offset + gain * common.expect("validated shared walk") + e
                }
            };
            insert_raw(&mut payload[..dlc], def, def.physical_to_raw(v));
        }
        // Draws above happen for every slot so that the stream does not
        // depend on the duration cut.
        if t_us < duration_us {
            out.push((t_us, CanFrame::new(t, s.id, &payload[..dlc]).expect("valid frame")));
        }
    }
    out
}

/// Generated benign capture.
#[derive(Debug, Clone)]
pub struct SynthCapture {
    pub frames: Vec<CanFrame>,
    pub db: SignalDb,
}

/// Generate the benign capture of `profile`. Output is time-sorted (ties by
/// ID) and starts at t = 0.
pub fn generate_benign(profile: &TrafficProfile) -> Result<SynthCapture> {
    profile.validate()?;
    let db = profile.signal_db()?;
    let duration_us = micros(profile.duration);
    let mut all: Vec<(i64, CanFrame)> = Vec::new();
    for s in &profile.ids {
        let defs: Vec<&SignalDef> = db.for_id(s.id).collect();
        all.extend(id_frames(s, &defs, duration_us, profile.seed));
    }
    all.sort_by_key(|(t, f)| (*t, f.id));
    let t0 = all.first().map_or(0, |(t, _)| *t);
    let frames = all
        .into_iter()
        .map(|(t, f)| f.with_timestamp(seconds(t - t0)))
        .collect();
    Ok(SynthCapture { frames, db })
}

/// One attack of a scenario. Times are capture-relative seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    Masquerade {
        name: String,
        target_id: u32,
        start: f64,
        end: f64,
        spoof: Spoof,
    },
    Fabrication {
        name: String,
        injected_id: u32,
        start: f64,
        end: f64,
        /// Frames per second.
        rate: f64,
        #[serde(default)]
        payload: Vec<u8>,
    },
    Suspension {
        name: String,
        target_id: u32,
        start: f64,
        end: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub profile: TrafficProfile,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
}

/// Capture with attacks applied and their ground truth.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub frames: Vec<CanFrame>,
    pub db: SignalDb,
    pub attacks: Vec<AttackInterval>,
}

/// Generate the benign capture, then apply the attacks in order.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutput> {
    let SynthCapture { mut frames, db } = generate_benign(&scenario.profile)?;
    let mut intervals = Vec::new();
    for (i, a) in scenario.attacks.iter().enumerate() {
        let aseed = seed::derive(seed::derive(scenario.profile.seed, STREAM_ATTACK), i as u64);
        let (next, interval) = match a {
            AttackSpec::Masquerade { name, target_id, start, end, spoof } => {
                let jitter = scenario
                    .profile
                    .ids
                    .iter()
                    .find(|s| s.id == *target_id)
                    .map_or(0.0, |s| s.jitter);
                let defs: Vec<SignalDef> = db.for_id(*target_id).cloned().collect();
                let mut source = SpoofSource::new(spoof.clone(), defs, aseed);
                inject_masquerade(&frames, *target_id, (*start, *end), &mut source, jitter, aseed, name)?
            }
            AttackSpec::Fabrication { name, injected_id, start, end, rate, payload } => {
                inject_fabrication(&frames, *injected_id, (*start, *end), *rate, payload, name)?
            }
            AttackSpec::Suspension { name, target_id, start, end } => {
                inject_suspension(&frames, *target_id, (*start, *end), name)?
            }
        };
        frames = next;
        intervals.push(interval);
    }
    Ok(ScenarioOutput {
        frames,
        db,
        attacks: intervals,
    })
}

fn sig(name: &str, scale: f64, generator: Generator) -> SignalSpec {
    SignalSpec {
        name: name.to_string(),
        scale,
        offset: 0.0,
        generator,
    }
}

fn walk(start: f64, step: f64, min: f64, max: f64) -> Generator {
    Generator::RandomWalk { start, step, min, max }
}

fn sine(center: f64, amplitude: f64, period: f64) -> Generator {
    Generator::Sine {
        center,
        amplitude,
        period,
        phase: 0.0,
    }
}

/// Desk-scale scenario: 10 IDs carrying 20 signals over 120 s, including a
/// four-signal ID of co-varying wheel speeds, and one masquerade on the
/// speedometer ID over `[60, 100)` injecting the field maximum.
pub fn default_scenario() -> Scenario {
    let id = |id: u32, period: f64, signals: Vec<SignalSpec>| IdSchedule {
        id,
        period,
        jitter: 0.05,
        phase: None,
        dlc: None,
        shared_walk: None,
        signals,
    };
    let wheels = IdSchedule {
        shared_walk: Some(WalkSpec {
            start: 60.0,
            step: 0.2,
            min: 0.0,
            max: 180.0,
        }),
        signals: ["wheel_fl", "wheel_fr", "wheel_rl", "wheel_rr"]
            .iter()
            .map(|n| {
                sig(
                    n,
                    0.01,
                    Generator::Correlated {
                        gain: 1.0,
                        offset: 0.0,
                        noise: 0.05,
                    },
                )
            })
            .collect(),
        ..id(0x0B0, 0.02, vec![])
    };
    let profile = TrafficProfile {
        duration: 120.0,
        seed: 7,
        ids: vec![
            id(0x0A0, 0.01, vec![sig("engine_rpm", 0.25, walk(2000.0, 15.0, 700.0, 6500.0)), sig("throttle", 0.01, walk(20.0, 0.5, 0.0, 100.0))]),
            wheels,
            id(0x110, 0.02, vec![sig("steering_angle", 0.01, sine(300.0, 90.0, 11.0)), sig("yaw_rate", 0.01, sine(50.0, 8.0, 7.0))]),
            id(0x1D0, 0.05, vec![sig("speedometer", 0.01, walk(60.0, 0.3, 0.0, 180.0)), sig("odometer_frac", 0.01, sine(50.0, 40.0, 30.0))]),
            id(0x1F0, 0.05, vec![sig("brake_pressure", 0.01, walk(5.0, 0.4, 0.0, 120.0)), sig("accel_long", 0.001, sine(30.0, 3.0, 9.0))]),
            id(0x2A0, 0.1, vec![sig("coolant_temp", 0.01, walk(85.0, 0.05, 60.0, 110.0)), sig("oil_temp", 0.01, walk(95.0, 0.05, 70.0, 130.0))]),
            id(0x2C0, 0.1, vec![sig("fuel_level", 0.01, walk(55.0, 0.01, 0.0, 100.0)), sig("battery_voltage", 0.001, sine(13.8, 0.2, 17.0))]),
            id(0x3E0, 0.1, vec![sig("gear", 1.0, Generator::Constant { value: 4.0 }), sig("reverse_light", 1.0, Generator::Constant { value: 0.0 })]),
            id(0x420, 0.2, vec![sig("ambient_temp", 0.01, walk(21.0, 0.02, -10.0, 45.0)), sig("cabin_temp", 0.01, walk(22.0, 0.02, 10.0, 35.0))]),
            id(0x5F0, 0.5, vec![]),
        ],
    };
    Scenario {
        profile,
        attacks: vec![AttackSpec::Masquerade {
            name: "max_speedometer".to_string(),
            target_id: 0x1D0,
            start: 60.0,
            end: 100.0,
            spoof: Spoof::Max { signals: vec!["speedometer".to_string()] },
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::can_io::{decode_signals, parse_candump, write_candump};

    fn single(period: f64, jitter: f64, signals: Vec<SignalSpec>) -> IdSchedule {
        IdSchedule {
            id: 0x100,
            period,
            jitter,
            phase: Some(0.0),
            dlc: None,
            shared_walk: None,
            signals,
        }
    }

    #[test]
    fn exact_schedule_without_jitter() {
        let p = TrafficProfile {
            duration: 10.0,
            seed: 1,
            ids: vec![single(0.1, 0.0, vec![])],
        };
        let out = generate_benign(&p).unwrap();
        assert_eq!(out.frames.len(), 100);
        for (k, f) in out.frames.iter().enumerate() {
            assert_eq!(micros(f.timestamp), 100_000 * k as i64);
        }
        for w in out.frames.windows(2) {
            assert!((w[1].timestamp - w[0].timestamp - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_signal_round_trips() {
        let p = TrafficProfile {
            duration: 5.0,
            seed: 3,
            ids: vec![single(0.05, 0.1, vec![sig("c", 0.1, Generator::Constant { value: 5.0 })])],
        };
        let out = generate_benign(&p).unwrap();
        let dec = decode_signals(&out.frames, &out.db.signals);
        assert_eq!(dec.series[0].values.len(), out.frames.len());
        assert!(dec.series[0].values.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn frame_counts_follow_periods() {
        let mut b = single(0.2, 0.0, vec![]);
        b.id = 0x200;
        b.phase = None;
        let mut a = single(0.1, 0.0, vec![]);
        a.phase = None;
        for seed in 0..20 {
            let p = TrafficProfile {
                duration: 30.0,
                seed,
                ids: vec![a.clone(), b.clone()],
            };
            let f = generate_benign(&p).unwrap().frames;
            let na = f.iter().filter(|x| x.id == 0x100).count() as i64;
            let nb = f.iter().filter(|x| x.id == 0x200).count() as i64;
            assert!((na - 2 * nb).abs() <= 1, "seed {seed}: {na} vs {nb}");
        }
    }

    #[test]
    fn inter_arrival_within_jitter() {
        let p = TrafficProfile {
            duration: 20.0,
            seed: 9,
            ids: vec![single(0.05, 0.2, vec![])],
        };
        let f = generate_benign(&p).unwrap().frames;
        for w in f.windows(2) {
            let gap = w[1].timestamp - w[0].timestamp;
            assert!((0.05 * 0.8 - 1e-6..=0.05 * 1.2 + 1e-6).contains(&gap), "{gap}");
        }
    }

    #[test]
    fn invalid_profiles() {
        let ok = TrafficProfile {
            duration: 1.0,
            seed: 0,
            ids: vec![single(0.1, 0.0, vec![])],
        };
        assert!(ok.validate().is_ok());
        assert!(generate_benign(&TrafficProfile { duration: 0.0, ..ok.clone() }).is_err());
        assert!(generate_benign(&TrafficProfile { duration: -1.0, ..ok.clone() }).is_err());
        let mut bad = ok.clone();
        bad.ids[0].jitter = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.ids[0].period = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.ids[0].signals = vec![sig("w", 0.1, Generator::Correlated { gain: 1.0, offset: 0.0, noise: 0.0 })];
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.ids[0].signals = (0..5).map(|i| sig(&format!("s{i}"), 0.1, Generator::Constant { value: 1.0 })).collect();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_scenario_shape() {
        let s = default_scenario();
        assert_eq!(s.profile.ids.len(), 10);
        let db = s.profile.signal_db().unwrap();
        assert_eq!(db.signals.len(), 20);
        let correlated = s.profile.ids.iter().filter(|i| i.signals.len() == 4).count();
        let empty = s.profile.ids.iter().filter(|i| i.signals.is_empty()).count();
        let pairs = s.profile.ids.iter().filter(|i| i.signals.len() == 2).count();
        assert_eq!((correlated, pairs, empty), (1, 8, 1));
        assert_eq!(s.attacks.len(), 1);
    }

    #[test]
    fn scenario_round_trips_through_candump_and_is_deterministic() {
        let out = run_scenario(&default_scenario()).unwrap();
        assert_eq!(out.frames.first().unwrap().timestamp, 0.0);
        let text = write_candump(&out.frames);
        assert_eq!(parse_candump(&text).unwrap(), out.frames);
        let again = run_scenario(&default_scenario()).unwrap();
        assert_eq!(write_candump(&again.frames), text);
        assert!(out.frames.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn correlated_signals_co_vary() {
        let s = default_scenario();
        let out = generate_benign(&s.profile).unwrap();
        let dec = decode_signals(&out.frames, &out.db.signals);
        let find = |n: &str| dec.series.iter().find(|x| x.name == n).unwrap();
        let (a, b) = (find("wheel_fl"), find("wheel_rr"));
        let n = a.values.len() as f64;
        let (ma, mb) = (a.values.iter().sum::<f64>() / n, b.values.iter().sum::<f64>() / n);
        let cov: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.values.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.values.iter().map(|y| (y - mb).powi(2)).sum();
        assert!(cov / (va * vb).sqrt() > 0.95);
    }

    #[test]
    fn scenario_serde() {
        let s = default_scenario();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
