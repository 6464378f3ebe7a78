//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when any criterion fails.
//!
//! The optional real-data check reads `CANMSG_ROAD_DIR`: one subdirectory per
//! attack holding `capture.log`, `signals.json` and `metadata.json`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use canmsg::can_io::{load_attack_metadata, load_capture, CanFrame, SignalDb};
use canmsg::embedding::{embed_graph, transition_distribution, IndexedGraph, Node2VecParams};
use canmsg::eval::{
    auc_roc, compare_settings, grid, heatmap_csv, ks_two_sample, run_sweep, Alternative,
    CaptureInput, Setting, SweepConfig, SweepInput, SweepResult,
};
use canmsg::eval::stats::{mann_whitney_exact, mann_whitney_normal};
use canmsg::learn::{cross_validate, smote, Dataset, ForestParams};
use canmsg::msg_graph::{build_msg, MsgGraph};
use canmsg::synth::{default_scenario, run_scenario};
use canmsg::windowing::{partition, Label, WindowMode, WindowSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn frames_at(ids: &[u32], times: &[f64]) -> Vec<CanFrame> {
    ids.iter()
        .zip(times)
        .map(|(&id, &t)| CanFrame::new(t, id, &[]).unwrap())
        .collect()
}

// 1. MSG oracle equivalence.
fn msg_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..1000 {
        let n = rng.random_range(1..=200);
        let alphabet = rng.random_range(1..=12u32);
        let ids: Vec<u32> = (0..n).map(|_| 0x100 + rng.random_range(0..alphabet)).collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.001).collect();
        let frames = frames_at(&ids, &times);
        let spec = WindowSpec::sample(n, 1).unwrap();
        let windows = partition(&frames, &spec).unwrap();
        let g = build_msg(&windows[0]);
        let mut oracle: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for i in 0..n.saturating_sub(1) {
            *oracle.entry((ids[i], ids[i + 1])).or_default() += 1;
        }
        if g.edges != oracle {
            return Outcome::Fail(format!("trial {trial}: edge weights differ"));
        }
        if g.total_weight() != n as u64 - 1 {
            return Outcome::Fail(format!("trial {trial}: total weight {} for n = {n}", g.total_weight()));
        }
    }
    Outcome::Pass("1000 sequences".into())
}

// 2. Window-count formula.
fn window_counts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..500 {
        // Time mode.
        let span: f64 = rng.random_range(0.5..60.0);
        let omega: f64 = rng.random_range(0.1..20.0);
        let delta: f64 = rng.random_range(0.05..10.0);
        let mut times: Vec<f64> = (0..rng.random_range(0..50)).map(|_| rng.random_range(0.0..span)).collect();
        times.push(0.0);
        times.push(span);
        times.sort_by(f64::total_cmp);
        let frames = frames_at(&vec![1; times.len()], &times);
        let spec = WindowSpec::time(omega, delta).unwrap();
        let got = partition(&frames, &spec).unwrap().len();
        let enumerated = (0..).take_while(|&k| k as f64 * delta + omega <= span).count();
        let formula = if span < omega { 0 } else { ((span - omega) / delta).floor() as usize + 1 };
        if got != enumerated || got != formula {
            return Outcome::Fail(format!(
                "time trial {trial}: span {span} omega {omega} delta {delta}: got {got}, enumeration {enumerated}, formula {formula}"
            ));
        }

        // Sample mode.
        let n = rng.random_range(1..400usize);
        let omega = rng.random_range(1..60usize);
        let delta = rng.random_range(1..30usize);
        let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let frames = frames_at(&vec![1; n], &times);
        let got = partition(&frames, &WindowSpec::sample(omega, delta).unwrap()).unwrap().len();
        let enumerated = (0..).take_while(|&k| k * delta + omega <= n).count();
        let formula = if n < omega { 0 } else { (n - omega) / delta + 1 };
        if got != enumerated || got != formula {
            return Outcome::Fail(format!(
                "sample trial {trial}: n {n} omega {omega} delta {delta}: got {got}, enumeration {enumerated}, formula {formula}"
            ));
        }
    }
    Outcome::Pass("500 triples per mode".into())
}

fn graph(edges: &[(u32, u32, u64)]) -> MsgGraph {
    let mut g = MsgGraph {
        window_index: 0,
        label: Label::Benign,
        nodes: Default::default(),
        edges: Default::default(),
        annotations: Default::default(),
        coverage_warnings: Vec::new(),
    };
    for &(u, v, w) in edges {
        g.nodes.insert(u);
        g.nodes.insert(v);
        g.edges.insert((u, v), w);
    }
    g
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

// 3. node2vec correctness.
fn node2vec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..300 {
        let n = rng.random_range(2..12u32);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if rng.random_bool(0.35) {
                    edges.push((u, v, rng.random_range(1..50u64)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let ig = IndexedGraph::from_msg(&graph(&edges));
        let p = rng.random_range(0.1..4.0);
        let q = rng.random_range(0.1..4.0);
        for cur in 0..ig.len() {
            if ig.out_degree(cur) == 0 {
                continue;
            }
            let prevs = std::iter::once(None).chain((0..ig.len()).filter(|&x| ig.has_edge(x, cur)).map(Some));
            for prev in prevs {
                let dist = transition_distribution(&ig, prev, cur, p, q).unwrap();
                let sum: f64 = dist.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Outcome::Fail(format!("trial {trial}: distribution sums to {sum}"));
                }
                let first_order = transition_distribution(&ig, prev, cur, 1.0, 1.0).unwrap();
                let w = ig.neighbor_weights(cur);
                let total: f64 = w.iter().sum();
                let expected: Vec<f64> = w.iter().map(|x| x / total).collect();
                if first_order != expected {
                    return Outcome::Fail(format!("trial {trial}: p = q = 1 is not weight-proportional"));
                }
            }
        }
    }

    let mut edges = Vec::new();
    for base in [0u32, 5] {
        for u in base..base + 5 {
            for v in base..base + 5 {
                if u != v {
                    edges.push((u, v, 1));
                }
            }
        }
    }
    edges.push((4, 5, 1));
    edges.push((5, 4, 1));
    let emb = embed_graph(&graph(&edges), &Node2VecParams::default());
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for a in 0..10u32 {
        for b in a + 1..10 {
            let c = cosine(emb.vector(a).unwrap(), emb.vector(b).unwrap());
            if (a < 5) == (b < 5) {
                intra.push(c);
            } else {
                inter.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&intra) - mean(&inter);
    verdict(
        gap >= 0.1,
        format!(
            "barbell intra {:.3} inter {:.3} gap {:.3} (need >= 0.1)",
            mean(&intra),
            mean(&inter),
            gap
        ),
    )
}

fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

// 4. AUC oracle.
fn auc() -> Outcome {
    let worked = auc_roc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap().auc;
    if worked != 0.75 {
        return Outcome::Fail(format!("worked example gave {worked}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let got = auc_roc(&scores, &labels).unwrap().auc;
        let want = auc_oracle(&scores, &labels);
        if got != want {
            return Outcome::Fail(format!("set {done}: {got} vs oracle {want}"));
        }
        done += 1;
    }
    Outcome::Pass("worked example 0.75; 1000 random sets with ties".into())
}

fn ecdf_sup(x: &[f64], y: &[f64]) -> f64 {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    x.iter()
        .chain(y)
        .map(|&t| (ecdf(x, t) - ecdf(y, t)).abs())
        .fold(0.0, f64::max)
}

// 5. Statistics oracles.
fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let shift = rng.random_range(0.0..2.0);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0) + shift).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        let e = mann_whitney_exact(&x, &y, Alternative::Greater).unwrap();
        let a = mann_whitney_normal(&x, &y, Alternative::Greater).unwrap();
        worst = worst.max((e.p - a.p).abs());
    }
    if worst > 0.02 {
        return Outcome::Fail(format!("exact vs normal p differ by {worst:.4} (limit 0.02)"));
    }
    for trial in 0..1000 {
        let nx = rng.random_range(1..60);
        let ny = rng.random_range(1..60);
        let levels = rng.random_range(2..40);
        let x: Vec<f64> = (0..nx).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..ny).map(|_| rng.random_range(0..levels) as f64 + 0.5 * rng.random_range(0..3) as f64).collect();
        let d = ks_two_sample(&x, &y).unwrap().d;
        if d != ecdf_sup(&x, &y) {
            return Outcome::Fail(format!("KS trial {trial}: {d} vs brute force {}", ecdf_sup(&x, &y)));
        }
    }
    Outcome::Pass(format!("max |exact - normal| p = {worst:.4} over 1000 8+8 samples; 1000 KS pairs"))
}

// 6. SMOTE geometry and fold leakage.
fn smote_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..200 {
        let pos = rng.random_range(2..25);
        let neg = pos + rng.random_range(0..60);
        let k = rng.random_range(2..6);
        let rows: Vec<Vec<f64>> = (0..pos + neg)
            .map(|_| (0..k).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let mut labels: Vec<bool> = (0..pos + neg).map(|i| i < pos).collect();
        labels.shuffle(&mut rng);
        let data = Dataset::new(rows, labels).unwrap();
        let out = smote(&data, 5, trial).unwrap();
        let d = &out.dataset;
        if d.positives() != d.negatives() {
            return Outcome::Fail(format!("trial {trial}: {} vs {} after SMOTE", d.positives(), d.negatives()));
        }
        for (s, row) in out.synthetic.iter().zip(data.len()..d.len()) {
            let (a, b, x) = (data.row(s.base), data.row(s.neighbor), d.row(row));
            if !(data.labels()[s.base] && data.labels()[s.neighbor] && d.labels()[row]) {
                return Outcome::Fail(format!("trial {trial}: interpolation outside the minority class"));
            }
            for c in 0..k {
                let span = b[c] - a[c];
                let resid = if span.abs() > 1e-6 {
                    ((x[c] - a[c]) / span - s.lambda).abs()
                } else {
                    (x[c] - a[c]).abs()
                };
                if resid > 1e-9 || !(0.0..=1.0).contains(&s.lambda) {
                    return Outcome::Fail(format!("trial {trial}: row {row} off its segment by {resid:e}"));
                }
            }
        }
    }
    for trial in 0..20 {
        let n = 120;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let labels: Vec<bool> = (0..n).map(|i| i % 7 == 0).collect();
        let data = Dataset::new(rows, labels.clone()).unwrap();
        let params = ForestParams { trees: 10, ..ForestParams::default() };
        let report = cross_validate(&data, 5, &params, 5, trial).unwrap();
        for f in &report.folds {
            let train: std::collections::BTreeSet<usize> = f.fold.train.iter().copied().collect();
            let leaked = f.smote_sources.iter().any(|i| !train.contains(i) || f.fold.validation.contains(i));
            if leaked {
                return Outcome::Fail(format!("trial {trial}: SMOTE used a validation row"));
            }
            let neg = f.fold.train.iter().filter(|&&i| !labels[i]).count();
            if f.train_size_after_smote != 2 * neg {
                return Outcome::Fail(format!("trial {trial}: training split not balanced"));
            }
        }
    }
    Outcome::Pass("200 SMOTE runs on-segment within 1e-9; 20 CV runs leak-free".into())
}

fn synthetic_input() -> SweepInput {
    let out = run_scenario(&default_scenario()).expect("default scenario");
    SweepInput {
        train: CaptureInput::new(out.frames, Some(&out.db), out.attacks),
        test: None,
    }
}

fn end_to_end_config(jobs: usize) -> SweepConfig {
    let omegas: Vec<f64> = (2..=8).map(f64::from).collect();
    let deltas: Vec<f64> = (1..=4).map(f64::from).collect();
    SweepConfig {
        mode: WindowMode::Time,
        grid: grid(&omegas, &deltas),
        node2vec: Node2VecParams {
            walks_per_node: 20,
            ..Node2VecParams::default()
        },
        jobs,
        ..SweepConfig::default()
    }
}

fn csvs(results: &[SweepResult]) -> Vec<String> {
    results.iter().map(|r| heatmap_csv(&r.cells)).collect()
}

thread_local! {
    static END_TO_END: std::cell::RefCell<Option<Vec<String>>> = const { std::cell::RefCell::new(None) };
}

// 7. End-to-end synthetic detection.
fn end_to_end() -> Outcome {
    let input = synthetic_input();
    let results = run_sweep(&input, &end_to_end_config(1)).unwrap();
    END_TO_END.with(|c| *c.borrow_mut() = Some(csvs(&results)));
    let base = results.iter().find(|r| r.setting == Setting::EmbeddingsOnly).unwrap();
    let comb = results.iter().find(|r| r.setting == Setting::EmbeddingsPlusTimeseries).unwrap();
    let (Some(sb), Some(sc)) = (base.summary, comb.summary) else {
        return Outcome::Fail("a heatmap has no valid cell".into());
    };
    let test = compare_settings(base, comb).unwrap();
    let invalid = results.iter().flat_map(|r| &r.cells).filter(|c| c.auc.is_nan()).count();
    let a = sc.mu >= sb.mu;
    let b = sc.max.value >= 0.90;
    let c = test.u_pvalue < 0.05;
    verdict(
        a && b && c && invalid == 0,
        format!(
            "(a) mean {:.3} >= {:.3}: {a}; (b) combined max {:.3} at ({},{}) >= 0.90: {b}; (c) U = {} p = {:.2e} < 0.05: {c}; invalid cells {invalid}",
            sc.mu, sb.mu, sc.max.value, sc.max.omega, sc.max.delta, test.u_statistic, test.u_pvalue
        ),
    )
}

fn road_capture(dir: &Path) -> Result<CaptureInput, String> {
    let cap = load_capture(dir.join("capture.log")).map_err(|e| e.to_string())?;
    let db = SignalDb::load(dir.join("signals.json")).map_err(|e| e.to_string())?;
    let meta = load_attack_metadata(dir.join("metadata.json")).map_err(|e| e.to_string())?;
    Ok(CaptureInput::new(cap.frames, Some(&db), meta))
}

// 8. Real-data reproduction, only with a local copy of the dataset.
fn road() -> Outcome {
    let Some(root) = std::env::var_os("CANMSG_ROAD_DIR") else {
        return Outcome::Skip("CANMSG_ROAD_DIR not set; dataset absent".into());
    };
    let root = Path::new(&root);
    let mut dirs: Vec<_> = match std::fs::read_dir(root) {
        Ok(it) => it.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect(),
        Err(e) => return Outcome::Fail(format!("{}: {e}", root.display())),
    };
    dirs.sort();
    let mut cells = Vec::new();
    for omega in 2..=15u32 {
        for delta in 1..omega {
            cells.push((f64::from(omega), f64::from(delta)));
        }
    }
    let config = SweepConfig {
        grid: cells,
        ..SweepConfig::default()
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for dir in dirs {
        let input = match road_capture(&dir) {
            Ok(c) => SweepInput { train: c, test: None },
            Err(e) => return Outcome::Fail(format!("{}: {e}", dir.display())),
        };
        let results = match run_sweep(&input, &config) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        let base = &results[0];
        let comb = &results[1];
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        let t = compare_settings(base, comb).unwrap();
        ok &= t.u_pvalue < 0.05;
        notes.push(format!("{name}: U p = {:.2e}", t.u_pvalue));
        if name.contains("correlated") {
            let mb = base.summary.map_or(f64::NAN, |s| s.max.value);
            let mc = comb.summary.map_or(f64::NAN, |s| s.max.value);
            ok &= (mb - 0.98).abs() <= 0.03 && (mc - 0.99).abs() <= 0.02;
            notes.push(format!("{name}: max {mb:.3} (0.98 +- 0.03), {mc:.3} (0.99 +- 0.02)"));
        }
    }
    verdict(ok, notes.join("; "))
}

// 9. Determinism across job counts.
fn determinism() -> Outcome {
    let first = END_TO_END.with(|c| c.borrow().clone());
    let first = match first {
        Some(v) => v,
        None => csvs(&run_sweep(&synthetic_input(), &end_to_end_config(1)).unwrap()),
    };
    let second = csvs(&run_sweep(&synthetic_input(), &end_to_end_config(2)).unwrap());
    verdict(
        first == second,
        format!("{} heatmap CSVs compared between jobs = 1 and jobs = 2", first.len()),
    )
}

fn main() {
    let checks: [(u32, &str, Check, Duration); 9] = [
        (1, "MSG oracle equivalence", msg_oracle, Duration::from_secs(5)),
        (2, "window-count formula", window_counts, Duration::from_secs(5)),
        (3, "node2vec correctness", node2vec, Duration::from_secs(30)),
        (4, "AUC oracle", auc, Duration::from_secs(5)),
        (5, "statistics oracles", statistics, Duration::from_secs(10)),
        (6, "SMOTE geometry", smote_geometry, Duration::from_secs(600)),
        (7, "end-to-end synthetic detection", end_to_end, Duration::from_secs(600)),
        (8, "ROAD reproduction", road, Duration::MAX),
        (9, "determinism across --jobs", determinism, Duration::MAX),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, check, budget) in checks {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Outcome::Fail("panicked".into()));
        let elapsed = t.elapsed();
        let outcome = match outcome {
            Outcome::Pass(d) if elapsed > budget => Outcome::Fail(format!("{d}; over the {budget:?} budget")),
            o => o,
        };
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} [{tag}] {name} ({:.2} s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
