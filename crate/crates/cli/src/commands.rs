use std::fmt::Write as _;
use std::path::Path;

use canmsg::can_io::{
    decode_signals, parse_attack_metadata, parse_candump, write_candump, AttackInterval, CanFrame,
    Capture, SignalDb,
};
use canmsg::embedding::{feature_table_csv, parse_feature_table};
use canmsg::eval::report::test_table;
use canmsg::eval::{
    auc_roc, capture_features, cell_node2vec, compare_cells, compare_settings, heatmap_csv,
    markdown_report, parse_heatmap_csv, run_sweep, summary_json, CaptureInput, Evaluation, Setting,
    SweepInput, SweepResult,
};
use canmsg::learn::{cross_validate, smote, Dataset, ForestModel, ForestParams};
use canmsg::msg_graph::{annotate_nodes, build_msg};
use canmsg::seed;
use canmsg::synth::{default_scenario, run_scenario};
use canmsg::windowing::{label_windows, partition, Label, WindowSpec};
use log::{info, warn};

use crate::cli::{
    Cli, Command, CompareArgs, DecodeArgs, EvaluateArgs, ReportArgs, SweepArgs, SynthArgs,
    TrainArgs, WindowsArgs,
};
use crate::config::{parse_scenario, RunConfig, Source};
use crate::error::CliError;
use crate::manifest::{emit, Manifest, OutDir};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = cli.base_config()?;
    match &cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::Decode(a) => {
            a.input.apply(&mut cfg);
            decode(cfg, a)
        }
        Command::Windows(a) => {
            a.input.apply(&mut cfg);
            a.window.apply(&mut cfg);
            windows(cfg, a)
        }
        Command::Graphs(a) => {
            a.input.apply(&mut cfg);
            a.window.apply(&mut cfg);
            set_out_dir(&mut cfg, a.out_dir.as_deref());
            graphs(cfg)
        }
        Command::Embed(a) => {
            a.input.apply(&mut cfg);
            a.window.apply(&mut cfg);
            a.embed.apply(&mut cfg);
            set_out_dir(&mut cfg, a.out_dir.as_deref());
            embed(cfg)
        }
        Command::Train(a) => {
            a.forest.apply(&mut cfg);
            train(cfg, a)
        }
        Command::Evaluate(a) => {
            a.forest.apply(&mut cfg);
            evaluate(cfg, a)
        }
        Command::Sweep(a) => {
            apply_sweep(&mut cfg, a);
            sweep(cfg)
        }
        Command::Compare(a) => compare(cfg, a),
        Command::Report(a) => report(cfg, a),
    }
}

fn set_out_dir(cfg: &mut RunConfig, dir: Option<&Path>) {
    if let Some(d) = dir {
        cfg.out_dir = Some(d.to_path_buf());
    }
}

fn apply_sweep(cfg: &mut RunConfig, a: &SweepArgs) {
    a.input.apply(cfg);
    a.window.apply(cfg);
    a.grid.apply(cfg);
    a.embed.apply(cfg);
    a.forest.apply(cfg);
    a.evaluation.apply(cfg);
    set_out_dir(cfg, a.out_dir.as_deref());
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// One capture with its ground truth.
struct Part {
    frames: Vec<CanFrame>,
    attacks: Vec<AttackInterval>,
}

struct Data {
    train: Part,
    test: Option<Part>,
    db: Option<SignalDb>,
}

impl Data {
    fn inputs(&self) -> (CaptureInput, Option<CaptureInput>) {
        let mk =
            |p: &Part| CaptureInput::new(p.frames.clone(), self.db.as_ref(), p.attacks.clone());
        (mk(&self.train), self.test.as_ref().map(mk))
    }
}

fn load_part(m: &mut Manifest, capture: &Path, metadata: Option<&Path>) -> Result<Part, CliError> {
    let text = m.read_input(capture)?;
    let frames =
        Capture::from_frames(parse_candump(&text).map_err(|e| in_file(capture, e))?).frames;
    let attacks = match metadata {
        Some(p) => parse_attack_metadata(&m.read_input(p)?).map_err(|e| in_file(p, e))?,
        None => Vec::new(),
    };
    Ok(Part { frames, attacks })
}

fn in_file(path: &Path, e: canmsg::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Read the configured capture files, or generate the scenario in memory.
fn load_data(cfg: &RunConfig, m: &mut Manifest) -> Result<Data, CliError> {
    match cfg.source()? {
        Source::Files(p) => {
            let train = load_part(m, &p.capture, p.metadata.as_deref())?;
            let test = match &p.test_capture {
                Some(t) => Some(load_part(m, t, p.test_metadata.as_deref())?),
                None => None,
            };
            let db = match &p.signals {
                Some(s) => Some(SignalDb::from_json(&m.read_input(s)?).map_err(|e| in_file(s, e))?),
                None => None,
            };
            Ok(Data { train, test, db })
        }
        Source::Synth(path) => {
            let scenario = match &path {
                Some(p) => parse_scenario(&m.read_input(p)?, p)?,
                None => default_scenario(),
            };
            let out = run_scenario(&scenario)?;
            Ok(Data {
                train: Part {
                    frames: out.frames,
                    attacks: out.attacks,
                },
                test: None,
                db: Some(out.db),
            })
        }
    }
}

fn synth(mut cfg: RunConfig, a: &SynthArgs) -> Result<(), CliError> {
    if a.scenario.is_some() {
        cfg.synth = Some(crate::config::SynthSource {
            scenario: a.scenario.clone(),
        });
    }
    set_out_dir(&mut cfg, a.out_dir.as_deref());
    cfg.input = None;
    let mut m = Manifest::new("synth", &cfg);
    let path = cfg.synth.as_ref().and_then(|s| s.scenario.clone());
    let mut scenario = match &path {
        Some(p) => parse_scenario(&m.read_input(p)?, p)?,
        None => default_scenario(),
    };
    if let Some(s) = cfg.seed {
        scenario.profile.seed = s;
    }
    m.seed = Some(scenario.profile.seed);
    m.resolved = Some(serde_json::to_value(&scenario).expect("scenario serializes"));
    let out = run_scenario(&scenario)?;
    let mut dir = OutDir::create(cfg.out_dir()?, m)?;
    dir.write("capture.log", &write_candump(&out.frames))?;
    dir.write("signals.json", &(out.db.to_json() + "\n"))?;
    dir.write("metadata.json", &json(&out.attacks))?;
    let manifest = dir.finish()?;
    info!(
        "{} frames, {} signals, {} attack intervals; manifest {}",
        out.frames.len(),
        out.db.signals.len(),
        out.attacks.len(),
        manifest.display()
    );
    Ok(())
}

fn decode(cfg: RunConfig, a: &DecodeArgs) -> Result<(), CliError> {
    let mut m = Manifest::new("decode", &cfg);
    let data = load_data(&cfg, &mut m)?;
    let db = data
        .db
        .as_ref()
        .ok_or_else(|| CliError::Config("decode needs a signal database (--signals)".into()))?;
    let decoded = decode_signals(&data.train.frames, &db.signals);
    let mut rows: Vec<(f64, usize, f64)> = Vec::new();
    for (i, s) in decoded.series.iter().enumerate() {
        rows.extend(s.samples().map(|(t, v)| (t, i, v)));
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut out = String::from("timestamp,can_id,signal,value\n");
    for (t, i, v) in rows {
        let d = &db.signals[i];
        let _ = writeln!(out, "{t},{:X},{},{v}", d.can_id, d.name);
    }
    emit(a.output.as_deref(), &out, m)
}

fn label_name(l: Label) -> &'static str {
    if l.is_attack() {
        "attack"
    } else {
        "benign"
    }
}

fn windows(cfg: RunConfig, a: &WindowsArgs) -> Result<(), CliError> {
    let mut m = Manifest::new("windows", &cfg);
    let (omega, delta) = cfg.window_size()?;
    let spec = WindowSpec::new(cfg.mode(), omega, delta)?;
    let data = load_data(&cfg, &mut m)?;
    let mut ws = partition(&data.train.frames, &spec)?;
    label_windows(&mut ws, &data.train.attacks);
    let mut out = String::from("index,start,end,time_start,time_end,frames,label\n");
    for w in &ws {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            w.index,
            w.start,
            w.end,
            w.time_start,
            w.time_end,
            w.frames.len(),
            label_name(w.label)
        );
    }
    emit(a.output.as_deref(), &out, m)
}

fn graphs(cfg: RunConfig) -> Result<(), CliError> {
    let mut m = Manifest::new("graphs", &cfg);
    let (omega, delta) = cfg.window_size()?;
    let spec = WindowSpec::new(cfg.mode(), omega, delta)?;
    let data = load_data(&cfg, &mut m)?;
    let (capture, _) = data.inputs();
    let mut ws = partition(&capture.frames, &spec)?;
    label_windows(&mut ws, &capture.attacks);
    let mut dir = OutDir::create(cfg.out_dir()?, m)?;
    for w in &ws {
        let mut g = build_msg(w);
        if !capture.table.is_empty() {
            annotate_nodes(&mut g, &capture.table, w);
        }
        let stem = format!("window_{:05}", w.index);
        dir.write(&format!("{stem}.edges"), &g.edge_list())?;
        dir.write(&format!("{stem}.json"), &json(&g.annotation_json()))?;
    }
    info!("{} windows", ws.len());
    dir.finish()?;
    Ok(())
}

fn check_signals(settings: &[Setting], capture: &CaptureInput) -> Result<(), CliError> {
    match settings.iter().find(|s| s.uses_signals()) {
        Some(s) if capture.canonical.is_empty() => Err(CliError::Config(format!(
            "setting {s} needs a signal database (--signals)"
        ))),
        _ => Ok(()),
    }
}

fn embed(cfg: RunConfig) -> Result<(), CliError> {
    let mut m = Manifest::new("embed", &cfg);
    let (omega, delta) = cfg.window_size()?;
    let spec = WindowSpec::new(cfg.mode(), omega, delta)?;
    let sweep = cfg.sweep_config();
    sweep.node2vec.validate()?;
    // Same per-cell seeding as `sweep`, so these tables match its features.
    let n2v = cell_node2vec(&sweep, omega, delta);
    m.resolved = Some(serde_json::json!({ "node2vec": n2v }));
    let data = load_data(&cfg, &mut m)?;
    let (train, test) = data.inputs();
    check_signals(&sweep.settings, &train)?;
    let mut dir = OutDir::create(cfg.out_dir()?, m)?;
    let parts = std::iter::once(("", &train)).chain(test.as_ref().map(|t| ("_test", t)));
    for (suffix, capture) in parts {
        let tables = capture_features(capture, &spec, &sweep.settings, &n2v)?;
        for (s, t) in sweep.settings.iter().zip(&tables) {
            dir.write(
                &format!("features_{}{suffix}.csv", s.as_str()),
                &feature_table_csv(t),
            )?;
        }
    }
    dir.finish()?;
    Ok(())
}

fn load_features(m: &mut Manifest, path: &Path) -> Result<Dataset, CliError> {
    let table = parse_feature_table(&m.read_input(path)?).map_err(|e| in_file(path, e))?;
    let data = Dataset::new(table.rows, table.labels).map_err(|e| in_file(path, e))?;
    data.require_both_classes().map_err(|e| in_file(path, e))?;
    Ok(data)
}

fn forest_params(cfg: &RunConfig) -> ForestParams {
    ForestParams {
        seed: seed::derive(cfg.seed.unwrap_or(0), seed::STREAM_TREE),
        ..cfg.forest.clone()
    }
}

fn train(cfg: RunConfig, a: &TrainArgs) -> Result<(), CliError> {
    let mut m = Manifest::new("train", &cfg);
    let data = load_features(&mut m, &a.features)?;
    let sweep = cfg.sweep_config();
    let forest = forest_params(&cfg);
    forest.validate()?;
    let balanced = smote(
        &data,
        sweep.smote_k,
        seed::derive(sweep.seed, seed::STREAM_SMOTE),
    )?;
    let model = ForestModel::train(&balanced.dataset, &forest)?;
    info!(
        "{} rows ({} synthetic), {} trees",
        balanced.dataset.len(),
        balanced.synthetic.len(),
        forest.trees
    );
    emit(Some(&a.model_out), &(model.to_json() + "\n"), m)
}

fn evaluate(cfg: RunConfig, a: &EvaluateArgs) -> Result<(), CliError> {
    let mut m = Manifest::new("evaluate", &cfg);
    let data = load_features(&mut m, &a.features)?;
    let sweep = cfg.sweep_config();
    let (scores, method) = match &a.model {
        Some(path) => {
            let model =
                ForestModel::from_json(&m.read_input(path)?).map_err(|e| in_file(path, e))?;
            (
                model.predict_dataset(&data)?,
                serde_json::json!({ "kind": "model" }),
            )
        }
        None => {
            let folds = a.folds.unwrap_or(match sweep.evaluation {
                Evaluation::Cv { folds } => folds,
                Evaluation::TrainTest => 5,
            });
            let forest = forest_params(&cfg);
            forest.validate()?;
            let report = cross_validate(
                &data,
                folds,
                &forest,
                sweep.smote_k,
                seed::derive(sweep.seed, seed::STREAM_FOLD),
            )?;
            (
                report.scores,
                serde_json::json!({ "kind": "cv", "folds": folds }),
            )
        }
    };
    let roc = auc_roc(&scores, data.labels())?;
    let out = serde_json::json!({
        "auc": roc.auc,
        "positives": roc.positives,
        "negatives": roc.negatives,
        "evaluation": method,
    });
    emit(a.output.as_deref(), &json(&out), m)
}

/// File-name-safe form of an attack name.
fn file_stem(attack: &str) -> String {
    attack
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn sweep(cfg: RunConfig) -> Result<(), CliError> {
    let mut m = Manifest::new("sweep", &cfg);
    let config = cfg.sweep_config();
    config.validate()?;
    m.resolved = Some(
        serde_json::to_value(canmsg::eval::SweepConfig {
            jobs: 0,
            ..config.clone()
        })
        .expect("config serializes"),
    );
    let data = load_data(&cfg, &mut m)?;
    let (train, test) = data.inputs();
    let input = SweepInput { train, test };
    input
        .validate(&config)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut dir = OutDir::create(cfg.out_dir()?, m)?;
    let results = run_sweep(&input, &config)?;
    for r in &results {
        let name = format!("{}_{}", file_stem(&r.attack), r.setting.as_str());
        dir.write(&format!("heatmap_{name}.csv"), &heatmap_csv(&r.cells))?;
        dir.write(
            &format!("summary_{name}.json"),
            &(summary_json(r.summary.as_ref()) + "\n"),
        )?;
        let invalid = r.cells.iter().filter(|c| c.auc.is_nan()).count();
        if invalid > 0 {
            warn!("{name}: {invalid} of {} cells invalid", r.cells.len());
        }
        match &r.summary {
            Some(s) => println!(
                "{} {}: mean {:.4} sd {:.4} max {:.4} at ({}, {}), {} valid cells",
                r.attack,
                r.setting,
                s.mu,
                s.sigma,
                s.max.value,
                s.max.omega,
                s.max.delta,
                s.valid_cells
            ),
            None => println!("{} {}: no valid cells", r.attack, r.setting),
        }
    }
    dir.write("sweep.json", &json(&results))?;
    dir.finish()?;
    Ok(())
}

fn compare(cfg: RunConfig, a: &CompareArgs) -> Result<(), CliError> {
    let mut m = Manifest::new("compare", &cfg);
    let mut read = |p: &Path| -> Result<_, CliError> {
        parse_heatmap_csv(&m.read_input(p)?).map_err(|e| in_file(p, e))
    };
    let base = read(&a.baseline)?;
    let cand = read(&a.candidate)?;
    let result =
        compare_cells(&a.attack, &base, &cand).map_err(|e| CliError::Config(e.to_string()))?;
    let text = json(&result);
    if a.json {
        print!("{text}");
    } else {
        print!("{}", test_table(std::slice::from_ref(&result)));
    }
    if a.output.is_some() {
        emit(a.output.as_deref(), &text, m)?;
    }
    Ok(())
}

fn report(cfg: RunConfig, a: &ReportArgs) -> Result<(), CliError> {
    let mut m = Manifest::new("report", &cfg);
    let mut results: Vec<SweepResult> = Vec::new();
    for p in &a.sweeps {
        let text = m.read_input(p)?;
        let mut r: Vec<SweepResult> = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        results.append(&mut r);
    }
    let mut tests = Vec::new();
    let mut attacks: Vec<&str> = Vec::new();
    for r in &results {
        if !attacks.contains(&r.attack.as_str()) {
            attacks.push(&r.attack);
        }
    }
    for attack in attacks {
        let find = |s: Setting| {
            results
                .iter()
                .find(|r| r.attack == attack && r.setting == s)
        };
        if let (Some(base), Some(cand)) = (
            find(Setting::EmbeddingsOnly),
            find(Setting::EmbeddingsPlusTimeseries),
        ) {
            match compare_settings(base, cand) {
                Ok(t) => tests.push(t),
                Err(e) => warn!("{attack}: no test: {e}"),
            }
        }
    }
    emit(a.output.as_deref(), &markdown_report(&results, &tests), m)
}
