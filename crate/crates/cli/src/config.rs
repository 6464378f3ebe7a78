//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use canmsg::embedding::Node2VecParams;
use canmsg::eval::{grid, Evaluation, Setting, SweepConfig};
use canmsg::learn::ForestParams;
use canmsg::synth::Scenario;
use canmsg::windowing::WindowMode;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. For `synth` it replaces the scenario's own seed.
    pub seed: Option<u64>,
    /// Worker threads for sweep cells; 0 or absent means all cores.
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub settings: Option<Vec<Setting>>,
    pub smote_k: Option<usize>,
    pub input: Option<InputPaths>,
    pub synth: Option<SynthSource>,
    pub window: WindowConfig,
    pub node2vec: Node2VecParams,
    pub forest: ForestParams,
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub capture: PathBuf,
    pub signals: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub test_capture: Option<PathBuf>,
    pub test_metadata: Option<PathBuf>,
}

/// Generate the data in memory instead of reading files. Without a scenario
/// file the built-in desk-scale scenario is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSource {
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub mode: Option<WindowMode>,
    /// Single window for `windows`, `graphs` and `embed`.
    pub omega: Option<f64>,
    pub delta: Option<f64>,
    /// Sweep grid as a product, omega-major.
    pub omegas: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    /// Sweep grid as explicit cells; wins over `omegas` x `deltas`.
    pub cells: Option<Vec<(f64, f64)>>,
}

/// Where the frames come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Files(InputPaths),
    Synth(Option<PathBuf>),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn source(&self) -> Result<Source, CliError> {
        match (&self.input, &self.synth) {
            (Some(i), None) => Ok(Source::Files(i.clone())),
            (None, Some(s)) => Ok(Source::Synth(s.scenario.clone())),
            (Some(_), Some(_)) => Err(CliError::Config(
                "give either input paths or a synth scenario, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "no input: pass --capture, --scenario or --synth, or set [input] / [synth]".into(),
            )),
        }
    }

    pub fn mode(&self) -> WindowMode {
        self.window.mode.unwrap_or(WindowMode::Time)
    }

    /// The single window of the per-window commands.
    pub fn window_size(&self) -> Result<(f64, f64), CliError> {
        match (self.window.omega, self.window.delta) {
            (Some(o), Some(d)) => Ok((o, d)),
            _ => Err(CliError::Config(
                "window size needs --omega and --delta".into(),
            )),
        }
    }

    pub fn grid(&self) -> Vec<(f64, f64)> {
        let w = &self.window;
        if let Some(cells) = &w.cells {
            return cells.clone();
        }
        match (&w.omegas, &w.deltas, w.omega, w.delta) {
            (Some(o), Some(d), _, _) => grid(o, d),
            (Some(o), None, _, Some(d)) => grid(o, &[d]),
            (None, Some(d), Some(o), _) => grid(&[o], d),
            (None, None, Some(o), Some(d)) => vec![(o, d)],
            _ => SweepConfig::default().grid,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let d = SweepConfig::default();
        SweepConfig {
            mode: self.mode(),
            grid: self.grid(),
            settings: self.settings.clone().unwrap_or(d.settings),
            node2vec: self.node2vec.clone(),
            forest: self.forest.clone(),
            smote_k: self.smote_k.unwrap_or(d.smote_k),
            evaluation: self.evaluation.unwrap_or(d.evaluation),
            seed: self.seed.unwrap_or(0),
            jobs: self.jobs.unwrap_or(0),
        }
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory: pass --out-dir".into()))
    }
}

/// Parse a scenario from `.toml` or `.json` text, chosen by extension.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, CliError> {
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(text).map_err(|e| e.to_string()),
        _ => toml::from_str(text).map_err(|e| e.to_string()),
    };
    let scenario: Scenario =
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    scenario.profile.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file_parses() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 3
            settings = ["embeddings_plus_timeseries"]
            [input]
            capture = "a.log"
            signals = "s.json"
            [window]
            mode = "time"
            omegas = [2.0, 4.0]
            deltas = [1.0]
            [node2vec]
            dimensions = 8
            [forest]
            trees = 10
            [evaluation]
            kind = "train_test"
            "#,
        )
        .unwrap();
        let sweep = cfg.sweep_config();
        assert_eq!(sweep.grid, vec![(2.0, 1.0), (4.0, 1.0)]);
        assert_eq!(sweep.node2vec.dimensions, 8);
        assert_eq!(
            sweep.node2vec.walk_length,
            Node2VecParams::default().walk_length
        );
        assert_eq!(sweep.forest.trees, 10);
        assert_eq!(sweep.evaluation, Evaluation::TrainTest);
        assert_eq!(sweep.seed, 3);
        assert!(matches!(cfg.source(), Ok(Source::Files(_))));
    }

    #[test]
    fn unknown_keys_and_double_source_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        let cfg: RunConfig = toml::from_str("[input]\ncapture = \"a\"\n[synth]\n").unwrap();
        assert!(cfg.source().is_err());
        assert!(RunConfig::default().source().is_err());
    }

    #[test]
    fn explicit_cells_win() {
        let mut cfg = RunConfig::default();
        cfg.window.omegas = Some(vec![2.0]);
        cfg.window.deltas = Some(vec![1.0]);
        cfg.window.cells = Some(vec![(4.0, 4.0)]);
        assert_eq!(cfg.grid(), vec![(4.0, 4.0)]);
    }
}
