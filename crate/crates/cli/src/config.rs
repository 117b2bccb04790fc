//! Experiment configuration: one TOML file per experiment, with built-in
//! presets and dotted-key overrides.

use std::path::{Path, PathBuf};

use homing_core::dataset::{DatasetSpec, GridEdges, TrajectoryPattern};
use homing_core::evaluation::{StreamConfig, STREAM_START_RADIUS};
use homing_core::geometry::Position2D;
use homing_core::homing::{perimeter_outbounds, DriftRule, MissionSpec};
use homing_core::network::{OptimizerKind, Precision, TrainConfig};
use homing_core::omni::ImagingConfig;
use homing_core::world::LandmarkWorld;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seeds world generation, shuffling, initialization and drift.
    pub seed: u64,
    pub out: PathBuf,
    pub world: WorldConfig,
    pub imaging: ImagingChoice,
    pub dataset: DatasetConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub stream: StreamSection,
    pub mission: MissionConfig,
    pub gradcam: GradcamConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 1,
            out: PathBuf::from("out"),
            world: WorldConfig::default(),
            imaging: ImagingChoice::Named("full".into()),
            dataset: DatasetConfig::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
            stream: StreamSection::default(),
            mission: MissionConfig::default(),
            gradcam: GradcamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// `empty`, `three-tree` or `forest`.
    pub preset: String,
    /// World description file; takes precedence over `preset`.
    pub file: Option<PathBuf>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { preset: "three-tree".into(), file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImagingChoice {
    /// `full` or `reduced`.
    Named(String),
    Custom(ImagingConfig),
}

/// A named pattern centered on the nest, or an explicit one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternChoice {
    /// `spiral`, `grid` (learning grid) or `eval-grid`.
    Named(String),
    Custom(TrajectoryPattern),
}

impl PatternChoice {
    pub fn resolve(&self, nest: Position2D) -> Result<TrajectoryPattern, CliError> {
        match self {
            PatternChoice::Named(n) => match n.as_str() {
                "spiral" => Ok(TrajectoryPattern::learning_spiral(nest)),
                "grid" => Ok(TrajectoryPattern::learning_grid(nest)),
                "eval-grid" => Ok(TrajectoryPattern::evaluation_grid(nest)),
                "coarse-eval-grid" => Ok(TrajectoryPattern::Grid {
                    center: nest,
                    side: 10.0,
                    spacing: 1.0,
                    edges: GridEdges::Closed,
                }),
                other => Err(CliError::Config(format!(
                    "unknown pattern {other:?} (expected spiral, grid, eval-grid or coarse-eval-grid)"
                ))),
            },
            PatternChoice::Custom(p) => Ok(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub pattern: PatternChoice,
    pub gaze_count: usize,
    /// Degrees.
    pub label_noise_sigma: f64,
    /// Also write the per-location base panoramas.
    pub save_images: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            pattern: PatternChoice::Named("spiral".into()),
            gaze_count: 360,
            label_noise_sigma: 0.0,
            save_images: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub precision: Precision,
    pub log_every: usize,
    /// Training-set error is measured on every n-th example; 0 skips it.
    pub error_stride: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            optimizer: d.optimizer,
            precision: d.precision,
            log_every: d.log_every,
            error_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Defaults to `model.bin` in the output directory.
    pub model: Option<PathBuf>,
    pub grid: PatternChoice,
    pub gazes_deg: Vec<f64>,
    /// Also evaluate with the landmark array rotated by this many degrees.
    pub rotate_landmarks_deg: Option<f64>,
    pub svg: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model: None,
            grid: PatternChoice::Named("eval-grid".into()),
            gazes_deg: vec![0.0],
            rotate_landmarks_deg: None,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub model: Option<PathBuf>,
    pub starts: usize,
    /// Start-circle radius around the nest.
    pub radius: f64,
    pub step: f64,
    pub max_steps: usize,
    pub convergence_radius: f64,
    pub stall_window: usize,
    pub domain_margin: f64,
}

impl Default for StreamSection {
    fn default() -> Self {
        let d = StreamConfig::default();
        StreamSection {
            model: None,
            starts: 12,
            radius: STREAM_START_RADIUS,
            step: d.step,
            max_steps: d.max_steps,
            convergence_radius: d.convergence_radius,
            stall_window: d.stall_window,
            domain_margin: d.domain_margin,
        }
    }
}

impl StreamSection {
    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig {
            step: self.step,
            max_steps: self.max_steps,
            convergence_radius: self.convergence_radius,
            stall_window: self.stall_window,
            domain_margin: self.domain_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub outbound_count: usize,
    pub outbound_distance: f64,
    pub drift: DriftRule,
    pub homing_step: f64,
    pub success_radius: f64,
    pub max_homing_steps: usize,
    /// One trained network per seed; empty means the global seed.
    pub seeds: Vec<u64>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        let d = MissionSpec::default();
        MissionConfig {
            outbound_count: 12,
            outbound_distance: 30.0,
            drift: d.drift,
            homing_step: d.homing_step,
            success_radius: d.success_radius,
            max_homing_steps: d.max_homing_steps,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcamConfig {
    pub model: Option<PathBuf>,
    /// Views sampled on a circle around the nest.
    pub locations: usize,
    pub radius: f64,
    pub gaze_deg: f64,
}

impl Default for GradcamConfig {
    fn default() -> Self {
        GradcamConfig { model: None, locations: 8, radius: 3.0, gaze_deg: 0.0 }
    }
}

impl ExperimentConfig {
    pub fn world(&self) -> Result<LandmarkWorld, CliError> {
        match &self.world.file {
            Some(path) => {
                LandmarkWorld::load(path).map_err(|e| CliError::Config(format!("world file: {e}")))
            }
            None => LandmarkWorld::preset(&self.world.preset, self.seed).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn imaging(&self) -> Result<ImagingConfig, CliError> {
        let cfg = match &self.imaging {
            ImagingChoice::Named(n) if n == "full" => ImagingConfig::full(),
            ImagingChoice::Named(n) if n == "reduced" => ImagingConfig::reduced(),
            ImagingChoice::Named(n) => {
                return Err(CliError::Config(format!("unknown imaging {n:?} (expected full or reduced)")))
            }
            ImagingChoice::Custom(c) => *c,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("imaging: {e}")))?;
        Ok(cfg)
    }

    pub fn dataset_spec(&self, world: &LandmarkWorld) -> Result<DatasetSpec, CliError> {
        let spec = DatasetSpec {
            pattern: self.dataset.pattern.resolve(world.nest)?,
            gaze_count: self.dataset.gaze_count,
            label_noise_sigma: self.dataset.label_noise_sigma,
            shuffle_seed: self.seed,
        };
        spec.validate(&self.imaging()?).map_err(|e| CliError::Config(format!("dataset: {e}")))?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let cfg = TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            optimizer: t.optimizer,
            init_seed: self.seed,
            precision: t.precision,
            log_every: t.log_every,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        Ok(cfg)
    }

    pub fn mission_spec(&self, world: &LandmarkWorld) -> Result<MissionSpec, CliError> {
        let m = &self.mission;
        let drift = match m.drift {
            DriftRule::Gaussian { sigma, seed } => DriftRule::Gaussian { sigma, seed: seed ^ self.seed },
            other => other,
        };
        let spec = MissionSpec {
            pattern: self.dataset.pattern.resolve(world.nest)?,
            gaze_count: self.dataset.gaze_count,
            outbound: perimeter_outbounds(1, m.outbound_distance).remove(0),
            drift,
            homing_step: m.homing_step,
            success_radius: m.success_radius,
            max_homing_steps: m.max_homing_steps,
            ..MissionSpec::default()
        };
        spec.validate().map_err(|e| CliError::Config(format!("mission: {e}")))?;
        Ok(spec)
    }

    pub fn mission_seeds(&self) -> Vec<u64> {
        if self.mission.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.mission.seeds.clone()
        }
    }

    pub fn model_path(&self, explicit: &Option<PathBuf>) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join("model.bin"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let world = self.world()?;
        self.imaging()?;
        self.dataset_spec(&world)?;
        self.train_config()?;
        self.eval.grid.resolve(world.nest)?;
        self.mission_spec(&world)?;
        if self.eval.gazes_deg.is_empty() {
            return Err(CliError::Config("eval.gazes_deg must list at least one gaze".into()));
        }
        if !(self.stream.radius.is_finite() && self.stream.radius >= 0.0) {
            return Err(CliError::Config(format!("stream.radius must be a non-negative distance, got {}", self.stream.radius)));
        }
        if !(self.stream.step > 0.0) {
            return Err(CliError::Config(format!("stream.step must be positive, got {}", self.stream.step)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Built-in experiment presets, one per figure or table analogue.
pub const PRESETS: &[(&str, &str, &str)] = &[
    ("fig3-grid", "grid learning flight, 1 m spacing", "name = \"fig3-grid\"\n[dataset]\npattern = \"grid\"\n"),
    ("fig3-spiral", "spiral learning flight", "name = \"fig3-spiral\"\n[dataset]\npattern = \"spiral\"\n"),
    (
        "fig4-generalization",
        "spiral training evaluated on the 0.25 m grid, with streams",
        "name = \"fig4-generalization\"\n[dataset]\npattern = \"spiral\"\n[eval]\ngrid = \"eval-grid\"\n",
    ),
    (
        "paper-figure-5b",
        "spiral-trained homing from 12 perimeter starts",
        "name = \"paper-figure-5b\"\n[dataset]\npattern = \"spiral\"\n[mission]\noutbound_count = 12\n",
    ),
    (
        "fig5-grid",
        "grid-trained homing from 12 perimeter starts",
        "name = \"fig5-grid\"\n[dataset]\npattern = \"grid\"\n[mission]\noutbound_count = 12\n",
    ),
    (
        "fig6-rotation",
        "bearing map before and after rotating the landmark array 90 degrees",
        "name = \"fig6-rotation\"\n[dataset]\npattern = \"spiral\"\n[eval]\ngrid = \"coarse-eval-grid\"\nrotate_landmarks_deg = 90.0\n",
    ),
    (
        "table1-noise",
        "training with 10 degree label noise",
        "name = \"table1-noise\"\n[dataset]\npattern = \"grid\"\nlabel_noise_sigma = 10.0\n",
    ),
    (
        "ci-reduced",
        "full pipeline at 51x360 resolution",
        "name = \"ci-reduced\"\nimaging = \"reduced\"\n[dataset]\npattern = \"spiral\"\n[eval]\ngrid = \"coarse-eval-grid\"\n[stream]\nstarts = 4\nmax_steps = 40\n[mission]\noutbound_count = 4\nmax_homing_steps = 60\n[gradcam]\nlocations = 2\n",
    ),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _, _)| *n == name).map(|(_, _, t)| *t)
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `dotted.key = value` in a TOML table, creating tables as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Parses config text, applies overrides and deserializes.
pub fn load(
    text: &str,
    source: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table = toml::from_str(text)
        .map_err(|e| CliError::Config(format!("{}: {e}", source.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", source.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    cfg.validate()?;
    Ok(cfg)
}
