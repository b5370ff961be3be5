//! Declarative experiment configuration (TOML), with flag overrides applied
//! on top.

use std::path::{Path, PathBuf};

use aga_core::scenario_gen::{ScenarioKind, ScenarioParams, SimulatorParams, SwapMode};
use aga_core::{FusionWeights, TrackerConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub suite: SuiteConfig,
    pub simulator: SimulatorParams,
    pub variants: Vec<VariantConfig>,
    /// Window sizes tried by `sweep`.
    pub sweep_windows: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("aga-run"),
            suite: SuiteConfig::default(),
            simulator: SimulatorParams::default(),
            variants: VariantConfig::defaults(),
            sweep_windows: vec![1, 2, 3, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub num_track_videos: usize,
    pub num_swap_videos: usize,
    pub seed: u64,
    pub frames: usize,
    /// Inclusive bounds on the instance count per video, within [2, 3].
    pub instance_range: [usize; 2],
    pub resolutions: Vec<u32>,
    pub swap_mode: SwapMode,
    pub out_of_frame_margin: f64,
    pub semi_axis_range: (f64, f64),
    pub raster_scale: f64,
    pub embedding_dim: usize,
    pub num_classes: u32,
    pub min_swap_separation: f64,
    pub orthogonal_appearance: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            num_track_videos: 500,
            num_swap_videos: 500,
            seed: 0,
            frames: p.frames,
            instance_range: [2, 3],
            resolutions: p.resolutions,
            swap_mode: p.swap_mode,
            out_of_frame_margin: p.out_of_frame_margin,
            semi_axis_range: p.semi_axis_range,
            raster_scale: p.raster_scale,
            embedding_dim: p.embedding_dim,
            num_classes: p.num_classes,
            min_swap_separation: p.min_swap_separation,
            orthogonal_appearance: p.orthogonal_appearance,
        }
    }
}

impl SuiteConfig {
    pub fn scenario_params(&self) -> ScenarioParams {
        let [lo, hi] = self.instance_range;
        ScenarioParams {
            frames: self.frames,
            instance_count: (lo == hi).then_some(lo),
            resolutions: self.resolutions.clone(),
            out_of_frame_margin: self.out_of_frame_margin,
            semi_axis_range: self.semi_axis_range,
            raster_scale: self.raster_scale,
            embedding_dim: self.embedding_dim,
            num_classes: self.num_classes,
            swap_mode: self.swap_mode,
            min_swap_separation: self.min_swap_separation,
            orthogonal_appearance: self.orthogonal_appearance,
        }
    }

    pub fn count(&self, kind: ScenarioKind) -> usize {
        match kind {
            ScenarioKind::Track => self.num_track_videos,
            ScenarioKind::Swap => self.num_swap_videos,
        }
    }

    /// Every video of the suite, track kind first, in index order.
    pub fn videos(&self) -> Vec<VideoSpec> {
        [ScenarioKind::Track, ScenarioKind::Swap]
            .into_iter()
            .flat_map(|kind| {
                (0..self.count(kind)).map(move |index| VideoSpec {
                    video_id: format!("{}-{index:04}", kind.as_str()),
                    kind,
                    seed: video_seed(self.seed, kind, index),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSpec {
    pub video_id: String,
    pub kind: ScenarioKind,
    pub seed: u64,
}

/// Seed of video `index` of `kind`: random access into a ChaCha stream per
/// kind, so adding videos never changes existing ones.
pub fn video_seed(suite_seed: u64, kind: ScenarioKind, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed);
    rng.set_stream(match kind {
        ScenarioKind::Track => 1,
        ScenarioKind::Swap => 2,
    });
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    pub window: usize,
    pub lambda_obj: f64,
    pub lambda_app: f64,
    pub use_memory: bool,
    pub literal_order: bool,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            name: "full".into(),
            window: aga_core::tracker::DEFAULT_WINDOW,
            lambda_obj: 1.0,
            lambda_app: 1.0,
            use_memory: true,
            literal_order: false,
        }
    }
}

impl VariantConfig {
    /// The ablation grid: appearance on/off times memory on/off, plus the
    /// listing-order variant for the A/B comparison.
    pub fn defaults() -> Vec<Self> {
        let v = |name: &str, lambda_app: f64, use_memory: bool, literal_order: bool| Self {
            name: name.into(),
            lambda_app,
            use_memory,
            literal_order,
            ..Default::default()
        };
        vec![
            v("full", 1.0, true, false),
            v("no-app", 0.0, true, false),
            v("no-mem", 1.0, false, false),
            v("no-app-no-mem", 0.0, false, false),
            v("literal-order", 1.0, true, true),
        ]
    }

    pub fn window(name: impl Into<String>, window: usize) -> Self {
        Self {
            name: name.into(),
            window,
            ..Default::default()
        }
    }

    pub fn tracker_config(&self) -> Result<TrackerConfig<f64>> {
        let cfg = TrackerConfig {
            window: self.window,
            fusion: FusionWeights::new(self.lambda_obj, self.lambda_app)?,
            use_memory: self.use_memory,
            literal_order: self.literal_order,
            memory_scale: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same tracker apart from the statement order.
    pub fn is_order_twin_of(&self, other: &VariantConfig) -> bool {
        self.literal_order != other.literal_order
            && self.window == other.window
            && self.lambda_obj == other.lambda_obj
            && self.lambda_app == other.lambda_app
            && self.use_memory == other.use_memory
    }
}

/// Which kinds a command touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KindSelection {
    Track,
    Swap,
    Both,
}

impl KindSelection {
    pub fn includes(self, kind: ScenarioKind) -> bool {
        matches!(
            (self, kind),
            (KindSelection::Both, _)
                | (KindSelection::Track, ScenarioKind::Track)
                | (KindSelection::Swap, ScenarioKind::Swap)
        )
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<String>>,
    pub kind: Option<KindSelection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_string(),
            message: e.to_string().lines().collect::<Vec<_>>().join(" "),
        })?;
        cfg.validate().map_err(|e| CliError::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.suite.seed = seed;
        }
        if let Some(kind) = o.kind {
            if !kind.includes(ScenarioKind::Track) {
                self.suite.num_track_videos = 0;
            }
            if !kind.includes(ScenarioKind::Swap) {
                self.suite.num_swap_videos = 0;
            }
        }
        if let Some(names) = &o.variants {
            self.variants = self.select_variants(names)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn select_variants(&self, names: &[String]) -> Result<Vec<VariantConfig>> {
        names
            .iter()
            .map(|name| {
                self.variants
                    .iter()
                    .find(|v| &v.name == name)
                    .cloned()
                    .ok_or_else(|| {
                        let known: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
                        CliError::Invalid(format!(
                            "unknown variant {name:?} (configured: {})",
                            known.join(", ")
                        ))
                    })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.suite.instance_range;
        if !(2 <= lo && lo <= hi && hi <= 3) {
            return Err(CliError::Invalid(format!(
                "instance_range [{lo}, {hi}] must lie within [2, 3]"
            )));
        }
        let params = self.suite.scenario_params();
        for kind in [ScenarioKind::Track, ScenarioKind::Swap] {
            if self.suite.count(kind) > 0 {
                params.validate(kind)?;
            }
        }
        self.simulator.validate()?;
        if self.variants.is_empty() {
            return Err(CliError::Invalid("at least one tracker variant is required".into()));
        }
        let mut names: Vec<&str> = Vec::new();
        for v in &self.variants {
            let ok = !v.name.is_empty()
                && v.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(CliError::Invalid(format!(
                    "variant name {:?} must be non-empty ASCII letters, digits, '-' or '_'",
                    v.name
                )));
            }
            if names.contains(&v.name.as_str()) {
                return Err(CliError::Invalid(format!("duplicate variant {:?}", v.name)));
            }
            names.push(&v.name);
            v.tracker_config()?;
        }
        if self.sweep_windows.is_empty() || self.sweep_windows.contains(&0) {
            return Err(CliError::Invalid("sweep windows must be non-empty and ≥ 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_benchmark_layout() {
        let c = ExperimentConfig::default();
        assert_eq!((c.suite.num_track_videos, c.suite.num_swap_videos), (500, 500));
        assert_eq!(c.suite.frames, 36);
        assert_eq!(c.variants[0].window, 5);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml(), "x").unwrap(), c);
        let partial = "[suite]\nnum_track_videos = 3\nseed = 9\n";
        let p = ExperimentConfig::from_toml(partial, "x").unwrap();
        assert_eq!(p.suite.num_track_videos, 3);
        assert_eq!(p.suite.num_swap_videos, 500);
        assert_eq!(p.variants, VariantConfig::defaults());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ExperimentConfig::from_toml("[suite]\nnum_trak_videos = 3\n", "x").is_err());
        assert!(ExperimentConfig::from_toml("variants = []\n", "x").is_err());
        assert!(ExperimentConfig::from_toml("[suite]\ninstance_range = [2, 4]\n", "x").is_err());
        let dup = "[[variants]]\nname = \"a\"\n[[variants]]\nname = \"a\"\n";
        assert!(ExperimentConfig::from_toml(dup, "x").is_err());
        let err = ExperimentConfig::from_toml("[simulator]\nalpha_loc = 2.0\n", "x").unwrap_err();
        assert_eq!(err.class(), "config");
    }

    #[test]
    fn flags_win() {
        let o = Overrides {
            seed: Some(4),
            variants: Some(vec!["no-app".into()]),
            kind: Some(KindSelection::Swap),
            ..Default::default()
        };
        let c = ExperimentConfig::default().apply(&o).unwrap();
        assert_eq!(c.suite.seed, 4);
        assert_eq!(c.suite.num_track_videos, 0);
        assert_eq!(c.variants.len(), 1);
        let bad = Overrides {
            variants: Some(vec!["nope".into()]),
            ..Default::default()
        };
        assert!(ExperimentConfig::default().apply(&bad).is_err());
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = video_seed(0, ScenarioKind::Track, 3);
        assert_eq!(a, video_seed(0, ScenarioKind::Track, 3));
        assert_ne!(a, video_seed(0, ScenarioKind::Swap, 3));
        assert_ne!(a, video_seed(1, ScenarioKind::Track, 3));
        let mut all: Vec<u64> = SuiteConfig::default().videos().iter().map(|v| v.seed).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 1000);
    }
}
