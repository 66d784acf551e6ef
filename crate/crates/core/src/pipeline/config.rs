use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::distill::{CollectMode, DistillConfig};
use crate::dynamics::{builtin_system, load_system, SystemSpec};
use crate::eval::EvalConfig;
use crate::experts::DdpgConfig;
use crate::geometry::IntervalBox;
use crate::mixing::{MixingConfig, RewardSpec};
use crate::verify::ApproxConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExpertSource {
    /// LQR on the linearization at the origin, gain multiplied by `scale`.
    Lqr { q: f64, r: f64, scale: f64 },
    Ddpg {
        #[serde(default)]
        config: DdpgConfig,
    },
    /// A saved expert (linear, polynomial or network document).
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub label: String,
    #[serde(flatten)]
    pub source: ExpertSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillStage {
    /// Teacher-labelled pairs `N_E`.
    pub samples: usize,
    pub collect: CollectMode,
    #[serde(flatten)]
    pub student: DistillConfig,
}

impl Default for DistillStage {
    fn default() -> Self {
        Self {
            samples: 10_000,
            collect: CollectMode::Rollout,
            student: DistillConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyStage {
    #[serde(flatten)]
    pub approx: ApproxConfig,
    /// Initial box for reachability; the plant's initial set when absent.
    pub reach_initial: Option<IntervalBox>,
    pub reach_steps: usize,
    pub invariant_candidates: Vec<IntervalBox>,
    pub invariant_cells: usize,
}

impl Default for VerifyStage {
    fn default() -> Self {
        Self {
            approx: ApproxConfig::default(),
            reach_initial: None,
            reach_steps: 15,
            invariant_candidates: Vec::new(),
            invariant_cells: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportStage {
    /// Start of the control traces; the centre of the initial set when absent.
    pub trace_state: Option<Vec<f64>>,
    /// Simulations per certified invariant box.
    pub invariant_samples: usize,
    /// How many of those are written out as trajectories.
    pub trajectories_written: usize,
}

impl Default for ReportStage {
    fn default() -> Self {
        Self {
            trace_state: None,
            invariant_samples: 1500,
            trajectories_written: 20,
        }
    }
}

/// One experiment. Component `seed` fields are ignored: every stage seed
/// is derived from `seed` and the stage name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: String,
    /// Custom polynomial system; overrides `system`.
    pub system_file: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub experts: Vec<ExpertSpec>,
    pub reward: Option<RewardSpec>,
    pub mixing: MixingConfig,
    pub distill: DistillStage,
    pub eval: EvalConfig,
    pub verify: VerifyStage,
    pub report: ReportStage,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: "vanderpol".into(),
            system_file: None,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            experts: Vec::new(),
            reward: None,
            mixing: MixingConfig::default(),
            distill: DistillStage::default(),
            eval: EvalConfig::default(),
            verify: VerifyStage::default(),
            report: ReportStage::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

const BUNDLED: [(&str, &str); 3] = [
    ("vanderpol", include_str!("../../configs/vanderpol.json")),
    ("system3d", include_str!("../../configs/system3d.json")),
    ("cartpole", include_str!("../../configs/cartpole.json")),
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Shipped configuration for a builtin system.
    pub fn bundled(system: &str) -> Result<Self> {
        let text = BUNDLED
            .iter()
            .find(|(name, _)| *name == system)
            .map(|(_, text)| *text)
            .ok_or_else(|| PipelineError::Config(format!("no bundled configuration for `{system}`")))?;
        Self::from_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        let spec = match &self.system_file {
            Some(p) => load_system(self.resolve(p)),
            None => builtin_system(&self.system),
        };
        spec.map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Checks everything that can be checked before any stage runs.
    pub fn validate(&self) -> Result<SystemSpec> {
        let spec = self.system_spec()?;
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.experts.is_empty() {
            return bad("at least one expert is required".into());
        }
        let mut seen = HashSet::new();
        for e in &self.experts {
            let safe_label = !e.label.is_empty()
                && e.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !safe_label {
                return bad(format!("expert label `{}` must be alphanumeric, `_` or `-`", e.label));
            }
            if !seen.insert(e.label.as_str()) {
                return bad(format!("duplicate expert label `{}`", e.label));
            }
            match &e.source {
                ExpertSource::File { path } if !self.resolve(path).is_file() => {
                    return bad(format!("expert file {} does not exist", self.resolve(path).display()));
                }
                ExpertSource::Lqr { q, r, scale } if !(*q > 0.0 && *r > 0.0 && scale.is_finite()) => {
                    return bad(format!("expert `{}`: q and r must be positive", e.label));
                }
                _ => {}
            }
        }
        if let Some(rs) = &self.reward {
            rs.validate(&spec).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.mixing.epochs == 0 || self.mixing.episodes_per_epoch == 0 {
            return bad("mixing needs at least one epoch and episode".into());
        }
        if self.distill.samples == 0 {
            return bad("distillation needs at least one sample".into());
        }
        self.distill
            .student
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.eval.n == 0 || !(self.eval.attack_bound >= 0.0) || !(self.eval.noise_bound >= 0.0) {
            return bad("evaluation needs n > 0 and nonnegative bounds".into());
        }
        let boxes = self.verify.reach_initial.iter().chain(&self.verify.invariant_candidates);
        for b in boxes {
            if b.dim() != spec.state_dim || !spec.safe_region.contains_box(b) {
                return bad(format!("verification box {b:?} is not a subset of X"));
            }
        }
        if let Some(t) = self.verify.approx.target_epsilon {
            if !(t > 0.0) {
                return bad("target epsilon must be positive".into());
            }
        }
        if let Some(s) = &self.report.trace_state {
            if s.len() != spec.state_dim || !spec.is_safe(s) {
                return bad("trace state must be a point of X".into());
            }
        }
        Ok(spec)
    }
}
