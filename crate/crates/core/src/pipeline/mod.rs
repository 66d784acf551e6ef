//! Config-driven experiment runs: expert training, mixing, distillation,
//! evaluation, verification and report emission into one run directory.
//!
//! Run directory layout:
//!
//! ```text
//! config.json              effective configuration
//! manifest.json            version, seeds, per-stage timings and artifacts
//! experts/<label>.json
//! mixing/policy.json, actor.json, critic.json, training_log.csv
//! distill/dataset.csv, student_direct.json, student_robust.json, report.json
//! eval/table.csv
//! verify/<student>_reach.{json,csv}, <student>_invariant.json, summary.csv
//! report/...               CSV plot data
//! ```

mod config;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::stage_seed;

pub use config::{DistillStage, ExperimentConfig, ExpertSource, ExpertSpec, ReportStage, VerifyStage};
pub use stages::{load_dataset, STUDENTS, VERIFY_HEADER};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` needs {}, which does not exist", path.display())]
    Dependency { stage: Stage, path: PathBuf },
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit code: 2 for configuration errors, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Dependency { .. } | PipelineError::Stage { .. } => 3,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TrainExpert,
    TrainMixing,
    Distill,
    Evaluate,
    Verify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::TrainExpert,
        Stage::TrainMixing,
        Stage::Distill,
        Stage::Evaluate,
        Stage::Verify,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainExpert => "train-expert",
            Stage::TrainMixing => "train-mixing",
            Stage::Distill => "distill",
            Stage::Evaluate => "evaluate",
            Stage::Verify => "verify",
            Stage::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{name}`")))
    }

    /// Seed of this stage for a global seed.
    pub fn seed(self, global: u64) -> u64 {
        stage_seed(global, self.name())
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub elapsed_ms: f64,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub system: String,
    pub global_seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(run_dir.join("manifest.json")).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Every recorded artifact that is missing from `run_dir`.
    pub fn missing_artifacts(&self, run_dir: &Path) -> Vec<String> {
        self.stages
            .values()
            .flat_map(|r| &r.artifacts)
            .filter(|a| !run_dir.join(a).exists())
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Stages to run, in pipeline order; all when empty.
    pub stages: Vec<Stage>,
    /// Skip stages whose recorded artifacts are all present.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
    /// Some reachability analysis ended without a verdict.
    pub inconclusive: bool,
}

impl RunSummary {
    /// 0 on success, 4 when verification was inconclusive.
    pub fn exit_code(&self) -> i32 {
        if self.inconclusive {
            4
        } else {
            0
        }
    }
}

pub(crate) struct StageOutput {
    pub artifacts: Vec<String>,
    pub inconclusive: bool,
}

/// Runs the requested stages of `cfg` into `cfg.output_dir`. Each stage
/// reads its inputs from the run directory, so stages can be rerun or
/// resumed individually.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let spec = cfg.validate()?;
    let run_dir = cfg.resolve(&cfg.output_dir);
    fs::create_dir_all(&run_dir).map_err(|e| PipelineError::Config(format!("{}: {e}", run_dir.display())))?;
    fs::write(run_dir.join("config.json"), cfg.to_json())
        .map_err(|e| PipelineError::Config(format!("cannot write config: {e}")))?;

    let mut manifest = Manifest::load(&run_dir)
        .filter(|m| m.global_seed == cfg.seed)
        .unwrap_or_default();
    manifest.version = env!("CARGO_PKG_VERSION").into();
    manifest.system = spec.name.clone();
    manifest.global_seed = cfg.seed;

    let mut requested: Vec<Stage> = if opts.stages.is_empty() {
        Stage::ALL.to_vec()
    } else {
        opts.stages.clone()
    };
    requested.sort();
    requested.dedup();

    let ctx = stages::Context {
        cfg,
        spec: &spec,
        run_dir: &run_dir,
    };
    let mut summary = RunSummary {
        run_dir: run_dir.clone(),
        executed: Vec::new(),
        skipped: Vec::new(),
        inconclusive: false,
    };
    for stage in requested {
        if opts.resume {
            if let Some(rec) = manifest.stages.get(stage.name()) {
                if rec.artifacts.iter().all(|a| run_dir.join(a).exists()) {
                    summary.skipped.push(stage);
                    continue;
                }
            }
        }
        let start = Instant::now();
        let out = stages::run(stage, &ctx)?;
        summary.inconclusive |= out.inconclusive;
        manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                seed: stage.seed(cfg.seed),
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                artifacts: out.artifacts,
            },
        );
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(run_dir.join("manifest.json"), text).map_err(|e| PipelineError::Stage {
            stage,
            message: format!("cannot write manifest: {e}"),
        })?;
        summary.executed.push(stage);
    }
    Ok(summary)
}
