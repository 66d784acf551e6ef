use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ExpertSource, ExperimentConfig, PipelineError, Result, Stage, StageOutput};
use crate::distill::{collect_teacher_data, distill, DistillDataset, DistillReport};
use crate::dynamics::{Controller, PerturbationModel, SystemSpec};
use crate::eval::{compare, control_trace, reports_to_csv, Entry, EvalConfig};
use crate::experts::{ddpg_train, load_expert, lqr_expert, save_expert, Expert, ExpertKind};
use crate::mixing::{load_policy, save_policy, train_mixing, MixedController, RewardSpec};
use crate::nn::{lipschitz_upper_bound, load_network, save_network, Network, NormKind};
use crate::seeding::stage_seed;
use crate::verify::{
    audit_invariant, partition_and_fit, reach_to_csv, verify_invariant, verify_reach, InvariantResult,
};

pub(crate) struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub spec: &'a SystemSpec,
    pub run_dir: &'a Path,
}

/// The two students, by file stem and table label.
pub const STUDENTS: [(&str, &str); 2] = [("student_direct", "kappa_D"), ("student_robust", "kappa*")];

fn fail(stage: Stage, e: impl Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

struct Writer<'a> {
    stage: Stage,
    run_dir: &'a Path,
    artifacts: Vec<String>,
}

impl Writer<'_> {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.run_dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| fail(self.stage, e))?;
        }
        Ok(p)
    }

    fn text(&mut self, rel: &str, text: &str) -> Result<()> {
        fs::write(self.path(rel)?, text).map_err(|e| fail(self.stage, format!("{rel}: {e}")))?;
        self.record(rel);
        Ok(())
    }

    fn record(&mut self, rel: &str) {
        self.artifacts.push(rel.to_string());
    }

    fn done(self, inconclusive: bool) -> StageOutput {
        StageOutput {
            artifacts: self.artifacts,
            inconclusive,
        }
    }
}

fn need(stage: Stage, run_dir: &Path, rel: &str) -> Result<PathBuf> {
    let p = run_dir.join(rel);
    if p.exists() {
        Ok(p)
    } else {
        Err(PipelineError::Dependency { stage, path: p })
    }
}

pub(crate) fn run(stage: Stage, ctx: &Context) -> Result<StageOutput> {
    let w = Writer {
        stage,
        run_dir: ctx.run_dir,
        artifacts: Vec::new(),
    };
    match stage {
        Stage::TrainExpert => train_experts(ctx, w),
        Stage::TrainMixing => train_mixing_stage(ctx, w),
        Stage::Distill => distill_stage(ctx, w),
        Stage::Evaluate => evaluate_stage(ctx, w),
        Stage::Verify => verify_stage(ctx, w),
        Stage::Report => report_stage(ctx, w),
    }
}

fn expert_path(label: &str) -> String {
    format!("experts/{label}.json")
}

fn train_experts(ctx: &Context, mut w: Writer) -> Result<StageOutput> {
    let stage = Stage::TrainExpert;
    let seed = stage.seed(ctx.cfg.seed);
    for spec_e in &ctx.cfg.experts {
        let label = spec_e.label.as_str();
        let expert = match &spec_e.source {
            ExpertSource::Lqr { q, r, scale } => lqr_expert(ctx.spec, *q, *r, *scale, label),
            ExpertSource::Ddpg { config } => {
                let mut c = config.clone();
                c.seed = stage_seed(seed, label);
                ddpg_train(ctx.spec, &c, label).map(|(e, _)| e)
            }
            ExpertSource::File { path } => load_expert(ctx.cfg.resolve(path), ctx.spec).map(|mut e| {
                e.label = label.into();
                e
            }),
        }
        .map_err(|e| fail(stage, format!("expert `{label}`: {e}")))?;
        let rel = expert_path(label);
        save_expert(&expert, w.path(&rel)?).map_err(|e| fail(stage, e))?;
        w.record(&rel);
    }
    Ok(w.done(false))
}

fn load_experts(ctx: &Context, stage: Stage) -> Result<Vec<Expert>> {
    ctx.cfg
        .experts
        .iter()
        .map(|e| {
            let p = need(stage, ctx.run_dir, &expert_path(&e.label))?;
            let mut expert = load_expert(p, ctx.spec).map_err(|err| fail(stage, err))?;
            expert.label = e.label.clone();
            Ok(expert)
        })
        .collect()
}

fn train_mixing_stage(ctx: &Context, mut w: Writer) -> Result<StageOutput> {
    let stage = Stage::TrainMixing;
    let experts = load_experts(ctx, stage)?;
    let rs = ctx.cfg.reward.unwrap_or_else(|| RewardSpec::for_system(ctx.spec));
    let mut cfg = ctx.cfg.mixing.clone();
    cfg.seed = stage.seed(ctx.cfg.seed);
    let (policy, log) =
        train_mixing(ctx.spec, &experts, &rs, &PerturbationModel::None, &cfg).map_err(|e| fail(stage, e))?;
    save_policy(&policy, w.path("mixing/policy.json")?.parent().expect("has parent"))
        .map_err(|e| fail(stage, e))?;
    for f in ["mixing/policy.json", "mixing/actor.json", "mixing/critic.json"] {
        w.record(f);
    }
    w.text("mixing/training_log.csv", &log.to_csv())?;
    Ok(w.done(false))
}

fn load_teacher(ctx: &Context, stage: Stage) -> Result<MixedController> {
    let experts = load_experts(ctx, stage)?;
    let dir = need(stage, ctx.run_dir, "mixing/policy.json")?;
    let policy = load_policy(dir.parent().expect("has parent")).map_err(|e| fail(stage, e))?;
    Ok(MixedController {
        policy,
        experts,
        input_bound: ctx.spec.input_bound.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct DistillReports {
    direct: DistillReport,
    robust: DistillReport,
}

fn distill_stage(ctx: &Context, mut w: Writer) -> Result<StageOutput> {
    let stage = Stage::Distill;
    let teacher = load_teacher(ctx, stage)?;
    let seed = stage.seed(ctx.cfg.seed);
    let dc = &ctx.cfg.distill;
    let data = collect_teacher_data(
        &teacher,
        ctx.spec,
        dc.samples,
        dc.collect,
        &mut crate::seeding::stream_rng(seed, 0),
    )
    .map_err(|e| fail(stage, e))?;
    w.text("distill/dataset.csv", &data.to_csv())?;
    let mut student_cfg = dc.student.clone();
    student_cfg.seed = seed;
    let scale = ctx.spec.state_scale();
    let (robust, direct) = rayon::join(
        || distill(&data, &student_cfg, &scale),
        || distill(&data, &student_cfg.direct(), &scale),
    );
    let (robust, robust_rep) = robust.map_err(|e| fail(stage, e))?;
    let (direct, direct_rep) = direct.map_err(|e| fail(stage, e))?;
    for (net, (name, _)) in [(&direct, STUDENTS[0]), (&robust, STUDENTS[1])] {
        let rel = format!("distill/{name}.json");
        save_network(net, w.path(&rel)?).map_err(|e| fail(stage, e))?;
        w.record(&rel);
    }
    let reports = DistillReports {
        direct: direct_rep,
        robust: robust_rep,
    };
    w.text("distill/report.json", &serde_json::to_string_pretty(&reports).expect("serializes"))?;
    Ok(w.done(false))
}

fn load_students(ctx: &Context, stage: Stage) -> Result<Vec<(&'static str, &'static str, Network)>> {
    STUDENTS
        .iter()
        .map(|(name, label)| {
            let p = need(stage, ctx.run_dir, &format!("distill/{name}.json"))?;
            Ok((*name, *label, load_network(p).map_err(|e| fail(stage, e))?))
        })
        .collect()
}

/// Experts, the mixed controller and both students, in table order.
fn all_entries(ctx: &Context, stage: Stage) -> Result<Vec<Entry>> {
    let teacher = load_teacher(ctx, stage)?;
    let mut entries: Vec<Entry> = teacher
        .experts
        .iter()
        .map(|e| match &e.kind {
            ExpertKind::Neural(net) => Entry::network(e.label.clone(), e.label.clone(), Arc::new(net.clone())),
            _ => Entry::opaque(e.label.clone(), e.label.clone(), Arc::new(e.clone())),
        })
        .collect();
    entries.push(Entry::opaque("mixed", "A_W", Arc::new(teacher)));
    for (name, label, net) in load_students(ctx, stage)? {
        entries.push(Entry::network(name, label, Arc::new(net)));
    }
    Ok(entries)
}

fn eval_config(ctx: &Context) -> EvalConfig {
    EvalConfig {
        seed: Stage::Evaluate.seed(ctx.cfg.seed),
        ..ctx.cfg.eval
    }
}

fn evaluate_stage(ctx: &Context, mut w: Writer) -> Result<StageOutput> {
    let stage = Stage::Evaluate;
    let entries = all_entries(ctx, stage)?;
    let reports = compare(&entries, ctx.spec, &eval_config(ctx)).map_err(|e| fail(stage, e))?;
    w.text("eval/table.csv", &reports_to_csv(&reports))?;
    Ok(w.done(false))
}

pub const VERIFY_HEADER: &str = "controller,label,lipschitz,partitions,epsilon,target_epsilon,target_missed,reach_steps,reach_safe,failure_step,inconclusive,invariants_certified,invariants_checked";

fn verify_stage(ctx: &Context, mut w: Writer) -> Result<StageOutput> {
    let stage = Stage::Verify;
    let vc = &ctx.cfg.verify;
    let target = vc.approx.resolve_target(&ctx.spec.input_bound);
    let initial = vc.reach_initial.clone().unwrap_or_else(|| ctx.spec.initial_set.clone());
    let domain = ctx.spec.bounded_safe_region();
    let mut table = format!("{VERIFY_HEADER}\n");
    let mut timing = String::from("controller,fit_ms,reach_ms,invariant_ms\n");
    let mut inconclusive = false;
    for (name, label, net) in load_students(ctx, stage)? {
        let approx = partition_and_fit(&net, &domain, target, &vc.approx).map_err(|e| fail(stage, e))?;
        let reach = verify_reach(ctx.spec, &approx, &initial, vc.reach_steps).map_err(|e| fail(stage, e))?;
        inconclusive |= reach.inconclusive.is_some();
        let invariants = vc
            .invariant_candidates
            .iter()
            .map(|c| verify_invariant(ctx.spec, &approx, c, vc.invariant_cells))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| fail(stage, e))?;
        w.text(&format!("verify/{name}_reach.json"), &reach.to_json())?;
        w.text(&format!("verify/{name}_reach.csv"), &reach_to_csv(&reach))?;
        w.text(
            &format!("verify/{name}_invariant.json"),
            &serde_json::to_string_pretty(&invariants).expect("serializes"),
        )?;
        let certified = invariants.iter().filter(|r| r.invariant).count();
        let _ = writeln!(
            table,
            "{name},{label},{:?},{},{:?},{:?},{},{},{},{},{},{certified},{}",
            lipschitz_upper_bound(&net, NormKind::Operator2),
            approx.len(),
            approx.epsilon(),
            target,
            approx.target_missed,
            vc.reach_steps,
            reach.safe,
            reach.failure_step.map(|t| t.to_string()).unwrap_or_default(),
            reach.inconclusive.is_some(),
            invariants.len()
        );
        let inv_ms: f64 = invariants.iter().map(|r| r.elapsed_ms).sum();
        let _ = writeln!(timing, "{name},{:.3},{:.3},{inv_ms:.3}", approx.fit_ms, reach.elapsed_ms);
    }
    w.text("verify/summary.csv", &table)?;
    // wall-clock figures vary run to run, so they stay out of the summary
    w.text("verify/timing.csv", &timing)?;
    Ok(w.done(inconclusive))
}

fn report_stage(ctx: &Context, mut w: Writer) -> Result<StageOutput> {
    let stage = Stage::Report;
    let table = need(stage, ctx.run_dir, "eval/table.csv")?;
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| fail(stage, e));
    w.text("report/controllers.csv", &read(&table)?)?;

    let s0 = ctx
        .cfg
        .report
        .trace_state
        .clone()
        .unwrap_or_else(|| ctx.spec.initial_set.center());
    let trace_seed = stage.seed(ctx.cfg.seed);
    let mut traces = String::new();
    for entry in all_entries(ctx, stage)? {
        let csv = control_trace(entry.controller.as_ref(), ctx.spec, &s0, &PerturbationModel::None, trace_seed)
            .map_err(|e| fail(stage, e))?;
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if traces.is_empty() {
            let _ = writeln!(traces, "controller,{header}");
        }
        for l in lines {
            let _ = writeln!(traces, "{},{l}", entry.name);
        }
    }
    w.text("report/control_traces.csv", &traces)?;

    if let Ok(summary) = fs::read_to_string(ctx.run_dir.join("verify/summary.csv")) {
        w.text("report/verification.csv", &summary)?;
        let students = load_students(ctx, stage)?;
        let mut audit = String::from("controller,candidate,samples,steps,violations\n");
        for (name, _, net) in &students {
            let reach = read(&need(stage, ctx.run_dir, &format!("verify/{name}_reach.csv"))?)?;
            w.text(&format!("report/reach_{name}.csv"), &reach)?;
            let inv_text = read(&need(stage, ctx.run_dir, &format!("verify/{name}_invariant.json"))?)?;
            let invariants: Vec<InvariantResult> = serde_json::from_str(&inv_text).map_err(|e| fail(stage, e))?;
            for (k, inv) in invariants.iter().enumerate().filter(|(_, r)| r.invariant) {
                let (bad, trajs) = audit_invariant(
                    ctx.spec,
                    net as &dyn Controller,
                    &inv.candidate,
                    ctx.cfg.report.invariant_samples,
                    ctx.spec.horizon,
                    stage_seed(trace_seed, name),
                );
                let _ = writeln!(
                    audit,
                    "{name},{k},{},{},{bad}",
                    ctx.cfg.report.invariant_samples, ctx.spec.horizon
                );
                w.text(
                    &format!("report/invariant_{name}_{k}.csv"),
                    &trajectories_csv(&trajs[..trajs.len().min(ctx.cfg.report.trajectories_written)]),
                )?;
            }
        }
        w.text("report/invariant_audit.csv", &audit)?;
    }
    Ok(w.done(false))
}

fn trajectories_csv(trajs: &[Vec<Vec<f64>>]) -> String {
    let dim = trajs.first().and_then(|t| t.first()).map_or(0, |s| s.len());
    let mut out = String::from("trajectory,step");
    for i in 0..dim {
        let _ = write!(out, ",s{i}");
    }
    out.push('\n');
    for (k, t) in trajs.iter().enumerate() {
        for (step, s) in t.iter().enumerate() {
            let _ = write!(out, "{k},{step}");
            for v in s {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
    }
    out
}

/// Re-reads a saved dataset; used by callers that inspect distillation data.
pub fn load_dataset(run_dir: &Path) -> Result<DistillDataset> {
    DistillDataset::load(run_dir.join("distill/dataset.csv")).map_err(|e| fail(Stage::Distill, e))
}
