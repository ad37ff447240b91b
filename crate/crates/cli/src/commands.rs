//! Subcommand bodies. Each writes its artifacts into an [`OutDir`] and
//! reports progress through a [`Log`]; the binary maps errors to exit codes.

use std::path::Path;

use invopt_core::grad::{grad_bp, grad_fd, grad_ipa, max_rel_diff, GradMethod, GradientResult};
use invopt_core::network::{generate as generate_network, GeneratorSpec};
use invopt_core::opt::{
    read_epoch_log, run, two_stage, EpochRecord, JsonLinesSink, OptConfig, OptRunRecord, Problem, RunSpec, Stage,
    StopReason,
};
use invopt_core::sim::{simulate as simulate_run, CostSummary, PolicyVector, SimInput};
use invopt_core::stochastic::{derive_seed, sample_path};
use serde::Serialize;
use serde_json::json;

use crate::config::{Instance, OptimizeMode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Log, OutDir};

const EVAL_STREAM: u64 = 0x6576_616c;

/// Seeds of the common-random-number paths used to compare policies.
pub fn evaluation_seeds(seed: u64, count: usize) -> Vec<u64> {
    let block = derive_seed(seed, EVAL_STREAM);
    (0..count as u64).map(|k| derive_seed(block, k)).collect()
}

/// Writes the resolved config and a copy of the network into the run folder.
pub fn write_resolved(out: &OutDir, cfg: &RunConfig, inst: &Instance) -> CliResult<()> {
    out.write_json("config.json", &json!({ "config": cfg }))?;
    out.write_text("network.json", &(inst.net.to_json() + "\n"))?;
    Ok(())
}

fn problem<'a>(cfg: &RunConfig, inst: &'a Instance) -> Problem<'a> {
    let mut p = Problem::new(&inst.net, &inst.models, &inst.costs, cfg.horizon);
    p.init = cfg.init.clone();
    p.kernel = cfg.kernel;
    p
}

pub fn generate(spec_path: &Path, seed: u64, out: &OutDir, log: &mut dyn Log) -> CliResult<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec: GeneratorSpec = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("generator spec: {e}")))?;
    let net = generate_network(&spec, seed)?;
    out.write_text("network.json", &(net.to_json() + "\n"))?;
    out.write_json("generate.json", &json!({ "spec": spec, "seed": seed, "stats": net.stats() }))?;
    log.line(&format!("items: {}", net.n()));
    log.line(&format!("arcs: {}", net.arc_count()));
    Ok(())
}

pub fn simulate(cfg: &RunConfig, policy: Option<&Path>, out: &OutDir, log: &mut dyn Log) -> CliResult<()> {
    let inst = cfg.instance()?;
    let policy = cfg.policy(&inst, policy)?;
    write_resolved(out, cfg, &inst)?;
    let path = sample_path(&inst.models.demand, &inst.models.lead_time, cfg.horizon, inst.net.n(), cfg.seed)?;
    let input = SimInput::new(&policy, &inst.costs, &cfg.init).with_kernel(cfg.kernel);
    let traj = simulate_run(&inst.net, &path, input)?;
    out.write_text("trajectory.csv", &traj.to_csv())?;
    let summary: serde_json::Value =
        serde_json::from_str(&traj.summary_json()).map_err(|e| CliError::Io(e.to_string()))?;
    out.write_json("summary.json", &summary)?;
    log.line(&format!("total cost: {}", traj.total_cost));
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct GradArgs {
    pub method: GradMethod,
    pub check: bool,
    pub fd_step: f64,
}

pub fn grad(cfg: &RunConfig, args: GradArgs, policy: Option<&Path>, out: &OutDir, log: &mut dyn Log) -> CliResult<()> {
    let inst = cfg.instance()?;
    let policy = cfg.policy(&inst, policy)?;
    write_resolved(out, cfg, &inst)?;
    let path = sample_path(&inst.models.demand, &inst.models.lead_time, cfg.horizon, inst.net.n(), cfg.seed)?;
    let input = SimInput::new(&policy, &inst.costs, &cfg.init).with_kernel(cfg.kernel);
    let compute = |m: GradMethod| -> CliResult<GradientResult> {
        Ok(match m {
            GradMethod::Ipa => grad_ipa(&inst.net, &path, input)?,
            GradMethod::Bp => grad_bp(&inst.net, &path, input)?,
            GradMethod::Fd => grad_fd(&inst.net, &path, input, args.fd_step)?,
        })
    };
    if args.check {
        let bp = compute(GradMethod::Bp)?;
        let ipa = compute(GradMethod::Ipa)?;
        let diff = max_rel_diff(&bp.grad, &ipa.grad);
        out.write_json("gradient.json", &bp)?;
        out.write_json("check.json", &json!({ "max_rel_diff": diff, "bp": bp.grad, "ipa": ipa.grad }))?;
        log.line(&format!("total cost: {}", bp.total_cost));
        log.line(&format!("max relative difference: {diff:e}"));
        return Ok(());
    }
    let g = compute(args.method)?;
    out.write_json("gradient.json", &g)?;
    log.line(&format!("total cost: {}", g.total_cost));
    if let Some(k) = g.simulations {
        log.line(&format!("simulations: {k}"));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Evaluation<'a> {
    policy_hash: String,
    nonzero: usize,
    replications: usize,
    seed: u64,
    #[serde(flatten)]
    summary: &'a CostSummary,
}

pub fn evaluate(cfg: &RunConfig, policy: Option<&Path>, out: &OutDir, log: &mut dyn Log) -> CliResult<()> {
    let inst = cfg.instance()?;
    let policy = cfg.policy(&inst, policy)?;
    write_resolved(out, cfg, &inst)?;
    let summary = problem(cfg, &inst).evaluate(&policy, &evaluation_seeds(cfg.seed, cfg.replications))?;
    out.write_json(
        "evaluation.json",
        &Evaluation {
            policy_hash: policy.fingerprint(),
            nonzero: policy.nonzero_count(),
            replications: cfg.replications,
            seed: cfg.seed,
            summary: &summary,
        },
    )?;
    log.line(&format!("mean cost: {} (std err {})", summary.mean, summary.std_err));
    Ok(())
}

/// Optimizer run without its epoch list, which lives in the JSON-lines log.
#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    method: invopt_core::opt::Method,
    stage: Stage,
    seed: u64,
    lambda: f64,
    config: &'a OptConfig,
    epochs: usize,
    final_objective: Option<f64>,
    nonzero: usize,
    stop: StopReason,
}

impl<'a> From<&'a OptRunRecord> for RunSummary<'a> {
    fn from(r: &'a OptRunRecord) -> Self {
        Self {
            method: r.method,
            stage: r.stage,
            seed: r.seed,
            lambda: r.lambda,
            config: &r.config,
            epochs: r.epochs.len(),
            final_objective: r.epochs.last().map(|e| e.objective),
            nonzero: r.final_policy.nonzero_count(),
            stop: r.stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageComparison {
    pub stage1_cost: f64,
    pub stage2_cost: f64,
    pub improvement_pct: f64,
    pub stage1_std_err: f64,
    pub stage2_std_err: f64,
    pub evaluation_seeds: usize,
}

impl StageComparison {
    pub fn new(stage1: &CostSummary, stage2: &CostSummary) -> Self {
        let improvement_pct = if stage1.mean != 0.0 {
            100.0 * (stage1.mean - stage2.mean) / stage1.mean
        } else {
            0.0
        };
        Self {
            stage1_cost: stage1.mean,
            stage2_cost: stage2.mean,
            improvement_pct,
            stage1_std_err: stage1.std_err,
            stage2_std_err: stage2.std_err,
            evaluation_seeds: stage1.totals.len(),
        }
    }
}

/// Loads an epoch log for resuming and rewrites it without any line cut
/// off by an interrupt, so new epochs append cleanly.
fn resume_log(out: &OutDir, name: &str) -> CliResult<Vec<EpochRecord>> {
    let Some(text) = out.read_text(name)? else {
        return Ok(Vec::new());
    };
    let records = read_epoch_log(&text)?;
    let mut sink = JsonLinesSink::new(out.open_log(name, true)?);
    for r in &records {
        invopt_core::opt::EpochSink::record(&mut sink, r)?;
    }
    Ok(records)
}

pub fn optimize(cfg: &RunConfig, resume: bool, out: &OutDir, log: &mut dyn Log) -> CliResult<()> {
    let block = cfg
        .optimizer
        .clone()
        .ok_or_else(|| CliError::Config("optimize needs an `optimizer` block".into()))?;
    let inst = cfg.instance()?;
    let start = cfg.policy(&inst, None)?;
    write_resolved(out, cfg, &inst)?;
    let problem = problem(cfg, &inst);
    let eval_seeds = evaluation_seeds(cfg.seed, block.evaluation_seeds);

    let final_policy: PolicyVector = match block.mode.single_method() {
        None => {
            let (r1, r2) = if resume {
                (resume_log(out, "epochs_stage1.jsonl")?, resume_log(out, "epochs_stage2.jsonl")?)
            } else {
                (Vec::new(), Vec::new())
            };
            if resume {
                log.line(&format!("resuming at stage 1 epoch {}, stage 2 epoch {}", r1.len() + 1, r2.len() + 1));
            }
            let mut s1 = JsonLinesSink::new(out.open_log("epochs_stage1.jsonl", !resume)?);
            let mut s2 = JsonLinesSink::new(out.open_log("epochs_stage2.jsonl", !resume)?);
            let res = two_stage(&problem, &block.config, cfg.seed, Some(start), (&mut s1, &mut s2), (r1, r2))?;
            out.write_json(
                "run.json",
                &json!({
                    "stage1": RunSummary::from(&res.stage1),
                    "stage2": RunSummary::from(&res.stage2),
                    "zero_threshold": res.zero_threshold,
                    "support_size": res.support.iter().filter(|&&b| b).count(),
                }),
            )?;
            let c1 = problem.evaluate(&res.stage1.final_policy, &eval_seeds)?;
            let c2 = problem.evaluate(&res.policy, &eval_seeds)?;
            let cmp = StageComparison::new(&c1, &c2);
            out.write_json("stage_comparison.json", &cmp)?;
            log.line(&format!(
                "stage 1: {} epochs, {} nonzero",
                res.stage1.epochs.len(),
                res.stage1.final_policy.nonzero_count()
            ));
            log.line(&format!("stage 2: {} epochs", res.stage2.epochs.len()));
            log.line(&format!(
                "stage 1 cost {} / stage 2 cost {} ({:.3}% improvement)",
                cmp.stage1_cost, cmp.stage2_cost, cmp.improvement_pct
            ));
            res.policy
        }
        Some(method) => {
            let prior = if resume { resume_log(out, "epochs.jsonl")? } else { Vec::new() };
            if resume {
                log.line(&format!("resuming at epoch {}", prior.len() + 1));
            }
            let mut sink = JsonLinesSink::new(out.open_log("epochs.jsonl", !resume)?);
            let mut spec = RunSpec::new(method, cfg.seed, start);
            spec.resume = prior;
            let rec = run(&problem, &block.config, spec, &mut sink)?;
            out.write_json("run.json", &RunSummary::from(&rec))?;
            let eval = problem.evaluate(&rec.final_policy, &eval_seeds)?;
            out.write_json("evaluation.json", &json!({ "mean": eval.mean, "std_err": eval.std_err, "evaluation_seeds": eval.totals.len() }))?;
            log.line(&format!("{} epochs, {} nonzero, cost {}", rec.epochs.len(), rec.final_policy.nonzero_count(), eval.mean));
            rec.final_policy
        }
    };
    let mut body = json!({
        "policy": final_policy,
        "nonzero": final_policy.nonzero_count(),
        "policy_hash": final_policy.fingerprint(),
    });
    if let Some(names) = &inst.names {
        body["names"] = json!(names);
    }
    out.write_json("policy.json", &body)?;
    if block.mode == OptimizeMode::TwoStage {
        log.line(&format!("final policy: {} nonzero", final_policy.nonzero_count()));
    }
    Ok(())
}
