use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clustersync::analysis::structural_threshold;
use clustersync::control::{attempt_constrained, AppliedPerturbation};
use clustersync::io::{
    load_network, write_metrics_csv, write_trajectory_csv, LoadedNetwork, NetworkFile, RepairReport,
};
use clustersync::simulator::{frequency_spread, phase_spread};
use clustersync::{
    apply_perturbation, build_inter_cluster_matrix, classify, integrate, solve_unconstrained,
    verify_solution, CharacteristicBasis, Error, NetworkSpec, Partition, PerturbationResult,
    Result, SimConfig, SparsityMask, SyncVerdict, Trajectory,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::{Cli, Command, RepairArgs, SimArgs, Status};

struct Ctx {
    quiet: bool,
    tol: f64,
}

impl Ctx {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            emit(text.as_ref());
        }
    }
}

/// Writes a line to stdout; a closed pipe is not an error worth reporting.
fn emit(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?);
    Ok(())
}

pub(crate) fn run(cli: &Cli) -> Result<Status> {
    if !(cli.tol.is_finite() && cli.tol >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "--tol must be finite and >= 0, got {}",
            cli.tol
        )));
    }
    let ctx = Ctx {
        quiet: cli.quiet,
        tol: cli.tol,
    };
    match &cli.command {
        Command::Check { input, report } => check(&ctx, input, report.as_deref()),
        Command::Repair {
            input,
            out,
            report,
            repair: args,
        } => {
            let report = report
                .clone()
                .unwrap_or_else(|| out.with_extension("report.json"));
            repair(&ctx, input, out, &report, args)
        }
        Command::Simulate {
            input,
            traj,
            metrics,
            sim,
        } => simulate(&ctx, input, traj, metrics, sim),
        Command::Pipeline {
            input,
            out,
            repair: args,
            sim,
        } => pipeline(&ctx, input, out, args, sim),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn verdict_status(verdict: &SyncVerdict) -> Status {
    if verdict.synchronizable {
        Status::Ok
    } else {
        Status::NotSynchronizable
    }
}

fn describe_verdict(ctx: &Ctx, verdict: &SyncVerdict) {
    let yes_no = |ok| if ok { "ok" } else { "violated" };
    ctx.say(format!(
        "synchronizable: {}",
        if verdict.synchronizable { "yes" } else { "no" }
    ));
    ctx.say(format!(
        "  weight condition: {} (matrix residual {:.3e})",
        yes_no(verdict.weight_condition_ok),
        verdict.matrix_residual
    ));
    for v in &verdict.violations {
        ctx.say(format!(
            "    from cluster {} into cluster {}: nodes {} and {} differ by {}",
            v.cluster_pair.0, v.cluster_pair.1, v.node_pair.0, v.node_pair.1, v.gap
        ));
    }
    ctx.say(format!(
        "  frequency condition: {}",
        yes_no(verdict.frequency_condition_ok)
    ));
    for v in &verdict.frequency_violations {
        ctx.say(format!(
            "    cluster {}: nodes {} and {} differ by {}",
            v.cluster, v.node_pair.0, v.node_pair.1, v.gap
        ));
    }
}

fn check(ctx: &Ctx, input: &Path, report: Option<&Path>) -> Result<Status> {
    let loaded = load_network(input)?;
    let verdict = classify(&loaded.network, &loaded.partition, ctx.tol)?;
    describe_verdict(ctx, &verdict);
    emit_json(&verdict)?;
    if let Some(path) = report {
        write_json(path, &verdict)?;
    }
    Ok(verdict_status(&verdict))
}

/// Runs the solver and, when feasible, verifies and applies its result.
fn compute_repair(
    ctx: &Ctx,
    loaded: &LoadedNetwork,
    args: &RepairArgs,
) -> Result<(PerturbationResult, Option<AppliedPerturbation>)> {
    let basis = CharacteristicBasis::new(&loaded.partition)?;
    let a_bar = build_inter_cluster_matrix(&loaded.network, &basis)?;
    let (result, mask) = if args.unconstrained {
        let n = loaded.network.n();
        (solve_unconstrained(&a_bar, &basis)?, SparsityMask::all(n))
    } else {
        (
            attempt_constrained(&a_bar, &basis, &loaded.mask, ctx.tol)?,
            loaded.mask.clone(),
        )
    };
    if !result.feasible {
        return Ok((result, None));
    }
    verify_solution(&loaded.network, &result, &basis, &mask, ctx.tol)?;
    let applied = apply_perturbation(&loaded.network, &result)?;
    if !args.allow_sign_flips {
        for c in applied.sign_flips() {
            log::warn!(
                "edge ({}, {}) flips sign: {} -> {}",
                c.target,
                c.source,
                c.old,
                c.new
            );
        }
    }
    for c in applied.new_edges() {
        log::info!(
            "new edge ({}, {}) with weight {}",
            c.target,
            c.source,
            c.new
        );
    }
    Ok((result, Some(applied)))
}

fn infeasible(ctx: &Ctx, loaded: &LoadedNetwork, result: &PerturbationResult) -> Result<Error> {
    let basis = CharacteristicBasis::new(&loaded.partition)?;
    let a_bar = build_inter_cluster_matrix(&loaded.network, &basis)?;
    let rhs = basis.invariance_block(a_bar.a_bar()).norm();
    Ok(Error::Infeasible {
        kkt_residual: result.kkt_residual,
        threshold: structural_threshold(ctx.tol, rhs),
    })
}

fn describe_repair(ctx: &Ctx, report: &RepairReport) {
    ctx.say(format!(
        "repair: ‖Δ‖_F = {:.6e}, constraint residual {:.3e}, {} weight(s) changed",
        report.frobenius_norm,
        report.constraint_residual,
        report.changed_edges.len()
    ));
}

fn warn_on_frequencies(net: &NetworkSpec, partition: &Partition, tol: f64) -> Result<()> {
    let verdict = classify(net, partition, tol)?;
    if !verdict.frequency_condition_ok {
        log::warn!(
            "natural frequencies differ inside a cluster; the repaired network still fails check"
        );
    }
    Ok(())
}

fn repair(
    ctx: &Ctx,
    input: &Path,
    out: &Path,
    report_path: &Path,
    args: &RepairArgs,
) -> Result<Status> {
    let loaded = load_network(input)?;
    let (result, applied) = compute_repair(ctx, &loaded, args)?;
    let report = RepairReport::new(&result, applied.as_ref());
    write_json(report_path, &report)?;
    let Some(applied) = applied else {
        emit_json(&report)?;
        return Err(infeasible(ctx, &loaded, &result)?);
    };
    NetworkFile::from_model(
        &applied.network,
        &loaded.partition,
        loaded.mask_edges.clone(),
    )
    .write(out)?;
    warn_on_frequencies(&applied.network, &loaded.partition, ctx.tol)?;
    describe_repair(ctx, &report);
    emit_json(&report)?;
    Ok(Status::Ok)
}

fn sim_config(sim: &SimArgs, partition: &Partition) -> Result<SimConfig> {
    let theta0 = if sim.theta0.trim() == "cluster-step" {
        partition.cluster_staircase(1.0)
    } else {
        let values = sim
            .theta0
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("theta0: cannot parse {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        DVector::from_vec(values)
    };
    let cfg = SimConfig {
        t_final: sim.t_final,
        dt: sim.dt,
        theta0,
        sample_every: sim.sample_every,
    };
    cfg.validate(partition.n())?;
    Ok(cfg)
}

fn run_simulation(
    net: &NetworkSpec,
    partition: &Partition,
    cfg: &SimConfig,
    traj_path: &Path,
    metrics_path: &Path,
) -> Result<Trajectory> {
    let traj = integrate(net, cfg)?;
    write_trajectory_csv(BufWriter::new(File::create(traj_path)?), &traj)?;
    write_metrics_csv(
        BufWriter::new(File::create(metrics_path)?),
        &traj,
        partition,
    )?;
    Ok(traj)
}

fn describe_final_spreads(
    ctx: &Ctx,
    label: &str,
    traj: &Trajectory,
    partition: &Partition,
) -> Result<()> {
    if ctx.quiet || traj.is_empty() {
        return Ok(());
    }
    let last = traj.len() - 1;
    let phase = phase_spread(traj, partition)?;
    let freq = frequency_spread(traj, partition)?;
    ctx.say(format!("{label}final spreads at t = {}:", traj.times[last]));
    for k in 0..partition.m() {
        ctx.say(format!(
            "  cluster {k}: phase {:.3e} rad, frequency {:.3e} rad/s",
            phase[(last, k)],
            freq[(last, k)]
        ));
    }
    Ok(())
}

fn simulate(ctx: &Ctx, input: &Path, traj: &Path, metrics: &Path, sim: &SimArgs) -> Result<Status> {
    let loaded = load_network(input)?;
    let cfg = sim_config(sim, &loaded.partition)?;
    let trajectory = run_simulation(&loaded.network, &loaded.partition, &cfg, traj, metrics)?;
    describe_final_spreads(ctx, "", &trajectory, &loaded.partition)?;
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct PipelineSummary {
    synchronizable_before: bool,
    /// `None` when the weights already satisfied the row-sum condition.
    repair: Option<RepairReport>,
    synchronizable_after: bool,
    exit_code: u8,
}

fn pipeline(
    ctx: &Ctx,
    input: &Path,
    out: &Path,
    args: &RepairArgs,
    sim: &SimArgs,
) -> Result<Status> {
    let loaded = load_network(input)?;
    let cfg = sim_config(sim, &loaded.partition)?;
    fs::create_dir_all(out)?;
    let file = |name: &str| -> PathBuf { out.join(name) };

    let before = classify(&loaded.network, &loaded.partition, ctx.tol)?;
    write_json(&file("check_before.json"), &before)?;
    ctx.say("before repair:");
    describe_verdict(ctx, &before);

    let mut repaired = loaded.network.clone();
    let mut repair_report = None;
    if !before.weight_condition_ok {
        let (result, applied) = compute_repair(ctx, &loaded, args)?;
        let report = RepairReport::new(&result, applied.as_ref());
        write_json(&file("repair_report.json"), &report)?;
        let Some(applied) = applied else {
            return Err(infeasible(ctx, &loaded, &result)?);
        };
        describe_repair(ctx, &report);
        NetworkFile::from_model(
            &applied.network,
            &loaded.partition,
            loaded.mask_edges.clone(),
        )
        .write(&file("repaired.json"))?;
        repaired = applied.network;
        repair_report = Some(report);
    } else {
        ctx.say("weights already satisfy the row-sum condition; repair skipped");
    }

    let after = classify(&repaired, &loaded.partition, ctx.tol)?;
    write_json(&file("check_after.json"), &after)?;
    ctx.say("after repair:");
    describe_verdict(ctx, &after);

    let partition = &loaded.partition;
    let (traj_before, traj_after) = std::thread::scope(|s| {
        let original = s.spawn(|| {
            run_simulation(
                &loaded.network,
                partition,
                &cfg,
                &file("trajectory_before.csv"),
                &file("metrics_before.csv"),
            )
        });
        let fixed = run_simulation(
            &repaired,
            partition,
            &cfg,
            &file("trajectory_after.csv"),
            &file("metrics_after.csv"),
        );
        (original.join().expect("simulation thread panicked"), fixed)
    });
    describe_final_spreads(ctx, "before: ", &traj_before?, partition)?;
    describe_final_spreads(ctx, "after: ", &traj_after?, partition)?;

    let status = verdict_status(&after);
    let summary = PipelineSummary {
        synchronizable_before: before.synchronizable,
        repair: repair_report,
        synchronizable_after: after.synchronizable,
        exit_code: status as u8,
    };
    write_json(&file("summary.json"), &summary)?;
    emit_json(&summary)?;
    Ok(status)
}
