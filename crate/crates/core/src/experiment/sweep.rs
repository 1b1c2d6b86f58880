//! Epsilon sweeps: simulate every epsilon, analyse its space-time cells, and
//! write per-epsilon artifacts plus an aggregate report.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::{CauchyRow, EpsilonEntry, SweepReport};
use crate::entropy::{empirical_theorem_a, IdentityReport};
use crate::error::{Error, Result};
use crate::fast_reaction::{simulate, FastReactionConfig};
use crate::forward_backward::{fb_simulate, FbConfig};
use crate::nonlinearity::Nonlinearity;
use crate::pde::Grid;
use crate::trajectory::Trajectory;
use crate::young_measure::{decompose, phase_weights, pushforward, Binning, EmpiricalMeasure};
use crate::System;

pub const CELLS_HEADER: &str = "t_window,x_window,lambda1,lambda2,lambda3,v_bar,dirac_score_v,dirac_score_u,fit_residual";
pub const IDENTITY_HEADER: &str = "cell_id,variant,tau0,lambda0,lhs,rhs,residual,tolerance";

/// Per-cell summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub t_window: usize,
    pub x_window: usize,
    pub n_samples: usize,
    pub lambda: [f64; 3],
    pub v_bar: f64,
    pub dirac_score_v: f64,
    pub dirac_score_u: f64,
    pub fit_residual: f64,
    /// `v` is not concentrated enough for the atom fit to be meaningful.
    pub flagged: bool,
    pub var_u: f64,
    pub var_f_u: f64,
    /// Push-forward-weighted identity residual (see [`empirical_theorem_a`]).
    pub identity_residual: f64,
    pub identity_tolerance: f64,
}

impl CellReport {
    pub fn id(&self) -> String {
        format!("t{}_x{}", self.t_window, self.x_window)
    }
}

/// Histograms of one cell, as `(bin_center, mass)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeasures {
    pub cell_id: String,
    pub u: Vec<(f64, f64)>,
    pub push_forward: Vec<(f64, f64)>,
    pub v: Vec<(f64, f64)>,
}

/// Everything produced for one epsilon.
#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub eps: f64,
    pub trajectory: Trajectory,
    pub cells: Vec<CellReport>,
    pub identities: Vec<IdentityReport>,
    pub measures: Vec<CellMeasures>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub runs: Vec<Result<EpsilonRun>>,
    /// Wall-clock seconds per epsilon.
    pub seconds: Vec<f64>,
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n
}

/// Binning of the `u` axis over `[0, M]` with `alpha_plus`, `beta_minus` on edges.
pub fn u_binning(nl: &Nonlinearity, bound: f64, bins: usize) -> Result<Binning> {
    let th = nl.thresholds();
    Binning::snapped(0.0, bound, bins, (th.alpha_plus, th.beta_minus))
}

/// Binning of the value axis over `[0, max F]` with `f_minus`, `f_plus` on edges.
pub fn value_binning(nl: &Nonlinearity, bound: f64, bins: usize) -> Result<Binning> {
    let th = nl.thresholds();
    Binning::snapped(0.0, nl.eval(bound).max(th.f_plus), bins, (th.f_minus, th.f_plus))
}

/// Simulates one epsilon of the sweep.
pub fn simulate_epsilon(config: &RunConfig, eps: f64) -> Result<Trajectory> {
    let grid = Grid::new(config.grid_n, config.grid_length)?;
    match config.system {
        System::FastReaction => simulate(&FastReactionConfig {
            nonlinearity: config.nonlinearity.clone(),
            grid,
            eps,
            t_end: config.t_end,
            dt_macro: config.dt,
            initial: config.initial.clone(),
            seed: config.seed,
            snapshot_every: config.snapshot_every,
            tau0: config.tau0,
        }),
        System::ForwardBackward => fb_simulate(&FbConfig {
            nonlinearity: config.nonlinearity.clone(),
            grid,
            eps,
            t_end: config.t_end,
            c_dt: config.c_dt,
            initial: config.initial.clone(),
            seed: config.seed,
            snapshot_every: config.snapshot_every,
            tau0: config.tau0,
        }),
    }
}

/// Cell statistics of a trajectory.
pub fn analyze_trajectory(
    config: &RunConfig,
    nl: &Nonlinearity,
    trajectory: &Trajectory,
) -> Result<(Vec<CellReport>, Vec<IdentityReport>, Vec<CellMeasures>)> {
    let th = nl.thresholds();
    let u_bins = u_binning(nl, trajectory.bound, config.bins_u)?;
    let v_bins = value_binning(nl, trajectory.bound, config.bins_v)?;
    let delta = config.delta_frac * (th.beta_plus - th.alpha_minus);
    let samples = config.cells.partition(trajectory, config.t_end)?;
    let mut cells = Vec::with_capacity(samples.len());
    let mut identities = Vec::new();
    let mut measures = Vec::with_capacity(samples.len());
    for (idx, s) in samples.iter().enumerate() {
        let (t_window, x_window) = (idx / config.cells.n_space, idx % config.cells.n_space);
        let dec = decompose(&s.u, &s.v, nl, delta, config.dirac_threshold, v_bins)?;
        let mu = EmpiricalMeasure::from_samples(&s.u, u_bins)?;
        let push = pushforward(&s.u, nl, v_bins)?;
        let nu = EmpiricalMeasure::from_samples(&s.v, v_bins)?;
        let f_u: Vec<f64> = s.u.iter().map(|&u| nl.eval(u)).collect();
        let mut report = CellReport {
            t_window,
            x_window,
            n_samples: s.len(),
            lambda: phase_weights(&s.u, th)?,
            v_bar: dec.v_bar,
            dirac_score_v: dec.dirac_score_v,
            dirac_score_u: mu.dirac_score(),
            fit_residual: dec.fit_residual,
            flagged: dec.flagged,
            var_u: sample_variance(&s.u),
            var_f_u: sample_variance(&f_u),
            identity_residual: 0.0,
            identity_tolerance: 0.0,
        };
        let id = report.id();
        let summary = empirical_theorem_a(nl, &s.u, v_bins, config.system, &id)?;
        report.identity_residual = summary.weighted_residual;
        report.identity_tolerance = summary.tolerance;
        identities.extend(summary.reports);
        measures.push(CellMeasures { cell_id: id, u: mu.to_pairs(), push_forward: push.to_pairs(), v: nu.to_pairs() });
        cells.push(report);
    }
    Ok((cells, identities, measures))
}

/// Simulation plus cell analysis for one epsilon.
pub fn run_epsilon(config: &RunConfig, eps: f64) -> Result<EpsilonRun> {
    let nl = Nonlinearity::new(config.nonlinearity.clone())?;
    let trajectory = simulate_epsilon(config, eps)?;
    let (cells, identities, measures) = analyze_trajectory(config, &nl, &trajectory)?;
    Ok(EpsilonRun { eps, trajectory, cells, identities, measures })
}

fn l2_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * dx).sqrt()
}

fn entry_for(config: &RunConfig, index: usize, run: &Result<EpsilonRun>) -> EpsilonEntry {
    let eps = config.eps[index];
    match run {
        Err(e) => EpsilonEntry::failed(index, eps, e.to_string()),
        Ok(run) => EpsilonEntry::from_run(index, run),
    }
}

/// Runs every epsilon (concurrently with `config.workers` threads) and builds
/// the report in memory. Failing epsilons are recorded, not propagated.
pub fn execute(config: &RunConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let timed: Vec<(Result<EpsilonRun>, f64)> = pool.install(|| {
        config
            .eps
            .par_iter()
            .map(|&eps| {
                let start = Instant::now();
                let run = run_epsilon(config, eps);
                (run, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let (runs, seconds): (Vec<_>, Vec<_>) = timed.into_iter().unzip();
    let entries = runs.iter().enumerate().map(|(k, r)| entry_for(config, k, r)).collect();
    let dx = config.grid_length / config.grid_n as f64;
    let cauchy = runs
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (v_l2, u_l2) = match (&pair[0], &pair[1]) {
                (Ok(a), Ok(b)) => {
                    let (fa, fb) = (a.trajectory.final_snapshot(), b.trajectory.final_snapshot());
                    (Some(l2_distance(&fa.v, &fb.v, dx)), Some(l2_distance(&fa.u, &fb.u, dx)))
                }
                _ => (None, None),
            };
            CauchyRow { eps: config.eps[k], eps_next: config.eps[k + 1], v_l2, u_l2 }
        })
        .collect();
    let report = SweepReport {
        system: config.system,
        nonlinearity: config.nonlinearity.clone(),
        seed: config.seed,
        eps: config.eps.clone(),
        entries,
        cauchy,
    };
    Ok(SweepOutcome { report, runs, seconds })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_run(config: &RunConfig, run: &EpsilonRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let traj = &run.trajectory;
    let mut out = create(&dir.join("diagnostics.csv"))?;
    traj.write_diagnostics_csv(&mut out)?;
    out.flush()?;

    let mut out = create(&dir.join("snapshot_final.csv"))?;
    traj.write_snapshot_csv(traj.final_snapshot(), &mut out)?;
    out.flush()?;

    if config.write_snapshots {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (k, s) in traj.snapshots.iter().enumerate() {
            let mut out = create(&snap_dir.join(format!("snapshot_{k:05}.csv")))?;
            traj.write_snapshot_csv(s, &mut out)?;
            out.flush()?;
        }
    }

    let mut out = create(&dir.join("cells.csv"))?;
    writeln!(out, "{CELLS_HEADER}")?;
    for c in &run.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.t_window, c.x_window, c.lambda[0], c.lambda[1], c.lambda[2], c.v_bar, c.dirac_score_v, c.dirac_score_u, c.fit_residual
        )?;
    }
    out.flush()?;

    let mut out = create(&dir.join("identity.csv"))?;
    writeln!(out, "{IDENTITY_HEADER}")?;
    for r in &run.identities {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.provenance,
            r.variant.name(),
            r.tau0,
            r.lambda0,
            r.lhs,
            r.rhs,
            r.residual,
            r.tolerance
        )?;
    }
    out.flush()?;

    let mut out = create(&dir.join("measures.json"))?;
    serde_json::to_writer(&mut out, &run.measures)?;
    out.flush()?;
    Ok(())
}

/// Writes `report.json`, `timings.json` and one `eps_<k>` directory per
/// successful epsilon into `dir`.
pub fn write_artifacts(config: &RunConfig, outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, run) in outcome.runs.iter().enumerate() {
        if let Ok(run) = run {
            write_run(config, run, &dir.join(format!("eps_{k}")))?;
        }
    }
    fs::write(dir.join("report.json"), outcome.report.to_json()? + "\n")?;
    let timings = serde_json::json!({ "eps": config.eps, "seconds": outcome.seconds });
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;
    Ok(())
}

/// [`execute`] followed by [`write_artifacts`] into `config.output_dir`.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutcome> {
    let outcome = execute(config)?;
    write_artifacts(config, &outcome, &config.output_dir)?;
    Ok(outcome)
}
