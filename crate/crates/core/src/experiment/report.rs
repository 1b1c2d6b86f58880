//! Aggregate sweep report and the convergence table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sweep::{CellReport, EpsilonRun};
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::System;

/// Summary of one epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEntry {
    pub index: usize,
    pub eps: f64,
    /// Solver or analysis failure; all statistics are absent when set.
    pub error: Option<String>,
    pub stats: Option<EpsilonStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStats {
    pub dt: f64,
    pub n_steps: usize,
    pub bound: f64,
    /// `max_t |mass(t) - mass(0)|`.
    pub mass_drift: f64,
    /// Largest per-step energy increase divided by the step, for the
    /// identity, cubic and smoothed-step entropies.
    pub max_energy_rate: [f64; 3],
    pub dissip_gradv: f64,
    pub dissip_reaction: f64,
    pub mean_dirac_v: f64,
    pub mean_dirac_u: f64,
    pub mean_var_u: f64,
    pub mean_var_f_u: f64,
    pub mean_lambda: [f64; 3],
    pub max_identity_residual: f64,
    /// Largest atom-fit residual among cells that are not flagged.
    pub max_fit_residual: Option<f64>,
    pub cells: Vec<CellReport>,
}

impl EpsilonEntry {
    pub fn failed(index: usize, eps: f64, message: String) -> Self {
        EpsilonEntry { index, eps, error: Some(message), stats: None }
    }

    pub fn from_run(index: usize, run: &EpsilonRun) -> Self {
        let traj = &run.trajectory;
        let d = &traj.diagnostics;
        let mass0 = d[0].mass;
        let mass_drift = d.iter().fold(0.0f64, |m, r| m.max((r.mass - mass0).abs()));
        let mut max_energy_rate = [f64::NEG_INFINITY; 3];
        for w in d.windows(2) {
            let dt = w[1].t - w[0].t;
            for (i, rate) in max_energy_rate.iter_mut().enumerate() {
                *rate = rate.max((w[1].energy[i] - w[0].energy[i]) / dt);
            }
        }
        let last = d.last().expect("diagnostics hold the initial row");
        let n = run.cells.len() as f64;
        let mean = |f: &dyn Fn(&CellReport) -> f64| run.cells.iter().map(f).sum::<f64>() / n;
        let stats = EpsilonStats {
            dt: traj.dt,
            n_steps: d.len() - 1,
            bound: traj.bound,
            mass_drift,
            max_energy_rate,
            dissip_gradv: last.dissip_gradv,
            dissip_reaction: last.dissip_reaction,
            mean_dirac_v: mean(&|c| c.dirac_score_v),
            mean_dirac_u: mean(&|c| c.dirac_score_u),
            mean_var_u: mean(&|c| c.var_u),
            mean_var_f_u: mean(&|c| c.var_f_u),
            mean_lambda: [0, 1, 2].map(|i| mean(&|c| c.lambda[i])),
            max_identity_residual: run.cells.iter().fold(0.0, |m, c| m.max(c.identity_residual)),
            max_fit_residual: run
                .cells
                .iter()
                .filter(|c| !c.flagged)
                .map(|c| c.fit_residual)
                .reduce(f64::max),
            cells: run.cells.clone(),
        };
        EpsilonEntry { index, eps: run.eps, error: None, stats: Some(stats) }
    }
}

/// Final-time distances between consecutive epsilons on the common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyRow {
    pub eps: f64,
    pub eps_next: f64,
    pub v_l2: Option<f64>,
    pub u_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub system: System,
    pub nonlinearity: NonlinearitySpec,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub entries: Vec<EpsilonEntry>,
    /// `|eps| - 1` rows.
    pub cauchy: Vec<CauchyRow>,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn failures(&self) -> impl Iterator<Item = &EpsilonEntry> {
        self.entries.iter().filter(|e| e.error.is_some())
    }
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:>12.4e}"),
        None => format!("{:>12}", "-"),
    }
}

/// Text table with one row per consecutive epsilon pair.
pub fn convergence_table(report: &SweepReport) -> Result<String> {
    if report.entries.len() < 2 {
        return Err(Error::TooFewEntries { found: report.entries.len(), required: 2 });
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "eps", "|dv|_L2", "|du|_L2", "dirac_v", "dirac_u", "lambda2"
    );
    for row in &report.cauchy {
        let stats = report
            .entries
            .iter()
            .find(|e| e.eps == row.eps)
            .and_then(|e| e.stats.as_ref());
        let _ = writeln!(
            out,
            "{:>12.4e} {} {} {} {} {}",
            row.eps,
            cell(row.v_l2),
            cell(row.u_l2),
            cell(stats.map(|s| s.mean_dirac_v)),
            cell(stats.map(|s| s.mean_dirac_u)),
            cell(stats.map(|s| s.mean_lambda[1])),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(n: usize) -> SweepReport {
        let eps: Vec<f64> = (0..n).map(|k| 0.1 / 4f64.powi(k as i32)).collect();
        SweepReport {
            system: System::FastReaction,
            nonlinearity: NonlinearitySpec::corrected_affine(),
            seed: 0,
            entries: eps.iter().enumerate().map(|(k, &e)| EpsilonEntry::failed(k, e, "x".into())).collect(),
            cauchy: eps
                .windows(2)
                .map(|w| CauchyRow { eps: w[0], eps_next: w[1], v_l2: Some(0.0), u_l2: Some(0.0) })
                .collect(),
            eps,
        }
    }

    #[test]
    fn table_needs_two_entries() {
        assert!(matches!(convergence_table(&report(1)), Err(Error::TooFewEntries { found: 1, required: 2 })));
    }

    #[test]
    fn table_has_one_row_per_pair() {
        let t = convergence_table(&report(4)).unwrap();
        assert_eq!(t.lines().count(), 1 + 3);
    }

    #[test]
    fn json_round_trip() {
        let r = report(3);
        assert_eq!(SweepReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
