//! Snapshots and per-step diagnostic series produced by both integrators.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pde::Grid;
use crate::System;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    /// Stored `v` for the fast-reaction system, the derived `v` for the
    /// forward-backward equation.
    pub v: Vec<f64>,
}

/// One row of the diagnostic series.
///
/// For the forward-backward equation `mass` is `sum u dx`, `energy` holds the
/// Lyapunov functionals `sum Psi(u) dx`, and `dissip_reaction` accumulates
/// `eps * int int u_t^2`, which equals `int int (v - F(u))^2 / eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub mass: f64,
    /// Energies for the registered family: identity, cubic, smoothed step.
    pub energy: [f64; 3],
    /// Accumulated `int_0^t int |grad v|^2`.
    pub dissip_gradv: f64,
    /// Accumulated `int_0^t int (F(u) - v)^2 / eps`.
    pub dissip_reaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: System,
    pub grid: Grid,
    pub eps: f64,
    /// Time step actually used.
    pub dt: f64,
    /// Upper end `M` of the invariant region `[0, M]`.
    pub bound: f64,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticRow>,
}

pub const FAST_REACTION_SNAPSHOT_HEADER: &str = "cell_index,x,u,v";
pub const FORWARD_BACKWARD_SNAPSHOT_HEADER: &str = "cell_index,x,u,v_derived";
pub const FAST_REACTION_DIAGNOSTICS_HEADER: &str =
    "t,mass,energy_id,energy_cubic,energy_step,dissip_gradv,dissip_reaction";
pub const FORWARD_BACKWARD_DIAGNOSTICS_HEADER: &str = "t,mass_u,lyapunov_id,dissip_gradv,dissip_ut";

impl Trajectory {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectories always hold the initial snapshot")
    }

    pub fn write_snapshot_csv(&self, snapshot: &Snapshot, mut out: impl Write) -> Result<()> {
        let header = match self.system {
            System::FastReaction => FAST_REACTION_SNAPSHOT_HEADER,
            System::ForwardBackward => FORWARD_BACKWARD_SNAPSHOT_HEADER,
        };
        writeln!(out, "{header}")?;
        for (j, (u, v)) in snapshot.u.iter().zip(&snapshot.v).enumerate() {
            writeln!(out, "{j},{},{u},{v}", self.grid.x(j))?;
        }
        Ok(())
    }

    pub fn write_diagnostics_csv(&self, mut out: impl Write) -> Result<()> {
        match self.system {
            System::FastReaction => {
                writeln!(out, "{FAST_REACTION_DIAGNOSTICS_HEADER}")?;
                for d in &self.diagnostics {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        d.t, d.mass, d.energy[0], d.energy[1], d.energy[2], d.dissip_gradv, d.dissip_reaction
                    )?;
                }
            }
            System::ForwardBackward => {
                writeln!(out, "{FORWARD_BACKWARD_DIAGNOSTICS_HEADER}")?;
                for d in &self.diagnostics {
                    writeln!(out, "{},{},{},{},{}", d.t, d.mass, d.energy[0], d.dissip_gradv, d.dissip_reaction)?;
                }
            }
        }
        Ok(())
    }
}
