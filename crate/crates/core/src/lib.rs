//! Simulation and analysis toolkit for the fast-reaction limit of a
//! reaction-diffusion system with a nonmonotone nonlinearity `F`, and for the
//! pseudoparabolic regularization of the forward-backward diffusion equation
//! `u_t = Delta F(u)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`nonlinearity`]: the reaction function, its thresholds, inverse
//!   branches and structural condition checks;
//! - [`pde`]: Neumann grid, Laplacian, Helmholtz and Crank-Nicolson solves;
//! - [`fast_reaction`] and [`forward_backward`]: the two integrators;
//! - [`young_measure`]: histogram estimates of the oscillation measures;
//! - [`entropy`]: entropy pairs, change-of-variables constants and the
//!   pointwise identity for the branch densities;
//! - [`experiment`]: config parsing, epsilon sweeps and reports.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod error;
pub mod experiment;
pub mod fast_reaction;
pub mod forward_backward;
pub mod initial_data;
pub mod nonlinearity;
pub mod pde;
pub mod trajectory;
pub mod young_measure;

use serde::{Deserialize, Serialize};

pub use entropy::{BranchTails, EntropyPair, IdentityReport, TestFunction};
pub use error::{Error, Result};
pub use experiment::{RunConfig, SweepReport};
pub use fast_reaction::{FastReactionConfig, SimState};
pub use forward_backward::{FbConfig, FbState};
pub use initial_data::InitialData;
pub use nonlinearity::{AffineSegment, Branch, Nonlinearity, NonlinearitySpec, TheoremDVerdict, Thresholds};
pub use pde::{Field, Grid};
pub use trajectory::{DiagnosticRow, Snapshot, Trajectory};
pub use young_measure::{Binning, DensityTriple, EmpiricalMeasure, PhaseDecomposition};

/// Which of the two evolution problems a run or identity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    FastReaction,
    ForwardBackward,
}

impl System {
    pub fn name(&self) -> &'static str {
        match self {
            System::FastReaction => "fast_reaction",
            System::ForwardBackward => "forward_backward",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fast_reaction" => Some(System::FastReaction),
            "forward_backward" => Some(System::ForwardBackward),
            _ => None,
        }
    }
}
