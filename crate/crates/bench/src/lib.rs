//! Shared fixtures for the solver benchmarks.

use fastlimit_core::{Grid, InitialData, Nonlinearity, NonlinearitySpec, Result};

/// A mixed-phase state on `n` cells for the reference affine nonlinearity.
pub struct Fixture {
    pub nl: Nonlinearity,
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn fixture(n: usize) -> Result<Fixture> {
    let nl = Nonlinearity::new(NonlinearitySpec::corrected_affine())?;
    let grid = Grid::new(n, 1.0)?;
    let (u, v) = InitialData::from_id("sine_mix")?.generate(7, &grid, &nl)?;
    Ok(Fixture { nl, grid, u: u.into_values(), v: v.into_values() })
}
