//! Initial-data generators.
//!
//! Every generator returns nonnegative `u0` together with `v0 = F(u0)`, so
//! the reaction term vanishes at `t = 0` and the dynamics start from the
//! relation the fast-reaction limit enforces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{Branch, Nonlinearity};
use crate::pde::{Field, Grid};

/// Number of random cosine modes mixed by [`InitialData::SineMix`].
const SINE_MODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    /// `u0 = value` (default `beta_plus`).
    Constant { value: Option<f64> },
    /// Seeded random combination of the first few Neumann cosine modes,
    /// rescaled to `center +- amplitude`. Defaults span `[alpha_minus, beta_plus]`.
    SineMix { center: Option<f64>, amplitude: Option<f64> },
    /// Periodic blocks on the two stable branches at the level `r`: the first
    /// `round(fraction * period)` cells of each period take `S1(r)`, the rest
    /// `S3(r)`, followed by a 3-cell moving average. The seed is unused.
    PhaseCheckerboard { level: Option<f64>, fraction: f64, period: usize },
}

impl InitialData {
    pub const IDS: [&'static str; 3] = ["constant", "sine_mix", "phase_checkerboard"];

    /// Generator with default parameters.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "constant" => Ok(InitialData::Constant { value: None }),
            "sine_mix" => Ok(InitialData::SineMix { center: None, amplitude: None }),
            "phase_checkerboard" => Ok(InitialData::PhaseCheckerboard { level: None, fraction: 0.5, period: 64 }),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            InitialData::Constant { .. } => "constant",
            InitialData::SineMix { .. } => "sine_mix",
            InitialData::PhaseCheckerboard { .. } => "phase_checkerboard",
        }
    }

    /// Builds `u0`. Call [`InitialData::generate`] to also get `v0`.
    pub fn generate_u(&self, seed: u64, grid: &Grid, nl: &Nonlinearity) -> Result<Field> {
        let th = nl.thresholds();
        let values = match *self {
            InitialData::Constant { value } => {
                let c = value.unwrap_or(th.beta_plus);
                vec![c; grid.n_cells()]
            }
            InitialData::SineMix { center, amplitude } => {
                let center = center.unwrap_or(0.5 * (th.alpha_minus + th.beta_plus));
                let amplitude = amplitude.unwrap_or(0.5 * (th.beta_plus - th.alpha_minus));
                if amplitude < 0.0 {
                    return Err(Error::InitialData(format!("negative amplitude {amplitude}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let coeffs: Vec<f64> = (0..SINE_MODES).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let modes: Vec<Vec<f64>> = (1..=SINE_MODES).map(|k| grid.cosine_mode(k)).collect();
                let shape: Vec<f64> = (0..grid.n_cells())
                    .map(|j| coeffs.iter().zip(&modes).map(|(a, m)| a * m[j]).sum())
                    .collect();
                let peak = shape.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                shape.iter().map(|s| center + scale * s).collect()
            }
            InitialData::PhaseCheckerboard { level, fraction, period } => {
                let r = level.unwrap_or(0.5 * (th.f_minus + th.f_plus));
                if !(r > th.f_minus && r < th.f_plus) {
                    return Err(Error::InitialData(format!(
                        "level {r} must lie strictly between f_minus = {} and f_plus = {}",
                        th.f_minus, th.f_plus
                    )));
                }
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::InitialData(format!("fraction {fraction} not in [0, 1]")));
                }
                if period < 2 || period > grid.n_cells() {
                    return Err(Error::InitialData(format!(
                        "period {period} must be between 2 and the number of cells"
                    )));
                }
                let (a, b) = (nl.inverse(Branch::Lower, r), nl.inverse(Branch::Upper, r));
                let lower_cells = (fraction * period as f64).round() as usize;
                let blocks: Vec<f64> = (0..grid.n_cells())
                    .map(|j| if j % period < lower_cells { a } else { b })
                    .collect();
                moving_average3(&blocks)
            }
        };
        if let Some(j) = values.iter().position(|&u| !(u >= 0.0)) {
            return Err(Error::InitialData(format!("u0 = {} is negative in cell {j}", values[j])));
        }
        Field::new(*grid, values)
    }

    pub fn generate(&self, seed: u64, grid: &Grid, nl: &Nonlinearity) -> Result<(Field, Field)> {
        let u0 = self.generate_u(seed, grid, nl)?;
        let v0 = u0.map(|u| nl.eval(u));
        Ok((u0, v0))
    }
}

/// `(f_{j-1} + f_j + f_{j+1}) / 3` with mirrored ends; preserves the sum.
fn moving_average3(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|j| {
            let left = f[j.saturating_sub(1)];
            let right = f[(j + 1).min(n - 1)];
            (left + f[j] + right) / 3.0
        })
        .collect()
}

/// Generator lookup by id with default parameters.
pub fn initial_data(id: &str, seed: u64, grid: &Grid, nl: &Nonlinearity) -> Result<(Field, Field)> {
    InitialData::from_id(id)?.generate(seed, grid, nl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearitySpec;

    fn affine() -> Nonlinearity {
        Nonlinearity::new(NonlinearitySpec::corrected_affine()).unwrap()
    }

    #[test]
    fn unknown_generator() {
        let g = Grid::new(16, 1.0).unwrap();
        assert!(matches!(initial_data("zigzag", 0, &g, &affine()), Err(Error::UnknownGenerator(_))));
    }

    #[test]
    fn constant_at_beta_plus() {
        let nl = affine();
        let g = Grid::new(16, 1.0).unwrap();
        let (u, v) = initial_data("constant", 0, &g, &nl).unwrap();
        let th = nl.thresholds();
        assert!(u.values().iter().all(|&x| x == th.beta_plus));
        assert!(v.values().iter().all(|&x| (x - th.f_plus).abs() < 1e-15));
    }

    #[test]
    fn checkerboard_mean_matches_block_fractions() {
        let nl = affine();
        let g = Grid::new(1024, 1.0).unwrap();
        let th = *nl.thresholds();
        let r = 1.8;
        for theta in [0.25, 0.5, 0.75] {
            let gen = InitialData::PhaseCheckerboard { level: Some(r), fraction: theta, period: 64 };
            let (u, v) = gen.generate(0, &g, &nl).unwrap();
            let (a, b) = (nl.inverse(Branch::Lower, r), nl.inverse(Branch::Upper, r));
            let expected = theta * a + (1.0 - theta) * b;
            assert!((u.mean() - expected).abs() <= 0.02 * expected);
            assert!(u.values().iter().all(|&x| x >= a - 1e-15 && x <= b + 1e-15));
            assert!(v.values().iter().all(|&x| x >= th.f_minus - 1e-12 && x <= th.f_plus + 1e-12));
        }
    }

    #[test]
    fn checkerboard_rejects_level_outside_unstable_interval() {
        let nl = affine();
        let g = Grid::new(64, 1.0).unwrap();
        let gen = InitialData::PhaseCheckerboard { level: Some(1.0), fraction: 0.5, period: 16 };
        assert!(matches!(gen.generate(0, &g, &nl), Err(Error::InitialData(_))));
    }

    #[test]
    fn sine_mix_is_seeded_and_spans_the_bistable_range() {
        let nl = affine();
        let g = Grid::new(256, 1.0).unwrap();
        let th = *nl.thresholds();
        let (u1, _) = initial_data("sine_mix", 7, &g, &nl).unwrap();
        let (u2, _) = initial_data("sine_mix", 7, &g, &nl).unwrap();
        let (u3, _) = initial_data("sine_mix", 8, &g, &nl).unwrap();
        assert_eq!(u1.values(), u2.values());
        assert_ne!(u1.values(), u3.values());
        let tol = 1e-12;
        assert!(u1.values().iter().all(|&x| x >= th.alpha_minus - tol && x <= th.beta_plus + tol));
        let lo = u1.values().iter().copied().fold(f64::MAX, f64::min);
        let hi = u1.values().iter().copied().fold(f64::MIN, f64::max);
        assert!((lo - th.alpha_minus).abs() < tol || (hi - th.beta_plus).abs() < tol);
    }

    #[test]
    fn moving_average_preserves_sum() {
        let f = [1.0, 1.0, 4.0, 4.0, 4.0, 1.0];
        let g = moving_average3(&f);
        assert!((g.iter().sum::<f64>() - f.iter().sum::<f64>()).abs() < 1e-14);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[1], 2.0);
    }
}
