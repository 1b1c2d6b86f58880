//! Uniform cell-centred 1D grid with homogeneous Neumann boundaries, the
//! discrete Laplacian, and the two tridiagonal solves the integrators need.
//!
//! Boundary cells see a mirror ghost value, so the first row of the
//! Laplacian is `(f1 - f0) / dx^2`. Every row sums to zero and the matrix is
//! symmetric, which makes `sum_j (Delta f)_j = 0` hold to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
    length: f64,
    dx: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < Self::MIN_CELLS {
            return Err(Error::Grid(format!(
                "need at least {} cells, got {n_cells}",
                Self::MIN_CELLS
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Grid(format!("length must be positive, got {length}")));
        }
        Ok(Grid { n_cells, length, dx: length / n_cells as f64 })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Centre of cell `j`.
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.x(j)).collect()
    }

    /// Discrete Neumann eigenvector `cos(k pi x_j / L)`.
    pub fn cosine_mode(&self, k: usize) -> Vec<f64> {
        let w = k as f64 * std::f64::consts::PI / self.length;
        (0..self.n_cells).map(|j| (w * self.x(j)).cos()).collect()
    }

    /// `mu_k >= 0` with `Delta cos_k = -mu_k cos_k`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let theta = k as f64 * std::f64::consts::PI / self.n_cells as f64;
        2.0 / (self.dx * self.dx) * (1.0 - theta.cos())
    }
}

/// Grid function with one finite value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Field(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Field(format!("non-finite value {} in cell {j}", values[j])));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field { grid, values: vec![c; grid.n_cells()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Field { grid, values: (0..grid.n_cells()).map(|j| f(grid.x(j))).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    /// `sum_j f_j dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Discrete `L^2(0, L)` norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|x| x * x).sum::<f64>() * self.grid.dx()).sqrt()
    }
}

/// Applies the Neumann Laplacian to `f`, writing into `out`.
pub fn laplacian_into(f: &[f64], dx: f64, out: &mut [f64]) {
    let n = f.len();
    let inv = 1.0 / (dx * dx);
    out[0] = (f[1] - f[0]) * inv;
    for j in 1..n - 1 {
        out[j] = (f[j - 1] - 2.0 * f[j] + f[j + 1]) * inv;
    }
    out[n - 1] = (f[n - 2] - f[n - 1]) * inv;
}

pub fn laplacian_neumann(f: &Field) -> Field {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(&f.values, f.grid.dx(), &mut out);
    Field { grid: f.grid, values: out }
}

/// Cached Thomas factorization of `I - r L`, where `L` is the Neumann
/// Laplacian stencil without the `1/dx^2` factor and `r >= 0`.
#[derive(Debug, Clone)]
struct ShiftedStencil {
    r: f64,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ShiftedStencil {
    fn new(n: usize, r: f64) -> Self {
        let diag = |j: usize| if j == 0 || j == n - 1 { 1.0 + r } else { 1.0 + 2.0 * r };
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for j in 0..n {
            // sub- and super-diagonal entries are both -r
            let pivot = diag(j) + r * prev;
            inv_pivot[j] = 1.0 / pivot;
            prev = if j + 1 < n { -r / pivot } else { 0.0 };
            c_prime[j] = prev;
        }
        ShiftedStencil { r, c_prime, inv_pivot }
    }

    fn solve_in_place(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] *= self.inv_pivot[0];
        for j in 1..n {
            d[j] = (d[j] + self.r * d[j - 1]) * self.inv_pivot[j];
        }
        for j in (0..n - 1).rev() {
            d[j] -= self.c_prime[j] * d[j + 1];
        }
    }
}

/// Resolvent `(I - eps Delta)^{-1}` on a fixed grid.
#[derive(Debug, Clone)]
pub struct Helmholtz {
    grid: Grid,
    eps: f64,
    stencil: ShiftedStencil,
}

impl Helmholtz {
    pub fn new(grid: Grid, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        let r = eps / (grid.dx() * grid.dx());
        Ok(Helmholtz { grid, eps, stencil: ShiftedStencil::new(grid.n_cells(), r) })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        self.stencil.solve_in_place(rhs);
    }

    pub fn solve(&self, f: &Field) -> Field {
        let mut values = f.values.clone();
        self.solve_in_place(&mut values);
        Field { grid: self.grid, values }
    }
}

/// Solves `(I - eps Delta) v = f`.
pub fn helmholtz_solve(f: &Field, eps: f64) -> Result<Field> {
    Ok(Helmholtz::new(f.grid, eps)?.solve(f))
}

/// Crank-Nicolson step for `v_t = Delta v + source` with a fixed `dt`.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    grid: Grid,
    dt: f64,
    stencil: ShiftedStencil,
    scratch: Vec<f64>,
}

impl CrankNicolson {
    pub fn new(grid: Grid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let r = 0.5 * dt / (grid.dx() * grid.dx());
        Ok(CrankNicolson {
            grid,
            dt,
            stencil: ShiftedStencil::new(grid.n_cells(), r),
            scratch: vec![0.0; grid.n_cells()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `v` in place by one step.
    ///
    /// Solved in increment form, `(I - dt/2 Delta) d = dt (Delta v + source)`
    /// and `v += d`, so rounding errors scale with the increment rather than
    /// with `v` itself; this keeps the long-run mass drift at roundoff level.
    pub fn step_in_place(&mut self, v: &mut [f64], source: Option<&[f64]>) {
        laplacian_into(v, self.grid.dx(), &mut self.scratch);
        match source {
            Some(s) => {
                for (lj, sj) in self.scratch.iter_mut().zip(s) {
                    *lj = self.dt * (*lj + sj);
                }
            }
            None => {
                for lj in self.scratch.iter_mut() {
                    *lj *= self.dt;
                }
            }
        }
        self.stencil.solve_in_place(&mut self.scratch);
        for (vj, dj) in v.iter_mut().zip(&self.scratch) {
            *vj += dj;
        }
    }
}

/// Solves `(I - dt/2 Delta) v_new = (I + dt/2 Delta) v + dt source`.
pub fn crank_nicolson_step(v: &Field, dt: f64, source: &Field) -> Result<Field> {
    if source.grid != v.grid {
        return Err(Error::Field("source lives on a different grid".into()));
    }
    let mut cn = CrankNicolson::new(v.grid, dt)?;
    let mut values = v.values.clone();
    cn.step_in_place(&mut values, Some(&source.values));
    Ok(Field { grid: v.grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(grid, (0..grid.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(3, 1.0).is_err());
        assert!(Grid::new(4, 0.0).is_err());
        let g = Grid::new(8, 2.0).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.x(0), 0.125);
        assert!(Field::new(g, vec![0.0; 7]).is_err());
        assert!(Field::new(g, vec![f64::NAN; 8]).is_err());
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = Grid::new(16, 1.0).unwrap();
        let lap = laplacian_neumann(&Field::constant(g, 3.7));
        assert!(lap.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_modes_are_eigenvectors() {
        let g = Grid::new(64, 1.5).unwrap();
        for k in [0, 1, 3, 17, 63] {
            let mode = Field::new(g, g.cosine_mode(k)).unwrap();
            let lap = laplacian_neumann(&mode);
            let expected: Vec<f64> = mode.values().iter().map(|x| -g.eigenvalue(k) * x).collect();
            let scale = g.eigenvalue(k).max(1.0);
            assert!(max_diff(lap.values(), &expected) <= 1e-11 * scale, "k = {k}");
        }
    }

    #[test]
    fn laplacian_sums_to_zero_and_is_symmetric() {
        let g = Grid::new(50, 1.0).unwrap();
        let f = random_field(g, 1);
        let h = random_field(g, 2);
        let lf = laplacian_neumann(&f);
        let lh = laplacian_neumann(&h);
        let scale = 1.0 / (g.dx() * g.dx());
        assert!(lf.values().iter().sum::<f64>().abs() <= 1e-12 * scale);
        let a: f64 = f.values().iter().zip(lh.values()).map(|(x, y)| x * y).sum();
        let b: f64 = h.values().iter().zip(lf.values()).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn laplacian_is_second_order_in_the_interior() {
        // f = cos(pi x) satisfies the Neumann condition; Delta f = -pi^2 f
        let err = |n: usize| {
            let g = Grid::new(n, 1.0).unwrap();
            let f = Field::from_fn(g, |x| (std::f64::consts::PI * x).cos());
            let lap = laplacian_neumann(&f);
            let pi2 = std::f64::consts::PI.powi(2);
            (1..n - 1).fold(0.0f64, |m, j| m.max((lap.values()[j] + pi2 * f.values()[j]).abs()))
        };
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn helmholtz_matches_mode_oracle() {
        let g = Grid::new(128, 1.0).unwrap();
        for eps in [1e-2, 1e-4] {
            for k in [0, 1, 2, 5] {
                let mode = Field::new(g, g.cosine_mode(k)).unwrap();
                let v = helmholtz_solve(&mode, eps).unwrap();
                let factor = 1.0 / (1.0 + eps * g.eigenvalue(k));
                let expected: Vec<f64> = mode.values().iter().map(|x| factor * x).collect();
                assert!(max_diff(v.values(), &expected) <= 1e-12);
            }
        }
    }

    #[test]
    fn helmholtz_residual_and_mean() {
        let g = Grid::new(100, 1.0).unwrap();
        let f = random_field(g, 3);
        let eps = 1e-3;
        let v = helmholtz_solve(&f, eps).unwrap();
        let lap = laplacian_neumann(&v);
        let residual: Vec<f64> = v.values().iter().zip(lap.values()).map(|(a, l)| a - eps * l).collect();
        assert!(max_diff(&residual, f.values()) <= 1e-12 * f.max_abs().max(1.0) * 10.0);
        assert!((v.mean() - f.mean()).abs() <= 1e-12);
        let c = helmholtz_solve(&Field::constant(g, 2.5), eps).unwrap();
        assert!(c.values().iter().all(|&x| (x - 2.5).abs() <= 1e-14));
    }

    #[test]
    fn helmholtz_tends_to_identity() {
        let g = Grid::new(64, 1.0).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * x).sin() + 1.0);
        let v = helmholtz_solve(&f, 1e-8).unwrap();
        assert!(max_diff(v.values(), f.values()) <= 1e-4 * f.max_abs());
        assert!(helmholtz_solve(&f, 0.0).is_err());
    }

    #[test]
    fn crank_nicolson_examples() {
        let g = Grid::new(32, 1.0).unwrap();
        let zero = Field::constant(g, 0.0);
        let c = crank_nicolson_step(&Field::constant(g, 1.25), 0.01, &zero).unwrap();
        assert!(c.values().iter().all(|&x| (x - 1.25).abs() <= 1e-15));

        let s = crank_nicolson_step(&zero, 0.01, &Field::constant(g, 3.0)).unwrap();
        assert!(s.values().iter().all(|&x| (x - 0.03).abs() <= 1e-15));

        let dt = 1e-3;
        for k in [1, 4] {
            let mode = Field::new(g, g.cosine_mode(k)).unwrap();
            let out = crank_nicolson_step(&mode, dt, &zero).unwrap();
            let mu = g.eigenvalue(k);
            let amp = (1.0 - 0.5 * dt * mu) / (1.0 + 0.5 * dt * mu);
            let expected: Vec<f64> = mode.values().iter().map(|x| amp * x).collect();
            assert!(max_diff(out.values(), &expected) <= 1e-12);
        }
    }

    #[test]
    fn crank_nicolson_mean_budget() {
        let g = Grid::new(40, 1.0).unwrap();
        let v = random_field(g, 4);
        let src = random_field(g, 5);
        let dt = 0.02;
        let out = crank_nicolson_step(&v, dt, &src).unwrap();
        assert!((out.mean() - (v.mean() + dt * src.mean())).abs() <= 1e-12);
    }
}
