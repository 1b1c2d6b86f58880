//! Integrator for the pseudoparabolic regularization of forward-backward
//! diffusion, `u_t = Delta (F(u) + eps u_t)`.
//!
//! Writing `v = F(u) + eps u_t` gives `(I - eps Delta) v = F(u)` and
//! `u_t = Delta v = (v - F(u)) / eps`, an ODE in `u` whose generator has
//! spectrum in `(-Lip(F)/eps, 0]` on the stable branches. The midpoint rule
//! is therefore stable for `dt <= 2 eps / Lip(F)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_reaction::{check_bounds, drive};
use crate::initial_data::InitialData;
use crate::nonlinearity::{Branch, Nonlinearity, NonlinearitySpec};
use crate::pde::{laplacian_into, Field, Grid, Helmholtz};
use crate::trajectory::Trajectory;
use crate::System;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbConfig {
    pub nonlinearity: NonlinearitySpec,
    pub grid: Grid,
    pub eps: f64,
    pub t_end: f64,
    /// Fraction of the stability limit `2 eps / Lip(F)` used as time step.
    pub c_dt: f64,
    pub initial: InitialData,
    pub seed: u64,
    pub snapshot_every: usize,
    pub tau0: Option<f64>,
}

impl FbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::ConfigValidation(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.c_dt > 0.0 && self.c_dt <= 1.0) {
            return Err(Error::ConfigValidation(format!("c_dt = {} not in (0, 1]", self.c_dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::ConfigValidation(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::ConfigValidation("snapshot cadence must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbState {
    pub u: Field,
    pub t: f64,
    pub eps: f64,
}

/// `M = S3(max(|F(u0)|, f_plus))`: the value `v` stays below
/// `max(|F(u0)|, f_plus)`, and `u` can only grow while `F(u) < v`.
pub fn fb_bound(nl: &Nonlinearity, u0: &Field) -> f64 {
    let th = nl.thresholds();
    let f_max = u0.values().iter().fold(0.0f64, |m, &u| m.max(nl.eval(u).abs()));
    nl.inverse(Branch::Upper, f_max.max(th.f_plus)).max(u0.max_abs())
}

/// `v = (I - eps Delta)^{-1} F(u)`.
pub fn derive_v(nl: &Nonlinearity, u: &Field, eps: f64) -> Result<Field> {
    Ok(Helmholtz::new(*u.grid(), eps)?.solve(&u.map(|x| nl.eval(x))))
}

#[derive(Debug, Clone)]
pub struct ForwardBackwardSolver {
    nl: Nonlinearity,
    helmholtz: Helmholtz,
    bound: f64,
    dt_limit: f64,
    v: Vec<f64>,
    k: Vec<f64>,
    mid: Vec<f64>,
}

impl ForwardBackwardSolver {
    /// `bound` is the invariant-region bound `M`; the stability limit uses
    /// `Lip(F)` on `[0, M]`.
    pub fn new(nl: Nonlinearity, grid: Grid, eps: f64, bound: f64) -> Result<Self> {
        let helmholtz = Helmholtz::new(grid, eps)?;
        let lip = nl.lipschitz_on(0.0, bound);
        let n = grid.n_cells();
        Ok(ForwardBackwardSolver {
            nl,
            helmholtz,
            bound,
            dt_limit: 2.0 * eps / lip,
            v: vec![0.0; n],
            k: vec![0.0; n],
            mid: vec![0.0; n],
        })
    }

    /// `2 eps / Lip(F)`.
    pub fn dt_limit(&self) -> f64 {
        self.dt_limit
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Writes `(I - eps Delta)^{-1} F(u)` into `v`.
    pub fn derive_v_into(&self, u: &[f64], v: &mut [f64]) {
        for (vj, &uj) in v.iter_mut().zip(u) {
            *vj = self.nl.eval(uj);
        }
        self.helmholtz.solve_in_place(v);
    }

    fn rate(&mut self, u: &[f64]) {
        let mut v = std::mem::take(&mut self.v);
        self.derive_v_into(u, &mut v);
        laplacian_into(&v, self.helmholtz.grid().dx(), &mut self.k);
        self.v = v;
    }

    /// Midpoint step on raw arrays; `v` receives the derived `v` of the new state.
    pub fn step_values(&mut self, u: &mut [f64], v: &mut [f64], dt: f64) -> Result<()> {
        if dt > self.dt_limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, limit: self.dt_limit });
        }
        self.rate(u);
        for ((m, &uj), &kj) in self.mid.iter_mut().zip(u.iter()).zip(&self.k) {
            *m = uj + 0.5 * dt * kj;
        }
        let mid = std::mem::take(&mut self.mid);
        self.rate(&mid);
        self.mid = mid;
        for (uj, &kj) in u.iter_mut().zip(&self.k) {
            *uj += dt * kj;
        }
        check_bounds("u", u, self.bound)?;
        self.derive_v_into(u, v);
        Ok(())
    }

    pub fn step(&mut self, state: &mut FbState, dt: f64) -> Result<()> {
        let grid = *state.u.grid();
        let mut u = std::mem::replace(&mut state.u, Field::constant(grid, 0.0)).into_values();
        let mut v = vec![0.0; u.len()];
        let result = self.step_values(&mut u, &mut v, dt);
        state.u = Field::new(grid, u)?;
        result?;
        state.t += dt;
        Ok(())
    }
}

/// Single step with a freshly built solver.
pub fn fb_step(nl: &Nonlinearity, state: &FbState, dt: f64) -> Result<FbState> {
    let bound = fb_bound(nl, &state.u);
    let mut solver = ForwardBackwardSolver::new(nl.clone(), *state.u.grid(), state.eps, bound)?;
    let mut next = state.clone();
    solver.step(&mut next, dt)?;
    Ok(next)
}

pub fn fb_simulate(config: &FbConfig) -> Result<Trajectory> {
    config.validate()?;
    let nl = Nonlinearity::new(config.nonlinearity.clone())?;
    let u0 = config.initial.generate_u(config.seed, &config.grid, &nl)?;
    let bound = fb_bound(&nl, &u0);
    let mut solver = ForwardBackwardSolver::new(nl.clone(), config.grid, config.eps, bound)?;
    let dt_target = config.c_dt * solver.dt_limit();
    let n_steps = (config.t_end / dt_target - 1e-9).ceil().max(1.0) as usize;
    let dt = config.t_end / n_steps as f64;
    let mut v0 = vec![0.0; config.grid.n_cells()];
    solver.derive_v_into(u0.values(), &mut v0);
    drive(
        System::ForwardBackward,
        &nl,
        config.grid,
        config.eps,
        config.t_end,
        bound,
        n_steps,
        config.snapshot_every,
        config.tau0,
        (u0.into_values(), v0),
        |u, v| solver.step_values(u, v, dt),
    )
}
