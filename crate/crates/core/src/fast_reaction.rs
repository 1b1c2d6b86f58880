//! Integrator for the fast-reaction system
//!
//! ```text
//! u_t = (v - F(u)) / eps,    v_t = v_xx + (F(u) - v) / eps
//! ```
//!
//! on `(0, L)` with homogeneous Neumann conditions for `v`.
//!
//! A macro step is Strang split: half a step of pointwise reaction, a full
//! diffusion step for `v`, and another half step of reaction. The reaction
//! conserves `u + v` cell by cell, so it reduces to one scalar implicit-Euler
//! equation per cell. With the sub-step bounded as in [`reaction_substep_limit`]
//! that equation is strictly monotone and its root lies between the current
//! `u` and the nearest equilibrium, which makes the reaction step positivity
//! preserving and dissipative for every entropy pair with nondecreasing `phi`.
//!
//! Diffusion uses Crank-Nicolson sub-cycled at `dt <= dx^2`. In that regime
//! the step matrix is entrywise nonnegative with unit row sums, so discrete
//! maxima cannot grow and convex functionals of `v` cannot increase.

use serde::{Deserialize, Serialize};

use crate::entropy::{dissipation, fast_reaction_energy, registered_family, EntropyPair, TestFunction};
use crate::error::{Error, Result};
use crate::initial_data::InitialData;
use crate::nonlinearity::{Branch, Nonlinearity, NonlinearitySpec};
use crate::pde::{CrankNicolson, Field, Grid};
use crate::trajectory::{DiagnosticRow, Snapshot, Trajectory};
use crate::System;

pub const NEWTON_MAX_ITERATIONS: usize = 50;
/// Slack allowed on the invariant region before a step is declared broken.
pub const BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastReactionConfig {
    pub nonlinearity: NonlinearitySpec,
    pub grid: Grid,
    pub eps: f64,
    pub t_end: f64,
    pub dt_macro: f64,
    pub initial: InitialData,
    pub seed: u64,
    /// Keep every `snapshot_every`-th macro step (the final state is always kept).
    pub snapshot_every: usize,
    /// Start of the smoothed step in the registered entropy family.
    pub tau0: Option<f64>,
}

impl FastReactionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::ConfigValidation(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.dt_macro > 0.0) {
            return Err(Error::ConfigValidation(format!("dt must be positive, got {}", self.dt_macro)));
        }
        if !(self.t_end >= self.dt_macro && self.t_end.is_finite()) {
            return Err(Error::ConfigValidation(format!(
                "t_end = {} must be at least dt = {}",
                self.t_end, self.dt_macro
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::ConfigValidation("snapshot cadence must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
    pub eps: f64,
}

impl SimState {
    /// `sum_j (u_j + v_j) dx`.
    pub fn mass(&self) -> f64 {
        self.u.integral() + self.v.integral()
    }
}

/// `M` such that `[0, M]` contains `u` and `v` for all times.
///
/// The classical choice `max(|F(u0)|, |u0|, |v0|, f_plus, beta_plus)` is
/// widened by `S3(max(|v0|, |F(u0)|, f_plus))`: `u` can keep growing while
/// `v > F(u)`, and `v` never exceeds that maximum.
pub fn invariant_bound(nl: &Nonlinearity, u0: &Field, v0: &Field) -> f64 {
    let th = nl.thresholds();
    let f_max = u0.values().iter().fold(0.0f64, |m, &u| m.max(nl.eval(u).abs()));
    let v_top = v0.max_abs().max(f_max).max(th.f_plus);
    [f_max, u0.max_abs(), v0.max_abs(), th.f_plus, th.beta_plus, nl.inverse(Branch::Upper, v_top)]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Largest implicit-Euler reaction sub-step: `eps / 4`, further reduced so
/// that `1 + (h/eps)(1 + min F') >= 1/2`.
pub fn reaction_substep_limit(nl: &Nonlinearity, eps: f64) -> f64 {
    let k = -(1.0 + nl.min_slope());
    if k > 0.0 {
        (0.25 * eps).min(0.5 * eps / k)
    } else {
        0.25 * eps
    }
}

/// Advances one cell's reaction ODE by `dt`, sub-cycling at the limit of
/// [`reaction_substep_limit`]. `cell` only labels errors.
pub fn react_cell(nl: &Nonlinearity, u: f64, v: f64, dt: f64, eps: f64, cell: usize) -> Result<(f64, f64)> {
    let h_max = reaction_substep_limit(nl, eps);
    let n = (dt / h_max).ceil().max(1.0) as usize;
    react_cell_substeps(nl, u, v, dt / n as f64, n, eps, cell)
}

fn react_cell_substeps(
    nl: &Nonlinearity,
    mut u: f64,
    mut v: f64,
    h: f64,
    n: usize,
    eps: f64,
    cell: usize,
) -> Result<(f64, f64)> {
    let a = h / eps;
    for _ in 0..n {
        let s = u + v;
        // H(x) = (x - u) + a (F(x) - (s - x)); H(0) <= 0 <= H(s)
        let h_of = |x: f64| (x - u) + a * (nl.eval(x) - (s - x));
        let r0 = h_of(u);
        if r0 == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = if r0 > 0.0 { (0.0f64.min(u), u) } else { (u, s.max(u)) };
        let mut x = u;
        let mut converged = false;
        let mut r_prev = f64::INFINITY;
        let scale = u.abs().max(s.abs()).max(f64::MIN_POSITIVE);
        for _ in 0..NEWTON_MAX_ITERATIONS {
            let r = h_of(x);
            if r == 0.0 {
                converged = true;
                break;
            }
            // Newton can cycle across a kink of a piecewise affine F
            let stalled = r.abs() > 0.5 * r_prev;
            r_prev = r.abs();
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = 1.0 + a * (1.0 + nl.derivative(x));
            let newton = x - r / slope;
            let tol = 2.0 * f64::EPSILON * scale;
            if (newton - x).abs() <= tol {
                x = newton.clamp(lo, hi);
                converged = true;
                break;
            }
            x = if !stalled && newton >= lo && newton <= hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged { cell, iterations: NEWTON_MAX_ITERATIONS });
        }
        u = x;
        v = s - x;
    }
    Ok((u, v))
}

/// Strang-split integrator with cached linear solvers for one `(grid, eps, dt)`.
#[derive(Debug, Clone)]
pub struct FastReactionSolver {
    nl: Nonlinearity,
    grid: Grid,
    eps: f64,
    dt: f64,
    bound: f64,
    diffusion: CrankNicolson,
    diffusion_substeps: usize,
    reaction_h: f64,
    reaction_substeps: usize,
}

impl FastReactionSolver {
    pub fn new(nl: Nonlinearity, grid: Grid, eps: f64, dt: f64, bound: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let dx2 = grid.dx() * grid.dx();
        let diffusion_substeps = (dt / dx2).ceil().max(1.0) as usize;
        let diffusion = CrankNicolson::new(grid, dt / diffusion_substeps as f64)?;
        let half = 0.5 * dt;
        let reaction_substeps = (half / reaction_substep_limit(&nl, eps)).ceil().max(1.0) as usize;
        Ok(FastReactionSolver {
            nl,
            grid,
            eps,
            dt,
            bound,
            diffusion,
            diffusion_substeps,
            reaction_h: half / reaction_substeps as f64,
            reaction_substeps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn react(&self, u: &mut [f64], v: &mut [f64]) -> Result<()> {
        for (j, (uj, vj)) in u.iter_mut().zip(v.iter_mut()).enumerate() {
            let (a, b) = react_cell_substeps(&self.nl, *uj, *vj, self.reaction_h, self.reaction_substeps, self.eps, j)?;
            *uj = a;
            *vj = b;
        }
        Ok(())
    }

    fn diffuse(&mut self, v: &mut [f64]) {
        for _ in 0..self.diffusion_substeps {
            self.diffusion.step_in_place(v, None);
        }
    }

    /// One macro step on raw arrays.
    pub fn step_values(&mut self, u: &mut [f64], v: &mut [f64]) -> Result<()> {
        self.react(u, v)?;
        self.diffuse(v);
        self.react(u, v)?;
        check_bounds("u", u, self.bound)?;
        check_bounds("v", v, self.bound)
    }

    pub fn step(&mut self, state: &mut SimState) -> Result<()> {
        let mut u = std::mem::replace(&mut state.u, Field::constant(self.grid, 0.0)).into_values();
        let mut v = std::mem::replace(&mut state.v, Field::constant(self.grid, 0.0)).into_values();
        let result = self.step_values(&mut u, &mut v);
        state.u = Field::new(self.grid, u)?;
        state.v = Field::new(self.grid, v)?;
        result?;
        state.t += self.dt;
        Ok(())
    }
}

pub(crate) fn check_bounds(quantity: &'static str, values: &[f64], bound: f64) -> Result<()> {
    let (lower, upper) = (-BOUND_SLACK, bound + BOUND_SLACK);
    match values.iter().position(|&x| !(x >= lower && x <= upper)) {
        None => Ok(()),
        Some(cell) => Err(Error::BoundViolation { quantity, cell, value: values[cell], lower, upper }),
    }
}

/// Single macro step with a freshly built solver; the invariant bound is
/// taken from the current state.
pub fn step(nl: &Nonlinearity, state: &SimState, dt: f64) -> Result<SimState> {
    let bound = invariant_bound(nl, &state.u, &state.v);
    let mut solver = FastReactionSolver::new(nl.clone(), *state.u.grid(), state.eps, dt, bound)?;
    let mut next = state.clone();
    solver.step(&mut next)?;
    Ok(next)
}

struct DiagnosticAccumulator {
    family: [EntropyPair; 3],
    last_rates: (f64, f64),
    totals: (f64, f64),
}

impl DiagnosticAccumulator {
    fn new(family: [EntropyPair; 3]) -> Self {
        DiagnosticAccumulator { family, last_rates: (0.0, 0.0), totals: (0.0, 0.0) }
    }

    #[allow(clippy::too_many_arguments)]
    fn row(&mut self, system: System, t: f64, dt: Option<f64>, u: &[f64], v: &[f64], eps: f64, dx: f64) -> DiagnosticRow {
        let nl = self.family[0].nonlinearity();
        let rates = dissipation(&TestFunction::Identity, nl, u, v, eps, dx);
        if let Some(dt) = dt {
            self.totals.0 += 0.5 * dt * (self.last_rates.0 + rates.0);
            self.totals.1 += 0.5 * dt * (self.last_rates.1 + rates.1);
        }
        self.last_rates = rates;
        let (mass, energy) = match system {
            System::FastReaction => (
                (u.iter().sum::<f64>() + v.iter().sum::<f64>()) * dx,
                self.family.each_ref().map(|p| fast_reaction_energy(p, u, v, dx)),
            ),
            System::ForwardBackward => (
                u.iter().sum::<f64>() * dx,
                self.family.each_ref().map(|p| crate::entropy::lyapunov(p, u, dx)),
            ),
        };
        DiagnosticRow { t, mass, energy, dissip_gradv: self.totals.0, dissip_reaction: self.totals.1 }
    }
}

/// Shared driver loop: records diagnostics every step and snapshots at the
/// requested cadence.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive(
    system: System,
    nl: &Nonlinearity,
    grid: Grid,
    eps: f64,
    t_end: f64,
    bound: f64,
    n_steps: usize,
    snapshot_every: usize,
    tau0: Option<f64>,
    (mut u, mut v): (Vec<f64>, Vec<f64>),
    mut advance: impl FnMut(&mut Vec<f64>, &mut Vec<f64>) -> Result<()>,
) -> Result<Trajectory> {
    let mut acc = DiagnosticAccumulator::new(registered_family(nl, tau0)?);
    let dx = grid.dx();
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    let mut snapshots = vec![Snapshot { t: 0.0, u: u.clone(), v: v.clone() }];
    diagnostics.push(acc.row(system, 0.0, None, &u, &v, eps, dx));
    let mut t_prev = 0.0;
    for k in 1..=n_steps {
        advance(&mut u, &mut v)?;
        let t = t_end * k as f64 / n_steps as f64;
        diagnostics.push(acc.row(system, t, Some(t - t_prev), &u, &v, eps, dx));
        t_prev = t;
        if k % snapshot_every == 0 || k == n_steps {
            snapshots.push(Snapshot { t, u: u.clone(), v: v.clone() });
        }
    }
    let dt = t_end / n_steps as f64;
    Ok(Trajectory { system, grid, eps, dt, bound, snapshots, diagnostics })
}

pub fn simulate(config: &FastReactionConfig) -> Result<Trajectory> {
    config.validate()?;
    let nl = Nonlinearity::new(config.nonlinearity.clone())?;
    let (u0, v0) = config.initial.generate(config.seed, &config.grid, &nl)?;
    let bound = invariant_bound(&nl, &u0, &v0);
    check_bounds("u", u0.values(), bound)?;
    check_bounds("v", v0.values(), bound)?;
    let n_steps = (config.t_end / config.dt_macro - 1e-9).ceil().max(1.0) as usize;
    let dt = config.t_end / n_steps as f64;
    let mut solver = FastReactionSolver::new(nl.clone(), config.grid, config.eps, dt, bound)?;
    drive(
        System::FastReaction,
        &nl,
        config.grid,
        config.eps,
        config.t_end,
        bound,
        n_steps,
        config.snapshot_every,
        config.tau0,
        (u0.into_values(), v0.into_values()),
        |u, v| solver.step_values(u, v),
    )
}
