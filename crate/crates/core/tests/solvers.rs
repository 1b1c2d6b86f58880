use fastlimit_core::fast_reaction::{self, invariant_bound, react_cell, simulate};
use fastlimit_core::forward_backward::{derive_v, fb_bound, fb_simulate, fb_step, ForwardBackwardSolver};
use fastlimit_core::pde::laplacian_neumann;
use fastlimit_core::{
    Error, FastReactionConfig, FbConfig, FbState, Field, Grid, InitialData, Nonlinearity, NonlinearitySpec, SimState,
    Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn affine() -> Nonlinearity {
    Nonlinearity::new(NonlinearitySpec::corrected_affine()).unwrap()
}

fn cubic() -> Nonlinearity {
    Nonlinearity::new(NonlinearitySpec::canonical_cubic()).unwrap()
}

fn fr_run(spec: NonlinearitySpec, n: usize, eps: f64, t_end: f64, init: &str) -> Trajectory {
    simulate(&FastReactionConfig {
        nonlinearity: spec,
        grid: Grid::new(n, 1.0).unwrap(),
        eps,
        t_end,
        dt_macro: 1e-3,
        initial: InitialData::from_id(init).unwrap(),
        seed: 3,
        snapshot_every: 1,
        tau0: None,
    })
    .unwrap()
}

fn fb_run(spec: NonlinearitySpec, n: usize, eps: f64, t_end: f64, init: &str) -> Trajectory {
    fb_simulate(&FbConfig {
        nonlinearity: spec,
        grid: Grid::new(n, 1.0).unwrap(),
        eps,
        t_end,
        c_dt: 0.5,
        initial: InitialData::from_id(init).unwrap(),
        seed: 3,
        snapshot_every: 1,
        tau0: None,
    })
    .unwrap()
}

fn mass(u: &[f64], v: &[f64], dx: f64) -> f64 {
    (u.iter().sum::<f64>() + v.iter().sum::<f64>()) * dx
}

#[test]
fn fast_reaction_equilibrium_is_stationary() {
    let nl = cubic();
    let grid = Grid::new(64, 1.0).unwrap();
    let c = 1.9;
    let state = SimState { u: Field::constant(grid, c), v: Field::constant(grid, nl.eval(c)), t: 0.0, eps: 1e-3 };
    let next = fast_reaction::step(&nl, &state, 1e-3).unwrap();
    for (a, b) in next.u.values().iter().zip(state.u.values()) {
        assert!((a - b).abs() <= 1e-12);
    }
    for (a, b) in next.v.values().iter().zip(state.v.values()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn constant_run_has_flat_diagnostics() {
    for traj in [
        fr_run(NonlinearitySpec::corrected_affine(), 32, 1e-2, 0.02, "constant"),
        fb_run(NonlinearitySpec::corrected_affine(), 32, 1e-2, 0.02, "constant"),
    ] {
        let d0 = &traj.diagnostics[0];
        for row in &traj.diagnostics {
            assert!((row.mass - d0.mass).abs() <= 1e-13);
            for i in 0..3 {
                assert!((row.energy[i] - d0.energy[i]).abs() <= 1e-13);
            }
            assert!(row.dissip_gradv.abs() <= 1e-20 && row.dissip_reaction.abs() <= 1e-20);
        }
    }
}

#[test]
fn reaction_matches_an_explicit_oracle() {
    // tiny forward Euler steps of u' = (F(u) - v)/eps with u + v fixed
    let nl = affine();
    let eps = 1e-2;
    let (u0, v0) = (0.2, 1.7);
    let s = u0 + v0;
    let explicit = |t: f64| {
        let n = 200_000;
        let h = t / n as f64;
        let mut u = u0;
        for _ in 0..n {
            u += h * (s - u - nl.eval(u)) / eps;
        }
        u
    };
    let mut u = u0;
    let mut v = v0;
    let mut gap = (v - nl.eval(u)).abs();
    for k in 1..=10 {
        let (a, b) = react_cell(&nl, u, v, 2e-3, eps, 0).unwrap();
        assert!(((a + b) - s).abs() <= 1e-15);
        let g = (b - nl.eval(a)).abs();
        assert!(g <= gap, "gap grew at step {k}");
        gap = g;
        (u, v) = (a, b);
    }
    // implicit Euler at h = eps/4 lags the exact relaxation by O(h)
    let oracle = explicit(2e-2);
    assert!((u - oracle).abs() <= 0.05 * (oracle - u0).abs(), "{u} vs {oracle}");
}

#[test]
fn fast_reaction_step_conserves_mass_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid::new(128, 1.0).unwrap();
    for nl in [affine(), cubic()] {
        for _ in 0..5 {
            let u = Field::new(grid, (0..128).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
            let v = Field::new(grid, (0..128).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
            let before = mass(u.values(), v.values(), grid.dx());
            let bound = invariant_bound(&nl, &u, &v);
            let next = fast_reaction::step(&nl, &SimState { u, v, t: 0.0, eps: 1e-3 }, 1e-3).unwrap();
            assert!((mass(next.u.values(), next.v.values(), grid.dx()) - before).abs() <= 1e-12);
            assert!(next.u.values().iter().chain(next.v.values()).all(|&x| x >= -1e-10 && x <= bound + 1e-10));
        }
    }
}

#[test]
fn coupling_residual_shrinks_with_eps() {
    // (int_0^T |F(u) - v|^2 dt)^(1/2); the supremum in time is dominated by
    // the initial relaxation out of the unstable zone, which does not shrink
    let gap = |eps: f64| {
        let traj = fr_run(NonlinearitySpec::corrected_affine(), 256, eps, 0.1, "sine_mix");
        let nl = affine();
        let sq: Vec<f64> = traj
            .snapshots
            .iter()
            .map(|s| s.u.iter().zip(&s.v).map(|(&u, &v)| (nl.eval(u) - v).powi(2)).sum::<f64>() * traj.grid.dx())
            .collect();
        (sq.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * traj.dt).sqrt()
    };
    let gaps = [1e-2, 2.5e-3, 6.25e-4].map(gap);
    assert!(gaps[0] / gaps[1] >= 2.0 && gaps[1] / gaps[2] >= 2.0, "{gaps:?}");
}

#[test]
fn reaction_dissipation_is_bounded_uniformly_in_eps() {
    let total = |eps: f64| {
        let traj = fr_run(NonlinearitySpec::corrected_affine(), 256, eps, 0.1, "phase_checkerboard");
        traj.diagnostics.last().unwrap().dissip_reaction
    };
    let (coarse, fine) = (total(1e-2), total(1e-3));
    assert!(fine <= 10.0 * coarse, "{fine} vs {coarse}");
}

#[test]
fn energy_balance_residual_is_small_along_a_run() {
    use fastlimit_core::entropy::{energy_balance_residual, registered_family};
    let traj = fr_run(NonlinearitySpec::corrected_affine(), 128, 1e-2, 0.05, "sine_mix");
    let nl = affine();
    let pair = &registered_family(&nl, None).unwrap()[0];
    let frames: Vec<(f64, &[f64], &[f64])> =
        traj.snapshots.iter().map(|s| (s.t, s.u.as_slice(), s.v.as_slice())).collect();
    let res = energy_balance_residual(pair, fastlimit_core::System::FastReaction, 1e-2, traj.grid.dx(), &frames);
    let energy_scale = traj.diagnostics[0].energy[0];
    let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    assert!(worst <= 1e-3 * energy_scale, "{worst}");
}

#[test]
fn derived_v_preserves_mean_and_tends_to_f() {
    let nl = cubic();
    let grid = Grid::new(256, 1.0).unwrap();
    let u = Field::from_fn(grid, |x| 1.0 + 0.8 * (std::f64::consts::PI * x).cos());
    let fu = u.map(|x| nl.eval(x));
    let gaps: Vec<f64> = [1e-2, 2.5e-3, 6.25e-4]
        .iter()
        .map(|&eps| {
            let v = derive_v(&nl, &u, eps).unwrap();
            assert!((v.mean() - fu.mean()).abs() <= 1e-12);
            let lap = laplacian_neumann(&v);
            let residual = v.values().iter().zip(lap.values()).zip(fu.values()).fold(0.0f64, |m, ((a, l), f)| {
                m.max((a - eps * l - f).abs())
            });
            assert!(residual <= 1e-12);
            v.values().iter().zip(fu.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}

#[test]
fn forward_backward_constant_is_stationary_and_mass_is_conserved() {
    let nl = affine();
    let grid = Grid::new(128, 1.0).unwrap();
    let flat = FbState { u: Field::constant(grid, 1.6), t: 0.0, eps: 1e-2 };
    let next = fb_step(&nl, &flat, 1e-3).unwrap();
    assert!(next.u.values().iter().all(|&x| (x - 1.6).abs() <= 1e-12));

    let (u0, _) = InitialData::from_id("sine_mix").unwrap().generate(9, &grid, &nl).unwrap();
    let state = FbState { u: u0, t: 0.0, eps: 1e-2 };
    let next = fb_step(&nl, &state, 2e-3).unwrap();
    assert!((next.u.integral() - state.u.integral()).abs() <= 1e-12);
}

#[test]
fn single_mode_decays_at_the_linearized_rate() {
    // around u = c on the lower branch, a_k' = -mu_k F'(c) / (1 + eps mu_k) a_k
    let nl = affine();
    let grid = Grid::new(256, 1.0).unwrap();
    let (c, amp, k, eps) = (0.5, 1e-3, 2usize, 1e-3);
    let mode = grid.cosine_mode(k);
    let mut u: Vec<f64> = mode.iter().map(|m| c + amp * m).collect();
    let mut v = vec![0.0; u.len()];
    let u_field = Field::new(grid, u.clone()).unwrap();
    let mut solver = ForwardBackwardSolver::new(nl.clone(), grid, eps, fb_bound(&nl, &u_field)).unwrap();
    let dt = 0.5 * solver.dt_limit();
    let steps = 200;
    for _ in 0..steps {
        solver.step_values(&mut u, &mut v, dt).unwrap();
    }
    let project = |w: &[f64]| w.iter().zip(&mode).map(|(a, m)| (a - c) * m).sum::<f64>() / mode.iter().map(|m| m * m).sum::<f64>();
    let measured = -(project(&u) / amp).ln() / (steps as f64 * dt);
    let mu = grid.eigenvalue(k);
    let predicted = mu * nl.derivative(c) / (1.0 + eps * mu);
    assert!((measured / predicted - 1.0).abs() <= 0.05, "{measured} vs {predicted}");
}

#[test]
fn stability_boundary() {
    let nl = affine();
    let grid = Grid::new(128, 1.0).unwrap();
    let eps = 1e-3;
    let (c, k) = (0.5, 64usize);
    let mode = grid.cosine_mode(k);
    let mut u: Vec<f64> = mode.iter().map(|m| c + 1e-4 * m).collect();
    let mut v = vec![0.0; u.len()];
    let bound = fb_bound(&nl, &Field::new(grid, u.clone()).unwrap());
    let mut solver = ForwardBackwardSolver::new(nl.clone(), grid, eps, bound).unwrap();
    let limit = solver.dt_limit();
    let norm = |w: &[f64]| w.iter().map(|x| (x - c).abs()).fold(0.0, f64::max);
    let before = norm(&u);
    for _ in 0..50 {
        solver.step_values(&mut u, &mut v, limit).unwrap();
    }
    assert!(norm(&u) <= before * (1.0 + 1e-12));
    let err = solver.step_values(&mut u, &mut v, 2.0 * limit).unwrap_err();
    assert!(matches!(err, Error::StepTooLarge { .. }));
}

#[test]
fn forward_backward_dissipation_is_bounded_uniformly_in_eps() {
    let total = |eps: f64| fb_run(NonlinearitySpec::canonical_cubic(), 128, eps, 0.05, "sine_mix")
        .diagnostics
        .last()
        .unwrap()
        .dissip_reaction;
    let (coarse, fine) = (total(4e-3), total(1e-3));
    assert!(fine <= 10.0 * coarse && coarse <= 10.0 * fine, "{coarse} vs {fine}");
}

#[test]
fn lyapunov_is_nonincreasing() {
    let traj = fb_run(NonlinearitySpec::canonical_cubic(), 128, 1e-2, 0.1, "sine_mix");
    for w in traj.diagnostics.windows(2) {
        let dt = w[1].t - w[0].t;
        for i in 0..3 {
            assert!(w[1].energy[i] - w[0].energy[i] <= 1e-8 * dt);
        }
    }
}

#[test]
fn same_seed_same_trajectory() {
    let a = fr_run(NonlinearitySpec::canonical_cubic(), 64, 1e-2, 0.01, "sine_mix");
    let b = fr_run(NonlinearitySpec::canonical_cubic(), 64, 1e-2, 0.01, "sine_mix");
    assert_eq!(a.final_snapshot(), b.final_snapshot());
}
