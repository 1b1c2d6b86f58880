use fastlimit_core::fast_reaction::react_cell;
use fastlimit_core::nonlinearity::Branch;
use fastlimit_core::pde::{helmholtz_solve, CrankNicolson};
use fastlimit_core::young_measure::{decompose, phase_weights};
use fastlimit_core::{Binning, EmpiricalMeasure, Field, Grid, Nonlinearity, NonlinearitySpec, RunConfig};
use proptest::prelude::*;

fn affine() -> Nonlinearity {
    Nonlinearity::new(NonlinearitySpec::corrected_affine()).unwrap()
}

fn cubic() -> Nonlinearity {
    Nonlinearity::new(NonlinearitySpec::canonical_cubic()).unwrap()
}

fn both() -> [Nonlinearity; 2] {
    [affine(), cubic()]
}

/// Interior point of the value domain of `branch`, parametrized by `s` in (0, 1).
fn lambda_in(nl: &Nonlinearity, branch: Branch, s: f64) -> f64 {
    let th = nl.thresholds();
    match branch {
        Branch::Lower => th.f_plus - 2.0 * s,
        Branch::Middle => th.f_minus + s * (th.f_plus - th.f_minus),
        Branch::Upper => th.f_minus + 2.0 * s,
    }
}

proptest! {
    #[test]
    fn inverse_branches_invert_f(s in 0.01f64..0.99) {
        for nl in both() {
            for b in Branch::ALL {
                let lambda = lambda_in(&nl, b, s);
                let x = nl.inverse(b, lambda);
                prop_assert!((nl.eval(x) - lambda).abs() <= 1e-12, "{b:?} {lambda} -> {x}");
                prop_assert_eq!(nl.thresholds().branch_of(x), b);
            }
        }
    }

    #[test]
    fn inverse_recovers_points_on_each_branch(u in -1.0f64..4.0) {
        for nl in both() {
            let b = nl.thresholds().branch_of(u);
            let back = nl.inverse(b, nl.eval(u));
            prop_assert!((back - u).abs() <= 1e-9 * (1.0 + u.abs()), "{u} -> {back}");
        }
    }

    #[test]
    fn branches_are_ordered_with_expected_slopes(s in 0.01f64..0.99) {
        for nl in both() {
            let th = nl.thresholds();
            let lambda = th.f_minus + s * (th.f_plus - th.f_minus);
            let [s1, s2, s3] = Branch::ALL.map(|b| nl.inverse(b, lambda));
            prop_assert!(s1 <= s2 && s2 <= s3);
            prop_assert!(nl.inverse_slope(Branch::Lower, lambda) > 0.0);
            prop_assert!(nl.inverse_slope(Branch::Middle, lambda) < 0.0);
            prop_assert!(nl.inverse_slope(Branch::Upper, lambda) > 0.0);
        }
    }

    #[test]
    fn cubic_inverse_is_stable_under_small_perturbations(s in 0.05f64..0.95, sign in prop::bool::ANY) {
        let nl = cubic();
        let th = nl.thresholds();
        let lambda = th.f_minus + s * (th.f_plus - th.f_minus);
        let d = if sign { 1e-10 } else { -1e-10 };
        for b in Branch::ALL {
            prop_assert!((nl.inverse(b, lambda + d) - nl.inverse(b, lambda)).abs() <= 1e-6);
        }
    }

    #[test]
    fn reaction_conserves_sum_and_moves_toward_equilibrium(
        u in 0.0f64..3.0,
        v in 0.0f64..2.0,
        eps in 1e-4f64..1e-1,
        dt in 1e-4f64..1e-2,
    ) {
        for nl in both() {
            let (a, b) = react_cell(&nl, u, v, dt, eps, 0).unwrap();
            prop_assert!(((a + b) - (u + v)).abs() <= 1e-12 * (1.0 + u + v));
            let lo = u.min(v).min(0.0) - 1e-12;
            let hi = u.max(v).max(nl.eval(u)).max(nl.thresholds().beta_plus).max(u + v) + 1e-12;
            prop_assert!(a >= lo && a <= hi && b >= lo && b <= hi, "({a}, {b})");
            // the flow is a scalar ODE along u + v = const: u moves in the
            // direction of v - F(u) and never jumps across an equilibrium
            let g0 = v - nl.eval(u);
            let g1 = b - nl.eval(a);
            prop_assert!((a - u) * g0 >= 0.0);
            prop_assert!(g1 * g0 >= 0.0 || g1.abs() <= 1e-10, "{g0} -> {g1}");
        }
    }

    #[test]
    fn helmholtz_keeps_mean_and_range(values in prop::collection::vec(-3.0f64..3.0, 4..64), eps in 1e-4f64..1.0) {
        let grid = Grid::new(values.len(), 1.0).unwrap();
        let f = Field::new(grid, values.clone()).unwrap();
        let v = helmholtz_solve(&f, eps).unwrap();
        prop_assert!((v.mean() - f.mean()).abs() <= 1e-12);
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        prop_assert!(v.values().iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
    }

    #[test]
    fn crank_nicolson_conserves_integral(values in prop::collection::vec(-3.0f64..3.0, 4..64), dt in 1e-5f64..1e-1) {
        let grid = Grid::new(values.len(), 1.0).unwrap();
        let mut v = values.clone();
        let mut cn = CrankNicolson::new(grid, dt).unwrap();
        let before: f64 = v.iter().sum();
        for _ in 0..5 {
            cn.step_in_place(&mut v, None);
        }
        prop_assert!((v.iter().sum::<f64>() - before).abs() <= 1e-12 * values.len() as f64);
    }

    #[test]
    fn phase_weights_sum_to_one(u in prop::collection::vec(-1.0f64..4.0, 1..500)) {
        for nl in both() {
            let w = phase_weights(&u, nl.thresholds()).unwrap();
            prop_assert_eq!(w[0] + w[1] + w[2], 1.0);
            prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn restrictions_add_up_to_the_measure(u in prop::collection::vec(-0.5f64..3.5, 1..500)) {
        let nl = affine();
        let th = *nl.thresholds();
        let binning = Binning::snapped(-0.5, 3.5, 40, (th.alpha_plus, th.beta_minus)).unwrap();
        let mu = EmpiricalMeasure::from_samples(&u, binning).unwrap();
        let parts = Branch::ALL.map(|b| mu.restrict(&th, b).unwrap());
        for k in 0..mu.masses().len() {
            let sum: f64 = parts.iter().map(|p| p.masses()[k]).sum();
            prop_assert!((sum - mu.masses()[k]).abs() <= 1e-15);
        }
        let total: f64 = parts.iter().map(|p| p.total_mass()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn atoms_with_known_weights_are_recovered(
        counts in prop::array::uniform3(0usize..40),
        s in 0.05f64..0.95,
    ) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        for nl in both() {
            let th = nl.thresholds();
            let lambda = th.f_minus + s * (th.f_plus - th.f_minus);
            let atoms = Branch::ALL.map(|b| nl.inverse(b, lambda));
            let u: Vec<f64> = (0..3).flat_map(|i| std::iter::repeat_n(atoms[i], counts[i])).collect();
            let v = vec![lambda; u.len()];
            let binning = Binning::uniform(lambda - 1.0, lambda + 1.0, 21).unwrap();
            let d = decompose(&u, &v, &nl, 1e-6, 0.9, binning).unwrap();
            let n = u.len() as f64;
            for (l, &c) in d.lambda.iter().zip(&counts) {
                prop_assert!((l - c as f64 / n).abs() <= 1e-12);
            }
            prop_assert_eq!(d.fit_residual, 0.0);
        }
    }

    #[test]
    fn config_text_round_trips(
        n in 8usize..512,
        eps in prop::collection::vec(1e-5f64..1e-1, 1..5),
        t_end in 1e-3f64..2.0,
        seed in any::<u64>(),
    ) {
        let mut eps = eps;
        eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eps.dedup();
        let list = eps.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let text = format!(
            "system = fast_reaction\nnonlinearity.kind = cubic\ngrid.n = {n}\neps = {list}\nt_end = {t_end:?}\nseed = {seed}\n"
        );
        let config = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(RunConfig::parse(&config.to_text()).unwrap(), config);
    }
}
