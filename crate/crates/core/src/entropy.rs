//! Entropy pairs `(Psi, Phi)`, the change-of-variables constants for the
//! inverse branches, the pointwise identity satisfied by the branch densities
//! of a limit Young measure, and energy/dissipation evaluators for
//! trajectories.
//!
//! `Phi(x) = int_0^x phi` and `Psi(x) = int_0^x phi(F(s)) ds`. Both are
//! evaluated exactly: `phi` is piecewise polynomial and `F` is piecewise
//! affine or cubic, so `phi o F` is a piecewise polynomial whose pieces are
//! found by inverting `F` at the breakpoints of `phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{Branch, Nonlinearity, NonlinearitySpec};
use crate::young_measure::DensityTriple;
use crate::System;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    One,
    Identity,
    Cubic,
    /// Ramp from 0 at `tau0` to 1 at `tau0 + delta`; its derivative is
    /// `(1/delta) 1_[tau0, tau0 + delta]`.
    SmoothedStep { tau0: f64, delta: f64 },
    /// `1_[tau0, inf)`.
    SharpStep { tau0: f64 },
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::One => "one",
            TestFunction::Identity => "identity",
            TestFunction::Cubic => "cubic",
            TestFunction::SmoothedStep { .. } => "smoothed_step",
            TestFunction::SharpStep { .. } => "sharp_step",
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::Identity => x,
            TestFunction::Cubic => x * x * x,
            TestFunction::SmoothedStep { tau0, delta } => ((x - tau0) / delta).clamp(0.0, 1.0),
            TestFunction::SharpStep { tau0 } => {
                if x >= tau0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `phi'(x)`; the jump of the sharp step is ignored.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One | TestFunction::SharpStep { .. } => 0.0,
            TestFunction::Identity => 1.0,
            TestFunction::Cubic => 3.0 * x * x,
            TestFunction::SmoothedStep { tau0, delta } => {
                if x > tau0 && x < tau0 + delta {
                    1.0 / delta
                } else {
                    0.0
                }
            }
        }
    }

    /// `Phi(x) = int_0^x phi`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => x,
            TestFunction::Identity => 0.5 * x * x,
            TestFunction::Cubic => 0.25 * x.powi(4),
            TestFunction::SmoothedStep { tau0, delta } => {
                let ramp = |y: f64| {
                    if y <= tau0 {
                        0.0
                    } else if y <= tau0 + delta {
                        (y - tau0).powi(2) / (2.0 * delta)
                    } else {
                        0.5 * delta + (y - tau0 - delta)
                    }
                };
                ramp(x) - ramp(0.0)
            }
            TestFunction::SharpStep { tau0 } => (x - tau0).max(0.0) - (-tau0).max(0.0),
        }
    }

    /// Polynomial pieces `(upper breakpoint, coefficients)`; the last piece
    /// extends to `+inf`.
    fn pieces(&self) -> Vec<(f64, Poly)> {
        match *self {
            TestFunction::One => vec![(f64::INFINITY, Poly(vec![1.0]))],
            TestFunction::Identity => vec![(f64::INFINITY, Poly(vec![0.0, 1.0]))],
            TestFunction::Cubic => vec![(f64::INFINITY, Poly(vec![0.0, 0.0, 0.0, 1.0]))],
            TestFunction::SmoothedStep { tau0, delta } => vec![
                (tau0, Poly(vec![0.0])),
                (tau0 + delta, Poly(vec![-tau0 / delta, 1.0 / delta])),
                (f64::INFINITY, Poly(vec![1.0])),
            ],
            TestFunction::SharpStep { tau0 } => vec![(tau0, Poly(vec![0.0])), (f64::INFINITY, Poly(vec![1.0]))],
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let pieces = self.pieces();
        pieces[..pieces.len() - 1].iter().map(|p| p.0).collect()
    }
}

/// Dense polynomial, ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// `self(inner(x))` by Horner's scheme on polynomials.
    fn compose(&self, inner: &Poly) -> Poly {
        let mut acc = Poly(vec![0.0]);
        for &c in self.0.iter().rev() {
            acc = acc.mul(inner);
            acc.0[0] += c;
        }
        acc
    }

    /// `int_0^x self`.
    fn integral(&self, x: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + c / (k as f64 + 1.0))
            * x
    }
}

/// `phi o F` as a piecewise polynomial with a cumulative-integral table.
#[derive(Debug, Clone)]
struct PiecewiseIntegrand {
    /// Sorted interior breakpoints.
    knots: Vec<f64>,
    /// Piece `i` covers `(knots[i-1], knots[i])`; the polynomial is in the
    /// local variable `x - origin`.
    pieces: Vec<(f64, Poly)>,
    /// `int_{knots[0]}^{knots[k]}`.
    cumulative: Vec<f64>,
    at_zero: f64,
}

impl PiecewiseIntegrand {
    fn new(nl: &Nonlinearity, phi: &TestFunction) -> Self {
        // monotone pieces of F: (lower end, upper end, origin, local polynomial)
        let f_pieces: Vec<(f64, f64, f64, Poly)> = match nl.spec() {
            NonlinearitySpec::PiecewiseAffine { segments } => segments
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let lo = if k == 0 { f64::NEG_INFINITY } else { s.start };
                    let hi = segments.get(k + 1).map_or(f64::INFINITY, |n| n.start);
                    (lo, hi, s.start, Poly(vec![s.value, s.slope]))
                })
                .collect(),
            &NonlinearitySpec::SmoothCubic { c3, c2, c1 } => {
                let th = nl.thresholds();
                let p = Poly(vec![0.0, c1, c2, c3]);
                vec![
                    (f64::NEG_INFINITY, th.alpha_plus, 0.0, p.clone()),
                    (th.alpha_plus, th.beta_minus, 0.0, p.clone()),
                    (th.beta_minus, f64::INFINITY, 0.0, p),
                ]
            }
        };
        let mut knots: Vec<f64> = f_pieces.iter().skip(1).map(|p| p.0).collect();
        for c in phi.breakpoints() {
            for (idx, (lo, hi, origin, poly)) in f_pieces.iter().enumerate() {
                let x = match nl.spec() {
                    NonlinearitySpec::PiecewiseAffine { .. } => origin + (c - poly.0[0]) / poly.0[1],
                    NonlinearitySpec::SmoothCubic { .. } => {
                        let branch = Branch::ALL[idx];
                        if !nl.thresholds().in_value_domain(branch, c) {
                            continue;
                        }
                        nl.inverse(branch, c)
                    }
                };
                if x > *lo && x < *hi {
                    knots.push(x);
                }
            }
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let phi_pieces = phi.pieces();
        let piece_for = |mid: f64| {
            let (_, _, origin, fpoly) = f_pieces
                .iter()
                .find(|(lo, hi, ..)| mid >= *lo && mid < *hi)
                .expect("F pieces cover the real line");
            let y = nl.eval(mid);
            let (_, phipoly) = phi_pieces.iter().find(|(top, _)| y < *top).unwrap_or(phi_pieces.last().unwrap());
            // phi(F(origin + t)) as a polynomial in t
            (*origin, phipoly.compose(fpoly))
        };
        let mut pieces = Vec::with_capacity(knots.len() + 1);
        for i in 0..=knots.len() {
            let mid = match (i.checked_sub(1).map(|k| knots[k]), knots.get(i)) {
                (None, Some(&r)) => r - 1.0,
                (Some(l), None) => l + 1.0,
                (Some(l), Some(&r)) => 0.5 * (l + r),
                (None, None) => 0.0,
            };
            pieces.push(piece_for(mid));
        }
        let mut integrand = PiecewiseIntegrand { knots, pieces, cumulative: Vec::new(), at_zero: 0.0 };
        let mut cumulative = vec![0.0; integrand.knots.len()];
        for k in 1..integrand.knots.len() {
            cumulative[k] = cumulative[k - 1] + integrand.piece_integral(k, integrand.knots[k - 1], integrand.knots[k]);
        }
        integrand.cumulative = cumulative;
        integrand.at_zero = integrand.integral_from_first_knot(0.0);
        integrand
    }

    fn piece_integral(&self, i: usize, a: f64, b: f64) -> f64 {
        let (origin, poly) = &self.pieces[i];
        poly.integral(b - origin) - poly.integral(a - origin)
    }

    fn integral_from_first_knot(&self, x: f64) -> f64 {
        if self.knots.is_empty() {
            return self.piece_integral(0, 0.0, x);
        }
        let i = self.knots.partition_point(|&k| k < x);
        if i == 0 {
            self.piece_integral(0, self.knots[0], x)
        } else {
            self.cumulative[i - 1] + self.piece_integral(i, self.knots[i - 1], x)
        }
    }

    fn integral_from_zero(&self, x: f64) -> f64 {
        self.integral_from_first_knot(x) - self.at_zero
    }

    fn eval(&self, x: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k < x);
        let (origin, poly) = &self.pieces[i];
        poly.eval(x - origin)
    }
}

/// `(Psi, Phi)` for a test function and a nonlinearity.
#[derive(Debug, Clone)]
pub struct EntropyPair {
    phi: TestFunction,
    nl: Nonlinearity,
    h: f64,
    integrand: PiecewiseIntegrand,
}

impl EntropyPair {
    /// `h` is the quadrature step used by the integrals over inverse-branch
    /// slopes and by [`EntropyPair::psi_trapezoid`]; it must not exceed
    /// `(beta_plus - alpha_minus) / 256`.
    pub fn new(phi: TestFunction, nl: &Nonlinearity, h: f64) -> Result<Self> {
        let th = nl.thresholds();
        let h_max = (th.beta_plus - th.alpha_minus) / 256.0;
        if !(h > 0.0 && h <= h_max) {
            return Err(Error::InvalidArgument(format!("quadrature step {h} not in (0, {h_max}]")));
        }
        if let TestFunction::SmoothedStep { delta, .. } = phi {
            if !(delta > 0.0) {
                return Err(Error::InvalidArgument(format!("ramp width {delta} must be positive")));
            }
        }
        Ok(EntropyPair { phi, nl: nl.clone(), h, integrand: PiecewiseIntegrand::new(nl, &phi) })
    }

    /// Pair with the largest admissible quadrature step.
    pub fn with_default_step(phi: TestFunction, nl: &Nonlinearity) -> Result<Self> {
        let th = nl.thresholds();
        Self::new(phi, nl, (th.beta_plus - th.alpha_minus) / 256.0)
    }

    pub fn phi(&self) -> &TestFunction {
        &self.phi
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn psi(&self, x: f64) -> f64 {
        self.integrand.integral_from_zero(x)
    }

    pub fn big_phi(&self, x: f64) -> f64 {
        self.phi.antiderivative(x)
    }

    /// Composite trapezoid approximation of `Psi` with step at most `h`.
    pub fn psi_trapezoid(&self, x: f64) -> f64 {
        let panels = (x.abs() / self.h).ceil().max(1.0) as usize;
        let step = x / panels as f64;
        let f = |s: f64| self.phi.value(self.nl.eval(s));
        let inner: f64 = (1..panels).map(|k| f(k as f64 * step)).sum();
        step * (0.5 * (f(0.0) + f(x)) + inner)
    }

    /// `phi(F(x))` from the piecewise-polynomial representation.
    pub fn integrand(&self, x: f64) -> f64 {
        self.integrand.eval(x)
    }

    /// `int_a^b phi(tau) S_i'(tau) dtau`.
    ///
    /// Exact for piecewise-affine `F`. For smooth `F` the slopes blow up like
    /// `|tau - f_pm|^{-1/2}` at the turning values, so each smooth piece is
    /// split at its midpoint and integrated with `tau = a + t^2` (resp.
    /// `b - t^2`) and the midpoint rule, which keeps the error `O(h^2)`.
    pub fn integral_phi_slope(&self, branch: Branch, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral_phi_slope(branch, b, a);
        }
        let th = self.nl.thresholds();
        let mut cuts = vec![a, b, th.f_minus, th.f_plus];
        cuts.extend(self.phi.breakpoints());
        if let NonlinearitySpec::PiecewiseAffine { segments } = self.nl.spec() {
            cuts.extend(segments.iter().map(|s| s.value));
        }
        cuts.retain(|&c| c >= a && c <= b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| self.piece_phi_slope(branch, w[0], w[1]))
            .sum()
    }

    fn piece_phi_slope(&self, branch: Branch, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        if self.nl.spec().is_affine() {
            return self.nl.inverse_slope(branch, mid) * (self.phi.antiderivative(b) - self.phi.antiderivative(a));
        }
        let g = |tau: f64| self.phi.value(tau) * self.nl.inverse_slope(branch, tau);
        let panels = ((b - a) / self.h).ceil().max(1.0) as usize;
        let half = |from: f64, sign: f64| {
            let t_end = (mid - a).sqrt();
            let dt = t_end / panels as f64;
            (0..panels)
                .map(|k| {
                    let t = (k as f64 + 0.5) * dt;
                    2.0 * t * g(from + sign * t * t)
                })
                .sum::<f64>()
                * dt
        };
        half(a, 1.0) + half(b, -1.0)
    }

    /// Constants `(C1, C2, C3)` with `Psi(S_i(l)) = int_0^l phi S_i' + C_i`
    /// on `(f_minus, f_plus)`: `C1 = 0`, `C2 = C3 = int_0^{f_plus} phi (S1' - S2')`.
    pub fn lemma32_constants(&self) -> [f64; 3] {
        let f_plus = self.nl.thresholds().f_plus;
        let c = self.integral_phi_slope(Branch::Lower, 0.0, f_plus) - self.integral_phi_slope(Branch::Middle, 0.0, f_plus);
        [0.0, c, c]
    }

    /// `Psi(S_i(l)) - (int_0^l phi S_i' + C_i)` for each branch.
    pub fn lemma32_residuals(&self, lambda0: f64) -> [f64; 3] {
        let c = self.lemma32_constants();
        Branch::ALL.map(|b| {
            let i = b.index();
            self.psi(self.nl.inverse(b, lambda0)) - (self.integral_phi_slope(b, 0.0, lambda0) + c[i])
        })
    }
}

/// The entropy family tracked along trajectories: identity, cubic, and a
/// ramp of width `(f_plus - f_minus)/64` starting at `tau0`.
pub fn registered_family(nl: &Nonlinearity, tau0: Option<f64>) -> Result<[EntropyPair; 3]> {
    let th = nl.thresholds();
    let tau0 = tau0.unwrap_or(0.5 * (th.f_minus + th.f_plus));
    let delta = (th.f_plus - th.f_minus) / 64.0;
    Ok([
        EntropyPair::with_default_step(TestFunction::Identity, nl)?,
        EntropyPair::with_default_step(TestFunction::Cubic, nl)?,
        EntropyPair::with_default_step(TestFunction::SmoothedStep { tau0, delta }, nl)?,
    ])
}

/// `sum_j [Psi(u_j) + Phi(v_j)] dx`.
pub fn fast_reaction_energy(pair: &EntropyPair, u: &[f64], v: &[f64], dx: f64) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| pair.psi(a) + pair.big_phi(b)).sum::<f64>() * dx
}

/// `sum_j Psi(u_j) dx`.
pub fn lyapunov(pair: &EntropyPair, u: &[f64], dx: f64) -> f64 {
    u.iter().map(|&a| pair.psi(a)).sum::<f64>() * dx
}

/// Instantaneous dissipation rates `(int phi'(v)|grad v|^2, int (v - F(u))(phi(v) - phi(F(u)))/eps)`.
///
/// The gradient term uses difference quotients on cell interfaces, which is
/// what `-sum_j phi(v_j) (Delta v)_j dx` telescopes to.
pub fn dissipation(phi: &TestFunction, nl: &Nonlinearity, u: &[f64], v: &[f64], eps: f64, dx: f64) -> (f64, f64) {
    let grad: f64 = v
        .windows(2)
        .map(|w| (phi.value(w[1]) - phi.value(w[0])) * (w[1] - w[0]))
        .sum::<f64>()
        / dx;
    let react: f64 = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| {
            let fa = nl.eval(a);
            (b - fa) * (phi.value(b) - phi.value(fa))
        })
        .sum::<f64>()
        * dx
        / eps;
    (grad, react)
}

/// Residual of the space-integrated energy balance between consecutive
/// snapshots: `E(t1) - E(t0) + (t1 - t0) * (D(t0) + D(t1)) / 2`, where `D` is
/// the total dissipation rate.
pub fn energy_balance_residual(
    pair: &EntropyPair,
    system: System,
    eps: f64,
    dx: f64,
    snapshots: &[(f64, &[f64], &[f64])],
) -> Vec<f64> {
    let energy = |u: &[f64], v: &[f64]| match system {
        System::FastReaction => fast_reaction_energy(pair, u, v, dx),
        System::ForwardBackward => lyapunov(pair, u, dx),
    };
    let rate = |u: &[f64], v: &[f64]| {
        let (g, r) = dissipation(pair.phi(), pair.nonlinearity(), u, v, eps, dx);
        g + r
    };
    snapshots
        .windows(2)
        .map(|w| {
            let (t0, u0, v0) = w[0];
            let (t1, u1, v1) = w[1];
            energy(u1, v1) - energy(u0, v0) + (t1 - t0) * 0.5 * (rate(u0, v0) + rate(u1, v1))
        })
        .collect()
}

/// Branch tail masses `F#mu^(i)(tau0, inf)` and the total mass of branch 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchTails {
    pub tails: [f64; 3],
    pub branch1_total: f64,
}

impl BranchTails {
    /// Counts from `u` samples: `tails[i]` is the fraction with `u in I_i`
    /// and `F(u) > tau0`.
    pub fn from_samples(nl: &Nonlinearity, u_samples: &[f64], tau0: f64) -> Result<Self> {
        if u_samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let th = nl.thresholds();
        let mut tails = [0usize; 3];
        let mut first = 0usize;
        for &u in u_samples {
            let b = th.branch_of(u).index();
            if b == 0 {
                first += 1;
            }
            if nl.eval(u) > tau0 {
                tails[b] += 1;
            }
        }
        let n = u_samples.len() as f64;
        Ok(BranchTails { tails: tails.map(|c| c as f64 / n), branch1_total: first as f64 / n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub provenance: String,
    pub variant: System,
    pub tau0: f64,
    pub lambda0: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
}

/// `calF(tau0) = sum_i w_i(tau0) tails_i + (S1' - S2')(tau0) (1 - branch1_total)`.
pub fn cal_f(nl: &Nonlinearity, tails: &BranchTails, tau0: f64, variant: System) -> f64 {
    let w = nl.identity_weights(variant, tau0);
    let gap = nl.inverse_slope(Branch::Lower, tau0) - nl.inverse_slope(Branch::Middle, tau0);
    w.iter().zip(&tails.tails).map(|(a, b)| a * b).sum::<f64>() + gap * (1.0 - tails.branch1_total)
}

/// Pointwise identity for densities `g = (g1, g2, g3)` at `lambda0`:
/// `lhs = 1_{lambda0 > tau0} sum_i w_i(tau0) g_i + (S1' - S2')(tau0)(1 - g1)`,
/// `rhs = calF(tau0)`.
pub fn theorem_a_identity(
    nl: &Nonlinearity,
    g: [f64; 3],
    tails: &BranchTails,
    tau0: f64,
    lambda0: f64,
    variant: System,
) -> IdentityReport {
    let w = nl.identity_weights(variant, tau0);
    let gap = nl.inverse_slope(Branch::Lower, tau0) - nl.inverse_slope(Branch::Middle, tau0);
    let indicator = if lambda0 > tau0 { 1.0 } else { 0.0 };
    let lhs = indicator * w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() + gap * (1.0 - g[0]);
    let rhs = cal_f(nl, tails, tau0, variant);
    IdentityReport {
        provenance: String::new(),
        variant,
        tau0,
        lambda0,
        lhs,
        rhs,
        residual: lhs - rhs,
        tolerance: 0.0,
    }
}

/// [`theorem_a_identity`] with densities looked up in the bin of `lambda0`.
pub fn theorem_a_residual(
    nl: &Nonlinearity,
    densities: &DensityTriple,
    tails: &BranchTails,
    tau0: f64,
    lambda0: f64,
    variant: System,
) -> Result<IdentityReport> {
    let g = densities.at(lambda0)?;
    Ok(theorem_a_identity(nl, g, tails, tau0, lambda0, variant))
}

/// `(1 - atom_mass) sum_i w_i(lambda0) g_i(lambda0)`, which vanishes for limit
/// measures.
pub fn localized_identity(nl: &Nonlinearity, g: [f64; 3], atom_mass: f64, lambda0: f64, variant: System) -> IdentityReport {
    let w = nl.identity_weights(variant, lambda0);
    let lhs = (1.0 - atom_mass) * w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
    IdentityReport {
        provenance: String::new(),
        variant,
        tau0: f64::NAN,
        lambda0,
        lhs,
        rhs: 0.0,
        residual: lhs,
        tolerance: 0.0,
    }
}

pub fn localized_identity_residual(
    nl: &Nonlinearity,
    densities: &DensityTriple,
    atom_mass: f64,
    lambda0: f64,
    variant: System,
) -> Result<IdentityReport> {
    let g = densities.at(lambda0)?;
    Ok(localized_identity(nl, g, atom_mass, lambda0, variant))
}

/// Identity check on one space-time cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellIdentitySummary {
    pub reports: Vec<IdentityReport>,
    /// Largest over `tau0` of `sum_{lambda0} F#mu(bin) |residual|`.
    pub weighted_residual: f64,
    /// `bin width + 3 / sqrt(N)`.
    pub tolerance: f64,
}

/// Evaluates the pointwise identity on the empirical measure of a cell.
///
/// `tau0` runs over `f_minus + k (f_plus - f_minus) / 8`, `k = 1..7`, and
/// `lambda0` over the centres of occupied value bins; both stay at least one
/// bin away from `f_minus`, `f_plus` and from each other. The identity only
/// holds for `F#mu`-almost every `lambda0`, so the per-`tau0` statistic
/// integrates `|residual|` against the push-forward mass of the bins.
pub fn empirical_theorem_a(
    nl: &Nonlinearity,
    u_samples: &[f64],
    value_binning: crate::young_measure::Binning,
    variant: System,
    cell_id: &str,
) -> Result<CellIdentitySummary> {
    let densities = crate::young_measure::radon_nikodym_densities(u_samples, nl, value_binning)?;
    let push = crate::young_measure::pushforward(u_samples, nl, value_binning)?;
    let th = nl.thresholds();
    let w = value_binning.width();
    let tolerance = w + 3.0 / (u_samples.len() as f64).sqrt();
    let far = |x: f64, y: f64| (x - y).abs() >= w * (1.0 - 1e-9);
    let mut reports = Vec::new();
    let mut weighted_residual = 0.0f64;
    for k in 1..8 {
        let tau0 = th.f_minus + (th.f_plus - th.f_minus) * k as f64 / 8.0;
        if !(far(tau0, th.f_minus) && far(tau0, th.f_plus)) {
            continue;
        }
        let tails = BranchTails::from_samples(nl, u_samples, tau0)?;
        let mut integral = 0.0;
        for (bin, &occupied) in densities.occupied().iter().enumerate() {
            let lambda0 = value_binning.center(bin);
            if !occupied || !(far(lambda0, th.f_minus) && far(lambda0, th.f_plus) && far(lambda0, tau0)) {
                continue;
            }
            let mut rep = theorem_a_residual(nl, &densities, &tails, tau0, lambda0, variant)?;
            rep.provenance = cell_id.to_string();
            rep.tolerance = tolerance;
            integral += push.masses()[bin] * rep.residual.abs();
            reports.push(rep);
        }
        weighted_residual = weighted_residual.max(integral);
    }
    Ok(CellIdentitySummary { reports, weighted_residual, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine() -> Nonlinearity {
        Nonlinearity::new(NonlinearitySpec::corrected_affine()).unwrap()
    }

    fn cubic() -> Nonlinearity {
        Nonlinearity::new(NonlinearitySpec::canonical_cubic()).unwrap()
    }

    fn all_phis(nl: &Nonlinearity) -> Vec<TestFunction> {
        let th = nl.thresholds();
        let tau0 = 0.4 * th.f_minus + 0.6 * th.f_plus;
        vec![
            TestFunction::One,
            TestFunction::Identity,
            TestFunction::Cubic,
            TestFunction::SmoothedStep { tau0, delta: (th.f_plus - th.f_minus) / 64.0 },
            TestFunction::SharpStep { tau0 },
        ]
    }

    #[test]
    fn poly_compose_and_integral() {
        let p = Poly(vec![1.0, 0.0, 2.0]); // 1 + 2y^2
        let q = Poly(vec![3.0, 1.0]); // 3 + x
        let r = p.compose(&q);
        for x in [-1.0, 0.0, 0.5, 2.0] {
            assert!((r.eval(x) - p.eval(q.eval(x))).abs() < 1e-12);
        }
        // int_0^2 (1 + 2y^2) = 2 + 16/3
        assert!((p.integral(2.0) - (2.0 + 16.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn phi_one_gives_identity_pair() {
        for nl in [affine(), cubic()] {
            let pair = EntropyPair::with_default_step(TestFunction::One, &nl).unwrap();
            for x in [0.0, 0.3, 1.1, 2.7] {
                assert!((pair.psi(x) - x).abs() < 1e-13);
                assert!((pair.big_phi(x) - x).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_phi_on_affine() {
        let pair = EntropyPair::with_default_step(TestFunction::Identity, &affine()).unwrap();
        assert!((pair.psi(1.0) - 1.0).abs() < 1e-15);
        // int_0^{5/4} F = 1 + int_1^{5/4} (4 - 2x) = 1 + 1 - 9/16 + ... computed directly
        let direct = 1.0 + (4.0 * 0.25 - (1.25f64.powi(2) - 1.0));
        assert!((pair.psi(1.25) - direct).abs() < 1e-14);
    }

    #[test]
    fn exact_psi_agrees_with_trapezoid() {
        for nl in [affine(), cubic()] {
            for phi in all_phis(&nl) {
                let pair = EntropyPair::new(phi, &nl, 1e-4).unwrap();
                for x in [0.2, 0.9, 1.3, 1.9] {
                    let err = (pair.psi(x) - pair.psi_trapezoid(x)).abs();
                    // the sharp step's jump costs O(h) in the trapezoid rule
                    let tol = if matches!(phi, TestFunction::SharpStep { .. }) { 1e-4 } else { 1e-6 };
                    assert!(err < tol, "{:?} at {x}: {err}", phi);
                }
            }
        }
    }

    #[test]
    fn psi_is_monotone_for_nonnegative_phi() {
        for nl in [affine(), cubic()] {
            for phi in all_phis(&nl) {
                let pair = EntropyPair::with_default_step(phi, &nl).unwrap();
                let vals: Vec<f64> = (0..400).map(|k| pair.psi(k as f64 * 0.005)).collect();
                assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-14), "{:?}", phi);
                assert_eq!(pair.psi(0.0), 0.0);
            }
        }
    }

    #[test]
    fn step_too_large_is_rejected() {
        assert!(EntropyPair::new(TestFunction::One, &affine(), 0.1).is_err());
    }

    #[test]
    fn lemma32_constant_for_phi_one() {
        let pair = EntropyPair::with_default_step(TestFunction::One, &affine()).unwrap();
        let c = pair.lemma32_constants();
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 1.25).abs() < 1e-14);
        assert_eq!(c[1], c[2]);
    }

    #[test]
    fn lemma32_closed_form_residuals_vanish_for_affine() {
        let nl = affine();
        for phi in all_phis(&nl) {
            let pair = EntropyPair::with_default_step(phi, &nl).unwrap();
            for k in 1..20 {
                let l = 1.5 + 0.5 * k as f64 / 20.0;
                for r in pair.lemma32_residuals(l) {
                    assert!(r.abs() <= 1e-12, "{:?} at {l}: {r}", phi);
                }
            }
        }
    }

    #[test]
    fn lemma32_quadrature_is_second_order_for_cubic() {
        let nl = cubic();
        let th = *nl.thresholds();
        let l = 0.3 * th.f_minus + 0.7 * th.f_plus;
        let worst = |h: f64| {
            let pair = EntropyPair::new(TestFunction::Identity, &nl, h).unwrap();
            pair.lemma32_residuals(l).iter().fold(0.0f64, |m, r| m.max(r.abs()))
        };
        let (coarse, fine) = (worst(2e-3), worst(1e-3));
        assert!(worst(1e-4) <= 1e-6);
        let ratio = coarse / fine;
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn cal_f_examples() {
        let nl = affine();
        let tau0 = 1.75;
        let below = BranchTails { tails: [0.0; 3], branch1_total: 1.0 };
        assert_eq!(cal_f(&nl, &below, tau0, System::FastReaction), 0.0);
        let above = BranchTails { tails: [1.0, 0.0, 0.0], branch1_total: 1.0 };
        assert_eq!(cal_f(&nl, &above, tau0, System::FastReaction), 1.5);
    }

    #[test]
    fn single_atom_identity_is_exact() {
        let nl = cubic();
        let th = *nl.thresholds();
        for variant in [System::FastReaction, System::ForwardBackward] {
            for (r, tau0) in [(0.5, 0.45), (0.5, 0.55), (0.4, 0.6)] {
                let g = [0.3, 0.1, 0.6];
                let on = if r > tau0 { 1.0 } else { 0.0 };
                let tails = BranchTails { tails: g.map(|x| x * on), branch1_total: g[0] };
                let rep = theorem_a_identity(&nl, g, &tails, tau0, r, variant);
                assert!(rep.residual.abs() <= 1e-12);
                assert!(tau0 > th.f_minus && tau0 < th.f_plus);
            }
        }
    }

    #[test]
    fn localized_identity_examples() {
        let nl = affine();
        let rep = localized_identity(&nl, [0.5, 0.0, 0.5], 0.5, 1.75, System::FastReaction);
        // weights 3/2 and 5/4
        assert!((rep.residual - 0.6875).abs() < 1e-15);
        let rep = localized_identity(&nl, [0.5, 0.0, 0.5], 1.0, 1.75, System::FastReaction);
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn dissipation_signs() {
        let nl = affine();
        let u = [0.2, 0.9, 1.1, 1.3];
        let v = [0.5, 1.7, 1.2, 2.0];
        for phi in all_phis(&nl) {
            let (g, r) = dissipation(&phi, &nl, &u, &v, 0.01, 0.25);
            assert!(g >= -1e-12 && r >= -1e-12, "{:?}", phi);
        }
    }
}
