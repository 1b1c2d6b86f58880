//! Nonmonotone reaction functions with one local maximum followed by one
//! local minimum, their thresholds, and the three inverse branches.
//!
//! Two families are supported: continuous piecewise-affine functions and
//! cubics `c3 u^3 + c2 u^2 + c1 u`. The branches are numbered from the left:
//! [`Branch::Lower`] lives on `(-inf, alpha_plus]`, [`Branch::Middle`] on
//! `(alpha_plus, beta_minus)` and [`Branch::Upper`] on `[beta_minus, inf)`.
//! Inverses are extended by constants outside their natural domains, so every
//! inverse is a total function of the value.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::System;

/// Relative tolerance for the continuity check on affine breakpoints.
const CONTINUITY_TOL: f64 = 1e-9;
/// Singular values below this fraction of the largest are treated as zero.
const RANK_THRESHOLD: f64 = 1e-9;
const NONDEGENERACY_SAMPLES: usize = 64;
const THEOREM_D_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Lower,
    Middle,
    Upper,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Lower, Branch::Middle, Branch::Upper];

    pub fn index(self) -> usize {
        match self {
            Branch::Lower => 0,
            Branch::Middle => 1,
            Branch::Upper => 2,
        }
    }

    /// One-based branch number, matching the usual `S_1, S_2, S_3` naming.
    pub fn from_number(n: usize) -> Option<Self> {
        match n {
            1 => Some(Branch::Lower),
            2 => Some(Branch::Middle),
            3 => Some(Branch::Upper),
            _ => None,
        }
    }
}

/// Affine piece `F(x) = value + slope * (x - start)`, valid from `start` up to
/// the next segment's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineSegment {
    pub start: f64,
    pub value: f64,
    pub slope: f64,
}

impl AffineSegment {
    fn eval(&self, x: f64) -> f64 {
        self.value + self.slope * (x - self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NonlinearitySpec {
    /// The first segment extends to `-inf` and the last to `+inf`.
    PiecewiseAffine { segments: Vec<AffineSegment> },
    /// `F(u) = c3 u^3 + c2 u^2 + c1 u`.
    SmoothCubic { c3: f64, c2: f64, c1: f64 },
}

impl NonlinearitySpec {
    /// `2u` on `[0,1]`, `4 - 2u` on `[1, 5/4]`, `4u - 7/2` beyond.
    ///
    /// Inverse slopes are `1/2`, `-1/2` and `1/4`.
    pub fn corrected_affine() -> Self {
        NonlinearitySpec::PiecewiseAffine {
            segments: vec![
                AffineSegment { start: 0.0, value: 0.0, slope: 2.0 },
                AffineSegment { start: 1.0, value: 2.0, slope: -2.0 },
                AffineSegment { start: 1.25, value: 1.5, slope: 4.0 },
            ],
        }
    }

    /// `u^3 - 3u^2 + 2.5u`.
    pub fn canonical_cubic() -> Self {
        NonlinearitySpec::SmoothCubic { c3: 1.0, c2: -3.0, c1: 2.5 }
    }

    /// Builds a piecewise-affine spec from breakpoints `(x_j, F(x_j))` and the
    /// slope of the segment starting at each breakpoint.
    pub fn from_breakpoints(points: &[(f64, f64)], slopes: &[f64]) -> Result<Self> {
        if points.len() != slopes.len() {
            return Err(Error::Shape(format!(
                "{} breakpoints but {} slopes",
                points.len(),
                slopes.len()
            )));
        }
        let segments = points
            .iter()
            .zip(slopes)
            .map(|(&(start, value), &slope)| AffineSegment { start, value, slope })
            .collect();
        Ok(NonlinearitySpec::PiecewiseAffine { segments })
    }

    /// Evaluates `F`; total on the reals.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            NonlinearitySpec::PiecewiseAffine { segments } => segments[segment_index(segments, x)].eval(x),
            NonlinearitySpec::SmoothCubic { c3, c2, c1 } => ((c3 * x + c2) * x + c1) * x,
        }
    }

    /// `F'(x)`; right derivative at affine breakpoints.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            NonlinearitySpec::PiecewiseAffine { segments } => segments[segment_index(segments, x)].slope,
            NonlinearitySpec::SmoothCubic { c3, c2, c1 } => (3.0 * c3 * x + 2.0 * c2) * x + c1,
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, NonlinearitySpec::PiecewiseAffine { .. })
    }
}

fn segment_index(segments: &[AffineSegment], x: f64) -> usize {
    segments.partition_point(|s| s.start <= x).saturating_sub(1)
}

/// Turning points and their partner points on the outer branches.
///
/// `F(alpha_plus) = F(beta_plus) = f_plus` and `F(alpha_minus) = F(beta_minus) = f_minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub f_minus: f64,
    pub f_plus: f64,
}

impl Thresholds {
    /// Branch interval containing `u`: `I1 = (-inf, alpha_plus]`,
    /// `I2 = (alpha_plus, beta_minus)`, `I3 = [beta_minus, inf)`.
    pub fn branch_of(&self, u: f64) -> Branch {
        if u <= self.alpha_plus {
            Branch::Lower
        } else if u < self.beta_minus {
            Branch::Middle
        } else {
            Branch::Upper
        }
    }

    /// Whether `lambda` lies in the value domain `J_i` of the branch.
    pub fn in_value_domain(&self, branch: Branch, lambda: f64) -> bool {
        match branch {
            Branch::Lower => lambda <= self.f_plus,
            Branch::Middle => lambda > self.f_minus && lambda < self.f_plus,
            Branch::Upper => lambda >= self.f_minus,
        }
    }
}

/// Computes the thresholds of `spec`, rejecting functions without the
/// increasing/decreasing/increasing shape.
pub fn analyze(spec: &NonlinearitySpec) -> Result<Thresholds> {
    Nonlinearity::new(spec.clone()).map(|nl| nl.thresholds)
}

/// Outcome of the Theorem-D style sufficient condition for strong convergence
/// in the fast-reaction system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremDVerdict {
    pub holds: bool,
    /// `S2' + 1 > 0` on all of `(f_minus, f_plus)`.
    pub unstable_slope_condition: bool,
    /// A value in `(f_minus, f_plus)` where `S1' != S3'`.
    pub witness_tau0: Option<f64>,
}

/// A validated nonlinearity together with its thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    spec: NonlinearitySpec,
    thresholds: Thresholds,
    /// Segment ranges of the three monotone runs (affine only).
    runs: Option<[Range<usize>; 3]>,
}

impl Nonlinearity {
    pub fn new(spec: NonlinearitySpec) -> Result<Self> {
        match &spec {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                let runs = affine_runs(segments)?;
                let alpha_plus = segments[runs[1].start].start;
                let beta_minus = segments[runs[2].start].start;
                let mut nl = Nonlinearity {
                    thresholds: Thresholds {
                        alpha_minus: f64::NAN,
                        alpha_plus,
                        beta_minus,
                        beta_plus: f64::NAN,
                        f_minus: spec.eval(beta_minus),
                        f_plus: spec.eval(alpha_plus),
                    },
                    runs: Some(runs),
                    spec,
                };
                nl.finish_thresholds()?;
                Ok(nl)
            }
            &NonlinearitySpec::SmoothCubic { c3, c2, c1 } => {
                if !(c3.is_finite() && c2.is_finite() && c1.is_finite()) {
                    return Err(Error::Shape("non-finite cubic coefficient".into()));
                }
                if c3 <= 0.0 {
                    return Err(Error::Shape("leading coefficient must be positive".into()));
                }
                // F' = 3 c3 u^2 + 2 c2 u + c1
                let (a, b, c) = (3.0 * c3, 2.0 * c2, c1);
                let disc = b * b - 4.0 * a * c;
                if disc <= 0.0 {
                    return Err(Error::Shape("cubic is monotone (no interior critical points)".into()));
                }
                let sq = disc.sqrt();
                // numerically stable quadratic roots
                let q = -0.5 * (b + b.signum() * sq);
                let (r1, r2) = if q == 0.0 {
                    (-sq / (2.0 * a), sq / (2.0 * a))
                } else {
                    let (x1, x2) = (q / a, c / q);
                    (x1.min(x2), x1.max(x2))
                };
                if r1 <= 0.0 {
                    return Err(Error::Shape(format!(
                        "local maximum at {r1} is not in (0, inf)"
                    )));
                }
                let mut nl = Nonlinearity {
                    thresholds: Thresholds {
                        alpha_minus: f64::NAN,
                        alpha_plus: r1,
                        beta_minus: r2,
                        beta_plus: f64::NAN,
                        f_minus: spec.eval(r2),
                        f_plus: spec.eval(r1),
                    },
                    runs: None,
                    spec,
                };
                nl.finish_thresholds()?;
                Ok(nl)
            }
        }
    }

    fn finish_thresholds(&mut self) -> Result<()> {
        let th = self.thresholds;
        if th.f_minus < 0.0 {
            return Err(Error::Shape(format!(
                "local minimum value {} is negative, F must be nonnegative on [0, inf)",
                th.f_minus
            )));
        }
        if self.spec.eval(0.0).abs() > 1e-12 {
            return Err(Error::Shape(format!("F(0) = {} must vanish", self.spec.eval(0.0))));
        }
        self.thresholds.alpha_minus = self.solve_branch(Branch::Lower, th.f_minus);
        self.thresholds.beta_plus = self.solve_branch(Branch::Upper, th.f_plus);
        Ok(())
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spec.eval(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.spec.derivative(x)
    }

    /// Inverse branch `S_i(lambda)`, extended by constants outside `J_i`.
    pub fn inverse(&self, branch: Branch, lambda: f64) -> f64 {
        let th = &self.thresholds;
        match branch {
            Branch::Lower if lambda >= th.f_plus => th.alpha_plus,
            Branch::Middle if lambda <= th.f_minus => th.beta_minus,
            Branch::Middle if lambda >= th.f_plus => th.alpha_plus,
            Branch::Upper if lambda <= th.f_minus => th.beta_minus,
            _ => self.solve_branch(branch, lambda),
        }
    }

    /// `S_i'(lambda)`: `1 / F'(S_i(lambda))` inside `J_i`, zero where the
    /// inverse is constant-extended. At `f_minus`/`f_plus` the one-sided value
    /// from inside `J_i` is returned (infinite for smooth `F`).
    pub fn inverse_slope(&self, branch: Branch, lambda: f64) -> f64 {
        let th = &self.thresholds;
        let outside = match branch {
            Branch::Lower => lambda > th.f_plus,
            Branch::Middle => lambda < th.f_minus || lambda > th.f_plus,
            Branch::Upper => lambda < th.f_minus,
        };
        if outside {
            return 0.0;
        }
        match &self.spec {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                let run = self.runs.as_ref().expect("affine runs")[branch.index()].clone();
                1.0 / affine_inverse(segments, run, lambda).1
            }
            NonlinearitySpec::SmoothCubic { .. } => {
                let x = match branch {
                    Branch::Middle if lambda == th.f_minus => th.beta_minus,
                    Branch::Middle if lambda == th.f_plus => th.alpha_plus,
                    _ => self.inverse(branch, lambda),
                };
                let d = self.spec.derivative(x);
                if d == 0.0 {
                    if branch == Branch::Middle {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    }
                } else {
                    1.0 / d
                }
            }
        }
    }

    /// Branch weights entering the entropy identities: `S_i' + 1` for the
    /// fast-reaction system and `S_i'` for forward-backward diffusion.
    pub fn identity_weights(&self, system: System, lambda: f64) -> [f64; 3] {
        let shift = match system {
            System::FastReaction => 1.0,
            System::ForwardBackward => 0.0,
        };
        Branch::ALL.map(|b| self.inverse_slope(b, lambda) + shift)
    }

    fn solve_branch(&self, branch: Branch, lambda: f64) -> f64 {
        let th = &self.thresholds;
        match &self.spec {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                let run = self.runs.as_ref().expect("affine runs")[branch.index()].clone();
                affine_inverse(segments, run, lambda).0
            }
            NonlinearitySpec::SmoothCubic { .. } => {
                let f = |x: f64| (self.spec.eval(x), self.spec.derivative(x));
                match branch {
                    Branch::Lower => {
                        let mut lo = -1.0;
                        while self.spec.eval(lo) > lambda {
                            lo *= 2.0;
                        }
                        solve_monotone(f, lo, th.alpha_plus, lambda)
                    }
                    Branch::Middle => solve_monotone(f, th.alpha_plus, th.beta_minus, lambda),
                    Branch::Upper => {
                        let mut hi = th.beta_minus + 1.0;
                        while self.spec.eval(hi) < lambda {
                            hi = th.beta_minus + 2.0 * (hi - th.beta_minus);
                        }
                        solve_monotone(f, th.beta_minus, hi, lambda)
                    }
                }
            }
        }
    }

    /// Largest `|F'|` over `[lo, hi]`.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        match &self.spec {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                let first = segment_index(segments, lo);
                let last = segment_index(segments, hi);
                segments[first..=last]
                    .iter()
                    .map(|s| s.slope.abs())
                    .fold(0.0, f64::max)
            }
            &NonlinearitySpec::SmoothCubic { c3, c2, .. } => {
                let mut best = self.spec.derivative(lo).abs().max(self.spec.derivative(hi).abs());
                let vertex = -c2 / (3.0 * c3);
                if vertex > lo && vertex < hi {
                    best = best.max(self.spec.derivative(vertex).abs());
                }
                best
            }
        }
    }

    /// Global infimum of `F'` (attained on the decreasing branch).
    pub fn min_slope(&self) -> f64 {
        match &self.spec {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                segments.iter().map(|s| s.slope).fold(f64::INFINITY, f64::min)
            }
            &NonlinearitySpec::SmoothCubic { c3, c2, .. } => self.spec.derivative(-c2 / (3.0 * c3)),
        }
    }

    /// Sample points of `(f_minus, f_plus)`: one per affine piece of the
    /// inverse slopes, or a uniform interior grid for smooth `F`.
    fn unstable_interval_samples(&self, smooth_count: usize) -> Vec<f64> {
        let th = &self.thresholds;
        match &self.spec {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                let mut cuts: Vec<f64> = segments
                    .iter()
                    .map(|s| s.value)
                    .filter(|&y| y > th.f_minus && y < th.f_plus)
                    .collect();
                cuts.push(th.f_minus);
                cuts.push(th.f_plus);
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            }
            NonlinearitySpec::SmoothCubic { .. } => (0..smooth_count)
                .map(|k| th.f_minus + (th.f_plus - th.f_minus) * (k as f64 + 0.5) / smooth_count as f64)
                .collect(),
        }
    }

    pub fn check_theorem_d(&self) -> TheoremDVerdict {
        let samples = self.unstable_interval_samples(THEOREM_D_SAMPLES);
        let unstable_slope_condition = samples
            .iter()
            .all(|&l| self.inverse_slope(Branch::Middle, l) + 1.0 > 0.0);
        let witness_tau0 = samples.iter().copied().find(|&l| {
            (self.inverse_slope(Branch::Lower, l) - self.inverse_slope(Branch::Upper, l)).abs() > 1e-12
        });
        TheoremDVerdict {
            holds: unstable_slope_condition && witness_tau0.is_some(),
            unstable_slope_condition,
            witness_tau0,
        }
    }

    /// Nondegeneracy: no combination `sum a_i w_i = 0` on a subinterval of
    /// `(f_minus, f_plus)` unless `sum a_i = 0`.
    pub fn check_nondegeneracy(&self, system: System) -> bool {
        match &self.spec {
            NonlinearitySpec::PiecewiseAffine { .. } => self
                .unstable_interval_samples(0)
                .into_iter()
                .all(|l| nondegenerate_constant_weights(self.identity_weights(system, l))),
            NonlinearitySpec::SmoothCubic { .. } => {
                let samples = self.unstable_interval_samples(NONDEGENERACY_SAMPLES);
                let rows: Vec<[f64; 3]> = samples.iter().map(|&l| self.identity_weights(system, l)).collect();
                nondegenerate_sampled(&rows)
            }
        }
    }
}

/// Nondegeneracy for a constant weight triple: the null space of the single
/// row `w` lies in `{sum a_i = 0}` exactly when `w` is parallel to `(1,1,1)`.
pub fn nondegenerate_constant_weights(w: [f64; 3]) -> bool {
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return false;
    }
    let hi = w.iter().copied().fold(f64::MIN, f64::max);
    let lo = w.iter().copied().fold(f64::MAX, f64::min);
    hi - lo <= 1e-12 * scale
}

/// Rank test on sampled weight rows: every numerical null vector of the
/// sample matrix must be orthogonal to `(1,1,1)`.
pub fn nondegenerate_sampled(rows: &[[f64; 3]]) -> bool {
    if rows.is_empty() || rows.iter().flatten().any(|x| !x.is_finite()) {
        return false;
    }
    let m = DMatrix::from_fn(rows.len().max(3), 3, |i, j| rows.get(i).map_or(0.0, |r| r[j]));
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return false;
    }
    (0..3)
        .filter(|&k| svd.singular_values[k] <= RANK_THRESHOLD * sigma_max)
        .all(|k| {
            let n = v_t.row(k);
            (n[0] + n[1] + n[2]).abs() <= 1e-6
        })
}

fn affine_runs(segments: &[AffineSegment]) -> Result<[Range<usize>; 3]> {
    if segments.len() < 3 {
        return Err(Error::Shape("need at least three affine segments".into()));
    }
    for (k, s) in segments.iter().enumerate() {
        if !(s.start.is_finite() && s.value.is_finite() && s.slope.is_finite()) {
            return Err(Error::Shape(format!("segment {k} has non-finite data")));
        }
        if s.slope == 0.0 {
            return Err(Error::Shape(format!("segment {k} is flat, F must be strictly monotone")));
        }
    }
    for (k, pair) in segments.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.start <= a.start {
            return Err(Error::Shape(format!("breakpoints not increasing at segment {}", k + 1)));
        }
        let reached = a.eval(b.start);
        if (reached - b.value).abs() > CONTINUITY_TOL * reached.abs().max(b.value.abs()).max(1.0) {
            return Err(Error::Shape(format!(
                "discontinuous at x = {}: left value {reached}, right value {}",
                b.start, b.value
            )));
        }
    }
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=segments.len() {
        if k == segments.len() || (segments[k].slope > 0.0) != (segments[start].slope > 0.0) {
            runs.push(start..k);
            start = k;
        }
    }
    if runs.len() != 3 || segments[0].slope < 0.0 {
        return Err(Error::Shape(
            "expected exactly one increasing, one decreasing and one increasing run".into(),
        ));
    }
    let alpha_plus = segments[runs[1].start].start;
    if alpha_plus <= 0.0 {
        return Err(Error::Shape(format!("local maximum at {alpha_plus} is not in (0, inf)")));
    }
    Ok([runs[0].clone(), runs[1].clone(), runs[2].clone()])
}

/// Solves `F(x) = lambda` on one monotone run; returns the point and the
/// slope of the segment used.
fn affine_inverse(segments: &[AffineSegment], run: Range<usize>, lambda: f64) -> (f64, f64) {
    for k in run.clone() {
        let s = &segments[k];
        let lo_val = if k == 0 { f64::NEG_INFINITY * s.slope.signum() } else { s.value };
        let hi_val = match segments.get(k + 1) {
            Some(next) => next.value,
            None => f64::INFINITY * s.slope.signum(),
        };
        let (a, b) = if lo_val <= hi_val { (lo_val, hi_val) } else { (hi_val, lo_val) };
        if lambda >= a && lambda <= b {
            return (s.start + (lambda - s.value) / s.slope, s.slope);
        }
    }
    // lambda beyond the run's image: use the nearest end segment
    let s = &segments[run.end - 1];
    (s.start + (lambda - s.value) / s.slope, s.slope)
}

/// Safeguarded Newton on a bracket where `f` is monotone.
fn solve_monotone(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let mut r_lo = f(lo).0 - target;
    if r_lo == 0.0 {
        return lo;
    }
    if f(hi).0 - target == 0.0 {
        return hi;
    }
    let mut x = 0.5 * (lo + hi);
    let mut r_prev = f64::INFINITY;
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        let r = fx - target;
        if r == 0.0 {
            return x;
        }
        let stalled = r.abs() > 0.5 * r_prev;
        r_prev = r.abs();
        if (r > 0.0) == (r_lo > 0.0) {
            lo = x;
            r_lo = r;
        } else {
            hi = x;
        }
        let newton = x - r / dfx;
        let tol = 4.0 * f64::EPSILON * x.abs().max(1.0);
        if dfx != 0.0 && (newton - x).abs() <= tol {
            return newton.clamp(lo.min(hi), lo.max(hi));
        }
        x = if !stalled && dfx != 0.0 && newton > lo.min(hi) && newton < lo.max(hi) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= tol {
            return x;
        }
    }
    x
}
