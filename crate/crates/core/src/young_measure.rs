//! Empirical Young measures from solution snapshots.
//!
//! A space-time cell of a trajectory is turned into a bag of pointwise
//! samples `(u_j, v_j)`; histograms of those samples stand in for the Young
//! measure `mu` of `u` and for its push-forward `F#mu`. Restrictions to the
//! branch intervals, branch densities of the push-forward, phase weights and
//! the atom fit all work on the same samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{Branch, Nonlinearity, Thresholds};
use crate::trajectory::Trajectory;

/// Minimum number of samples a cell must hold.
pub const MIN_CELL_SAMPLES: usize = 256;
/// Relative tolerance when deciding whether a point is a bin edge.
const EDGE_TOL: f64 = 1e-9;

/// Uniform bins `[lo + k w, lo + (k+1) w)`, `k = 0..count`. Samples outside
/// the range are clamped into the first or last bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    lo: f64,
    width: f64,
    count: usize,
    /// A point known to be an edge; indices are computed relative to it so
    /// that the anchor itself never rounds into the bin below.
    anchor: f64,
    anchor_index: i64,
}

impl Binning {
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Binning(format!("empty range [{lo}, {hi}]")));
        }
        if count == 0 {
            return Err(Error::Binning("bin count must be positive".into()));
        }
        Ok(Binning { lo, width: (hi - lo) / count as f64, count, anchor: lo, anchor_index: 0 })
    }

    /// Bins covering `[lo, hi]` with roughly `target` bins such that both
    /// anchors are edges and an odd number of bins separates them, which puts
    /// the anchors' midpoint at a bin centre.
    pub fn snapped(lo: f64, hi: f64, target: usize, anchors: (f64, f64)) -> Result<Self> {
        let (a, b) = anchors;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Binning(format!("empty range [{lo}, {hi}]")));
        }
        if target == 0 {
            return Err(Error::Binning("bin count must be positive".into()));
        }
        if !(b > a) {
            return Err(Error::Binning(format!("anchors {a} and {b} are not increasing")));
        }
        let mut between = ((b - a) / (hi - lo) * target as f64).round().max(1.0) as usize;
        if between.is_multiple_of(2) {
            between += 1;
        }
        let width = (b - a) / between as f64;
        let below = ((a - lo) / width - EDGE_TOL).ceil().max(0.0) as i64;
        let start = a - below as f64 * width;
        let count = (((hi - start) / width) - EDGE_TOL).ceil().max(1.0) as usize;
        Ok(Binning { lo: start, width, count, anchor: a, anchor_index: below })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * self.count as f64
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.anchor + (k as i64 - self.anchor_index) as f64 * self.width
    }

    pub fn center(&self, k: usize) -> f64 {
        self.anchor + ((k as i64 - self.anchor_index) as f64 + 0.5) * self.width
    }

    pub fn index(&self, x: f64) -> usize {
        let k = self.anchor_index as f64 + ((x - self.anchor) / self.width).floor();
        k.clamp(0.0, (self.count - 1) as f64) as usize
    }

    /// Whether `x` coincides with a bin edge (or lies outside the range).
    pub fn is_edge(&self, x: f64) -> bool {
        if x <= self.lo || x >= self.hi() {
            return true;
        }
        let q = (x - self.anchor) / self.width;
        (q - q.round()).abs() <= EDGE_TOL
    }
}

/// Binned measure; `masses` sum to `total_mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    binning: Binning,
    masses: Vec<f64>,
    total_mass: f64,
}

impl EmpiricalMeasure {
    /// Normalized histogram of `samples`.
    pub fn from_samples(samples: &[f64], binning: Binning) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let counts = bin_counts(samples.iter().copied(), &binning);
        let n = samples.len() as f64;
        Ok(EmpiricalMeasure {
            binning,
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
            total_mass: 1.0,
        })
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Mean over bin centres, normalized by the total mass.
    pub fn mean(&self) -> f64 {
        let first: f64 = self.masses.iter().enumerate().map(|(k, m)| m * self.binning.center(k)).sum();
        first / self.masses.iter().sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let total: f64 = self.masses.iter().sum();
        self.masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * (self.binning.center(k) - mean).powi(2))
            .sum::<f64>()
            / total
    }

    /// `1 - variance / (range^2 / 4)`, clipped to `[0, 1]`.
    pub fn dirac_score(&self) -> f64 {
        let range = self.binning.hi() - self.binning.lo();
        (1.0 - self.variance() / (0.25 * range * range)).clamp(0.0, 1.0)
    }

    /// Restriction to the branch interval `I_i`. Requires `alpha_plus` and
    /// `beta_minus` to be bin edges; bins are assigned by their centres.
    pub fn restrict(&self, thresholds: &Thresholds, branch: Branch) -> Result<EmpiricalMeasure> {
        if !(self.binning.is_edge(thresholds.alpha_plus) && self.binning.is_edge(thresholds.beta_minus)) {
            return Err(Error::MisalignedBinning);
        }
        let masses: Vec<f64> = self
            .masses
            .iter()
            .enumerate()
            .map(|(k, &m)| if thresholds.branch_of(self.binning.center(k)) == branch { m } else { 0.0 })
            .collect();
        let total_mass = masses.iter().sum();
        Ok(EmpiricalMeasure { binning: self.binning, masses, total_mass })
    }

    /// `(bin_center, mass)` pairs for JSON dumps.
    pub fn to_pairs(&self) -> Vec<(f64, f64)> {
        self.masses.iter().enumerate().map(|(k, &m)| (self.binning.center(k), m)).collect()
    }
}

fn bin_counts(samples: impl Iterator<Item = f64>, binning: &Binning) -> Vec<usize> {
    let mut counts = vec![0usize; binning.count()];
    for x in samples {
        counts[binning.index(x)] += 1;
    }
    counts
}

/// Histogram of `F(u)` over the value axis, built by mapping samples.
pub fn pushforward(u_samples: &[f64], nl: &Nonlinearity, binning: Binning) -> Result<EmpiricalMeasure> {
    let values: Vec<f64> = u_samples.iter().map(|&u| nl.eval(u)).collect();
    EmpiricalMeasure::from_samples(&values, binning)
}

/// Per-bin branch densities `g_i` of `F#mu` with an occupancy mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTriple {
    binning: Binning,
    g: Vec<[f64; 3]>,
    occupied: Vec<bool>,
}

impl DensityTriple {
    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn densities(&self) -> &[[f64; 3]] {
        &self.g
    }

    pub fn occupied(&self) -> &[bool] {
        &self.occupied
    }

    /// Densities in the bin containing `lambda`.
    pub fn at(&self, lambda: f64) -> Result<[f64; 3]> {
        let k = self.binning.index(lambda);
        if self.occupied[k] {
            Ok(self.g[k])
        } else {
            Err(Error::MaskedBin(lambda))
        }
    }
}

/// `g_i(B)` = fraction of samples with `F(u) in B` whose `u` lies in `I_i`.
pub fn radon_nikodym_densities(u_samples: &[f64], nl: &Nonlinearity, binning: Binning) -> Result<DensityTriple> {
    if u_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let th = nl.thresholds();
    let mut counts = vec![[0usize; 3]; binning.count()];
    for &u in u_samples {
        counts[binning.index(nl.eval(u))][th.branch_of(u).index()] += 1;
    }
    let mut g = Vec::with_capacity(counts.len());
    let mut occupied = Vec::with_capacity(counts.len());
    for c in counts {
        let total = c[0] + c[1] + c[2];
        occupied.push(total > 0);
        g.push(if total > 0 { exact_fractions(c) } else { [0.0; 3] });
    }
    Ok(DensityTriple { binning, g, occupied })
}

/// Fractions `c_i / sum c` whose floating-point sum (left to right) is
/// exactly 1: the last nonzero entry is set to one minus the others.
fn exact_fractions(c: [usize; 3]) -> [f64; 3] {
    let n = (c[0] + c[1] + c[2]) as f64;
    let last = (0..3).rev().find(|&i| c[i] > 0).expect("at least one nonzero count");
    let mut out = [0.0; 3];
    let mut acc = 0.0;
    for i in 0..last {
        out[i] = c[i] as f64 / n;
        acc += out[i];
    }
    out[last] = 1.0 - acc;
    out
}

/// Fractions of samples in `I_1, I_2, I_3`; they sum to exactly 1.
pub fn phase_weights(u_samples: &[f64], thresholds: &Thresholds) -> Result<[f64; 3]> {
    if u_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut c = [0usize; 3];
    for &u in u_samples {
        c[thresholds.branch_of(u).index()] += 1;
    }
    Ok(exact_fractions(c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDecomposition {
    pub lambda: [f64; 3],
    pub v_bar: f64,
    pub atoms: [f64; 3],
    /// Fraction of `u` samples farther than `delta` from every atom.
    pub fit_residual: f64,
    pub dirac_score_v: f64,
    /// Set when `v` is not concentrated enough for the atom fit to be meaningful.
    pub flagged: bool,
}

/// Three-atom fit `mu ~ sum_i lambda_i delta_{S_i(v_bar)}`.
pub fn decompose(
    u_samples: &[f64],
    v_samples: &[f64],
    nl: &Nonlinearity,
    delta: f64,
    dirac_threshold: f64,
    v_binning: Binning,
) -> Result<PhaseDecomposition> {
    if u_samples.is_empty() || v_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let lambda = phase_weights(u_samples, nl.thresholds())?;
    let v_bar = v_samples.iter().sum::<f64>() / v_samples.len() as f64;
    let atoms = Branch::ALL.map(|b| nl.inverse(b, v_bar));
    let far = u_samples
        .iter()
        .filter(|&&u| atoms.iter().all(|a| (u - a).abs() > delta))
        .count();
    let dirac_score_v = EmpiricalMeasure::from_samples(v_samples, v_binning)?.dirac_score();
    Ok(PhaseDecomposition {
        lambda,
        v_bar,
        atoms,
        fit_residual: far as f64 / u_samples.len() as f64,
        dirac_score_v,
        flagged: dirac_score_v < dirac_threshold,
    })
}

/// Inclusive time window `[t_lo, t_hi]` and half-open cell-index range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    pub cells: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSamples {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl CellSamples {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Pointwise samples of all snapshots inside the cell.
pub fn collect_cell_samples(trajectory: &Trajectory, cell: &CellSpec) -> Result<CellSamples> {
    let mut out = CellSamples::default();
    let (a, b) = cell.cells;
    for s in trajectory.snapshots.iter().filter(|s| s.t >= cell.t_lo && s.t <= cell.t_hi) {
        out.u.extend_from_slice(&s.u[a..b.min(s.u.len())]);
        out.v.extend_from_slice(&s.v[a..b.min(s.v.len())]);
    }
    if out.len() < MIN_CELL_SAMPLES {
        return Err(Error::CellTooSmall { found: out.len(), required: MIN_CELL_SAMPLES });
    }
    Ok(out)
}

/// Regular `n_time x n_space` partition of `(0, t_end] x (0, L)`.
///
/// Snapshot `t` belongs to window `floor(t n_time / t_end)` (with `t_end`
/// folded into the last window); the initial snapshot is excluded. Cell `j`
/// belongs to space window `floor(j n_space / n_cells)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    pub n_time: usize,
    pub n_space: usize,
}

impl CellPartition {
    pub fn time_window(&self, t: f64, t_end: f64) -> Option<usize> {
        if t <= 0.0 {
            return None;
        }
        let k = (t / t_end * self.n_time as f64 + 1e-9).floor() as usize;
        let k = if t >= t_end * (1.0 - 1e-12) { self.n_time - 1 } else { k.min(self.n_time - 1) };
        Some(k)
    }

    pub fn space_window(&self, j: usize, n_cells: usize) -> usize {
        j * self.n_space / n_cells
    }

    /// Samples of every cell, indexed `time_window * n_space + space_window`.
    pub fn partition(&self, trajectory: &Trajectory, t_end: f64) -> Result<Vec<CellSamples>> {
        if self.n_time == 0 || self.n_space == 0 {
            return Err(Error::InvalidArgument("cell partition needs at least one window per axis".into()));
        }
        let n_cells = trajectory.grid.n_cells();
        let mut out = vec![CellSamples::default(); self.n_time * self.n_space];
        for s in &trajectory.snapshots {
            let Some(tw) = self.time_window(s.t, t_end) else { continue };
            for j in 0..n_cells {
                let cell = &mut out[tw * self.n_space + self.space_window(j, n_cells)];
                cell.u.push(s.u[j]);
                cell.v.push(s.v[j]);
            }
        }
        if let Some(small) = out.iter().find(|c| c.len() < MIN_CELL_SAMPLES) {
            return Err(Error::CellTooSmall { found: small.len(), required: MIN_CELL_SAMPLES });
        }
        Ok(out)
    }
}
