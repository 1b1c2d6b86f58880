//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! system = fast_reaction
//! nonlinearity.kind = piecewise_affine
//! grid.n = 1024
//! eps = 1e-2, 2.5e-3, 6.25e-4
//! ```
//!
//! | key | default |
//! |-----|---------|
//! | `system` | required: `fast_reaction` or `forward_backward` |
//! | `nonlinearity.kind` | required: `piecewise_affine` or `cubic` |
//! | `nonlinearity.breakpoints` | `0:0, 1:2, 1.25:1.5` (pairs `x:F(x)`) |
//! | `nonlinearity.slopes` | `2, -2, 4` |
//! | `nonlinearity.coeffs` | `1, -3, 2.5` (`c3, c2, c1`) |
//! | `grid.n` | required |
//! | `grid.length` | `1` |
//! | `eps` | required, strictly decreasing |
//! | `t_end` | `0.5` |
//! | `dt` | `1e-3` (fast reaction macro step) |
//! | `c_dt` | `0.5` (forward-backward fraction of `2 eps / Lip F`) |
//! | `init.kind` | `phase_checkerboard` |
//! | `init.value` | `beta_plus` (constant) |
//! | `init.center`, `init.amplitude` | span `[alpha_minus, beta_plus]` (sine_mix) |
//! | `init.level` | `(f_minus + f_plus) / 2` (phase_checkerboard) |
//! | `init.fraction` | `0.5` (phase_checkerboard) |
//! | `init.period` | `64` cells (phase_checkerboard) |
//! | `cells.time`, `cells.space` | `8`, `8` |
//! | `bins.u`, `bins.v` | `128`, `128` |
//! | `entropy.tau0` | `(f_minus + f_plus) / 2` |
//! | `seed` | `0` |
//! | `output.dir` | `fastlimit-out` |
//! | `output.snapshots` | `false` (write every stored snapshot, not just the final one) |
//! | `snapshot.every` | `1` step |
//! | `workers` | `1` |
//! | `decompose.dirac_threshold` | `0.99` |
//! | `decompose.delta_frac` | `0.05` (atom radius as a fraction of `beta_plus - alpha_minus`) |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initial_data::InitialData;
use crate::nonlinearity::{analyze, NonlinearitySpec};
use crate::young_measure::CellPartition;
use crate::System;

const KNOWN_KEYS: &[&str] = &[
    "system",
    "nonlinearity.kind",
    "nonlinearity.breakpoints",
    "nonlinearity.slopes",
    "nonlinearity.coeffs",
    "grid.n",
    "grid.length",
    "eps",
    "t_end",
    "dt",
    "c_dt",
    "init.kind",
    "init.value",
    "init.center",
    "init.amplitude",
    "init.level",
    "init.fraction",
    "init.period",
    "cells.time",
    "cells.space",
    "bins.u",
    "bins.v",
    "entropy.tau0",
    "seed",
    "output.dir",
    "output.snapshots",
    "snapshot.every",
    "workers",
    "decompose.dirac_threshold",
    "decompose.delta_frac",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: System,
    pub nonlinearity: NonlinearitySpec,
    pub grid_n: usize,
    pub grid_length: f64,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub c_dt: f64,
    pub initial: InitialData,
    pub cells: CellPartition,
    pub bins_u: usize,
    pub bins_v: usize,
    pub tau0: Option<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub write_snapshots: bool,
    pub snapshot_every: usize,
    pub workers: usize,
    pub dirac_threshold: f64,
    pub delta_frac: f64,
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigParse { line, message: message.into() }
}

fn take<T>(
    map: &mut BTreeMap<String, Entry>,
    key: &str,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<Option<T>> {
    match map.remove(key) {
        None => Ok(None),
        Some(e) => parse(&e.value).map(Some).map_err(|m| parse_err(e.line, format!("{key}: {m}"))),
    }
}

fn float(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn integer<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("`{s}` is not a nonnegative integer"))
}

fn float_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(float).collect()
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("`{other}` is not true/false")),
    }
}

fn pairs(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(|p| {
            let (x, y) = p.split_once(':').ok_or_else(|| format!("`{}` is not an x:F pair", p.trim()))?;
            Ok((float(x)?, float(y)?))
        })
        .collect()
}

fn validation(message: impl Into<String>) -> Error {
    Error::ConfigValidation(message.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected `key = value`, found `{content}`")))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(parse_err(line, format!("unknown key `{key}`")));
            }
            if map.contains_key(key) {
                return Err(parse_err(line, format!("duplicate key `{key}`")));
            }
            map.insert(key.to_string(), Entry { line, value: value.trim().to_string() });
        }

        let system = take(&mut map, "system", |s| {
            System::from_name(s).ok_or_else(|| format!("`{s}` is not fast_reaction or forward_backward"))
        })?
        .ok_or_else(|| validation("missing required key `system`"))?;

        let kind = take(&mut map, "nonlinearity.kind", |s| Ok(s.to_string()))?
            .ok_or_else(|| validation("missing required key `nonlinearity.kind`"))?;
        let breakpoints = take(&mut map, "nonlinearity.breakpoints", pairs)?;
        let slopes = take(&mut map, "nonlinearity.slopes", float_list)?;
        let coeffs = take(&mut map, "nonlinearity.coeffs", float_list)?;
        let nonlinearity = match kind.as_str() {
            "piecewise_affine" => {
                if coeffs.is_some() {
                    return Err(validation("nonlinearity.coeffs only applies to kind = cubic"));
                }
                match (breakpoints, slopes) {
                    (None, None) => NonlinearitySpec::corrected_affine(),
                    (Some(b), Some(s)) => NonlinearitySpec::from_breakpoints(&b, &s)?,
                    _ => return Err(validation("nonlinearity.breakpoints and nonlinearity.slopes go together")),
                }
            }
            "cubic" => {
                if breakpoints.is_some() || slopes.is_some() {
                    return Err(validation("breakpoints/slopes only apply to kind = piecewise_affine"));
                }
                match coeffs {
                    None => NonlinearitySpec::canonical_cubic(),
                    Some(c) if c.len() == 3 => NonlinearitySpec::SmoothCubic { c3: c[0], c2: c[1], c1: c[2] },
                    Some(c) => return Err(validation(format!("nonlinearity.coeffs needs 3 values, got {}", c.len()))),
                }
            }
            other => return Err(validation(format!("unknown nonlinearity kind `{other}`"))),
        };

        let grid_n = take(&mut map, "grid.n", integer::<usize>)?.ok_or_else(|| validation("missing required key `grid.n`"))?;
        let grid_length = take(&mut map, "grid.length", float)?.unwrap_or(1.0);
        let eps = take(&mut map, "eps", float_list)?.ok_or_else(|| validation("missing required key `eps`"))?;
        let t_end = take(&mut map, "t_end", float)?.unwrap_or(0.5);
        let dt = take(&mut map, "dt", float)?.unwrap_or(1e-3);
        let c_dt = take(&mut map, "c_dt", float)?.unwrap_or(0.5);

        let init_kind = take(&mut map, "init.kind", |s| Ok(s.to_string()))?.unwrap_or_else(|| "phase_checkerboard".into());
        let value = take(&mut map, "init.value", float)?;
        let center = take(&mut map, "init.center", float)?;
        let amplitude = take(&mut map, "init.amplitude", float)?;
        let level = take(&mut map, "init.level", float)?;
        let fraction = take(&mut map, "init.fraction", float)?;
        let period = take(&mut map, "init.period", integer::<usize>)?;
        let stray = |names: &[(&str, bool)]| -> Result<()> {
            match names.iter().find(|(_, present)| *present) {
                Some((name, _)) => Err(validation(format!("init.{name} does not apply to init.kind = {init_kind}"))),
                None => Ok(()),
            }
        };
        let initial = match InitialData::from_id(&init_kind).map_err(|e| validation(e.to_string()))? {
            InitialData::Constant { .. } => {
                stray(&[
                    ("center", center.is_some()),
                    ("amplitude", amplitude.is_some()),
                    ("level", level.is_some()),
                    ("fraction", fraction.is_some()),
                    ("period", period.is_some()),
                ])?;
                InitialData::Constant { value }
            }
            InitialData::SineMix { .. } => {
                stray(&[
                    ("value", value.is_some()),
                    ("level", level.is_some()),
                    ("fraction", fraction.is_some()),
                    ("period", period.is_some()),
                ])?;
                InitialData::SineMix { center, amplitude }
            }
            InitialData::PhaseCheckerboard { fraction: f0, period: p0, .. } => {
                stray(&[("value", value.is_some()), ("center", center.is_some()), ("amplitude", amplitude.is_some())])?;
                InitialData::PhaseCheckerboard { level, fraction: fraction.unwrap_or(f0), period: period.unwrap_or(p0) }
            }
        };

        let n_time = take(&mut map, "cells.time", integer::<usize>)?.unwrap_or(8);
        let n_space = take(&mut map, "cells.space", integer::<usize>)?.unwrap_or(8);
        let bins_u = take(&mut map, "bins.u", integer::<usize>)?.unwrap_or(128);
        let bins_v = take(&mut map, "bins.v", integer::<usize>)?.unwrap_or(128);
        let tau0 = take(&mut map, "entropy.tau0", float)?;
        let seed = take(&mut map, "seed", integer::<u64>)?.unwrap_or(0);
        let output_dir = take(&mut map, "output.dir", |s| Ok(PathBuf::from(s)))?.unwrap_or_else(|| "fastlimit-out".into());
        let write_snapshots = take(&mut map, "output.snapshots", boolean)?.unwrap_or(false);
        let snapshot_every = take(&mut map, "snapshot.every", integer::<usize>)?.unwrap_or(1);
        let workers = take(&mut map, "workers", integer::<usize>)?.unwrap_or(1);
        let dirac_threshold = take(&mut map, "decompose.dirac_threshold", float)?.unwrap_or(0.99);
        let delta_frac = take(&mut map, "decompose.delta_frac", float)?.unwrap_or(0.05);
        debug_assert!(map.is_empty(), "every known key is consumed");

        let config = RunConfig {
            system,
            nonlinearity,
            grid_n,
            grid_length,
            eps,
            t_end,
            dt,
            c_dt,
            initial,
            cells: CellPartition { n_time, n_space },
            bins_u,
            bins_v,
            tau0,
            seed,
            output_dir,
            write_snapshots,
            snapshot_every,
            workers,
            dirac_threshold,
            delta_frac,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        analyze(&self.nonlinearity).map_err(|e| validation(e.to_string()))?;
        if self.grid_n < crate::pde::Grid::MIN_CELLS {
            return Err(validation(format!("grid.n = {} is below the minimum of 4", self.grid_n)));
        }
        if !(self.grid_length > 0.0) {
            return Err(validation("grid.length must be positive"));
        }
        if self.eps.is_empty() {
            return Err(validation("eps list is empty"));
        }
        if let Some(e) = self.eps.iter().find(|&&e| !(e > 0.0)) {
            return Err(validation(format!("eps entries must be positive, found {e}")));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(validation("eps list must be strictly decreasing"));
        }
        if !(self.t_end > 0.0) {
            return Err(validation("t_end must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(validation("dt must lie in (0, t_end]"));
        }
        if !(self.c_dt > 0.0 && self.c_dt <= 1.0) {
            return Err(validation("c_dt must lie in (0, 1]"));
        }
        if self.cells.n_time == 0 || self.cells.n_space == 0 {
            return Err(validation("cells.time and cells.space must be positive"));
        }
        if self.cells.n_space > self.grid_n {
            return Err(validation("more space windows than grid cells"));
        }
        if self.bins_u == 0 || self.bins_v == 0 {
            return Err(validation("bin counts must be positive"));
        }
        if self.snapshot_every == 0 {
            return Err(validation("snapshot.every must be positive"));
        }
        if self.workers == 0 {
            return Err(validation("workers must be positive"));
        }
        if !(0.0..=1.0).contains(&self.dirac_threshold) {
            return Err(validation("decompose.dirac_threshold must lie in [0, 1]"));
        }
        if !(self.delta_frac > 0.0) {
            return Err(validation("decompose.delta_frac must be positive"));
        }
        Ok(())
    }

    /// Serializes every field; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "system = {}", self.system.name());
        match &self.nonlinearity {
            NonlinearitySpec::PiecewiseAffine { segments } => {
                let _ = writeln!(s, "nonlinearity.kind = piecewise_affine");
                let bp: Vec<String> = segments.iter().map(|g| format!("{:?}:{:?}", g.start, g.value)).collect();
                let _ = writeln!(s, "nonlinearity.breakpoints = {}", bp.join(", "));
                let slopes: Vec<f64> = segments.iter().map(|g| g.slope).collect();
                let _ = writeln!(s, "nonlinearity.slopes = {}", list(&slopes));
            }
            NonlinearitySpec::SmoothCubic { c3, c2, c1 } => {
                let _ = writeln!(s, "nonlinearity.kind = cubic");
                let _ = writeln!(s, "nonlinearity.coeffs = {}", list(&[*c3, *c2, *c1]));
            }
        }
        let _ = writeln!(s, "grid.n = {}", self.grid_n);
        let _ = writeln!(s, "grid.length = {:?}", self.grid_length);
        let _ = writeln!(s, "eps = {}", list(&self.eps));
        let _ = writeln!(s, "t_end = {:?}", self.t_end);
        let _ = writeln!(s, "dt = {:?}", self.dt);
        let _ = writeln!(s, "c_dt = {:?}", self.c_dt);
        let _ = writeln!(s, "init.kind = {}", self.initial.id());
        match &self.initial {
            InitialData::Constant { value } => {
                if let Some(v) = value {
                    let _ = writeln!(s, "init.value = {v:?}");
                }
            }
            InitialData::SineMix { center, amplitude } => {
                if let Some(c) = center {
                    let _ = writeln!(s, "init.center = {c:?}");
                }
                if let Some(a) = amplitude {
                    let _ = writeln!(s, "init.amplitude = {a:?}");
                }
            }
            InitialData::PhaseCheckerboard { level, fraction, period } => {
                if let Some(l) = level {
                    let _ = writeln!(s, "init.level = {l:?}");
                }
                let _ = writeln!(s, "init.fraction = {fraction:?}");
                let _ = writeln!(s, "init.period = {period}");
            }
        }
        let _ = writeln!(s, "cells.time = {}", self.cells.n_time);
        let _ = writeln!(s, "cells.space = {}", self.cells.n_space);
        let _ = writeln!(s, "bins.u = {}", self.bins_u);
        let _ = writeln!(s, "bins.v = {}", self.bins_v);
        if let Some(t) = self.tau0 {
            let _ = writeln!(s, "entropy.tau0 = {t:?}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        let _ = writeln!(s, "output.snapshots = {}", self.write_snapshots);
        let _ = writeln!(s, "snapshot.every = {}", self.snapshot_every);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "decompose.dirac_threshold = {:?}", self.dirac_threshold);
        let _ = writeln!(s, "decompose.delta_frac = {:?}", self.delta_frac);
        s
    }
}
