//! Leggett-Garg functionals of the effective model.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::open_system::{
    grid_two_time_correlator, population_correlator, projective_two_time, Basis, CorrelatorMode,
    DensityOperator, Dichotomic, GridPropagator, Liouvillian,
};

/// Values within this margin above the bound are not flagged, so that
/// round-off at the bound (e.g. `t = 0`) is not reported as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-12;

/// `|C(0,t1) + C(t1,t1+t2) - C(0,t1+t2)|` for the photon-parity observable.
pub fn lg_original(l: &Liouvillian, rho0: &DensityOperator, t1: f64, t2: f64) -> f64 {
    let c01 = projective_two_time(l, rho0, 0.0, t1);
    let c12 = projective_two_time(l, rho0, t1, t2);
    let c02 = projective_two_time(l, rho0, 0.0, t1 + t2);
    (c01 + c12 - c02).abs()
}

/// `|2 p(t) - p(2t)|` with `p` the return probability of the prepared state.
pub fn lg_markovian(l: &Liouvillian, q: Basis, t: f64) -> f64 {
    (2.0 * population_correlator(l, q, t) - population_correlator(l, q, 2.0 * t)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LgVariant {
    /// Original functional with `t1 = t2 = t`, starting from `|+><+|`.
    OriginalEqualIntervals,
    MarkovianPlus,
    MarkovianK0,
}

impl LgVariant {
    pub const ALL: [LgVariant; 3] = [
        LgVariant::OriginalEqualIntervals,
        LgVariant::MarkovianPlus,
        LgVariant::MarkovianK0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LgVariant::OriginalEqualIntervals => "original_equal_intervals",
            LgVariant::MarkovianPlus => "markovian_plus",
            LgVariant::MarkovianK0 => "markovian_k0",
        }
    }
}

impl fmt::Display for LgVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LgVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LgVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = LgVariant::ALL.iter().map(|v| v.name()).collect();
                format!(
                    "unknown variant '{s}', expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub bound: f64,
    pub violation_mask: Vec<bool>,
}

impl LgTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, bound: f64) -> Self {
        assert_eq!(times.len(), values.len());
        let violation_mask = values
            .iter()
            .map(|&v| v > bound + VIOLATION_TOLERANCE)
            .collect();
        Self {
            times,
            values,
            bound,
            violation_mask,
        }
    }

    /// Largest value and the first time it is attained.
    pub fn maximum(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.times)
            .fold(None, |best: Option<(f64, f64)>, (&v, &t)| match best {
                Some((bv, _)) if bv >= v => best,
                _ => Some((v, t)),
            })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,L_value,bound,violated")?;
        for ((t, v), m) in self
            .times
            .iter()
            .zip(&self.values)
            .zip(&self.violation_mask)
        {
            writeln!(out, "{t},{v},{},{m}", self.bound)?;
        }
        Ok(())
    }
}

fn scan_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be finite and > 0, got {dt}"),
        });
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_max",
            reason: format!("must be finite and >= 0, got {t_max}"),
        });
    }
    let n = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

fn evaluate(times: Vec<f64>, f: impl Fn(f64) -> f64 + Sync) -> LgTrace {
    let values = times.par_iter().map(|&t| f(t)).collect();
    LgTrace::new(times, values, 1.0)
}

fn evaluate_steps(times: Vec<f64>, f: impl Fn(usize) -> f64 + Sync + Send) -> LgTrace {
    let values = (0..times.len()).into_par_iter().map(f).collect();
    LgTrace::new(times, values, 1.0)
}

/// [`lg_original`] with `t1 = k1 dt`, `t2 = k2 dt`.
pub fn grid_lg_original(
    grid: &GridPropagator,
    rho0: &DensityOperator,
    k1: usize,
    k2: usize,
) -> f64 {
    let q = Dichotomic::photon_parity();
    let c = |a, b| grid_two_time_correlator(grid, rho0, a, b, &q, CorrelatorMode::Projective);
    (c(0, k1) + c(k1, k2) - c(0, k1 + k2)).abs()
}

/// [`lg_markovian`] at `t = k dt`.
pub fn grid_lg_markovian(grid: &GridPropagator, q: Basis, k: usize) -> f64 {
    (2.0 * grid.population_correlator(q, k) - grid.population_correlator(q, 2 * k)).abs()
}

/// Evaluates `variant` on `t_k = k dt`, `0 <= t_k <= t_max`. The bound is 1
/// for every variant because the initial state is prepared deterministically.
pub fn lg_scan(l: &Liouvillian, variant: LgVariant, t_max: f64, dt: f64) -> Result<LgTrace> {
    let times = scan_grid(t_max, dt)?;
    let grid = GridPropagator::new(l, dt, 2 * (times.len() - 1));
    Ok(match variant {
        LgVariant::OriginalEqualIntervals => {
            let rho0 = DensityOperator::pure(Basis::Plus);
            evaluate_steps(times, |k| grid_lg_original(&grid, &rho0, k, k))
        }
        LgVariant::MarkovianPlus => {
            evaluate_steps(times, |k| grid_lg_markovian(&grid, Basis::Plus, k))
        }
        LgVariant::MarkovianK0 => evaluate_steps(times, |k| grid_lg_markovian(&grid, Basis::K0, k)),
    })
}

/// Original functional with the first interval held at `t1` and the second
/// scanned over `[0, t_max]`.
pub fn lg_scan_fixed_first(
    l: &Liouvillian,
    rho0: &DensityOperator,
    t1: f64,
    t_max: f64,
    dt: f64,
) -> Result<LgTrace> {
    if !(t1 >= 0.0 && t1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t1",
            reason: format!("must be finite and >= 0, got {t1}"),
        });
    }
    let times = scan_grid(t_max, dt)?;
    Ok(evaluate(times, |t2| lg_original(l, rho0, t1, t2)))
}

/// Maximal runs of flagged samples, with ends moved to the linearly
/// interpolated crossing of the bound when a neighbouring sample lies below it.
pub fn violation_regions(trace: &LgTrace) -> Vec<(f64, f64)> {
    let n = trace.values.len();
    let excess = |i: usize| trace.values[i] - trace.bound;
    let crossing = |a: usize, b: usize| {
        let (ea, eb) = (excess(a), excess(b));
        let f = if ea != eb { ea / (ea - eb) } else { 0.5 };
        trace.times[a] + f.clamp(0.0, 1.0) * (trace.times[b] - trace.times[a])
    };
    let mut regions = Vec::new();
    let mut i = 0;
    while i < n {
        if !trace.violation_mask[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && trace.violation_mask[j + 1] {
            j += 1;
        }
        let start = if i > 0 {
            crossing(i - 1, i)
        } else {
            trace.times[i]
        };
        let end = if j + 1 < n {
            crossing(j, j + 1)
        } else {
            trace.times[j]
        };
        regions.push((start, end));
        i = j + 1;
    }
    regions
}

/// Scan summary for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgSummary {
    pub name: String,
    pub max_value: f64,
    pub argmax: f64,
    pub bound: f64,
    pub violated: bool,
    pub intervals: Vec<(f64, f64)>,
}

impl LgSummary {
    pub fn of(name: impl Into<String>, trace: &LgTrace) -> Self {
        let (max_value, argmax) = trace.maximum().unwrap_or((f64::NAN, f64::NAN));
        let intervals = violation_regions(trace);
        Self {
            name: name.into(),
            max_value,
            argmax,
            bound: trace.bound,
            violated: !intervals.is_empty(),
            intervals,
        }
    }
}
