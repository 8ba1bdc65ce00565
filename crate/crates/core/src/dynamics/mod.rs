//! Retarded collective decay of the symmetric Dicke state.
//!
//! The amplitude `b(t)` of `|+>|0>` obeys a memory equation whose kernel is a
//! q-integral over the field modes. Two independent solvers are provided: the
//! kernel reduced analytically to a train of retarded delta functions and
//! integrated as a delay equation ([`solve_dde`]), and a direct discretisation
//! of the q-integral that keeps every mode ([`solve_volterra_quadrature`]).
//! The orthogonal Dicke amplitude is identically zero: the `|+>` sector is
//! closed under the flat-coupling (`g_kz ~ g_k0`) kernel.

mod delay;
mod quadrature;

pub use delay::{build_delay_system, solve_dde, DelaySystem, DelayTerm};
pub use quadrature::{
    alias_free_spacing, solve_volterra_converged, solve_volterra_quadrature, ConvergedTrace,
    QuadratureGrid,
};

use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniformly sampled complex amplitude `b(t_k)`, `t_k = t0 + k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrace {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl AmplitudeTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Linear interpolation between grid points; `None` outside the domain.
    pub fn sample(&self, t: f64) -> Option<Complex64> {
        let x = (t - self.t0) / self.dt;
        let last = self.len().checked_sub(1)?;
        if x < -1e-9 || x > last as f64 + 1e-9 {
            return None;
        }
        let x = x.clamp(0.0, last as f64);
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return Some(self.values[0]);
        }
        let f = x - k as f64;
        Some(self.values[k] * (1.0 - f) + self.values[k + 1] * f)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,re_b,im_b,population")?;
        for (k, b) in self.values.iter().enumerate() {
            writeln!(out, "{},{},{},{}", self.time(k), b.re, b.im, b.norm_sqr())?;
        }
        Ok(())
    }
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTrace {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl RealTrace {
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            t0,
            dt,
            values: (0..n).map(|k| f(t0 + k as f64 * dt)).collect(),
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len().saturating_sub(1))
    }
}

/// Pointwise `|b(t_k)|^2`.
pub fn population(trace: &AmplitudeTrace) -> RealTrace {
    RealTrace {
        t0: trace.t0,
        dt: trace.dt,
        values: trace.values.iter().map(|b| b.norm_sqr()).collect(),
    }
}

/// Least-squares slope of `ln p(t)` over the samples inside `[t_a, t_b]`,
/// returned as a positive decay rate.
pub fn fit_decay_rate(pop: &RealTrace, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    let tol = 1e-9 * pop.dt;
    let out_of_domain = || Error::WindowOutOfDomain {
        lo,
        hi,
        start: pop.t0,
        end: pop.t_end(),
    };
    if !(lo < hi) || lo < pop.t0 - tol || hi > pop.t_end() + tol {
        return Err(out_of_domain());
    }
    let mut n = 0.0;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (k, &p) in pop.values.iter().enumerate() {
        let t = pop.time(k);
        if t < lo - tol || t > hi + tol {
            continue;
        }
        if !(p > 0.0) {
            return Err(Error::NonPositivePopulation { t, value: p });
        }
        // Centre times on the window to keep the normal equations well scaled.
        let x = t - lo;
        let y = p.ln();
        n += 1.0;
        st += x;
        sy += y;
        stt += x * x;
        sty += x * y;
    }
    if n < 2.0 {
        return Err(out_of_domain());
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    Ok(-slope)
}

/// Times of the interior local maxima, refined by fitting a parabola through
/// each maximum and its two neighbours.
pub fn local_maxima(pop: &RealTrace) -> Vec<f64> {
    let v = &pop.values;
    let mut out = Vec::new();
    for i in 1..v.len().saturating_sub(1) {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            let curvature = v[i - 1] - 2.0 * v[i] + v[i + 1];
            let shift = if curvature < 0.0 {
                (0.5 * (v[i - 1] - v[i + 1]) / curvature).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            out.push(pop.time(i) + shift * pop.dt);
        }
    }
    out
}

/// Mean spacing of successive local maxima of a population trace, or `None`
/// when fewer than two interior maxima exist.
pub fn oscillation_period(pop: &RealTrace) -> Option<f64> {
    let maxima = local_maxima(pop);
    if maxima.len() < 2 {
        return None;
    }
    Some((maxima[maxima.len() - 1] - maxima[0]) / (maxima.len() - 1) as f64)
}

/// Largest `| |a(t)|^2 - |b(t)|^2 |` over the grid points of `a` that lie in
/// the common domain, interpolating `b` linearly.
pub fn max_population_deviation(a: &AmplitudeTrace, b: &AmplitudeTrace) -> f64 {
    a.values
        .iter()
        .enumerate()
        .filter_map(|(k, va)| {
            b.sample(a.time(k))
                .map(|vb| (va.norm_sqr() - vb.norm_sqr()).abs())
        })
        .fold(0.0, f64::max)
}
