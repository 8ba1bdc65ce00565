//! Photonic density of states of the array, its Lorentzian fit, and the
//! effective cavity parameters derived from them.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, Error, Result};
use crate::model::ArrayParams;

/// `a * b` as an unevaluated sum `hi + lo` (exact).
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let hi = a * b;
    (hi, a.mul_add(b, -hi))
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Pair sum `sum_{i,j=1}^N cos(x (i - j))` for `x = q h`.
///
/// The double sum factorises as `|sum_j e^{i j x}|^2`. Summing the N phasors
/// and squaring keeps the cancellation between lobes to the square root of
/// the result, where the cosine form `N + 2 sum (N - xi) cos(xi x)` loses
/// about eight digits near the zeros. Each phase `j x` is carried as an exact
/// two-term product and both components are summed with compensation.
pub fn pair_sum(n: usize, x: f64) -> f64 {
    let mut re = CompensatedSum::default();
    let mut im = CompensatedSum::default();
    for j in 0..n {
        let (hi, lo) = two_product(j as f64, x);
        let (s, c) = hi.sin_cos();
        // e^{i(hi + lo)} to first order in lo, which is below an ulp of hi.
        re.add(c);
        re.add(-lo * s);
        im.add(s);
        im.add(lo * c);
    }
    let (re, im) = (re.value(), im.value());
    re * re + im * im
}

/// Closed form `[sin(N x / 2) / sin(x / 2)]^2` of [`pair_sum`], with the limit
/// `N^2` where `sin(x / 2)` vanishes.
pub fn fejer_kernel(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let denominator = half.sin();
    if denominator == 0.0 {
        return (n * n) as f64;
    }
    let (hi, lo) = two_product(n as f64, half);
    let (s, c) = hi.sin_cos();
    let numerator = s + lo * c;
    let ratio = numerator / denominator;
    ratio * ratio
}

/// `D(q)` sampled on a grid of `q = k_z - k0` (1/nm).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub q_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl SpectralDensity {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "q,dos")?;
        for (q, d) in self.q_grid.iter().zip(&self.values) {
            writeln!(out, "{q},{d}")?;
        }
        Ok(())
    }

    /// Rows `q,dos,fit` for the samples inside `window`.
    pub fn write_fit_csv<W: Write>(
        &self,
        fit: &LorentzianFit,
        window: (f64, f64),
        mut out: W,
    ) -> io::Result<()> {
        writeln!(out, "q,dos,fit")?;
        for (q, d) in self.q_grid.iter().zip(&self.values) {
            if *q >= window.0 && *q <= window.1 {
                writeln!(out, "{q},{d},{}", fit.evaluate(*q))?;
            }
        }
        Ok(())
    }

    fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, _)| i)
    }
}

/// Unnormalised density of states of the array on `q_grid`.
pub fn dos(params: &ArrayParams, q_grid: &[f64]) -> SpectralDensity {
    let n = params.n_emitters;
    SpectralDensity {
        q_grid: q_grid.to_vec(),
        values: q_grid
            .iter()
            .map(|q| pair_sum(n, q * params.spacing_nm))
            .collect(),
        normalized: false,
    }
}

pub fn normalize(density: &SpectralDensity) -> Result<SpectralDensity> {
    let max = density.values.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::ZeroSpectrum);
    }
    Ok(SpectralDensity {
        q_grid: density.q_grid.clone(),
        values: density.values.iter().map(|v| v / max).collect(),
        normalized: true,
    })
}

/// Central lobe of `D(q)` between its first zeros, `|q| < 2 pi / (N h)`.
pub fn central_lobe(params: &ArrayParams) -> (f64, f64) {
    let edge = 2.0 * PI / params.length_nm();
    (-edge, edge)
}

/// `n` evenly spaced points on `[lo, hi]`. Both ends are hit exactly, and so
/// is the midpoint when `n` is odd.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let f = i as f64 / last;
            lo * (1.0 - f) + hi * f
        })
        .collect()
}

/// `A (w/2)^2 / ((q - q0)^2 + (w/2)^2)` with `w` the full width at half maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub residual: f64,
}

impl LorentzianFit {
    pub fn evaluate(&self, q: f64) -> f64 {
        lorentzian(self.amplitude, self.center, self.fwhm, q)
    }
}

fn lorentzian(amplitude: f64, center: f64, fwhm: f64, q: f64) -> f64 {
    let hw2 = 0.25 * fwhm * fwhm;
    let d = q - center;
    amplitude * hw2 / (d * d + hw2)
}

const FIT_MAX_ITERATIONS: usize = 200;
const FIT_STEP_TOLERANCE: f64 = 1e-12;
const FIT_MIN_SAMPLES: usize = 7;

/// Least-squares Lorentzian over the samples inside `window`.
///
/// Damped Gauss-Newton with an analytic Jacobian, started from the peak
/// height, the peak position and the half-height crossing width. Each step
/// is halved until the sum of squares does not increase; iteration stops
/// when every parameter moves by less than 1e-12 of its scale.
pub fn lorentzian_fit(density: &SpectralDensity, window: (f64, f64)) -> Result<LorentzianFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::FitWindow(format!("empty window [{lo}, {hi}]")));
    }
    let inside: Vec<usize> = (0..density.q_grid.len())
        .filter(|&i| density.q_grid[i] >= lo && density.q_grid[i] <= hi)
        .collect();
    if inside.len() < FIT_MIN_SAMPLES {
        return Err(Error::FitWindow(format!(
            "{} samples in window, need at least {FIT_MIN_SAMPLES}",
            inside.len()
        )));
    }
    let global = density.argmax().ok_or(Error::ZeroSpectrum)?;
    let (first, last) = (inside[0], inside[inside.len() - 1]);
    // Periodic spectra repeat their maximum; any copy strictly inside will do.
    let peak = inside
        .iter()
        .copied()
        .max_by(|&a, &b| {
            density.values[a]
                .total_cmp(&density.values[b])
                .then(b.cmp(&a))
        })
        .expect("window is non-empty");
    let top = density.values[global];
    if peak <= first || peak >= last || density.values[peak] < top * (1.0 - 1e-12) {
        return Err(Error::FitWindow(format!(
            "global maximum at q = {} is not inside [{lo}, {hi}]",
            density.q_grid[global]
        )));
    }
    let qs: Vec<f64> = inside.iter().map(|&i| density.q_grid[i]).collect();
    let ys: Vec<f64> = inside.iter().map(|&i| density.values[i]).collect();
    let peak_local = peak - first;
    let amplitude = ys[peak_local];
    if !(amplitude > 0.0) {
        return Err(Error::ZeroSpectrum);
    }
    let center = qs[peak_local];
    let fwhm = initial_width(&qs, &ys, peak_local);

    let sse = |p: &Vector3<f64>| -> f64 {
        qs.iter()
            .zip(&ys)
            .map(|(&q, &y)| {
                let r = y - lorentzian(p[0], p[1], p[2], q);
                r * r
            })
            .sum()
    };
    let rms = |s: f64| (s / qs.len() as f64).sqrt();

    let mut p = Vector3::new(amplitude, center, fwhm);
    let mut current = sse(&p);
    for _ in 0..FIT_MAX_ITERATIONS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        let (a, q0, w) = (p[0], p[1], p[2]);
        let hw = 0.5 * w;
        for (&q, &y) in qs.iter().zip(&ys) {
            let d = q - q0;
            let den = d * d + hw * hw;
            let shape = hw * hw / den;
            let r = y - a * shape;
            let grad = Vector3::new(
                shape,
                2.0 * a * shape * d / den,
                // d/dw of hw^2/den with hw = w/2.
                a * hw * d * d / (den * den),
            );
            jtj += grad * grad.transpose();
            jtr += grad * r;
        }
        // Jacobi scaling: the columns differ by orders of magnitude.
        let scale = Vector3::from_fn(|i, _| {
            let d = jtj[(i, i)].sqrt();
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        });
        let scaled = Matrix3::from_fn(|i, j| jtj[(i, j)] * scale[i] * scale[j]);
        let rhs = jtr.component_mul(&scale);
        let Some(step) = scaled.lu().solve(&rhs) else {
            return Err(Error::FitNotConverged {
                iterations: FIT_MAX_ITERATIONS,
                residual: rms(current),
            });
        };
        let step = step.component_mul(&scale);

        let scales = Vector3::new(p[0].abs(), p[2].abs(), p[2].abs());
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = p + step * lambda;
            if trial[0] > 0.0 && trial[2] > 0.0 {
                let value = sse(&trial);
                if value <= current {
                    accepted = Some((trial, value));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let small = (0..3).all(|i| (step[i] * lambda).abs() <= FIT_STEP_TOLERANCE * scales[i]);
        match accepted {
            Some((trial, value)) => {
                p = trial;
                current = value;
                if small {
                    return Ok(finish(p, rms(current)));
                }
            }
            // No descent possible at rounding level: p is the minimiser.
            None => return Ok(finish(p, rms(current))),
        }
    }
    Err(Error::FitNotConverged {
        iterations: FIT_MAX_ITERATIONS,
        residual: rms(current),
    })
}

fn finish(p: Vector3<f64>, residual: f64) -> LorentzianFit {
    LorentzianFit {
        amplitude: p[0],
        center: p[1],
        fwhm: p[2],
        residual,
    }
}

/// Width between the half-height crossings around `peak`, interpolated
/// linearly. Falls back to twice the one-sided width when one side never
/// drops below half height.
fn initial_width(qs: &[f64], ys: &[f64], peak: usize) -> f64 {
    let half = 0.5 * ys[peak];
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for i in range {
            let j = (i as isize - step) as usize;
            if ys[i] <= half {
                let f = (ys[j] - half) / (ys[j] - ys[i]);
                return Some(qs[j] + f * (qs[i] - qs[j]));
            }
        }
        None
    };
    let left = crossing(&mut (0..peak).rev(), -1);
    let right = crossing(&mut (peak + 1..qs.len()), 1);
    let q0 = qs[peak];
    match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (q0 - l),
        (None, Some(r)) => 2.0 * (r - q0),
        (None, None) => qs[qs.len() - 1] - qs[0],
    }
}

/// Rates of the effective cavity model in rad per time unit: coupling `g`
/// between `|+>` and `|k0>`, photon loss `kappa`, polarisation decay `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl EffectiveModel {
    pub fn new(g: f64, kappa: f64, gamma: f64) -> Result<Self> {
        ensure_non_negative("g", g)?;
        ensure_non_negative("kappa", kappa)?;
        ensure_non_negative("gamma", gamma)?;
        Ok(Self { g, kappa, gamma })
    }

    /// Builds a model from energies in meV and a decay rate in 1/ns.
    pub fn from_lab_units(
        g_mev: f64,
        kappa_mev: f64,
        gamma_per_ns: f64,
        time_unit_ps: f64,
    ) -> Result<Self> {
        let to_rate = |e: f64| crate::model::energy_to_rate(e) * time_unit_ps;
        Self::new(
            to_rate(g_mev),
            to_rate(kappa_mev),
            crate::model::per_ns_to_per_unit(gamma_per_ns, time_unit_ps),
        )
    }
}

/// `g = pi / T`: the population of resonant exchange, `cos^2(g t)`, has
/// period `T`.
pub fn coupling_from_period(period: f64) -> Result<f64> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "period",
            reason: format!("must be finite and > 0, got {period}"),
        });
    }
    Ok(PI / period)
}

/// `kappa = v * fwhm`: the q-width mapped to a rate by the photon velocity,
/// i.e. an energy width `hbar v dq`.
pub fn kappa_from_fwhm(params: &ArrayParams, fwhm: f64) -> f64 {
    params.light_speed_per_unit() * fwhm
}

/// Effective model from the Lorentzian fit and, when available, the period
/// of the population oscillation. Without a period `g` falls back to the
/// collective coupling `sqrt(N) g_k0`.
pub fn effective_model_from(
    fit: &LorentzianFit,
    period: Option<f64>,
    params: &ArrayParams,
    gamma: f64,
) -> Result<EffectiveModel> {
    if !(fit.fwhm > 0.0 && fit.amplitude > 0.0) {
        return Err(Error::InvalidParameter {
            name: "fit",
            reason: "fit must have positive width and amplitude".into(),
        });
    }
    let g = match period {
        Some(t) => coupling_from_period(t)?,
        None => params.collective_coupling(),
    };
    EffectiveModel::new(g, kappa_from_fwhm(params, fit.fwhm), gamma)
}
