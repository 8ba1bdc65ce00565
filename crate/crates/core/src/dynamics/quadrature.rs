//! Direct quadrature of the memory kernel, independent of the delta-train
//! reduction.
//!
//! With flat coupling the amplitude obeys
//!
//! ```text
//! db/dt = -(G v / 2 pi N) int_0^t dt' b(t') int dq e^{-i v q (t - t')} S(q)
//! ```
//!
//! with `S(q) = sum_{i,j} cos(q (z_i - z_j))`. The q-integral is truncated to
//! `[-Q, Q]` and replaced by the trapezoid rule on a uniform symmetric grid.
//! Each grid mode carries a memory amplitude
//! `beta_q(t) = int_0^t e^{-i v q (t - t')} b(t') dt'`, advanced recursively
//! with the product trapezoid rule: `b` is linear across a step and the
//! oscillating weight is integrated exactly. The update for `b` is implicit
//! but scalar, so a step costs O(n_q).

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{max_population_deviation, AmplitudeTrace};
use crate::error::{Error, Result};
use crate::model::ArrayParams;
use crate::spectral::pair_sum;

/// Uniform symmetric grid on `[-q_halfwidth, q_halfwidth]` (1/nm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub q_halfwidth: f64,
    pub n_q: usize,
}

impl QuadratureGrid {
    pub const MIN_POINTS: usize = 2001;

    pub fn spacing(&self) -> f64 {
        2.0 * self.q_halfwidth / (self.n_q - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let dq = self.spacing();
        let last = self.n_q - 1;
        (0..self.n_q).map(move |i| {
            let q = -self.q_halfwidth + i as f64 * dq;
            let w = if i == 0 || i == last { 0.5 * dq } else { dq };
            (q, w)
        })
    }

    /// Doubles both the half-width and the number of intervals, keeping the
    /// spacing. Used to check the truncation of the q-integral.
    pub fn refined(&self) -> Self {
        Self {
            q_halfwidth: 2.0 * self.q_halfwidth,
            n_q: 2 * (self.n_q - 1) + 1,
        }
    }

    /// Smallest odd grid on `[-q_halfwidth, q_halfwidth]` whose spacing is
    /// half the alias-free limit for the given window.
    pub fn for_window(params: &ArrayParams, t_max: f64, q_halfwidth: f64) -> Self {
        let dq = 0.5 * alias_free_spacing(params, t_max);
        let intervals = ((2.0 * q_halfwidth / dq).ceil() as usize).max(Self::MIN_POINTS - 1);
        let intervals = intervals + intervals % 2;
        Self {
            q_halfwidth,
            n_q: intervals + 1,
        }
    }
}

/// The discrete q-sum makes the kernel periodic in time with period
/// `2 pi / (v dq)`. It must exceed the window plus the longest retardation.
pub fn alias_free_spacing(params: &ArrayParams, t_max: f64) -> f64 {
    let span = t_max + params.delay(params.n_emitters - 1);
    2.0 * PI / (params.light_speed_per_unit() * span)
}

/// `phi_1, phi_2, phi_3` with `phi_k(z) = sum_j z^j / (j + k)!`.
fn phi_functions(z: Complex64) -> (Complex64, Complex64, Complex64) {
    if z.norm() < 0.5 {
        let series = |k: u32| {
            let mut term = Complex64::new(1.0, 0.0);
            for i in 1..=k {
                term /= i as f64;
            }
            let mut sum = term;
            let mut j = 0;
            while term.norm() > 1e-18 {
                j += 1;
                term *= z / (j + k) as f64;
                sum += term;
            }
            sum
        };
        (series(1), series(2), series(3))
    } else {
        let e = z.exp();
        let one = Complex64::new(1.0, 0.0);
        let p1 = (e - one) / z;
        let p2 = (e - one - z) / (z * z);
        let p3 = (e - one - z - z * z * 0.5) / (z * z * z);
        (p1, p2, p3)
    }
}

/// Solves the memory equation by quadrature over field modes, from `b(0) = 1`.
pub fn solve_volterra_quadrature(
    params: &ArrayParams,
    grid: QuadratureGrid,
    t_max: f64,
    dt: f64,
) -> Result<AmplitudeTrace> {
    params.validate()?;
    if grid.n_q < QuadratureGrid::MIN_POINTS {
        return Err(Error::InvalidParameter {
            name: "n_q",
            reason: format!(
                "need at least {} q points, got {}",
                QuadratureGrid::MIN_POINTS,
                grid.n_q
            ),
        });
    }
    if !(grid.q_halfwidth.is_finite() && grid.q_halfwidth > 0.0) {
        return Err(Error::InvalidParameter {
            name: "q_halfwidth",
            reason: format!("must be finite and > 0, got {}", grid.q_halfwidth),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) || !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("need dt > 0 and t_max >= 0, got dt={dt}, t_max={t_max}"),
        });
    }
    let limit = alias_free_spacing(params, t_max);
    if grid.spacing() >= limit {
        return Err(Error::AliasedGrid {
            dq: grid.spacing(),
            limit,
        });
    }

    let n = params.n_emitters;
    let v = params.light_speed_per_unit();
    let prefactor = params.gamma_tle * v / (2.0 * PI * n as f64);

    struct Mode {
        // c_q * phi_1 * dt: weight of beta_q in the b update.
        memory: Complex64,
        propagator: Complex64,
        from_start: Complex64,
        from_end: Complex64,
    }

    let mut a3 = Complex64::new(0.0, 0.0);
    let mut a23 = Complex64::new(0.0, 0.0);
    let modes: Vec<Mode> = grid
        .points()
        .map(|(q, w)| {
            let c = prefactor * w * pair_sum(n, q * params.spacing_nm);
            let z = Complex64::new(0.0, -v * q * dt);
            let (p1, p2, p3) = phi_functions(z);
            a3 += p3 * c;
            a23 += (p2 - p3) * c;
            Mode {
                memory: p1 * (c * dt),
                propagator: z.exp(),
                from_start: (p1 - p2) * dt,
                from_end: p2 * dt,
            }
        })
        .collect();

    let n_steps = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut b = Complex64::new(1.0, 0.0);
    values.push(b);
    let mut beta = vec![Complex64::new(0.0, 0.0); modes.len()];
    let dt2 = dt * dt;
    let denominator = Complex64::new(1.0, 0.0) + a3 * dt2;

    for _ in 0..n_steps {
        let memory: Complex64 = modes.iter().zip(&beta).map(|(m, bq)| m.memory * bq).sum();
        let next = (b - memory - a23 * dt2 * b) / denominator;
        for (m, bq) in modes.iter().zip(beta.iter_mut()) {
            *bq = m.propagator * *bq + m.from_start * b + m.from_end * next;
        }
        b = next;
        values.push(b);
    }

    Ok(AmplitudeTrace {
        t0: 0.0,
        dt,
        values,
    })
}

/// A quadrature solution together with its grid-refinement change.
#[derive(Debug, Clone)]
pub struct ConvergedTrace {
    /// Solution on the refined grid.
    pub trace: AmplitudeTrace,
    /// Largest population change between the base and refined grids.
    pub change: f64,
}

/// Runs the quadrature on `grid` and on [`QuadratureGrid::refined`], failing
/// if the populations differ by more than `tolerance` anywhere.
pub fn solve_volterra_converged(
    params: &ArrayParams,
    grid: QuadratureGrid,
    t_max: f64,
    dt: f64,
    tolerance: f64,
) -> Result<ConvergedTrace> {
    let (base, refined) = rayon::join(
        || solve_volterra_quadrature(params, grid, t_max, dt),
        || solve_volterra_quadrature(params, grid.refined(), t_max, dt),
    );
    let (base, refined) = (base?, refined?);
    let change = max_population_deviation(&base, &refined);
    if !(change <= tolerance) {
        return Err(Error::QuadratureNotConverged { change, tolerance });
    }
    Ok(ConvergedTrace {
        trace: refined,
        change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_branches_agree() {
        for z in [
            Complex64::new(0.0, 0.49),
            Complex64::new(0.0, -0.51),
            Complex64::new(0.3, 0.35),
        ] {
            let (a1, a2, a3) = phi_functions(z);
            let e = z.exp();
            let one = Complex64::new(1.0, 0.0);
            assert!((a1 - (e - one) / z).norm() < 1e-14);
            assert!((a2 - (e - one - z) / (z * z)).norm() < 1e-13);
            assert!((a3 - (e - one - z - z * z * 0.5) / (z * z * z)).norm() < 1e-12);
        }
        let (p1, p2, p3) = phi_functions(Complex64::new(0.0, 0.0));
        assert_eq!((p1.re, p2.re, p3.re), (1.0, 0.5, 1.0 / 6.0));
    }

    #[test]
    fn grid_geometry() {
        let g = QuadratureGrid {
            q_halfwidth: 1.0,
            n_q: 2001,
        };
        assert!((g.spacing() - 1e-3).abs() < 1e-15);
        let total: f64 = g.points().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-12);
        let r = g.refined();
        assert_eq!(r.n_q, 4001);
        assert!((r.spacing() - g.spacing()).abs() < 1e-15);
    }

    #[test]
    fn rejects_coarse_or_aliased_grids() {
        let p = ArrayParams::mqw(1);
        let small = QuadratureGrid {
            q_halfwidth: 1e-3,
            n_q: 11,
        };
        assert!(matches!(
            solve_volterra_quadrature(&p, small, 1.0, 1e-3),
            Err(Error::InvalidParameter { name: "n_q", .. })
        ));
        let aliased = QuadratureGrid {
            q_halfwidth: 1.0,
            n_q: 2001,
        };
        assert!(matches!(
            solve_volterra_quadrature(&p, aliased, 1.0, 1e-3),
            Err(Error::AliasedGrid { .. })
        ));
    }

    #[test]
    fn single_emitter_matches_exponential_amplitude() {
        let p = ArrayParams::mqw(1);
        let t_max = 3.0;
        let q = 2.0e4 / p.light_speed_per_unit();
        let grid = QuadratureGrid::for_window(&p, t_max, q);
        let trace = solve_volterra_quadrature(&p, grid, t_max, 2e-3).unwrap();
        let worst = trace
            .values
            .iter()
            .enumerate()
            .map(|(k, b)| (b.norm() - (-0.5 * trace.time(k)).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }
}
