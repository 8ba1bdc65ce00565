use num_complex::Complex64;

use super::AmplitudeTrace;
use crate::error::{ensure_non_negative, Error, Result};
use crate::model::ArrayParams;

/// One retarded term `weight * b(t - delay)` of the delay equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayTerm {
    pub delay: f64,
    pub weight: f64,
}

/// Linear delay equation
/// `db/dt = -zeroth_coefficient * b(t) - sum_k weight_k * b(t - delay_k)`
/// with `b(t) = 0` for `t < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem {
    zeroth_coefficient: f64,
    delayed_terms: Vec<DelayTerm>,
}

impl DelaySystem {
    pub fn new(zeroth_coefficient: f64, delayed_terms: Vec<DelayTerm>) -> Result<Self> {
        ensure_non_negative("zeroth_coefficient", zeroth_coefficient)?;
        let mut previous = 0.0;
        for term in &delayed_terms {
            ensure_non_negative("weight", term.weight)?;
            if !(term.delay.is_finite() && term.delay > previous) {
                return Err(Error::InvalidParameter {
                    name: "delay",
                    reason: "delays must be positive and strictly increasing".into(),
                });
            }
            previous = term.delay;
        }
        Ok(Self {
            zeroth_coefficient,
            delayed_terms,
        })
    }

    pub fn zeroth_coefficient(&self) -> f64 {
        self.zeroth_coefficient
    }

    pub fn delayed_terms(&self) -> &[DelayTerm] {
        &self.delayed_terms
    }

    /// Population decay rate once every delay has elapsed and the delays are
    /// negligible: twice the total amplitude coefficient.
    pub fn collective_rate(&self) -> f64 {
        2.0 * (self.zeroth_coefficient + self.delayed_terms.iter().map(|t| t.weight).sum::<f64>())
    }

    /// Largest admissible step: a quarter of the shorter of the collective
    /// decay time and the first delay.
    pub fn max_step(&self) -> f64 {
        let mut limit = f64::INFINITY;
        let rate = self.collective_rate();
        if rate > 0.0 {
            limit = 1.0 / rate;
        }
        if let Some(first) = self.delayed_terms.first() {
            limit = limit.min(first.delay);
        }
        limit / 4.0
    }
}

/// Delta-train reduction of the memory kernel for the symmetric Dicke state:
///
/// `db/dt = -(G / 2N) [ N b(t) + 2 sum_{xi=1}^{N-1} (N - xi) b(t - xi h / v) ]`
///
/// where `G` is the single-emitter rate. The instantaneous term carries half
/// the weight of a delta function sitting on the end of the memory integral.
pub fn build_delay_system(params: &ArrayParams) -> DelaySystem {
    let n = params.n_emitters;
    let scale = params.gamma_tle / (2.0 * n as f64);
    let delayed_terms = (1..n)
        .map(|xi| DelayTerm {
            delay: params.delay(xi),
            weight: scale * 2.0 * (n - xi) as f64,
        })
        .collect();
    DelaySystem {
        zeroth_coefficient: scale * n as f64,
        delayed_terms,
    }
}

/// Integrates the delay equation from `b(0) = 1` with classical RK4.
///
/// The step is shrunk, if needed, so the first delay is an integer number of
/// steps; every breakpoint of the piecewise-smooth solution then lands on the
/// grid. Delayed values at stage midpoints come from cubic Hermite
/// interpolation of the stored history using one-sided derivatives.
pub fn solve_dde(system: &DelaySystem, t_max: f64, dt: f64) -> Result<AmplitudeTrace> {
    let limit = system.max_step();
    if !(dt > 0.0 && dt < limit) {
        return Err(Error::StepTooLarge { dt, limit });
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_max",
            reason: format!("must be finite and >= 0, got {t_max}"),
        });
    }

    let (dt, lags) = match system.delayed_terms.first() {
        None => (dt, Vec::new()),
        Some(first) => {
            let steps = (first.delay / dt - 1e-12).ceil();
            let dt = first.delay / steps;
            let mut lags = Vec::with_capacity(system.delayed_terms.len());
            for term in &system.delayed_terms {
                let lag = term.delay / dt;
                let rounded = lag.round();
                if (lag - rounded).abs() > 1e-8 * lag.max(1.0) {
                    return Err(Error::IncommensurateDelays { dt });
                }
                lags.push((rounded as usize, term.weight));
            }
            (dt, lags)
        }
    };

    let n_steps = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let zero = Complex64::new(0.0, 0.0);
    let mut b = vec![zero; n_steps + 1];
    // Right derivative at each grid point, and left derivative (limit from
    // the preceding step). They differ only at breakpoints.
    let mut right = vec![zero; n_steps + 1];
    let mut left = vec![zero; n_steps + 1];
    b[0] = Complex64::new(1.0, 0.0);

    #[derive(Clone, Copy)]
    enum Stage {
        Start,
        Mid,
        End,
    }

    // Retarded sum for a stage of the step starting at grid point k. A lag
    // of L steps looks back into interval [k - L, k - L + 1]; intervals left
    // of the origin are pre-history and contribute zero.
    let retarded =
        |k: usize, stage: Stage, b: &[Complex64], right: &[Complex64], left: &[Complex64]| {
            let mut acc = zero;
            for &(lag, weight) in &lags {
                if lag > k {
                    continue;
                }
                let j = k - lag;
                let value = match stage {
                    Stage::Start => b[j],
                    Stage::End => b[j + 1],
                    Stage::Mid => (b[j] + b[j + 1]) * 0.5 + (right[j] - left[j + 1]) * (dt / 8.0),
                };
                acc += value * weight;
            }
            acc
        };
    let c0 = system.zeroth_coefficient;

    for k in 0..n_steps {
        let y = b[k];
        let h_start = retarded(k, Stage::Start, &b, &right, &left);
        let h_mid = retarded(k, Stage::Mid, &b, &right, &left);
        let h_end = retarded(k, Stage::End, &b, &right, &left);

        let k1 = -(y * c0) - h_start;
        let k2 = -((y + k1 * (dt / 2.0)) * c0) - h_mid;
        let k3 = -((y + k2 * (dt / 2.0)) * c0) - h_mid;
        let k4 = -((y + k3 * dt) * c0) - h_end;
        let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

        right[k] = k1;
        b[k + 1] = next;
        left[k + 1] = -(next * c0) - h_end;
    }

    Ok(AmplitudeTrace {
        t0: 0.0,
        dt,
        values: b,
    })
}
