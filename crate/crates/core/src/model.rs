//! Array geometry, unit conversions and the single-excitation Dicke basis.
//!
//! Sites sit at `z_j = j * h` for `j = 1..=N`. Shifting every site by a common
//! offset multiplies each Dicke state by a global phase, so the origin is not
//! observable.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Reduced Planck constant in meV·ps (CODATA 2018).
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;

/// Vacuum speed of light in nm/ps.
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 299_792.458;

/// Physical constants used for unit bridging. Immutable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar_mev_ps: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        hbar_mev_ps: HBAR_MEV_PS,
    };
}

/// Converts an energy in meV to an angular frequency in rad/ps.
pub fn energy_to_rate(energy_mev: f64) -> f64 {
    energy_mev / PhysicalConstants::CODATA.hbar_mev_ps
}

/// Converts an angular frequency in rad/ps to an energy in meV.
pub fn rate_to_energy(rate_per_ps: f64) -> f64 {
    rate_per_ps * PhysicalConstants::CODATA.hbar_mev_ps
}

/// Geometry and rates of an N-emitter array.
///
/// Rates are expressed per *time unit*; `time_unit_ps` says how long one unit
/// is. The default multiple-quantum-well configuration uses a 10 ps unit, so a
/// single-well decay rate of 100 /ns is exactly 1 per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayParams {
    pub n_emitters: usize,
    pub spacing_nm: f64,
    pub wavevector_per_nm: f64,
    pub light_speed_nm_per_ps: f64,
    pub gamma_tle: f64,
    pub time_unit_ps: f64,
}

impl ArrayParams {
    pub const MQW_SPACING_NM: f64 = 400.0;
    pub const MQW_WAVELENGTH_NM: f64 = 820.0;
    pub const MQW_EXCITON_ENERGY_EV: f64 = 1.514;
    pub const MQW_TIME_UNIT_PS: f64 = 10.0;
    pub const MQW_GAMMA_PER_NS: f64 = 100.0;

    pub fn new(
        n_emitters: usize,
        spacing_nm: f64,
        wavevector_per_nm: f64,
        light_speed_nm_per_ps: f64,
        gamma_tle: f64,
        time_unit_ps: f64,
    ) -> Result<Self> {
        let params = Self {
            n_emitters,
            spacing_nm,
            wavevector_per_nm,
            light_speed_nm_per_ps,
            gamma_tle,
            time_unit_ps,
        };
        params.validate()?;
        Ok(params)
    }

    /// GaAs/AlGaAs multiple-quantum-well array in the Bragg configuration
    /// (`k0 h = pi`), 400 nm period, 10 ps time unit and a 100 /ns
    /// single-well decay rate.
    pub fn mqw(n_emitters: usize) -> Self {
        Self {
            n_emitters,
            spacing_nm: Self::MQW_SPACING_NM,
            wavevector_per_nm: PI / Self::MQW_SPACING_NM,
            light_speed_nm_per_ps: SPEED_OF_LIGHT_NM_PER_PS,
            gamma_tle: per_ns_to_per_unit(Self::MQW_GAMMA_PER_NS, Self::MQW_TIME_UNIT_PS),
            time_unit_ps: Self::MQW_TIME_UNIT_PS,
        }
    }

    pub fn with_n(self, n_emitters: usize) -> Self {
        Self { n_emitters, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_emitters < 1 {
            return Err(Error::TooFewEmitters {
                required: 1,
                got: self.n_emitters,
            });
        }
        ensure_positive("spacing_nm", self.spacing_nm)?;
        ensure_positive("light_speed_nm_per_ps", self.light_speed_nm_per_ps)?;
        ensure_positive("gamma_tle", self.gamma_tle)?;
        ensure_positive("time_unit_ps", self.time_unit_ps)?;
        if !self.wavevector_per_nm.is_finite() {
            return Err(Error::InvalidParameter {
                name: "wavevector_per_nm",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    /// Light speed in nm per time unit.
    pub fn light_speed_per_unit(&self) -> f64 {
        self.light_speed_nm_per_ps * self.time_unit_ps
    }

    /// Nearest-neighbour propagation delay `h / v` in time units.
    pub fn delay_step(&self) -> f64 {
        self.spacing_nm / self.light_speed_per_unit()
    }

    /// Delay `xi * h / v` between emitters `xi` sites apart, in time units.
    pub fn delay(&self, xi: usize) -> f64 {
        xi as f64 * self.delay_step()
    }

    /// Transit time of light across the whole array, `N h / v`.
    pub fn transit_time(&self) -> f64 {
        self.delay(self.n_emitters)
    }

    pub fn site_position(&self, j: usize) -> f64 {
        j as f64 * self.spacing_nm
    }

    /// Array length `L = N h` in nm.
    pub fn length_nm(&self) -> f64 {
        self.n_emitters as f64 * self.spacing_nm
    }

    /// The dimensionless `k0 L`; the collective description assumes it is large.
    pub fn k0_length(&self) -> f64 {
        self.wavevector_per_nm * self.length_nm()
    }

    /// Superradiant population decay rate `N * gamma_tle`.
    pub fn superradiant_rate(&self) -> f64 {
        self.n_emitters as f64 * self.gamma_tle
    }

    /// Single-mode coupling `g_k0` with the field quantised over the array
    /// length, so that `gamma_tle = L g_k0^2 / v`. Rad per time unit.
    pub fn single_mode_coupling(&self) -> f64 {
        (self.gamma_tle * self.light_speed_per_unit() / self.length_nm()).sqrt()
    }

    /// Collective coupling `sqrt(N) g_k0 = sqrt(gamma_tle v / h)`.
    pub fn collective_coupling(&self) -> f64 {
        (self.n_emitters as f64).sqrt() * self.single_mode_coupling()
    }

    /// Converts a rate in rad per time unit to an energy in meV.
    pub fn rate_to_mev(&self, rate_per_unit: f64) -> f64 {
        rate_to_energy(rate_per_unit / self.time_unit_ps)
    }

    /// Converts an energy in meV to a rate in rad per time unit.
    pub fn mev_to_rate(&self, energy_mev: f64) -> f64 {
        energy_to_rate(energy_mev) * self.time_unit_ps
    }
}

pub fn per_ns_to_per_unit(rate_per_ns: f64, time_unit_ps: f64) -> f64 {
    rate_per_ns * time_unit_ps * 1e-3
}

pub fn per_unit_to_per_ns(rate_per_unit: f64, time_unit_ps: f64) -> f64 {
    rate_per_unit / (time_unit_ps * 1e-3)
}

/// Amplitudes over the site basis `|j>` (one excited emitter).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    const NORM_TOLERANCE: f64 = 1e-12;

    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "amplitudes",
                reason: "state vector must have dimension >= 1".into(),
            });
        }
        let state = Self { amplitudes };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::InvalidParameter {
                name: "amplitudes",
                reason: format!("squared norm is {norm}, expected 1"),
            });
        }
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

fn site_phase(params: &ArrayParams, j: usize) -> Complex64 {
    Complex64::from_polar(1.0, params.wavevector_per_nm * params.site_position(j))
}

/// The symmetric single-photon Dicke state `|+>_{k0}`.
pub fn dicke_plus_state(params: &ArrayParams) -> StateVector {
    let n = params.n_emitters;
    let scale = 1.0 / (n as f64).sqrt();
    StateVector {
        amplitudes: (1..=n).map(|j| site_phase(params, j) * scale).collect(),
    }
}

/// All N single-excitation Dicke states: `|+>` followed by the orthogonal
/// members `|1>, ..., |N-1>`.
///
/// Member `m` has amplitude `e^{i k0 z_j} / sqrt(m(m+1))` on sites `j <= m`,
/// `-m e^{i k0 z_{m+1}} / sqrt(m(m+1))` on site `m + 1` and zero beyond.
pub fn dicke_basis(params: &ArrayParams) -> Result<Vec<StateVector>> {
    let n = params.n_emitters;
    if n < 2 {
        return Err(Error::TooFewEmitters {
            required: 2,
            got: n,
        });
    }
    let mut basis = Vec::with_capacity(n);
    basis.push(dicke_plus_state(params));
    for m in 1..n {
        let norm = 1.0 / ((m * (m + 1)) as f64).sqrt();
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
        for (j, amp) in amplitudes.iter_mut().enumerate().take(m) {
            *amp = site_phase(params, j + 1) * norm;
        }
        amplitudes[m] = site_phase(params, m + 1) * (-(m as f64) * norm);
        basis.push(StateVector { amplitudes });
    }
    Ok(basis)
}
