//! Effective three-state cavity model on the basis `(|+>, |k0>, |vac>)`.
//!
//! The coherent part exchanges the excitation between the Dicke state and
//! the resonant photon, `H = hbar g (sigma^- + sigma^+)` with
//! `sigma^- = |k0><+|`. Two collapse channels empty the system into the
//! vacuum: photon loss `s = |vac><k0|` at rate `kappa` and polarisation decay
//! `r = |vac><+|` at rate `gamma`.
//!
//! Superoperators act on the column-stacked density matrix, so
//! `vec(A rho B) = (B^T kron A) vec(rho)`.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::EffectiveModel;

pub type Operator = SMatrix<Complex64, 3, 3>;
pub type Superoperator = SMatrix<Complex64, 9, 9>;
type Stacked = SVector<Complex64, 9>;

/// Basis states of the effective model, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Plus = 0,
    K0 = 1,
    Vac = 2,
}

impl Basis {
    pub const ORDER: [Basis; 3] = [Basis::Plus, Basis::K0, Basis::Vac];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::Plus => "plus",
            Basis::K0 => "k0",
            Basis::Vac => "vac",
        }
    }

    /// `|self><self|`.
    pub fn projector(self) -> Operator {
        ket_bra(self, self)
    }
}

/// `|a><b|`.
pub fn ket_bra(a: Basis, b: Basis) -> Operator {
    let mut m = Operator::zeros();
    m[(a.index(), b.index())] = Complex64::new(1.0, 0.0);
    m
}

fn stack(m: &Operator) -> Stacked {
    Stacked::from_column_slice(m.as_slice())
}

fn unstack(v: &Stacked) -> Operator {
    Operator::from_column_slice(v.as_slice())
}

/// Hermitian, unit-trace, positive semidefinite 3x3 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: Operator,
}

impl DensityOperator {
    pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
    pub const TRACE_TOLERANCE: f64 = 1e-12;
    pub const EIGENVALUE_FLOOR: f64 = -1e-10;

    pub fn new(matrix: Operator) -> Result<Self> {
        let rho = Self { matrix };
        if rho.hermiticity_error() > Self::HERMITIAN_TOLERANCE {
            return Err(Error::InvalidDensityOperator(format!(
                "not Hermitian (deviation {:e})",
                rho.hermiticity_error()
            )));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > Self::TRACE_TOLERANCE || trace.im.abs() > Self::TRACE_TOLERANCE
        {
            return Err(Error::InvalidDensityOperator(format!("trace is {trace}")));
        }
        let min = rho.min_eigenvalue();
        if min < Self::EIGENVALUE_FLOOR {
            return Err(Error::InvalidDensityOperator(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }

    pub fn pure(state: Basis) -> Self {
        Self {
            matrix: state.projector(),
        }
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn population(&self, state: Basis) -> f64 {
        self.matrix[(state.index(), state.index())].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.matrix - self.matrix.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let hermitian = (self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        hermitian.symmetric_eigenvalues().min()
    }
}

impl Serialize for DensityOperator {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<[f64; 2]> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| [self.matrix[(i, j)].re, self.matrix[(i, j)].im])
            .collect();
        let mut s = serializer.serialize_struct("DensityOperator", 3)?;
        s.serialize_field("basis", &Basis::ORDER.map(Basis::label))?;
        s.serialize_field("layout", "row-major [re, im]")?;
        s.serialize_field("entries", &entries)?;
        s.end()
    }
}

fn kron(a: &Operator, b: &Operator) -> Superoperator {
    let mut out = Superoperator::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let aij = a[(i, j)];
            for k in 0..3 {
                for l in 0..3 {
                    out[(3 * i + k, 3 * j + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `c rho c^dag - {c^dag c, rho} / 2`.
fn dissipator(c: &Operator) -> Superoperator {
    let identity = Operator::identity();
    let number = c.adjoint() * c;
    kron(&c.conjugate(), c)
        - (kron(&identity, &number) + kron(&number.transpose(), &identity))
            * Complex64::new(0.5, 0.0)
}

/// Markovian generator of the effective model.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    superop: Superoperator,
    model: EffectiveModel,
}

impl Liouvillian {
    pub fn superoperator(&self) -> &Superoperator {
        &self.superop
    }

    pub fn model(&self) -> &EffectiveModel {
        &self.model
    }

    /// `exp(L t)`.
    pub fn propagator(&self, t: f64) -> Superoperator {
        assert!(t >= 0.0, "propagation time must be non-negative, got {t}");
        if t == 0.0 {
            return Superoperator::identity();
        }
        (self.superop * Complex64::new(t, 0.0)).exp()
    }

    fn evolve(&self, rho: &Operator, t: f64) -> Operator {
        if t == 0.0 {
            return *rho;
        }
        unstack(&(self.propagator(t) * stack(rho)))
    }
}

pub fn build_liouvillian(model: &EffectiveModel) -> Result<Liouvillian> {
    let model = EffectiveModel::new(model.g, model.kappa, model.gamma)?;
    let identity = Operator::identity();
    let lowering = ket_bra(Basis::K0, Basis::Plus);
    let hamiltonian = (lowering + lowering.adjoint()) * Complex64::new(model.g, 0.0);
    let minus_i = Complex64::new(0.0, -1.0);
    let coherent =
        (kron(&identity, &hamiltonian) - kron(&hamiltonian.transpose(), &identity)) * minus_i;
    let photon_loss = dissipator(&ket_bra(Basis::Vac, Basis::K0));
    let polarisation_decay = dissipator(&ket_bra(Basis::Vac, Basis::Plus));
    let superop = coherent
        + photon_loss * Complex64::new(model.kappa, 0.0)
        + polarisation_decay * Complex64::new(model.gamma, 0.0);
    Ok(Liouvillian { superop, model })
}

/// `rho(t) = exp(L t)[rho0]`.
pub fn propagate(l: &Liouvillian, rho0: &DensityOperator, t: f64) -> DensityOperator {
    DensityOperator {
        matrix: l.evolve(&rho0.matrix, t),
    }
}

/// `Tr[P_q exp(L t) |q><q|]`: population of `q` after preparing `q`.
pub fn population_correlator(l: &Liouvillian, q: Basis, t: f64) -> f64 {
    propagate(l, &DensityOperator::pure(q), t).population(q)
}

/// `exp(L k dt)` for integer `k`, assembled from precomputed
/// `exp(L 2^j dt)` factors. Each evaluation costs a handful of 9x9
/// matrix-vector products instead of a matrix exponential, and the result
/// does not depend on which other steps were evaluated.
#[derive(Debug, Clone)]
pub struct GridPropagator {
    dt: f64,
    powers: Vec<Superoperator>,
}

impl GridPropagator {
    /// Covers every `k <= max_steps`.
    pub fn new(l: &Liouvillian, dt: f64, max_steps: usize) -> Self {
        assert!(dt > 0.0, "grid step must be positive, got {dt}");
        let bits = (usize::BITS - max_steps.leading_zeros()) as usize;
        let powers = (0..bits)
            .map(|j| l.propagator(dt * (1u64 << j) as f64))
            .collect();
        Self { dt, powers }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_steps(&self) -> usize {
        (1usize << self.powers.len()) - 1
    }

    /// `exp(L k dt)[rho]`.
    pub fn evolve(&self, rho: &Operator, k: usize) -> Operator {
        assert!(
            k <= self.max_steps(),
            "step {k} beyond the precomputed grid"
        );
        let mut v = stack(rho);
        for (j, p) in self.powers.iter().enumerate() {
            if k >> j & 1 == 1 {
                v = p * v;
            }
        }
        unstack(&v)
    }

    /// Population of `q` after `k` steps from `|q><q|`.
    pub fn population_correlator(&self, q: Basis, k: usize) -> f64 {
        self.evolve(&q.projector(), k)[(q.index(), q.index())].re
    }
}

/// Photon-detection correlator: the trace of
/// `J(rho) = kappa |vac><k0| rho |k0><vac|` applied to `exp(L t)[|k0><k0|]`.
pub fn jump_correlator(l: &Liouvillian, t: f64) -> Result<f64> {
    let kappa = l.model.kappa;
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: "photon-detection correlator needs kappa > 0".into(),
        });
    }
    let s = ket_bra(Basis::Vac, Basis::K0);
    let jump = kron(&s.conjugate(), &s) * Complex64::new(kappa, 0.0);
    let rho = l.evolve(&Basis::K0.projector(), t);
    Ok(unstack(&(jump * stack(&rho))).trace().re)
}

/// Two-outcome observable given by its `+1` and `-1` eigenprojectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dichotomic {
    pub positive: Operator,
    pub negative: Operator,
}

impl Dichotomic {
    /// `Q = |k0><k0| - |+><+| - |vac><vac|`.
    pub fn photon_parity() -> Self {
        Self {
            positive: Basis::K0.projector(),
            negative: Basis::Plus.projector() + Basis::Vac.projector(),
        }
    }

    pub fn flipped(&self) -> Self {
        Self {
            positive: self.negative,
            negative: self.positive,
        }
    }

    pub fn operator(&self) -> Operator {
        self.positive - self.negative
    }

    fn branches(&self) -> [(f64, &Operator); 2] {
        [(1.0, &self.positive), (-1.0, &self.negative)]
    }
}

/// How the earlier measurement in a two-time correlator acts on the state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelatorMode {
    /// Sequential projective measurements with collapse.
    #[default]
    Projective,
    /// Quantum regression form `Re Tr[Q exp(L t2)(Q rho(t1))]`.
    Regression,
}

/// `C(t1, t1 + t2)` for the observable `q`, starting from `rho0` at time 0.
pub fn two_time_correlator(
    l: &Liouvillian,
    rho0: &DensityOperator,
    t1: f64,
    t2: f64,
    q: &Dichotomic,
    mode: CorrelatorMode,
) -> f64 {
    correlate(|rho, t| l.evolve(rho, t), &rho0.matrix, t1, t2, q, mode)
}

/// [`two_time_correlator`] on a step grid, `t1 = k1 dt` and `t2 = k2 dt`.
pub fn grid_two_time_correlator(
    grid: &GridPropagator,
    rho0: &DensityOperator,
    k1: usize,
    k2: usize,
    q: &Dichotomic,
    mode: CorrelatorMode,
) -> f64 {
    correlate(|rho, k| grid.evolve(rho, k), &rho0.matrix, k1, k2, q, mode)
}

fn correlate<T>(
    evolve: impl Fn(&Operator, T) -> Operator,
    rho0: &Operator,
    t1: T,
    t2: T,
    q: &Dichotomic,
    mode: CorrelatorMode,
) -> f64 {
    let rho1 = evolve(rho0, t1);
    let conditioned = match mode {
        CorrelatorMode::Projective => q
            .branches()
            .iter()
            .map(|(sign, p)| (*p * rho1 * *p) * Complex64::new(*sign, 0.0))
            .sum::<Operator>(),
        CorrelatorMode::Regression => q.operator() * rho1,
    };
    let later = evolve(&conditioned, t2);
    (q.operator() * later).trace().re
}

/// Projective `C(t1, t1 + t2)` for `Q = |k0><k0| - |+><+| - |vac><vac|`.
pub fn projective_two_time(l: &Liouvillian, rho0: &DensityOperator, t1: f64, t2: f64) -> f64 {
    two_time_correlator(
        l,
        rho0,
        t1,
        t2,
        &Dichotomic::photon_parity(),
        CorrelatorMode::Projective,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(g: f64, kappa: f64, gamma: f64) -> Liouvillian {
        build_liouvillian(&EffectiveModel::new(g, kappa, gamma).unwrap()).unwrap()
    }

    #[test]
    fn grid_propagator_matches_direct_exponential() {
        let l = model(2.1, 0.9, 0.3);
        let grid = GridPropagator::new(&l, 1e-3, 5000);
        assert!(grid.max_steps() >= 5000);
        let rho0 = Basis::Plus.projector() * Complex64::new(0.5, 0.0)
            + Basis::K0.projector() * Complex64::new(0.5, 0.0);
        for k in [0, 1, 2, 7, 1000, 4097, 5000] {
            let direct = l.evolve(&rho0, k as f64 * 1e-3);
            assert!((grid.evolve(&rho0, k) - direct).camax() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn zero_rates_give_zero_generator() {
        assert_eq!(
            *model(0.0, 0.0, 0.0).superoperator(),
            Superoperator::zeros()
        );
    }

    #[test]
    fn rejects_negative_rates() {
        let bad = EffectiveModel {
            g: 1.0,
            kappa: -1.0,
            gamma: 0.0,
        };
        assert!(build_liouvillian(&bad).is_err());
    }

    #[test]
    fn pure_photon_loss() {
        let l = model(0.0, 0.7, 0.0);
        for t in [0.1, 1.0, 3.0] {
            let rho = propagate(&l, &DensityOperator::pure(Basis::K0), t);
            assert!((rho.population(Basis::K0) - (-0.7 * t).exp()).abs() < 1e-13);
            assert!((rho.population(Basis::Vac) - (1.0 - (-0.7 * t).exp())).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let l = model(1.3, 0.4, 0.2);
        let rho0 = DensityOperator::pure(Basis::Plus);
        assert_eq!(propagate(&l, &rho0, 0.0), rho0);
        assert_eq!(population_correlator(&l, Basis::K0, 0.0), 1.0);
    }

    #[test]
    fn undamped_rabi_exchange() {
        let g = 2.3;
        let l = model(g, 0.0, 0.0);
        for k in 0..50 {
            let t = 0.037 * k as f64;
            let expected = (g * t).cos().powi(2);
            assert!((population_correlator(&l, Basis::Plus, t) - expected).abs() < 1e-10);
            assert!((population_correlator(&l, Basis::K0, t) - expected).abs() < 1e-10);
            let rho = propagate(&l, &DensityOperator::pure(Basis::Plus), t);
            assert!((rho.population(Basis::Plus) + rho.population(Basis::K0) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn jump_correlator_identity_and_limits() {
        let l = model(0.0, 0.9, 0.3);
        for t in [0.0, 0.5, 2.0] {
            assert!((jump_correlator(&l, t).unwrap() - 0.9 * (-0.9 * t).exp()).abs() < 1e-13);
        }
        assert!(jump_correlator(&model(1.0, 0.0, 0.2), 1.0).is_err());
        let l = model(1.7, 0.6, 0.4);
        for t in [0.0, 0.3, 1.1] {
            let rescaled = jump_correlator(&l, t).unwrap() / 0.6;
            assert!((rescaled - population_correlator(&l, Basis::K0, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn projective_correlator_cases() {
        let l = model(1.1, 0.5, 0.2);
        let rho0 = DensityOperator::pure(Basis::Plus);
        assert!((projective_two_time(&l, &rho0, 0.7, 0.0) - 1.0).abs() < 1e-12);

        let g = 1.1;
        let l = model(g, 0.0, 0.0);
        for t in [0.1, 0.4, 1.9] {
            let c = projective_two_time(&l, &rho0, 0.0, t);
            assert!((c - (2.0 * g * t).cos()).abs() < 1e-10);
        }

        let l = model(0.0, 0.8, 0.3);
        let vac = DensityOperator::pure(Basis::Vac);
        for (t1, t2) in [(0.0, 1.0), (0.5, 0.5), (2.0, 0.1)] {
            assert!((projective_two_time(&l, &vac, t1, t2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_flip_leaves_correlator_unchanged() {
        let l = model(1.4, 0.3, 0.5);
        let rho0 = DensityOperator::pure(Basis::Plus);
        let q = Dichotomic::photon_parity();
        for mode in [CorrelatorMode::Projective, CorrelatorMode::Regression] {
            let a = two_time_correlator(&l, &rho0, 0.3, 0.8, &q, mode);
            let b = two_time_correlator(&l, &rho0, 0.3, 0.8, &q.flipped(), mode);
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn regression_agrees_when_first_measurement_is_non_disturbing() {
        let l = model(1.4, 0.3, 0.5);
        let rho0 = DensityOperator::pure(Basis::Plus);
        let q = Dichotomic::photon_parity();
        let p = two_time_correlator(&l, &rho0, 0.0, 0.6, &q, CorrelatorMode::Projective);
        let r = two_time_correlator(&l, &rho0, 0.0, 0.6, &q, CorrelatorMode::Regression);
        assert!((p - r).abs() < 1e-13);
    }

    #[test]
    fn density_operator_validation() {
        assert!(DensityOperator::new(Basis::Plus.projector() * Complex64::new(2.0, 0.0)).is_err());
        let mut m = Basis::Plus.projector();
        m[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(DensityOperator::new(m).is_err());
        let bad = Basis::Plus.projector() * Complex64::new(1.5, 0.0)
            - Basis::K0.projector() * Complex64::new(0.5, 0.0);
        assert!(DensityOperator::new(bad).is_err());
        assert!(DensityOperator::new(Basis::Vac.projector()).is_ok());
    }

    #[test]
    fn json_dump_is_row_major() {
        let mut m = Basis::Plus.projector() * Complex64::new(0.5, 0.0)
            + Basis::K0.projector() * Complex64::new(0.5, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.2);
        m[(1, 0)] = Complex64::new(0.1, -0.2);
        let rho = DensityOperator::new(m).unwrap();
        let json: serde_json::Value = serde_json::to_value(&rho).unwrap();
        assert_eq!(json["basis"], serde_json::json!(["plus", "k0", "vac"]));
        assert_eq!(json["entries"][1], serde_json::json!([0.1, 0.2]));
        assert_eq!(json["entries"][3], serde_json::json!([0.1, -0.2]));
        assert_eq!(json["entries"][0], serde_json::json!([0.5, 0.0]));
    }
}
