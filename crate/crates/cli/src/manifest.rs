use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{
    Artifact, DosFitReport, DynamicsRun, PipelineReport, ResolvedModel, KAPPA_CONVENTION,
};
use crate::config::RunConfig;

/// Reference values the derived quantities are compared against. They are
/// reported, never asserted.
pub const REFERENCE_PERIOD_UNITS: f64 = 0.54;
pub const REFERENCE_G_MEV: f64 = 8.3;
pub const REFERENCE_KAPPA_MEV: f64 = 3.3;
/// A period counts as calibrated when within this factor of the reference.
pub const PERIOD_FACTOR: f64 = 3.0;
/// Fewest resolved maxima for a period to count as an oscillation.
pub const MIN_MAXIMA: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCalibration {
    pub n: usize,
    pub maxima: usize,
    pub period: Option<f64>,
    pub reference: f64,
    pub ratio: Option<f64>,
    pub within_factor: f64,
    pub consistent: bool,
}

impl PeriodCalibration {
    pub fn new(run: &DynamicsRun) -> Self {
        let ratio = run.period.map(|t| t / REFERENCE_PERIOD_UNITS);
        let consistent = run.maxima >= MIN_MAXIMA
            && ratio.is_some_and(|r| (1.0 / PERIOD_FACTOR..=PERIOD_FACTOR).contains(&r));
        Self {
            n: run.n,
            maxima: run.maxima,
            period: run.period,
            reference: REFERENCE_PERIOD_UNITS,
            ratio,
            within_factor: PERIOD_FACTOR,
            consistent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCalibration {
    #[serde(rename = "derived_meV")]
    pub derived_mev: f64,
    #[serde(rename = "reference_meV")]
    pub reference_mev: f64,
    pub ratio: f64,
    pub source: String,
}

impl EnergyCalibration {
    fn new(derived_mev: f64, reference_mev: f64, source: &str) -> Self {
        Self {
            derived_mev,
            reference_mev,
            ratio: derived_mev / reference_mev,
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub period: PeriodCalibration,
    pub g: EnergyCalibration,
    pub kappa: EnergyCalibration,
    /// kappa from the fit, whatever source the effective model used.
    pub kappa_fit: EnergyCalibration,
}

impl Calibration {
    pub fn new(period_run: &DynamicsRun, spectral: &DosFitReport, model: &ResolvedModel) -> Self {
        Self {
            period: PeriodCalibration::new(period_run),
            g: EnergyCalibration::new(model.g_mev, REFERENCE_G_MEV, &model.g_source),
            kappa: EnergyCalibration::new(
                model.kappa_mev,
                REFERENCE_KAPPA_MEV,
                &model.kappa_source,
            ),
            kappa_fit: EnergyCalibration::new(spectral.kappa_mev, REFERENCE_KAPPA_MEV, "fit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub basis_order: Vec<String>,
    pub superoperator: String,
    pub kappa: String,
    pub g_from_period: String,
    pub lg_original: String,
    pub time_unit_ps: f64,
    pub csv_floats: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(artifact: &Artifact) -> Self {
        Self {
            path: artifact.name.clone(),
            bytes: artifact.bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&artifact.bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub conventions: Conventions,
    pub derived: PipelineReport,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(cfg: &RunConfig, derived: PipelineReport, files: &[Artifact]) -> Self {
        let mut entries: Vec<FileEntry> = files.iter().map(FileEntry::of).collect();
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.echo(),
            conventions: Conventions {
                basis_order: ["plus", "k0", "vac"].map(String::from).to_vec(),
                superoperator: "column-stacked rho, vec(A X B) = (B^T kron A) vec(X)".into(),
                kappa: KAPPA_CONVENTION.into(),
                g_from_period: "g = pi / T".into(),
                lg_original: "t1 = t2 = t from rho0 = |+><+| unless lg.t1 is set".into(),
                time_unit_ps: cfg.array.time_unit_ps,
                csv_floats: "shortest round-trip decimal".into(),
            },
            derived,
            files: entries,
        }
    }
}
