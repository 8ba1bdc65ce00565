//! The four subcommands. Each stage computes its files in memory; nothing is
//! written until every stage has succeeded.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use dicke_core::dynamics::{
    build_delay_system, fit_decay_rate, local_maxima, max_population_deviation, oscillation_period,
    population, solve_dde, solve_volterra_converged, AmplitudeTrace, QuadratureGrid,
};
use dicke_core::leggett_garg::{lg_scan, lg_scan_fixed_first, LgSummary, LgVariant};
use dicke_core::model::{energy_to_rate, per_ns_to_per_unit};
use dicke_core::open_system::{build_liouvillian, Basis, DensityOperator};
use dicke_core::spectral::{
    coupling_from_period, dos, kappa_from_fwhm, lorentzian_fit, normalize, uniform_grid,
    LorentzianFit, SpectralDensity,
};
use dicke_core::{ArrayParams, EffectiveModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, Format, GSource, KappaSource, Method, RunConfig};
use crate::error::CliError;
use crate::manifest::{Calibration, Manifest};

pub const DYNAMICS_SUMMARY: &str = "dynamics_summary.json";
pub const LG_SUMMARY: &str = "lg_summary.json";
pub const MANIFEST: &str = "manifest.json";

/// A file produced by a command, held in memory until the run succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn csv(name: String, write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Self {
        let mut bytes = Vec::new();
        write(&mut bytes).expect("writing to memory cannot fail");
        Self { name, bytes }
    }

    fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
        bytes.push(b'\n');
        Self {
            name: name.into(),
            bytes,
        }
    }

    fn format(&self) -> Option<Format> {
        match Path::new(&self.name).extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------- dynamics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInfo {
    pub vq: f64,
    pub q_halfwidth_per_nm: f64,
    pub n_q: usize,
    pub n_q_refined: usize,
    pub dt: f64,
    pub refinement_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRun {
    pub n: usize,
    pub method: Method,
    pub t_max: f64,
    pub dde_dt: Option<f64>,
    pub quadrature: Option<QuadratureInfo>,
    pub early_window: [f64; 2],
    pub early_rate: f64,
    pub early_rate_over_n_gamma: f64,
    pub maxima: usize,
    pub period: Option<f64>,
    pub max_population_deviation: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub time_unit_ps: f64,
    pub gamma_tle_per_unit: f64,
    pub delay_step: f64,
    pub runs: Vec<DynamicsRun>,
}

impl DynamicsSummary {
    pub fn run(&self, n: usize) -> Option<&DynamicsRun> {
        self.runs.iter().find(|r| r.n == n)
    }
}

fn dynamics_one(cfg: &RunConfig, n: usize) -> Result<(DynamicsRun, Vec<Artifact>), CliError> {
    let stage = CliError::stage("dynamics");
    let p = cfg.params(n);
    let t_max = cfg.t_max_for(&p);
    let method = cfg.solver.method;
    let mut files = Vec::new();

    let dde = if method.uses_dde() {
        let sys = build_delay_system(&p);
        let trace = solve_dde(&sys, t_max, cfg.dde_dt_for(&p)).map_err(&stage)?;
        files.push(Artifact::csv(format!("dynamics_N{n}_dde.csv"), |w| {
            trace.write_csv(w)
        }));
        Some(trace)
    } else {
        None
    };

    let quadrature = if method.uses_quadrature() {
        let vq = cfg.solver.quadrature_vq;
        let grid = QuadratureGrid::for_window(&p, t_max, vq / p.light_speed_per_unit());
        let dt = cfg.quadrature_dt_for(&p);
        let converged =
            solve_volterra_converged(&p, grid, t_max, dt, cfg.solver.quadrature_tolerance)
                .map_err(&stage)?;
        files.push(Artifact::csv(
            format!("dynamics_N{n}_quadrature.csv"),
            |w| converged.trace.write_csv(w),
        ));
        let info = QuadratureInfo {
            vq,
            q_halfwidth_per_nm: grid.q_halfwidth,
            n_q: grid.n_q,
            n_q_refined: grid.refined().n_q,
            dt,
            refinement_change: converged.change,
        };
        Some((info, converged.trace))
    } else {
        None
    };

    let primary: &AmplitudeTrace = match (&dde, &quadrature) {
        (Some(trace), _) => trace,
        (None, Some((_, trace))) => trace,
        (None, None) => unreachable!("every method runs a solver"),
    };
    let pop = population(primary);
    let early_window = [0.0, (1.0 / p.superradiant_rate()).min(primary.t_end())];
    let early_rate = fit_decay_rate(&pop, (early_window[0], early_window[1])).map_err(&stage)?;
    let deviation = match (&dde, &quadrature) {
        (Some(a), Some((_, b))) => Some(max_population_deviation(a, b)),
        _ => None,
    };

    let run = DynamicsRun {
        n,
        method,
        t_max,
        dde_dt: dde.as_ref().map(|t| t.dt),
        quadrature: quadrature.map(|(info, _)| info),
        early_window,
        early_rate,
        early_rate_over_n_gamma: early_rate / p.superradiant_rate(),
        maxima: local_maxima(&pop).len(),
        period: oscillation_period(&pop),
        max_population_deviation: deviation,
        files: files.iter().map(|f| f.name.clone()).collect(),
    };
    Ok((run, files))
}

pub fn run_dynamics(cfg: &RunConfig) -> Result<(DynamicsSummary, Vec<Artifact>), CliError> {
    let results: Vec<_> = cfg
        .array
        .n
        .par_iter()
        .map(|&n| dynamics_one(cfg, n))
        .collect::<Result<_, _>>()?;
    let p = cfg.params(1);
    let mut runs = Vec::new();
    let mut files = Vec::new();
    for (run, run_files) in results {
        runs.push(run);
        files.extend(run_files);
    }
    let summary = DynamicsSummary {
        time_unit_ps: p.time_unit_ps,
        gamma_tle_per_unit: p.gamma_tle,
        delay_step: p.delay_step(),
        runs,
    };
    files.push(Artifact::json(DYNAMICS_SUMMARY, &summary));
    Ok((summary, files))
}

// --------------------------------------------------------------------- dos

pub struct DosStage {
    pub params: ArrayParams,
    pub density: SpectralDensity,
    pub fit: LorentzianFit,
    pub window: [f64; 2],
}

pub fn compute_dos(cfg: &RunConfig) -> Result<DosStage, CliError> {
    let stage = CliError::stage("dos");
    let params = cfg.params(cfg.spectral_n());
    let [lo, hi] = cfg.q_window();
    let density =
        normalize(&dos(&params, &uniform_grid(lo, hi, cfg.spectral.n_q))).map_err(&stage)?;
    let window = cfg.fit_window();
    let fit = lorentzian_fit(&density, (window[0], window[1])).map_err(&stage)?;
    Ok(DosStage {
        params,
        density,
        fit,
        window,
    })
}

/// JSON sidecar of the Lorentzian fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosFitReport {
    pub n: usize,
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub residual: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    #[serde(rename = "kappa_meV")]
    pub kappa_mev: f64,
    #[serde(rename = "g_meV")]
    pub g_mev: f64,
    pub kappa_per_unit: f64,
    pub g_per_unit: f64,
    pub g_source: String,
    pub kappa_convention: String,
}

pub fn dos_files(stage: &DosStage, model: &ResolvedModel) -> (DosFitReport, Vec<Artifact>) {
    let n = stage.params.n_emitters;
    let kappa = kappa_from_fwhm(&stage.params, stage.fit.fwhm);
    let report = DosFitReport {
        n,
        center: stage.fit.center,
        fwhm: stage.fit.fwhm,
        amplitude: stage.fit.amplitude,
        residual: stage.fit.residual,
        window_lo: stage.window[0],
        window_hi: stage.window[1],
        kappa_mev: stage.params.rate_to_mev(kappa),
        g_mev: model.g_mev,
        kappa_per_unit: kappa,
        g_per_unit: model.g_per_unit,
        g_source: model.g_source.clone(),
        kappa_convention: KAPPA_CONVENTION.into(),
    };
    let files = vec![
        Artifact::csv(format!("dos_N{n}.csv"), |w| stage.density.write_csv(w)),
        Artifact::csv(format!("dos_fit_N{n}.csv"), |w| {
            stage
                .density
                .write_fit_csv(&stage.fit, (stage.window[0], stage.window[1]), w)
        }),
        Artifact::json(format!("dos_fit_N{n}.json"), &report),
    ];
    (report, files)
}

pub const KAPPA_CONVENTION: &str = "kappa = v * fwhm, energy width hbar * v * fwhm";

// --------------------------------------------------------- effective model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedModel {
    pub g_per_unit: f64,
    pub kappa_per_unit: f64,
    pub gamma_per_unit: f64,
    #[serde(rename = "g_meV")]
    pub g_mev: f64,
    #[serde(rename = "kappa_meV")]
    pub kappa_mev: f64,
    pub gamma_per_ns: f64,
    pub g_rad_per_ps: f64,
    pub kappa_rad_per_ps: f64,
    pub g_source: String,
    pub kappa_source: String,
    pub period: Option<f64>,
    pub period_n: Option<usize>,
}

impl ResolvedModel {
    pub fn model(&self) -> EffectiveModel {
        EffectiveModel {
            g: self.g_per_unit,
            kappa: self.kappa_per_unit,
            gamma: self.gamma_per_unit,
        }
    }
}

/// Upstream products the effective model may draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct Upstream {
    /// `(N, period)` of the oscillation used for g.
    pub period: Option<(usize, Option<f64>)>,
    /// `(N, fwhm)` of the Lorentzian fit used for kappa.
    pub fwhm: Option<(usize, f64)>,
}

pub fn resolve_model(cfg: &RunConfig, upstream: Upstream) -> Result<ResolvedModel, CliError> {
    let e = &cfg.effective;
    let unit = cfg.array.time_unit_ps;
    let missing = |what: &str| CliError::Config(what.to_string());

    let (g, g_source, period, period_n) = match e.g_source {
        GSource::Explicit => {
            let mev = e.g_mev.ok_or_else(|| missing("effective.g_mev: required when g_source = \"explicit\""))?;
            (energy_to_rate(mev) * unit, "explicit", None, None)
        }
        GSource::Period => match upstream.period {
            Some((n, Some(t))) => (
                coupling_from_period(t).map_err(CliError::stage("effective"))?,
                "period",
                Some(t),
                Some(n),
            ),
            Some((n, None)) => (cfg.params(n).collective_coupling(), "collective_coupling", None, Some(n)),
            None => {
                return Err(missing(
                    "effective.g_source: \"period\" needs an oscillation period from the dynamics stage; set effective.g_mev or pass --g-mev",
                ))
            }
        },
    };
    let (kappa, kappa_source) = match e.kappa_source {
        KappaSource::Explicit => {
            let mev = e
                .kappa_mev
                .ok_or_else(|| missing("effective.kappa_mev: required when kappa_source = \"explicit\""))?;
            (energy_to_rate(mev) * unit, "explicit")
        }
        KappaSource::Fit => match upstream.fwhm {
            Some((n, fwhm)) => (kappa_from_fwhm(&cfg.params(n), fwhm), "fit"),
            None => {
                return Err(missing(
                    "effective.kappa_source: \"fit\" needs a Lorentzian fit from the dos stage; set effective.kappa_mev or pass --kappa-mev",
                ))
            }
        },
    };
    let gamma = per_ns_to_per_unit(e.gamma_per_ns, unit);
    let model = EffectiveModel::new(g, kappa, gamma).map_err(CliError::stage("effective"))?;
    let p = cfg.params(1);
    Ok(ResolvedModel {
        g_per_unit: model.g,
        kappa_per_unit: model.kappa,
        gamma_per_unit: model.gamma,
        g_mev: p.rate_to_mev(model.g),
        kappa_mev: p.rate_to_mev(model.kappa),
        gamma_per_ns: e.gamma_per_ns,
        g_rad_per_ps: model.g / unit,
        kappa_rad_per_ps: model.kappa / unit,
        g_source: g_source.into(),
        kappa_source: kappa_source.into(),
        period,
        period_n,
    })
}

/// Reads the products of earlier `dynamics` and `dos` runs from `dir`, but
/// only those the configured sources need.
pub fn upstream_from_dir(cfg: &RunConfig, dir: &Path) -> Result<Upstream, CliError> {
    let read = |name: &str, field: &str| -> Result<String, CliError> {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|_| {
            CliError::Config(format!(
                "{field}: upstream file {} is missing; run the earlier stage first or give the value explicitly",
                path.display()
            ))
        })
    };
    let corrupt = |name: &str, e: serde_json::Error| {
        CliError::Config(format!(
            "{}: cannot parse upstream file: {e}",
            dir.join(name).display()
        ))
    };
    let mut upstream = Upstream::default();
    if cfg.effective.g_source == GSource::Period {
        let text = read(DYNAMICS_SUMMARY, "effective.g_source")?;
        let summary: DynamicsSummary =
            serde_json::from_str(&text).map_err(|e| corrupt(DYNAMICS_SUMMARY, e))?;
        let n = cfg
            .effective
            .period_n
            .or_else(|| summary.runs.iter().map(|r| r.n).max())
            .unwrap_or(1);
        let run = summary.run(n).ok_or_else(|| {
            CliError::Config(format!(
                "effective.period_n: {DYNAMICS_SUMMARY} has no run for N = {n}"
            ))
        })?;
        upstream.period = Some((n, run.period));
    }
    if cfg.effective.kappa_source == KappaSource::Fit {
        let n = cfg.spectral_n();
        let name = format!("dos_fit_N{n}.json");
        let text = read(&name, "effective.kappa_source")?;
        let report: DosFitReport = serde_json::from_str(&text).map_err(|e| corrupt(&name, e))?;
        upstream.fwhm = Some((report.n, report.fwhm));
    }
    Ok(upstream)
}

// ---------------------------------------------------------------------- lg

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgReport {
    pub model: ResolvedModel,
    pub t_max: f64,
    pub dt: f64,
    pub t1: Option<f64>,
    pub initial_state: String,
    pub scans: Vec<LgSummary>,
}

fn lg_grid(cfg: &RunConfig, model: &EffectiveModel) -> (f64, f64) {
    let t_max = cfg.lg.t_max.unwrap_or_else(|| {
        if model.g > 0.0 {
            2.0 * PI / model.g
        } else if model.kappa + model.gamma > 0.0 {
            5.0 / (model.kappa + model.gamma)
        } else {
            1.0
        }
    });
    let dt = cfg.lg.dt.unwrap_or_else(|| {
        if model.g > 0.0 {
            1e-3 / model.g
        } else {
            t_max / 5000.0
        }
    });
    (t_max, dt)
}

pub fn run_lg(
    cfg: &RunConfig,
    resolved: &ResolvedModel,
) -> Result<(LgReport, Vec<Artifact>), CliError> {
    let stage = CliError::stage("lg");
    let model = resolved.model();
    let l = build_liouvillian(&model).map_err(&stage)?;
    let (t_max, dt) = lg_grid(cfg, &model);
    let rho0 = DensityOperator::pure(Basis::Plus);
    let mut scans = Vec::new();
    let mut files = Vec::new();
    for &variant in &cfg.lg.variants {
        let (name, trace) = match (variant, cfg.lg.t1) {
            (LgVariant::OriginalEqualIntervals, Some(t1)) => (
                "original_fixed_t1".to_string(),
                lg_scan_fixed_first(&l, &rho0, t1, t_max, dt).map_err(&stage)?,
            ),
            _ => (
                variant.name().to_string(),
                lg_scan(&l, variant, t_max, dt).map_err(&stage)?,
            ),
        };
        files.push(Artifact::csv(format!("lg_{name}.csv"), |w| {
            trace.write_csv(w)
        }));
        scans.push(LgSummary::of(name, &trace));
    }
    let report = LgReport {
        model: resolved.clone(),
        t_max,
        dt,
        t1: cfg.lg.t1,
        initial_state: "plus".into(),
        scans,
    };
    files.push(Artifact::json(LG_SUMMARY, &report));
    Ok((report, files))
}

// ---------------------------------------------------------------- pipeline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub dynamics: DynamicsSummary,
    pub spectral: DosFitReport,
    pub effective_model: ResolvedModel,
    pub lg: LgReport,
    pub calibration: Calibration,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<(PipelineReport, Vec<Artifact>), CliError> {
    let (dynamics, mut files) = run_dynamics(cfg)?;
    let period_n = cfg.period_n();
    let period_run = dynamics.run(period_n).ok_or_else(|| {
        CliError::Config(format!(
            "effective.period_n: no dynamics run for N = {period_n}"
        ))
    })?;
    let dos_stage = compute_dos(cfg)?;
    let upstream = Upstream {
        period: Some((period_n, period_run.period)),
        fwhm: Some((dos_stage.params.n_emitters, dos_stage.fit.fwhm)),
    };
    let model = resolve_model(cfg, upstream)?;
    let (spectral, dos_artifacts) = dos_files(&dos_stage, &model);
    files.extend(dos_artifacts);
    let (lg, lg_artifacts) = run_lg(cfg, &model)?;
    files.extend(lg_artifacts);
    let calibration = Calibration::new(period_run, &spectral, &model);
    Ok((
        PipelineReport {
            dynamics,
            spectral,
            effective_model: model,
            lg,
            calibration,
        },
        files,
    ))
}

// ------------------------------------------------------------------ driver

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

/// Computes every file for `command` without touching the filesystem.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    cfg.validate(command)?;
    let files = match command {
        Command::Dynamics => run_dynamics(cfg)?.1,
        Command::Dos => {
            let stage = compute_dos(cfg)?;
            let fallback_n = stage.params.n_emitters;
            let mut upstream = Upstream {
                period: None,
                fwhm: Some((fallback_n, stage.fit.fwhm)),
            };
            if cfg.effective.g_source == GSource::Period {
                // No dynamics here: report the collective coupling instead.
                upstream.period = Some((fallback_n, None));
            }
            let model = resolve_model(cfg, upstream)?;
            dos_files(&stage, &model).1
        }
        Command::Lg => {
            let upstream = upstream_from_dir(cfg, &cfg.output_dir())?;
            let model = resolve_model(cfg, upstream)?;
            run_lg(cfg, &model)?.1
        }
        Command::Pipeline => {
            let (report, files) = run_pipeline(cfg)?;
            let files: Vec<Artifact> = files.into_iter().filter(|f| selected(cfg, f)).collect();
            let manifest = Manifest::new(cfg, report, &files);
            let mut files = files;
            files.push(Artifact::json(MANIFEST, &manifest));
            return Ok(files);
        }
    };
    Ok(files.into_iter().filter(|f| selected(cfg, f)).collect())
}

fn selected(cfg: &RunConfig, artifact: &Artifact) -> bool {
    artifact.format().is_none_or(|f| cfg.writes(f))
}

pub fn write_artifacts(dir: &Path, files: &[Artifact]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for file in files {
        let path = dir.join(&file.name);
        fs::write(&path, &file.bytes).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(())
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let files = execute(command, cfg)?;
    let out_dir = cfg.output_dir();
    write_artifacts(&out_dir, &files)?;
    Ok(RunOutcome {
        out_dir,
        files: files.into_iter().map(|f| f.name).collect(),
    })
}
