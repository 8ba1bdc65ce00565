//! Run configuration: a TOML file with one table per pipeline stage, plus
//! command-line overrides. Everything is checked before any work starts.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use dicke_core::dynamics::build_delay_system;
use dicke_core::leggett_garg::LgVariant;
use dicke_core::model::{per_ns_to_per_unit, SPEED_OF_LIGHT_NM_PER_PS};
use dicke_core::ArrayParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "DICKE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub array: ArraySection,
    pub solver: SolverSection,
    pub spectral: SpectralSection,
    pub effective: EffectiveSection,
    pub lg: LgSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    /// Emitter counts to simulate.
    pub n: Vec<usize>,
    pub spacing_nm: f64,
    /// Defaults to the Bragg value `pi / spacing`.
    pub wavevector_per_nm: Option<f64>,
    pub light_speed_nm_per_ps: f64,
    pub gamma_tle_per_ns: f64,
    pub time_unit_ps: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            n: vec![20, 60, 200],
            spacing_nm: ArrayParams::MQW_SPACING_NM,
            wavevector_per_nm: None,
            light_speed_nm_per_ps: SPEED_OF_LIGHT_NM_PER_PS,
            gamma_tle_per_ns: ArrayParams::MQW_GAMMA_PER_NS,
            time_unit_ps: ArrayParams::MQW_TIME_UNIT_PS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dde,
    Quadrature,
    Both,
}

impl Method {
    pub fn uses_dde(self) -> bool {
        matches!(self, Method::Dde | Method::Both)
    }

    pub fn uses_quadrature(self) -> bool {
        matches!(self, Method::Quadrature | Method::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    /// Delay-solver step in time units; half the stable limit when unset.
    pub dt: Option<f64>,
    /// Defaults to `max(5 / (N Gamma), 10 N h / v)` per N.
    pub t_max: Option<f64>,
    /// `v Q` of the quadrature q-window, rad per time unit.
    pub quadrature_vq: f64,
    /// Defaults to `1 / (1000 N Gamma)`.
    pub quadrature_dt: Option<f64>,
    pub quadrature_tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: Method::Dde,
            dt: None,
            t_max: None,
            quadrature_vq: 2e4,
            quadrature_dt: None,
            quadrature_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Defaults to the largest `array.n`.
    pub n: Option<usize>,
    /// `[lo, hi]` in 1/nm; four central-lobe half-widths either side by default.
    pub q_window: Option<[f64; 2]>,
    pub n_q: usize,
    /// Defaults to the central lobe between the first zeros.
    pub fit_window: Option<[f64; 2]>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            n: None,
            q_window: None,
            n_q: 2001,
            fit_window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GSource {
    Period,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSource {
    Fit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveSection {
    pub g_source: GSource,
    pub g_mev: Option<f64>,
    pub kappa_source: KappaSource,
    pub kappa_mev: Option<f64>,
    pub gamma_per_ns: f64,
    /// Emitter count whose oscillation period sets g; the largest `array.n`
    /// by default.
    pub period_n: Option<usize>,
}

impl Default for EffectiveSection {
    fn default() -> Self {
        Self {
            g_source: GSource::Period,
            g_mev: None,
            kappa_source: KappaSource::Fit,
            kappa_mev: None,
            gamma_per_ns: 100.0,
            period_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgSection {
    pub variants: Vec<LgVariant>,
    /// Defaults to `2 pi / g`.
    pub t_max: Option<f64>,
    /// Defaults to `1e-3 / g`.
    pub dt: Option<f64>,
    /// Holds the first interval of the original functional fixed and scans
    /// the second, instead of equal intervals.
    pub t1: Option<f64>,
}

impl Default for LgSection {
    fn default() -> Self {
        Self {
            variants: LgVariant::ALL.to_vec(),
            t_max: None,
            dt: None,
            t1: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Vec<usize>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub g_mev: Option<f64>,
    pub kappa_mev: Option<f64>,
    pub gamma_per_ns: Option<f64>,
    pub variants: Vec<LgVariant>,
    pub t1: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

/// Which stage `--dt` and `--t-max` refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTarget {
    Solver,
    Lg,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config(format!("config: {}", e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("config: cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides, grid: GridTarget) {
        if !o.n.is_empty() {
            self.array.n = o.n.clone();
        }
        match grid {
            GridTarget::Solver => {
                self.solver.dt = o.dt.or(self.solver.dt);
                self.solver.t_max = o.t_max.or(self.solver.t_max);
            }
            GridTarget::Lg => {
                self.lg.dt = o.dt.or(self.lg.dt);
                self.lg.t_max = o.t_max.or(self.lg.t_max);
            }
        }
        if let Some(g) = o.g_mev {
            self.effective.g_source = GSource::Explicit;
            self.effective.g_mev = Some(g);
        }
        if let Some(k) = o.kappa_mev {
            self.effective.kappa_source = KappaSource::Explicit;
            self.effective.kappa_mev = Some(k);
        }
        if let Some(gamma) = o.gamma_per_ns {
            self.effective.gamma_per_ns = gamma;
        }
        if !o.variants.is_empty() {
            self.lg.variants = o.variants.clone();
        }
        if o.t1.is_some() {
            self.lg.t1 = o.t1;
        }
        if o.out_dir.is_some() {
            self.output.directory = o.out_dir.clone();
        }
    }

    /// Flag, then file, then `DICKE_OUT_DIR`, then `./out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn params(&self, n: usize) -> ArrayParams {
        let a = &self.array;
        ArrayParams {
            n_emitters: n,
            spacing_nm: a.spacing_nm,
            wavevector_per_nm: a.wavevector_per_nm.unwrap_or(PI / a.spacing_nm),
            light_speed_nm_per_ps: a.light_speed_nm_per_ps,
            gamma_tle: per_ns_to_per_unit(a.gamma_tle_per_ns, a.time_unit_ps),
            time_unit_ps: a.time_unit_ps,
        }
    }

    pub fn largest_n(&self) -> usize {
        self.array.n.iter().copied().max().unwrap_or(1)
    }

    pub fn spectral_n(&self) -> usize {
        self.spectral.n.unwrap_or_else(|| self.largest_n())
    }

    pub fn period_n(&self) -> usize {
        self.effective.period_n.unwrap_or_else(|| self.largest_n())
    }

    pub fn t_max_for(&self, p: &ArrayParams) -> f64 {
        self.solver.t_max.unwrap_or_else(|| {
            (5.0 / p.superradiant_rate()).max(10.0 * p.n_emitters as f64 * p.delay_step())
        })
    }

    pub fn dde_dt_for(&self, p: &ArrayParams) -> f64 {
        self.solver
            .dt
            .unwrap_or_else(|| build_delay_system(p).max_step() / 2.0)
    }

    pub fn quadrature_dt_for(&self, p: &ArrayParams) -> f64 {
        self.solver
            .quadrature_dt
            .unwrap_or_else(|| 1.0 / (1000.0 * p.superradiant_rate()))
    }

    pub fn q_window(&self) -> [f64; 2] {
        self.spectral.q_window.unwrap_or_else(|| {
            let edge = 2.0 * PI / (self.spectral_n() as f64 * self.array.spacing_nm);
            [-4.0 * edge, 4.0 * edge]
        })
    }

    pub fn fit_window(&self) -> [f64; 2] {
        self.spectral.fit_window.unwrap_or_else(|| {
            let edge = 2.0 * PI / (self.spectral_n() as f64 * self.array.spacing_nm);
            [-edge, edge]
        })
    }

    pub fn writes(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    /// Checks the sections `command` depends on.
    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        let mut problems = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;

        let a = &self.array;
        check(
            &mut problems,
            !a.n.is_empty(),
            "array.n",
            "must list at least one emitter count".into(),
        );
        check(
            &mut problems,
            a.n.iter().all(|&n| n >= 1),
            "array.n",
            format!("emitter counts must be >= 1, got {:?}", a.n),
        );
        check(
            &mut problems,
            !has_duplicates(&a.n),
            "array.n",
            format!("emitter counts must be distinct, got {:?}", a.n),
        );
        check(
            &mut problems,
            positive(a.spacing_nm),
            "array.spacing_nm",
            format!("must be > 0, got {}", a.spacing_nm),
        );
        check(
            &mut problems,
            a.wavevector_per_nm.is_none_or(f64::is_finite),
            "array.wavevector_per_nm",
            "must be finite".into(),
        );
        check(
            &mut problems,
            positive(a.light_speed_nm_per_ps),
            "array.light_speed_nm_per_ps",
            format!("must be > 0, got {}", a.light_speed_nm_per_ps),
        );
        check(
            &mut problems,
            positive(a.gamma_tle_per_ns),
            "array.gamma_tle_per_ns",
            format!("must be > 0, got {}", a.gamma_tle_per_ns),
        );
        check(
            &mut problems,
            positive(a.time_unit_ps),
            "array.time_unit_ps",
            format!("must be > 0, got {}", a.time_unit_ps),
        );
        let array_ok = problems.is_empty();

        let needs_dynamics = matches!(command, Command::Dynamics | Command::Pipeline);
        let needs_dos = matches!(command, Command::Dos | Command::Pipeline);
        let needs_lg = matches!(command, Command::Lg | Command::Pipeline);

        if needs_dynamics {
            let s = &self.solver;
            check(
                &mut problems,
                s.t_max.is_none_or(positive),
                "solver.t_max",
                format!("must be > 0, got {:?}", s.t_max),
            );
            check(
                &mut problems,
                s.dt.is_none_or(positive),
                "solver.dt",
                format!("must be > 0, got {:?}", s.dt),
            );
            if s.method.uses_quadrature() {
                check(
                    &mut problems,
                    positive(s.quadrature_vq),
                    "solver.quadrature_vq",
                    format!("must be > 0, got {}", s.quadrature_vq),
                );
                check(
                    &mut problems,
                    s.quadrature_dt.is_none_or(positive),
                    "solver.quadrature_dt",
                    format!("must be > 0, got {:?}", s.quadrature_dt),
                );
                check(
                    &mut problems,
                    positive(s.quadrature_tolerance),
                    "solver.quadrature_tolerance",
                    format!("must be > 0, got {}", s.quadrature_tolerance),
                );
            }
            if array_ok && s.method.uses_dde() {
                if let Some(dt) = s.dt.filter(|dt| positive(*dt)) {
                    for &n in &a.n {
                        let limit = build_delay_system(&self.params(n)).max_step();
                        check(
                            &mut problems,
                            dt < limit,
                            "solver.dt",
                            format!("{dt} exceeds the stable step {limit:e} for N = {n}"),
                        );
                    }
                }
            }
            if matches!(command, Command::Pipeline) && self.effective.g_source == GSource::Period {
                check(
                    &mut problems,
                    a.n.contains(&self.period_n()),
                    "effective.period_n",
                    format!("{} is not one of array.n {:?}", self.period_n(), a.n),
                );
            }
        }

        if needs_dos {
            let sp = &self.spectral;
            check(
                &mut problems,
                sp.n.is_none_or(|n| n >= 1),
                "spectral.n",
                "must be >= 1".into(),
            );
            check(
                &mut problems,
                sp.n_q >= 7,
                "spectral.n_q",
                format!("need at least 7 points, got {}", sp.n_q),
            );
            if array_ok {
                let [lo, hi] = self.q_window();
                check(
                    &mut problems,
                    lo.is_finite() && hi.is_finite() && lo < hi,
                    "spectral.q_window",
                    format!("need lo < hi, got [{lo}, {hi}]"),
                );
                let [flo, fhi] = self.fit_window();
                check(
                    &mut problems,
                    flo.is_finite() && fhi.is_finite() && flo < fhi,
                    "spectral.fit_window",
                    format!("need lo < hi, got [{flo}, {fhi}]"),
                );
                check(
                    &mut problems,
                    flo < 0.0 && fhi > 0.0,
                    "spectral.fit_window",
                    format!("[{flo}, {fhi}] does not contain the maximum of D(q) at q = 0"),
                );
                check(
                    &mut problems,
                    lo < 0.0 && hi > 0.0,
                    "spectral.q_window",
                    format!("[{lo}, {hi}] does not contain the maximum of D(q) at q = 0"),
                );
            }
        }

        let e = &self.effective;
        if needs_lg || needs_dos {
            if e.g_source == GSource::Explicit {
                check(
                    &mut problems,
                    e.g_mev.is_some_and(non_negative),
                    "effective.g_mev",
                    format!("explicit g needs a value >= 0, got {:?}", e.g_mev),
                );
            }
            if e.kappa_source == KappaSource::Explicit {
                check(
                    &mut problems,
                    e.kappa_mev.is_some_and(non_negative),
                    "effective.kappa_mev",
                    format!("explicit kappa needs a value >= 0, got {:?}", e.kappa_mev),
                );
            }
            check(
                &mut problems,
                non_negative(e.gamma_per_ns),
                "effective.gamma_per_ns",
                format!("must be >= 0, got {}", e.gamma_per_ns),
            );
        }

        if needs_lg {
            let l = &self.lg;
            check(
                &mut problems,
                !l.variants.is_empty(),
                "lg.variants",
                "must name at least one variant".into(),
            );
            check(
                &mut problems,
                !has_duplicates(&l.variants),
                "lg.variants",
                "variants must be distinct".into(),
            );
            check(
                &mut problems,
                l.dt.is_none_or(positive),
                "lg.dt",
                format!("must be > 0, got {:?}", l.dt),
            );
            check(
                &mut problems,
                l.t_max.is_none_or(positive),
                "lg.t_max",
                format!("must be > 0, got {:?}", l.t_max),
            );
            check(
                &mut problems,
                l.t1.is_none_or(non_negative),
                "lg.t1",
                format!("must be >= 0, got {:?}", l.t1),
            );
        }

        check(
            &mut problems,
            !self.output.formats.is_empty(),
            "output.formats",
            "must list at least one format".into(),
        );

        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems.join("\n")))
        }
    }

    /// Copy for the manifest: the output location does not affect results.
    pub fn echo(&self) -> RunConfig {
        let mut c = self.clone();
        c.output.directory = None;
        c
    }
}

fn check(problems: &mut Vec<String>, ok: bool, field: &str, message: String) {
    if !ok {
        problems.push(format!("{field}: {message}"));
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, x)| items[..i].contains(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Dynamics,
    Dos,
    Lg,
    Pipeline,
}

impl Command {
    pub fn grid_target(self) -> GridTarget {
        match self {
            Command::Lg => GridTarget::Lg,
            _ => GridTarget::Solver,
        }
    }
}
