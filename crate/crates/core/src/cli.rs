//! Experiment orchestration: JSON configuration, subcommands and reports.
//!
//! Every subcommand validates the whole configuration before computing anything, so a
//! configuration error (exit code 2) never leaves artifacts behind. Reports contain no
//! wall-clock data; stage timings go to a separate `timing.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    closedness_regression, derivative_identity_check, directional_derivative, generator_fd,
    growth_bound_estimate, integral_identity_check, lipschitz_probe, smooth_noise, EnvelopeParams,
    Resolution,
};
use crate::envelope::{
    apply_partition, check_upper_bound, dyadic_iterate, nisio_dyadic, step_j, Certificate,
    Partition, DEFAULT_N_MAX, DEFAULT_TOL_REL,
};
use crate::error::{Error, Result};
use crate::funcspace::{
    bump, gaussian_profile, interp_shift, lp_norm, pointwise_leq, pointwise_max, ramp, Grid,
    GridFunction, PNorm,
};
use crate::kernels::{FamilyKind, FamilySpec, JumpDistribution, KernelFamily, LambdaSet};
use crate::reference::{
    compare, counterexample_scan_with, hjb_upwind, hjb_upwind_with, ode_reference, UpwindForm,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub p: f64,
}

fn zero() -> f64 {
    0.0
}
fn one() -> f64 {
    1.0
}

/// Initial datum `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum InitialSpec {
    Bump {
        #[serde(default = "zero")]
        center: f64,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
    Gaussian {
        #[serde(default = "zero")]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
    Ramp {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default = "zero")]
        offset: f64,
    },
    CustomCsv {
        path: PathBuf,
    },
}

fn default_tol_rel() -> f64 {
    DEFAULT_TOL_REL
}
fn default_n_max() -> u32 {
    DEFAULT_N_MAX
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t: f64,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub h0: f64,
    pub k_steps: usize,
    /// Dyadic level used for each `S̃(h)`.
    pub level: u32,
    /// Required `final error / initial error`.
    pub reduction: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            h0: 0.1,
            k_steps: 6,
            level: 2,
            reduction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivativeSpec {
    pub h0: f64,
    pub k_steps: usize,
    /// Largest time step of `S̃`.
    pub max_step: f64,
    pub quad_nodes: usize,
    /// Step of the quotient inside the time integral.
    pub quad_h: f64,
    pub identity_tol: f64,
    pub integral_tol: f64,
    /// Ball radius and sample count of the Lipschitz probe.
    pub radius: f64,
    pub samples: usize,
    /// Times used for the growth fit.
    pub growth_times: Vec<f64>,
}

impl Default for DerivativeSpec {
    fn default() -> Self {
        DerivativeSpec {
            h0: 0.1,
            k_steps: 5,
            max_step: 1.0 / 512.0,
            quad_nodes: 33,
            quad_h: 1e-3,
            identity_tol: 5e-2,
            integral_tol: 2e-2,
            radius: 1.0,
            samples: 8,
            growth_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HjbSpec {
    pub cfl: f64,
    pub tolerance: f64,
    pub margin: f64,
}

impl Default for HjbSpec {
    fn default() -> Self {
        HjbSpec {
            cfl: 0.5,
            tolerance: 5e-2,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSpec {
    pub dt: f64,
    pub level: u32,
    pub tolerance: f64,
    pub margin: f64,
}

impl Default for OdeSpec {
    fn default() -> Self {
        OdeSpec {
            dt: 1e-3,
            level: 8,
            tolerance: 1e-2,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleSpec {
    /// Strictly decreasing; empty selects every decade from 1e-2 down to the grid limit.
    pub epsilons: Vec<f64>,
    pub t: f64,
    pub min_ratio: f64,
    pub control_tol: f64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        CounterexampleSpec {
            epsilons: Vec::new(),
            t: 0.5,
            min_ratio: 1.5,
            control_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub norm: NormSpec,
    pub family: FamilySpec,
    pub initial: InitialSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub seeds: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub derivative: DerivativeSpec,
    #[serde(default)]
    pub hjb: HjbSpec,
    #[serde(default)]
    pub ode: OdeSpec,
    #[serde(default)]
    pub counterexample: CounterexampleSpec,
}

impl ExperimentConfig {
    /// Parses JSON; type and key errors name the offending path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            Error::config(key, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Subcommand {
    Envelope,
    Generator,
    Derivative,
    CompareHjb,
    CompareOde,
    Counterexample,
    Verify,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Envelope => "envelope",
            Subcommand::Generator => "generator",
            Subcommand::Derivative => "derivative",
            Subcommand::CompareHjb => "compare-hjb",
            Subcommand::CompareOde => "compare-ode",
            Subcommand::Counterexample => "counterexample",
            Subcommand::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Small,
    Full,
}

/// Configuration after every precondition has been checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub norm: PNorm,
    pub family: KernelFamily,
    pub initial: GridFunction,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Resolved ε list for `counterexample`.
    pub epsilons: Vec<f64>,
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn build_initial(spec: &InitialSpec, grid: Grid) -> Result<GridFunction> {
    let finite = |key: &str, v: f64| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::config(key, "must be finite"))
        }
    };
    match spec {
        InitialSpec::Bump {
            center,
            radius,
            height,
        } => {
            finite("initial.params.center", *center)?;
            finite("initial.params.height", *height)?;
            positive("initial.params.radius", *radius)?;
            Ok(bump(grid, *center, *radius, *height))
        }
        InitialSpec::Gaussian {
            center,
            width,
            height,
        } => {
            finite("initial.params.center", *center)?;
            finite("initial.params.height", *height)?;
            positive("initial.params.width", *width)?;
            Ok(gaussian_profile(grid, *center, *width, *height))
        }
        InitialSpec::Ramp { slope, offset } => {
            finite("initial.params.slope", *slope)?;
            finite("initial.params.offset", *offset)?;
            Ok(ramp(grid, *slope, *offset))
        }
        InitialSpec::CustomCsv { path } => {
            let file = fs::File::open(path).map_err(|e| {
                Error::config(
                    "initial.params.path",
                    format!("cannot open {}: {e}", path.display()),
                )
            })?;
            GridFunction::read_csv(grid, BufReader::new(file))
        }
    }
}

fn default_epsilons(grid: Grid) -> Vec<f64> {
    (2..=12)
        .map(|k| 10f64.powi(-k))
        .take_while(|&eps| eps >= 4.0 * grid.dx())
        .collect()
}

impl Experiment {
    /// Validates `config` for `sub`. `out` and `seed` override the configuration.
    pub fn validate(
        config: ExperimentConfig,
        sub: Subcommand,
        out: Option<&Path>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let c = &config;
        let grid = Grid::new(c.grid.lower, c.grid.upper, c.grid.n_nodes)?;
        let norm = PNorm::new(c.norm.p)?;
        let family = c.family.build()?;
        let initial = build_initial(&c.initial, grid)?;
        positive("time.t", c.time.t)?;
        positive("time.tol_rel", c.time.tol_rel)?;
        if c.time.n_max > 24 {
            return Err(Error::config("time.n_max", "at most 24 dyadic levels"));
        }
        let mut epsilons = Vec::new();
        match sub {
            Subcommand::Envelope => {
                if !family.has_upper_bound() {
                    return Err(Error::NoEnvelopeBound);
                }
            }
            Subcommand::Generator => {
                let g = &c.generator;
                positive("generator.h0", g.h0)?;
                positive("generator.reduction", g.reduction)?;
                if g.k_steps == 0 || g.k_steps > 20 {
                    return Err(Error::config("generator.k_steps", "must lie in 1..=20"));
                }
                if g.level < 2 || g.level > 16 {
                    return Err(Error::config("generator.level", "must lie in 2..=16"));
                }
            }
            Subcommand::Derivative => {
                let d = &c.derivative;
                positive("derivative.h0", d.h0)?;
                positive("derivative.max_step", d.max_step)?;
                positive("derivative.quad_h", d.quad_h)?;
                positive("derivative.identity_tol", d.identity_tol)?;
                positive("derivative.integral_tol", d.integral_tol)?;
                positive("derivative.radius", d.radius)?;
                if d.k_steps == 0 || d.k_steps > 20 {
                    return Err(Error::config("derivative.k_steps", "must lie in 1..=20"));
                }
                if d.quad_nodes < 3 || d.quad_nodes.is_multiple_of(2) {
                    return Err(Error::config(
                        "derivative.quad_nodes",
                        "must be odd and at least 3",
                    ));
                }
                if d.samples < 2 {
                    return Err(Error::config(
                        "derivative.samples",
                        "need at least 2 samples",
                    ));
                }
                if d.growth_times.len() < 2
                    || d.growth_times.iter().any(|t| !(t.is_finite() && *t >= 0.0))
                {
                    return Err(Error::config(
                        "derivative.growth_times",
                        "need at least two finite nonnegative times",
                    ));
                }
                if c.time.t / d.max_step > (1u64 << 16) as f64 {
                    return Err(Error::config(
                        "derivative.max_step",
                        "more than 2^16 steps requested",
                    ));
                }
            }
            Subcommand::CompareHjb => {
                let symmetric = matches!(
                    (family.kind(), family.lambdas()),
                    (FamilyKind::GaussianDrift, LambdaSet::Interval { lo, hi }) if *lo == -*hi
                );
                if !symmetric {
                    return Err(Error::config(
                        "family.lambda_interval",
                        "compare-hjb needs gaussian_drift with a symmetric interval [-a, a]",
                    ));
                }
                let h = &c.hjb;
                if !(h.cfl > 0.0 && h.cfl <= 1.0) {
                    return Err(Error::config(
                        "hjb.cfl",
                        format!("must lie in (0, 1], got {}", h.cfl),
                    ));
                }
                positive("hjb.tolerance", h.tolerance)?;
                if !(0.0..0.5).contains(&h.margin) {
                    return Err(Error::config("hjb.margin", "must lie in [0, 0.5)"));
                }
            }
            Subcommand::CompareOde => {
                if !matches!(family.kind(), FamilyKind::CompoundPoisson(_)) {
                    return Err(Error::config(
                        "family.family",
                        "compare-ode needs compound_poisson",
                    ));
                }
                let o = &c.ode;
                positive("ode.dt", o.dt)?;
                positive("ode.tolerance", o.tolerance)?;
                if o.level > 20 {
                    return Err(Error::config("ode.level", "at most 20"));
                }
                if !(0.0..0.5).contains(&o.margin) {
                    return Err(Error::config("ode.margin", "must lie in [0, 0.5)"));
                }
            }
            Subcommand::Counterexample => {
                if !matches!(family.kind(), FamilyKind::PureShift) {
                    return Err(Error::config(
                        "family.family",
                        "counterexample needs pure_shift",
                    ));
                }
                let s = &c.counterexample;
                if !(s.t > 0.0 && s.t < 1.0) {
                    return Err(Error::config(
                        "counterexample.t",
                        format!("must lie in (0, 1), got {}", s.t),
                    ));
                }
                positive("counterexample.min_ratio", s.min_ratio)?;
                positive("counterexample.control_tol", s.control_tol)?;
                epsilons = if s.epsilons.is_empty() {
                    default_epsilons(grid)
                } else {
                    s.epsilons.clone()
                };
                if epsilons.is_empty() {
                    let needed = (grid.len() / 2.5e-3).ceil() as usize + 1;
                    return Err(Error::config(
                        "counterexample.epsilons",
                        format!("the grid resolves no ε <= 1e-2; need at least {needed} nodes"),
                    ));
                }
                validate_epsilons(grid, &epsilons)?;
            }
            Subcommand::Verify => {}
        }
        let output_dir = out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| c.output_dir.clone());
        Ok(Experiment {
            seed: seed.unwrap_or(c.seeds),
            grid,
            norm,
            family,
            initial,
            output_dir,
            epsilons,
            config,
        })
    }
}

fn validate_epsilons(grid: Grid, epsilons: &[f64]) -> Result<()> {
    if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::config(
            "counterexample.epsilons",
            "ε values must be positive",
        ));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::config(
            "counterexample.epsilons",
            "ε values must be strictly decreasing",
        ));
    }
    let eps_min = epsilons[epsilons.len() - 1];
    if eps_min < 4.0 * grid.dx() {
        let needed = (grid.len() / (eps_min / 4.0)).ceil() as usize + 1;
        return Err(Error::config(
            "counterexample.epsilons",
            format!("ε = {eps_min} needs dx <= ε/4, i.e. at least {needed} nodes"),
        ));
    }
    Ok(())
}

/// One pass/fail line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            pass: measured <= tolerance,
            measured,
            tolerance,
        }
    }

    /// Passes when `measured >= tolerance`.
    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            pass: measured >= tolerance,
            measured,
            tolerance,
        }
    }

    /// Boolean outcome; `measured` is 1 for true.
    pub fn holds(name: impl Into<String>, holds: bool) -> Self {
        Check {
            name: name.into(),
            pass: holds,
            measured: if holds { 1.0 } else { 0.0 },
            tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(
        subcommand: Subcommand,
        config: Option<ExperimentConfig>,
        checks: Vec<Check>,
        seed: u64,
    ) -> Self {
        Report {
            subcommand: subcommand.name().to_string(),
            pass: checks.iter().all(|c| c.pass),
            config,
            checks,
            provenance: Provenance {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        if failed.is_empty() {
            format!("{}: PASS ({} checks)", self.subcommand, self.checks.len())
        } else {
            format!(
                "{}: FAIL ({} of {} checks failed: {})",
                self.subcommand,
                failed.len(),
                self.checks.len(),
                failed.join(", ")
            )
        }
    }
}

/// Named artifacts plus per-stage timings, written only after the work succeeds.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, String)>,
    timing: BTreeMap<String, f64>,
}

impl Artifacts {
    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn time<T>(&mut self, stage: &str, work: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = work()?;
        self.timing
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        Ok(out)
    }

    fn write(self, dir: &Path, report: &Report) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("report.json"), report.to_json())?;
        let timing = serde_json::to_string_pretty(&self.timing)?;
        fs::write(dir.join("timing.json"), timing)?;
        Ok(())
    }
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

/// Runs `sub` on a validated experiment, writes artifacts and returns the report.
pub fn execute(exp: &Experiment, sub: Subcommand, scale: Scale) -> Result<Report> {
    let mut art = Artifacts::default();
    let checks = match sub {
        Subcommand::Envelope => run_envelope(exp, &mut art)?,
        Subcommand::Generator => run_generator(exp, &mut art)?,
        Subcommand::Derivative => run_derivative(exp, &mut art)?,
        Subcommand::CompareHjb => run_compare_hjb(exp, &mut art)?,
        Subcommand::CompareOde => run_compare_ode(exp, &mut art)?,
        Subcommand::Counterexample => run_counterexample(exp, &mut art)?,
        Subcommand::Verify => {
            let timed = verify_suite_timed(scale, UpwindForm::Monotone);
            art.timing = timed.timing;
            timed.checks
        }
    };
    let report = Report::new(sub, Some(exp.config.clone()), checks, exp.seed);
    art.write(&exp.output_dir, &report)?;
    Ok(report)
}

fn run_envelope(exp: &Experiment, art: &mut Artifacts) -> Result<Vec<Check>> {
    let t = exp.config.time;
    let f = &exp.initial;
    let result = art.time("nisio_dyadic", || {
        nisio_dyadic(&exp.family, t.t, f, t.tol_rel, t.n_max, exp.norm)
    })?;
    let cert = art.time("upper_bound", || {
        check_upper_bound(&exp.family, t.t, &result, f, exp.norm)
    })?;
    let last_increment = result.levels.last().map_or(0.0, |r| r.increment_lp);
    let f_norm = lp_norm(f, exp.norm).max(f64::MIN_POSITIVE);
    let mut checks = vec![Check::at_most(
        "dyadic_convergence",
        last_increment / f_norm,
        t.tol_rel,
    )];
    if let Certificate::Available { margin, .. } = cert {
        checks.push(Check::at_most(
            "upper_bound_certificate",
            margin,
            1e-6 * (1.0 + f.sup_norm()),
        ));
    }
    art.add("envelope.json", result.to_json());
    art.add("final.csv", result.final_iterate.to_csv_string());
    art.add("convergence.csv", result.convergence_csv());
    Ok(checks)
}

fn run_generator(exp: &Experiment, art: &mut Artifacts) -> Result<Vec<Check>> {
    let g = exp.config.generator;
    let params = EnvelopeParams::new(Resolution::Level { level: g.level }, exp.norm);
    let est = art.time("generator_fd", || {
        generator_fd(&exp.family, &exp.initial, g.h0, g.k_steps, &params)
    })?;
    let e = &est.errors_vs_b;
    let worst_ratio = e.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    art.add("generator.csv", est.to_csv());
    art.add("generator_sup.csv", est.sup_generator.to_csv_string());
    art.add(
        "generator_extrapolated.csv",
        est.extrapolated.to_csv_string(),
    );
    Ok(vec![
        Check::at_most(
            "errors_strictly_decreasing",
            worst_ratio,
            1.0 - f64::EPSILON,
        ),
        Check::at_most("error_reduction", e[e.len() - 1] / e[0], g.reduction),
    ])
}

#[derive(Serialize)]
struct ProbeJson {
    t: f64,
    gap: f64,
    #[serde(rename = "L_estimate")]
    l_estimate: f64,
    #[serde(rename = "M")]
    m: f64,
    omega: f64,
    pass: bool,
}

fn run_derivative(exp: &Experiment, art: &mut Artifacts) -> Result<Vec<Check>> {
    let d = &exp.config.derivative;
    let t = exp.config.time.t;
    let fam = &exp.family;
    let f = &exp.initial;
    let params = EnvelopeParams::new(
        Resolution::MaxStep {
            max_step: d.max_step,
        },
        exp.norm,
    );
    let hs: Vec<f64> = (0..=d.k_steps).map(|k| d.h0 / (1u64 << k) as f64).collect();
    let b = fam.sup_generator(f);
    let probe = art.time("directional_derivative", || {
        directional_derivative(fam, t, f, &b, &hs, &params)
    })?;
    let identity = art.time("derivative_identity", || {
        derivative_identity_check(fam, t, f, &hs, &params, d.identity_tol)
    })?;
    let integral = art.time("integral_identity", || {
        integral_identity_check(fam, t, f, d.quad_nodes, d.quad_h, &params)
    })?;
    let lip = art.time("lipschitz_probe", || {
        lipschitz_probe(fam, t, f, d.radius, d.samples, &params, exp.seed)
    })?;
    let growth = art.time("growth_fit", || {
        let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
        let mut samples = vec![f.clone()];
        samples.extend((0..3).map(|_| smooth_noise(exp.grid, &mut rng)));
        growth_bound_estimate(fam, &d.growth_times, &samples, &params)
    })?;
    let identity_gap = identity
        .forward_vs_plus
        .max(identity.forward_vs_minus)
        .max(identity.plus_vs_minus);
    let checks = vec![
        Check::at_most("derivative_identity", identity_gap, d.identity_tol),
        Check::at_most("integral_identity", integral, d.integral_tol),
        Check::at_most(
            "plus_quotient_monotone",
            probe.monotonicity_violation,
            crate::calculus::QUOTIENT_TOL,
        ),
        Check::at_most(
            "one_sided_ordering",
            probe.ordering_violation,
            crate::calculus::QUOTIENT_TOL,
        ),
        Check::holds("ball_bound", lip.ball_holds),
    ];
    art.add(
        "probe.json",
        to_pretty(&ProbeJson {
            t,
            gap: probe.gap,
            l_estimate: lip.l_estimate,
            m: growth.m,
            omega: growth.omega,
            pass: checks.iter().all(|c| c.pass),
        }),
    );
    art.add("identity.json", to_pretty(&identity));
    art.add("derivative_plus.csv", probe.plus.to_csv_string());
    art.add("derivative_minus.csv", probe.minus.to_csv_string());
    Ok(checks)
}

fn run_compare_hjb(exp: &Experiment, art: &mut Artifacts) -> Result<Vec<Check>> {
    let time = exp.config.time;
    let h = exp.config.hjb;
    let lambda_bar = exp.family.lambdas().sup_abs();
    let env = art.time("nisio_dyadic", || {
        nisio_dyadic(
            &exp.family,
            time.t,
            &exp.initial,
            time.tol_rel,
            time.n_max,
            exp.norm,
        )
    })?;
    let oracle = art.time("hjb_upwind", || {
        hjb_upwind(&exp.initial, time.t, lambda_bar, h.cfl)
    })?;
    let cmp = compare(&oracle, &env.final_iterate, exp.norm, h.margin)?;
    art.add("comparison.json", to_pretty(&cmp));
    art.add("final.csv", env.final_iterate.to_csv_string());
    art.add("hjb.csv", oracle.to_csv_string());
    Ok(vec![Check::at_most(
        "envelope_vs_hjb",
        cmp.rel_err,
        h.tolerance,
    )])
}

fn run_compare_ode(exp: &Experiment, art: &mut Artifacts) -> Result<Vec<Check>> {
    let t = exp.config.time.t;
    let o = exp.config.ode;
    let env = art.time("dyadic_iterate", || {
        dyadic_iterate(&exp.family, t, o.level, &exp.initial)
    })?;
    let oracle = art.time("ode_reference", || {
        ode_reference(&exp.family, &exp.initial, t, o.dt)
    })?;
    let cmp = compare(&oracle, &env, exp.norm, o.margin)?;
    art.add("comparison.json", to_pretty(&cmp));
    art.add("final.csv", env.to_csv_string());
    art.add("ode.csv", oracle.to_csv_string());
    Ok(vec![Check::at_most(
        "envelope_vs_ode",
        cmp.rel_err,
        o.tolerance,
    )])
}

fn run_counterexample(exp: &Experiment, art: &mut Artifacts) -> Result<Vec<Check>> {
    let s = &exp.config.counterexample;
    let table = art.time("counterexample_scan", || {
        counterexample_scan_with(
            exp.grid,
            exp.norm.p(),
            s.t,
            &exp.epsilons,
            exp.family.lambdas().clone(),
        )
    })?;
    let ratios = table.ratios();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let controls: Vec<f64> = table.rows.iter().map(|r| r.control_lp).collect();
    let c_max = controls.iter().cloned().fold(0.0, f64::max);
    let c_min = controls.iter().cloned().fold(f64::INFINITY, f64::min);
    art.add("scan.csv", table.to_csv());
    art.add("scan.json", to_pretty(&table));
    let mut checks = vec![Check::at_most(
        "control_bounded",
        c_max / c_min - 1.0,
        s.control_tol,
    )];
    if !ratios.is_empty() {
        checks.push(Check::at_least(
            "norm_ratio_per_decade",
            min_ratio,
            s.min_ratio,
        ));
    }
    Ok(checks)
}

/// Checks and per-check timings of a verification run.
pub struct TimedChecks {
    pub checks: Vec<Check>,
    pub timing: BTreeMap<String, f64>,
}

/// Runs the invariant suite of every module with fixed seeds.
///
/// `hjb_form` selects the upwind stencil tested by the oracle monotonicity check; passing
/// [`UpwindForm::SignFlipped`] makes that check fail.
pub fn verify_suite(scale: Scale, hjb_form: UpwindForm) -> Report {
    let timed = verify_suite_timed(scale, hjb_form);
    Report::new(Subcommand::Verify, None, timed.checks, VERIFY_SEED)
}

pub const VERIFY_SEED: u64 = 7;

struct Suite {
    checks: Vec<Check>,
    timing: BTreeMap<String, f64>,
}

impl Suite {
    fn run(&mut self, name: &str, body: impl FnOnce() -> Result<Vec<Check>>) {
        let start = Instant::now();
        match body() {
            Ok(checks) => self.checks.extend(checks),
            Err(e) => self.checks.push(Check {
                name: format!("{name}: error {e}"),
                pass: false,
                measured: f64::NAN,
                tolerance: f64::NAN,
            }),
        }
        self.timing
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
    }
}

struct VerifySetup {
    grid: Grid,
    samples: usize,
    level: u32,
}

fn verify_families() -> Vec<(&'static str, KernelFamily)> {
    vec![
        (
            "gaussian",
            KernelFamily::gaussian_drift(LambdaSet::interval(-1.0, 1.0).unwrap()).unwrap(),
        ),
        (
            "poisson",
            KernelFamily::compound_poisson(
                LambdaSet::finite(vec![0.0, 1.0]).unwrap(),
                JumpDistribution::new(vec![(1.0, 0.5), (-0.5, 0.5)]).unwrap(),
            )
            .unwrap(),
        ),
    ]
}

fn rel_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.sub(b).sup_norm() / a.sup_norm().max(b.sup_norm()).max(f64::MIN_POSITIVE)
}

pub fn verify_suite_timed(scale: Scale, hjb_form: UpwindForm) -> TimedChecks {
    let setup = match scale {
        Scale::Small => VerifySetup {
            grid: Grid::new(-8.0, 8.0, 513).unwrap(),
            samples: 20,
            level: 5,
        },
        Scale::Full => VerifySetup {
            grid: Grid::new(-10.0, 10.0, 1025).unwrap(),
            samples: 100,
            level: 7,
        },
    };
    let mut suite = Suite {
        checks: Vec::new(),
        timing: BTreeMap::new(),
    };
    let g = setup.grid;
    let n = setup.samples;
    let l2 = PNorm::new(2.0).unwrap();
    let rng = |k: u64| ChaCha8Rng::seed_from_u64(VERIFY_SEED * 1_000_003 + k);

    suite.run("funcspace", || {
        let mut r = rng(1);
        let (mut mono, mut lin, mut homog, mut lub): (f64, f64, f64, usize) =
            (f64::NEG_INFINITY, 0.0, 0.0, 0);
        for _ in 0..n {
            let f = smooth_noise(g, &mut r);
            let y = smooth_noise(g, &mut r);
            let up = f.add(&y.map(f64::abs));
            let delta = r.gen_range(-3.0..3.0);
            mono = mono.max(
                pointwise_leq(&interp_shift(&f, delta), &interp_shift(&up, delta), 0.0)?.worst,
            );
            let (a, b): (f64, f64) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
            let lhs = interp_shift(&f.scale(a).add(&y.scale(b)), delta);
            let rhs = interp_shift(&f, delta)
                .scale(a)
                .add(&interp_shift(&y, delta).scale(b));
            for i in 0..g.n_nodes() {
                let scale = a.abs() * f.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()))
                    + b.abs() * y.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let ulps = (lhs.samples()[i] - rhs.samples()[i]).abs()
                    / (f64::EPSILON * scale.max(f64::MIN_POSITIVE));
                lin = lin.max(ulps);
            }
            let c = r.gen_range(-5.0..5.0);
            let nf = lp_norm(&f, l2);
            homog = homog.max((lp_norm(&f.scale(c), l2) - c.abs() * nf).abs() / (c.abs() * nf));
            let list = vec![f.clone(), y.clone(), up.clone()];
            let full = pointwise_max(&list)?;
            let permuted = pointwise_max(&[up.clone(), f.clone(), y.clone()])?;
            let reduced = pointwise_max(&list[..2])?;
            if full != permuted || !pointwise_leq(&reduced, &full, 0.0)?.holds {
                lub += 1;
            }
        }
        Ok(vec![
            Check::at_most("interp_shift_monotone", mono, 0.0),
            Check::at_most("interp_shift_linear_ulps", lin, 4.0),
            Check::at_most("lp_norm_homogeneous", homog, 1e-12),
            Check::at_most("pointwise_max_least_upper_bound", lub as f64, 0.0),
        ])
    });

    suite.run("kernels", || {
        let mut checks = Vec::new();
        let mut r = rng(2);
        for (name, fam) in verify_families() {
            let (mut lin, mut mono, mut dom): (f64, f64, f64) =
                (0.0, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for _ in 0..n {
                let f = smooth_noise(g, &mut r);
                let y = smooth_noise(g, &mut r);
                let lambdas = fam.lambdas().sample_points(1);
                let lambda = lambdas[r.gen_range(0..lambdas.len())];
                let h = r.gen_range(0.01..0.5);
                let (a, b): (f64, f64) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
                let s = |u: &GridFunction| fam.apply_member(lambda, h, u);
                let lhs = s(&f.scale(a).add(&y.scale(b)))?;
                let rhs = s(&f)?.scale(a).add(&s(&y)?.scale(b));
                lin = lin.max(rel_diff(&lhs, &rhs));
                let up = f.add(&y.map(f64::abs));
                mono = mono.max(pointwise_leq(&s(&f)?, &s(&up)?, 0.0)?.worst);
                let c = fam.upper_bound_c(h, &f, l2)?;
                dom = dom.max(pointwise_leq(&s(&f)?, &c, 0.0)?.worst);
            }
            // the window [-8, 8] stays out of reach of the truncated kernels at h = 0.05
            let wide = Grid::new(-40.0, 40.0, 801)?;
            let ones = GridFunction::constant(wide, 1.0);
            let interior = wide.interior(0.4);
            let mut mass: f64 = 0.0;
            for lambda in fam.lambdas().sample_points(1) {
                let out = fam.apply_member(lambda, 0.05, &ones)?;
                for v in &out.samples()[interior.clone()] {
                    mass = mass.max((v - 1.0).abs());
                }
            }
            // member semigroup law shrinks under refinement
            let splits: Vec<f64> = (0..8).map(|_| r.gen_range(0.05..0.55)).collect();
            let defect = |grid: Grid| -> Result<f64> {
                let f = bump(grid, 0.0, 1.5, 1.0);
                let lambda = fam.lambdas().sup();
                let whole = fam.apply_member(lambda, 0.6, &f)?;
                let mut worst: f64 = 0.0;
                for &s in &splits {
                    let split =
                        fam.apply_member(lambda, 0.6 - s, &fam.apply_member(lambda, s, &f)?)?;
                    worst = worst.max(lp_norm(&whole.sub(&split), l2) / lp_norm(&f, l2));
                }
                Ok(worst)
            };
            let coarse = defect(Grid::new(g.lower(), g.upper(), g.n_nodes())?)?;
            let fine = defect(Grid::new(g.lower(), g.upper(), 2 * g.n_nodes() - 1)?)?;
            let f = bump(g, 0.0, 1.5, 1.0);
            let flow = lp_norm(
                &fam.upper_bound_c(0.2, &fam.upper_bound_c(0.3, &f, l2)?, l2)?
                    .sub(&fam.upper_bound_c(0.5, &f, l2)?),
                l2,
            ) / lp_norm(&f, l2);
            checks.push(Check::at_most(format!("{name}_member_linear"), lin, 1e-10));
            checks.push(Check::at_most(format!("{name}_member_monotone"), mono, 0.0));
            checks.push(Check::at_most(format!("{name}_member_mass"), mass, 1e-10));
            checks.push(Check::at_most(
                format!("{name}_member_semigroup_refines"),
                fine,
                coarse.max(1e-11),
            ));
            checks.push(Check::at_most(format!("{name}_domination"), dom, 1e-9));
            checks.push(Check::at_most(
                format!("{name}_upper_bound_flow"),
                flow,
                1e-3,
            ));
        }
        Ok(checks)
    });

    suite.run("envelope", || {
        let mut checks = Vec::new();
        let mut r = rng(3);
        let t = 0.25;
        // dx = 1/128 divides t, so node-aligned partitions exist
        let unit_bump = bump(Grid::new(-8.0, 8.0, 2049)?, 0.0, 1.0, 1.0);
        for (name, fam) in verify_families() {
            let (mut mono, mut convex, mut homog, mut refine, mut exceed): (
                f64,
                f64,
                f64,
                f64,
                f64,
            ) = (
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                0.0,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            );
            for _ in 0..n {
                let f = smooth_noise(g, &mut r).scale(2.0);
                let y = smooth_noise(g, &mut r).scale(2.0);
                let up = f.add(&y.map(f64::abs));
                let s = |u: &GridFunction| dyadic_iterate(&fam, t, setup.level, u);
                mono = mono.max(pointwise_leq(&s(&f)?, &s(&up)?, 0.0)?.worst);
                let theta: f64 = r.gen_range(0.0..1.0);
                let h = r.gen_range(0.01..0.3);
                let mix = f.scale(theta).add(&y.scale(1.0 - theta));
                let rhs = step_j(&fam, h, &f)?
                    .scale(theta)
                    .add(&step_j(&fam, h, &y)?.scale(1.0 - theta));
                convex = convex.max(pointwise_leq(&step_j(&fam, h, &mix)?, &rhs, 0.0)?.worst);
                let rhs = s(&f)?.scale(theta).add(&s(&y)?.scale(1.0 - theta));
                convex = convex.max(pointwise_leq(&s(&mix)?, &rhs, 0.0)?.worst);
                let c = r.gen_range(0.1..5.0);
                homog = homog.max(rel_diff(
                    &step_j(&fam, h, &f.scale(c))?,
                    &step_j(&fam, h, &f)?.scale(c),
                ));
                // window offsets off the nodes re-interpolate a sup and lose an O(dx²)
                // defect (covered by the shrink check below); on node-aligned partitions
                // the drift family composes exactly
                let (coarse, fine, data) = match fam.kind() {
                    FamilyKind::GaussianDrift => {
                        let dx = unit_bump.grid().dx();
                        let coarse = aligned_partition(&mut r, t, 3, dx);
                        let fine = coarse.merge(&aligned_partition(&mut r, t, 4, dx))?;
                        (coarse, fine, unit_bump.clone())
                    }
                    _ => {
                        let coarse = random_partition(&mut r, t, 3);
                        let fine = coarse.merge(&random_partition(&mut r, t, 4))?;
                        (coarse, fine, f.clone())
                    }
                };
                let jc = apply_partition(&fam, &coarse, &data)?;
                let jf = apply_partition(&fam, &fine, &data)?;
                refine = refine.max(pointwise_leq(&jc, &jf, 0.0)?.worst);
            }
            // random partitions never exceed the converged envelope
            let f = bump(g, 0.0, 1.5, 1.0);
            let tol_rel = 1e-3;
            let result = nisio_dyadic(&fam, t, &f, tol_rel, 12, l2)?;
            let slack = tol_rel * lp_norm(&f, l2);
            let min_step = t / (1u64 << result.levels_used) as f64;
            for _ in 0..n {
                let pi = random_partition_with_min_step(&mut r, t, min_step);
                let j = apply_partition(&fam, &pi, &f)?;
                exceed = exceed.max(pointwise_leq(&j, &result.final_iterate, 0.0)?.worst - slack);
            }
            checks.push(Check::at_most(
                format!("{name}_envelope_monotone"),
                mono,
                0.0,
            ));
            checks.push(Check::at_most(
                format!("{name}_envelope_convex"),
                convex,
                1e-10,
            ));
            checks.push(Check::at_most(
                format!("{name}_envelope_homogeneous"),
                homog,
                1e-10,
            ));
            checks.push(Check::at_most(
                format!("{name}_refinement_monotone"),
                refine,
                1e-9,
            ));
            checks.push(Check::at_most(
                format!("{name}_random_partition_below_envelope"),
                exceed,
                0.0,
            ));
        }
        // on signed data the refinement defect is interpolation error and halves at least
        // under grid halving
        let signed_defect = |grid: Grid| -> Result<f64> {
            let f = bump(grid, -1.0, 1.0, 1.0).add(&bump(grid, 1.0, 1.0, -0.7));
            let fam = &verify_families()[0].1;
            let mut r = rng(8);
            let mut worst: f64 = 0.0;
            for _ in 0..10 {
                let coarse = random_partition(&mut r, t, 3);
                let fine = coarse.merge(&random_partition(&mut r, t, 4))?;
                let jc = apply_partition(fam, &coarse, &f)?;
                let jf = apply_partition(fam, &fine, &f)?;
                worst = worst.max(pointwise_leq(&jc, &jf, 0.0)?.worst);
            }
            Ok(worst)
        };
        let coarse = signed_defect(g)?;
        let fine = signed_defect(Grid::new(g.lower(), g.upper(), 2 * g.n_nodes() - 1)?)?;
        checks.push(Check::at_most(
            "signed_refinement_defect_shrinks",
            fine,
            0.5 * coarse.max(1e-300),
        ));
        // semigroup defect shrinks with the level
        let fam = &verify_families()[0].1;
        let f = bump(g, 0.0, 1.5, 1.0);
        let defect = |level: u32| -> Result<f64> {
            let whole = dyadic_iterate(fam, 0.5, level, &f)?;
            let half = dyadic_iterate(fam, 0.25, level, &f)?;
            let twice = dyadic_iterate(fam, 0.25, level, &half)?;
            Ok(lp_norm(&whole.sub(&twice), l2) / lp_norm(&f, l2))
        };
        let coarse = defect(setup.level)?;
        let fine = defect(setup.level + 1)?;
        checks.push(Check::at_most("semigroup_defect_shrinks", fine, coarse));
        Ok(checks)
    });

    suite.run("calculus", || {
        let mut checks = Vec::new();
        let mut r = rng(4);
        let params = EnvelopeParams::new(Resolution::Level { level: setup.level }, l2);
        let hs = [0.5, 0.1, 0.02, 0.004];
        for (name, fam) in verify_families() {
            let (mut quot, mut order, mut scaling): (f64, f64, f64) =
                (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0);
            let mut ball = true;
            for k in 0..n {
                let x = smooth_noise(g, &mut r).scale(2.0);
                let y = smooth_noise(g, &mut r).scale(2.0);
                let probe = directional_derivative(&fam, 0.25, &x, &y, &hs, &params)?;
                quot = quot.max(probe.monotonicity_violation);
                order = order.max(probe.ordering_violation);
                let c = r.gen_range(0.1..5.0);
                let q = generator_fd(&fam, &x, 0.1, 1, &params)?;
                let qc = generator_fd(&fam, &x.scale(c), 0.1, 1, &params)?;
                for (a, b) in q.quotients.iter().zip(&qc.quotients) {
                    scaling = scaling.max(rel_diff(&a.scale(c), b));
                }
                if k < 4 {
                    ball &=
                        lipschitz_probe(&fam, 0.25, &x, 1.0, 4, &params, VERIFY_SEED + k as u64)?
                            .ball_holds;
                }
            }
            let closed = closedness_regression(&fam, g, 1.5, 0.05, 5, &params)?;
            checks.push(Check::at_most(
                format!("{name}_plus_quotient_monotone"),
                quot,
                crate::calculus::QUOTIENT_TOL,
            ));
            checks.push(Check::at_most(
                format!("{name}_one_sided_ordering"),
                order,
                crate::calculus::QUOTIENT_TOL,
            ));
            checks.push(Check::at_most(
                format!("{name}_quotient_scaling"),
                scaling,
                1e-10,
            ));
            checks.push(Check::holds(
                format!("{name}_closedness_regression"),
                closed.pass,
            ));
            checks.push(Check::holds(format!("{name}_ball_bound"), ball));
        }
        Ok(checks)
    });

    suite.run("reference", || {
        let mut r = rng(5);
        let hjb_grid = Grid::new(-8.0, 8.0, 65)?;
        let (mut mono, mut constants): (f64, f64) = (f64::NEG_INFINITY, 0.0);
        for _ in 0..n {
            let f = smooth_noise(hjb_grid, &mut r);
            let up = raise_one_node(&f, &mut r);
            let a = hjb_upwind_with(&f, 0.2, 4.0, 0.9, hjb_form)?;
            let b = hjb_upwind_with(&up, 0.2, 4.0, 0.9, hjb_form)?;
            mono = mono.max(pointwise_leq(&a, &b, 0.0)?.worst);
        }
        let c = GridFunction::constant(hjb_grid, 1.7);
        let out = hjb_upwind_with(&c, 0.05, 1.0, 0.9, hjb_form)?;
        for v in &out.samples()[hjb_grid.interior(0.25)] {
            constants = constants.max((v - 1.7).abs());
        }
        // RK4 error ratio under step halving on a single-member family
        let single = KernelFamily::compound_poisson(
            LambdaSet::finite(vec![1.0])?,
            JumpDistribution::new(vec![(0.5, 0.5), (-0.25, 0.5)])?,
        )?;
        let og = Grid::new(-4.0, 4.0, 129)?;
        let f = bump(og, 0.0, 1.0, 1.0);
        let exact = ode_reference(&single, &f, 1.0, 1.0 / 512.0)?;
        let e1 = lp_norm(&ode_reference(&single, &f, 1.0, 0.25)?.sub(&exact), l2);
        let e2 = lp_norm(&ode_reference(&single, &f, 1.0, 0.125)?.sub(&exact), l2);
        let ratio = e1 / e2;
        let scan_grid = Grid::new(-2.0, 2.0, 16_001)?;
        let table = counterexample_scan_with(
            scan_grid,
            2.0,
            0.5,
            &[1e-1, 1e-2, 1e-3],
            LambdaSet::interval(-1.0, 1.0)?,
        )?;
        let min_ratio = table.ratios().into_iter().fold(f64::INFINITY, f64::min);
        Ok(vec![
            Check::at_most("hjb_monotone", mono, 1e-12),
            Check::at_most("hjb_preserves_constants", constants, 1e-12),
            Check::at_least("ode_rk4_halving_ratio_low", ratio, 12.0),
            Check::at_most("ode_rk4_halving_ratio_high", ratio, 20.0),
            Check::at_least("counterexample_norms_nondecreasing", min_ratio, 1.0),
        ])
    });

    suite.run("fixtures", || {
        let mut r = rng(6);
        let f = smooth_noise(Grid::new(-8.0, 8.0, 65)?, &mut r);
        let mut mutant = f64::NEG_INFINITY;
        for _ in 0..4 {
            let up = raise_one_node(&f, &mut r);
            let a = hjb_upwind_with(&f, 0.2, 4.0, 0.9, UpwindForm::SignFlipped)?;
            let b = hjb_upwind_with(&up, 0.2, 4.0, 0.9, UpwindForm::SignFlipped)?;
            mutant = mutant.max(pointwise_leq(&a, &b, 0.0)?.worst);
        }
        let empty = FamilySpec {
            family: "gaussian_drift".into(),
            lambda_interval: None,
            lambda_list: Some(Vec::new()),
            jump_atoms: None,
        };
        let rejected = matches!(empty.build(), Err(Error::Config { .. }));
        Ok(vec![
            Check::at_least("mutant_upwind_detected", mutant, 1e-6),
            Check::holds("empty_family_list_rejected", rejected),
        ])
    });

    TimedChecks {
        checks: suite.checks,
        timing: suite.timing,
    }
}

/// Random partition of `[0, t]` whose increments are all at least `min_step`.
/// `f` plus a positive spike at one random interior node; smooth raises cannot expose a
/// negative stencil weight.
fn raise_one_node(f: &GridFunction, r: &mut ChaCha8Rng) -> GridFunction {
    let n = f.grid().n_nodes();
    let mut v = f.samples().to_vec();
    v[r.gen_range(n / 4..3 * n / 4)] += r.gen_range(0.1..1.0);
    GridFunction::new(*f.grid(), v).expect("finite samples")
}

fn random_partition_with_min_step(r: &mut ChaCha8Rng, t: f64, min_step: f64) -> Partition {
    let max_pieces = ((t / min_step).floor() as usize).max(1);
    let pieces = r.gen_range(1..=max_pieces);
    let spare = t - pieces as f64 * min_step;
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| r.gen_range(0.0..=spare)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut times = vec![0.0];
    for (k, c) in cuts.iter().enumerate() {
        times.push((k + 1) as f64 * min_step + c);
    }
    times.push(t);
    Partition::new(times).expect("increments are at least min_step")
}

fn random_partition(r: &mut ChaCha8Rng, t: f64, interior: usize) -> Partition {
    let mut times: Vec<f64> = (0..interior).map(|_| r.gen_range(0.0..t)).collect();
    times.push(0.0);
    times.push(t);
    times.sort_by(f64::total_cmp);
    times.dedup();
    Partition::new(times).expect("sorted distinct times")
}

/// Random partition of `[0, t]` whose times are multiples of `dx`; `t` must be one too.
fn aligned_partition(r: &mut ChaCha8Rng, t: f64, interior: usize, dx: f64) -> Partition {
    let cells = (t / dx).round() as u64;
    let mut times: Vec<f64> = (0..interior)
        .map(|_| r.gen_range(1..cells) as f64 * dx)
        .collect();
    times.push(0.0);
    times.push(t);
    times.sort_by(f64::total_cmp);
    times.dedup();
    Partition::new(times).expect("sorted distinct times")
}

/// Outcome of [`run`]: exit code plus the line printed to the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub message: String,
}

/// Parses, validates and executes; never panics on bad input.
pub fn run(
    sub: Subcommand,
    config_path: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    scale: Scale,
) -> Outcome {
    let fail = |e: Error| Outcome {
        exit_code: EXIT_CONFIG,
        message: format!("error: {e}"),
    };
    let exp = match (sub, config_path) {
        (Subcommand::Verify, None) => None,
        (_, None) => {
            return fail(Error::config(
                "--config",
                "a configuration file is required",
            ))
        }
        (_, Some(path)) => match ExperimentConfig::from_path(path)
            .and_then(|c| Experiment::validate(c, sub, out, seed))
        {
            Ok(exp) => Some(exp),
            Err(e) => return fail(e),
        },
    };
    let result = match exp {
        Some(exp) => execute(&exp, sub, scale),
        None => {
            let Some(dir) = out else {
                return fail(Error::config(
                    "--out",
                    "verify without --config needs --out",
                ));
            };
            let timed = verify_suite_timed(scale, UpwindForm::Monotone);
            let report = Report::new(
                Subcommand::Verify,
                None,
                timed.checks,
                seed.unwrap_or(VERIFY_SEED),
            );
            let art = Artifacts {
                files: Vec::new(),
                timing: timed.timing,
            };
            art.write(dir, &report).map(|_| report)
        }
    };
    match result {
        Ok(report) => Outcome {
            exit_code: report.exit_code(),
            message: report.summary(),
        },
        Err(e) => Outcome {
            exit_code: EXIT_CHECK_FAILED,
            message: format!("error: {e}"),
        },
    }
}
