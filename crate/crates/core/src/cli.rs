//! The `spade` command-line tool.

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use crate::config::{
    ConfigError, OutputFormat, RunConfig, ScenarioKind, Spacing, SweepConfig, SweepParameter,
};
use crate::direct::{di_fisher_information, di_total_probability, DirectOptions, ImagingGrid};
use crate::dynamics::{averaged_mode_probabilities, DynamicsModel};
use crate::error::SpadeError;
use crate::estimation::{
    average_interchange_check, c_total, crb_from_total, default_step_x, fisher_information,
    small_separation_limit, star_parameters, DerivativeMethod, FisherOptions, StarPair,
    CROSS_CHECK_TOLERANCE,
};
use crate::montecarlo::{
    crb_consistency, mle_estimate, sample_counts, ExperimentConfig, Likelihood, PhotonCounts,
};
use crate::optics::{Cutoff, SourceGeometry};

/// Version of the CSV and JSON table layouts.
pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "spade",
    version,
    about = "Fisher information and Cramér-Rao bounds for separating two moving point sources"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fisher information per mode along a separation sweep.
    FiCurve,
    /// Small-separation limit against the axis offset or the star mass.
    Limit {
        /// Sweep axis.
        #[arg(long, value_enum)]
        over: Option<LimitAxis>,
    },
    /// Fisher information for the mean separation of the three oscillation models.
    Oscillation,
    /// Mode sorting against perfect direct imaging along a separation sweep.
    CompareDirect,
    /// Repeated simulate-and-estimate runs compared with the Cramér-Rao bound.
    Simulate {
        /// Photons per run.
        #[arg(long)]
        photons: Option<u64>,
        /// Number of independent runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Write the counts of a single run instead of estimating.
        #[arg(long)]
        counts_only: bool,
    },
    /// Maximum-likelihood estimate from a counts file.
    Estimate {
        /// Counts file written by `simulate --counts-only`.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LimitAxis {
    Kappa,
    Mass,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Highest resolved index M.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Orientation or separation dynamics.
    #[arg(long, global = true, value_enum)]
    pub scenario: Option<ScenarioKind>,
    /// Azimuthal angle in radians.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Polar angle in radians.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Relative oscillation amplitude.
    #[arg(long, global = true)]
    pub a1: Option<f64>,
    /// Absolute oscillation amplitude in units of w.
    #[arg(long, global = true)]
    pub a2: Option<f64>,
    /// Separation `d/2w` for single-point commands.
    #[arg(long, global = true)]
    pub x: Option<f64>,
    /// Relative brightness of the first source.
    #[arg(long, global = true)]
    pub v: Option<f64>,
    /// Optical axis offset ξ/x; mutually exclusive with --xi.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Optical axis offset in units of w.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub xi: Option<f64>,
    /// First sweep value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub from: Option<f64>,
    /// Last sweep value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub to: Option<f64>,
    /// Number of sweep points.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Sweep spacing.
    #[arg(long, global = true, value_enum)]
    pub spacing: Option<Spacing>,
    /// Likelihood used by the estimator.
    #[arg(long, global = true, value_enum)]
    pub likelihood: Option<Likelihood>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] SpadeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{} check(s) failed: {}", .0.len(), .0.join(", "))]
    CheckFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(SpadeError::InvalidInput { .. }) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl CommonArgs {
    /// Load the file (if any) and apply flag overrides.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = self.load()?;
        self.apply(&mut c);
        Ok(c)
    }

    pub fn load(&self) -> CliResult<RunConfig> {
        Ok(match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        })
    }

    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(p) = &self.out {
            c.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            c.output.format = f;
        }
        if let Some(m) = self.modes {
            c.modes = m;
        }
        if let Some(j) = self.jobs {
            c.jobs = Some(j);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(k) = self.scenario {
            c.scenario.kind = k;
        }
        set(&mut c.scenario.phi, self.phi);
        set(&mut c.scenario.theta, self.theta);
        set(&mut c.scenario.a1, self.a1);
        set(&mut c.scenario.a2, self.a2);
        set(&mut c.geometry.x, self.x);
        set(&mut c.geometry.v, self.v);
        if self.kappa.is_some() {
            c.geometry.kappa = self.kappa;
            c.geometry.xi = None;
        }
        if self.xi.is_some() {
            c.geometry.xi = self.xi;
            c.geometry.kappa = None;
        }
        set(&mut c.sweep.from, self.from);
        set(&mut c.sweep.to, self.to);
        if let Some(p) = self.points {
            c.sweep.points = p;
        }
        if let Some(s) = self.spacing {
            c.sweep.spacing = s;
        }
        if let Some(l) = self.likelihood {
            c.experiment.likelihood = l;
        }
    }
}

fn set(slot: &mut f64, value: Option<f64>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_sig(*v, 9),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Flag(b) => json!(b),
        }
    }
}

/// Column-oriented output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub command: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# spade {} format-version {}\n",
            self.command, FORMAT_VERSION
        );
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self
                    .columns
                    .iter()
                    .cloned()
                    .zip(r.iter().map(Cell::json))
                    .collect();
                Value::Object(m)
            })
            .collect();
        json!({ "format_version": FORMAT_VERSION, "command": self.command, "columns": self.columns, "rows": rows })
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{:.*e}", digits - 1, v);
        match s.split_once('e') {
            Some((mant, e)) => {
                let mant = if mant.contains('.') {
                    mant.trim_end_matches('0').trim_end_matches('.')
                } else {
                    mant
                };
                format!("{mant}e{e}")
            }
            None => s,
        }
    }
}

/// What a command produced.
pub enum Output {
    Table(Table),
    Document(Value),
}

impl Output {
    fn render(&self, format: OutputFormat) -> String {
        match (self, format) {
            (Output::Table(t), OutputFormat::Csv) => t.to_csv(),
            (Output::Table(t), OutputFormat::Json) => pretty(&t.to_json()),
            (Output::Document(v), _) => pretty(v),
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

fn sweep_rows<F>(xs: &[f64], f: F) -> CliResult<Vec<Vec<Cell>>>
where
    F: Fn(f64) -> CliResult<Vec<Cell>> + Sync,
{
    xs.par_iter().map(|&x| f(x)).collect()
}

fn fisher_options(c: &RunConfig) -> FisherOptions {
    FisherOptions {
        derivative: DerivativeMethod::Analytic,
        quadrature: c.quadrature,
        cross_check: true,
    }
}

fn x_sweep(c: &RunConfig) -> CliResult<Vec<f64>> {
    if c.sweep.parameter != SweepParameter::X {
        return Err(CliError::Usage(
            "this command sweeps the separation; set sweep.parameter = \"x\"".into(),
        ));
    }
    Ok(c.sweep.values())
}

fn warn_model(model: &DynamicsModel) {
    for w in model.warnings() {
        eprintln!("warning: {w}");
    }
}

pub fn cmd_fi_curve(c: &RunConfig) -> CliResult<Table> {
    if c.scenario.is_oscillation() {
        return Err(CliError::Usage("fi-curve expects an orientation scenario; use `oscillation` for separation oscillations".into()));
    }
    let xs = x_sweep(c)?;
    let cutoff = c.cutoff();
    warn_model(&c.scenario.model_at(c.geometry.x)?);
    let modes: Vec<_> = cutoff.modes().collect();
    let mut columns = vec!["x".to_string()];
    columns.extend(modes.iter().map(|m| format!("F_{m}")));
    columns.extend(["F_overflow".to_string(), "F_total".to_string()]);
    let opts = fisher_options(c);
    let rows = sweep_rows(&xs, |x| {
        let model = c.scenario.model_at(x)?;
        let g = c.geometry.at(x, &c.scenario);
        let f = fisher_information(&model, &g, cutoff, &opts)?;
        let mut row = vec![Cell::Num(x)];
        row.extend(modes.iter().map(|m| Cell::Num(f.scaled_mode(*m))));
        row.push(Cell::Num(f.overflow * g.w * g.w));
        row.push(Cell::Num(f.scaled_total()));
        Ok(row)
    })?;
    Ok(Table {
        command: "fi-curve",
        columns,
        rows,
    })
}

fn limit_axis(c: &RunConfig, over: Option<LimitAxis>) -> LimitAxis {
    over.unwrap_or(match c.sweep.parameter {
        SweepParameter::M1 => LimitAxis::Mass,
        _ => LimitAxis::Kappa,
    })
}

/// Replace a separation sweep with the default range of the limit axis.
pub fn limit_sweep_defaults(c: &mut RunConfig, over: Option<LimitAxis>) {
    let (parameter, from, to, points) = match limit_axis(c, over) {
        LimitAxis::Kappa => (SweepParameter::Kappa, -0.95, 0.95, 39),
        LimitAxis::Mass => (SweepParameter::M1, 0.5, 1.5, 101),
    };
    if c.sweep.parameter != parameter {
        c.sweep = SweepConfig {
            parameter,
            from,
            to,
            points,
            spacing: Spacing::Linear,
        };
    }
}

pub fn cmd_limit(c: &RunConfig, over: Option<LimitAxis>) -> CliResult<Table> {
    let axis = limit_axis(c, over);
    let wanted = match axis {
        LimitAxis::Kappa => SweepParameter::Kappa,
        LimitAxis::Mass => SweepParameter::M1,
    };
    if c.sweep.parameter != wanted {
        return Err(CliError::Usage(
            format!("sweep.parameter must be {wanted:?} for this limit table").to_lowercase(),
        ));
    }
    let sweep = c.sweep;
    sweep.validate()?;
    let cval = match c.limit.c {
        Some(v) => v,
        None => c_total(&c.scenario.model_at(c.geometry.x)?, &c.quadrature)?,
    };
    let mut rows = Vec::new();
    match axis {
        LimitAxis::Kappa => {
            for &v in &c.limit.brightness {
                for kappa in sweep.values() {
                    rows.push(vec![
                        Cell::Num(kappa),
                        Cell::Num(v),
                        Cell::Num(cval),
                        Cell::Num(small_separation_limit(kappa, v, cval)?),
                    ]);
                }
            }
            Ok(Table {
                command: "limit",
                columns: ["kappa", "v", "C", "F_limit"].map(String::from).to_vec(),
                rows,
            })
        }
        LimitAxis::Mass => {
            for m1 in sweep.values() {
                let (kappa, v) = star_parameters(StarPair { m1, m2: c.limit.m2 })?;
                rows.push(vec![
                    Cell::Num(m1),
                    Cell::Num(c.limit.m2),
                    Cell::Num(kappa),
                    Cell::Num(v),
                    Cell::Num(small_separation_limit(kappa, v, cval)?),
                ]);
            }
            Ok(Table {
                command: "limit",
                columns: ["m1", "m2", "kappa", "v", "F_limit"]
                    .map(String::from)
                    .to_vec(),
                rows,
            })
        }
    }
}

pub fn cmd_oscillation(c: &RunConfig) -> CliResult<Table> {
    let xs = x_sweep(c)?;
    let cutoff = c.cutoff();
    let opts = fisher_options(c);
    let (a1, a2) = (c.scenario.a1, c.scenario.a2);
    let (phi, theta) = (c.scenario.phi, c.scenario.theta);
    let build = |kind: ScenarioKind, x: f64| {
        let s = crate::config::ScenarioConfig {
            kind,
            ..c.scenario.clone()
        };
        s.model_at(x)
    };
    let rows = sweep_rows(&xs, |x| {
        let g = SourceGeometry::from_x(x, 1.0)
            .with_angles(phi, theta)
            .with_brightness(c.geometry.v);
        let mut row = vec![Cell::Num(x)];
        for kind in [
            ScenarioKind::ProportionalOscillation,
            ScenarioKind::FixedAmplitudeOscillation,
            ScenarioKind::ScaledAmplitudeOscillation,
        ] {
            let f = fisher_information(&build(kind, x)?, &g, cutoff, &opts)?;
            row.push(Cell::Num(f.scaled_total()));
        }
        row.push(Cell::Flag(a2 > x));
        Ok(row)
    })?;
    Ok(Table {
        command: "oscillation",
        columns: vec![
            "x_mean".into(),
            format!("F_proportional_a1={}", format_sig(a1, 6)),
            format!("F_fixed_a2={}", format_sig(a2, 6)),
            format!("F_scaled_a2={}x", format_sig(a1, 6)),
            "fixed_sources_interchange".into(),
        ],
        rows,
    })
}

pub fn cmd_compare_direct(c: &RunConfig) -> CliResult<Table> {
    let xs = x_sweep(c)?;
    let cutoff = c.cutoff();
    let opts = fisher_options(c);
    let dopts = DirectOptions {
        quadrature: c.quadrature,
        ..Default::default()
    };
    let rows = sweep_rows(&xs, |x| {
        let model = c.scenario.model_at(x)?;
        let g = c.geometry.at(x, &c.scenario);
        let spade = fisher_information(&model, &g, cutoff, &opts)?.scaled_total();
        let direct = di_fisher_information(&model, &g, &dopts)?.scaled_total();
        Ok(vec![
            Cell::Num(x),
            Cell::Num(spade),
            Cell::Num(direct),
            Cell::Num(spade / direct),
        ])
    })?;
    Ok(Table {
        command: "compare-direct",
        columns: ["x", "F_spade", "F_direct", "ratio"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

fn experiment(c: &RunConfig) -> CliResult<ExperimentConfig> {
    let x = c.geometry.x;
    Ok(ExperimentConfig {
        photons: c.experiment.photons,
        runs: c.experiment.runs,
        seed: c.seed,
        model: c.scenario.model_at(x)?,
        geometry: c.geometry.at(x, &c.scenario),
        cutoff: c.cutoff(),
        estimator: c.experiment.estimator(),
        quadrature: c.quadrature,
    })
}

pub fn cmd_simulate(c: &RunConfig, counts_only: bool) -> CliResult<Output> {
    let cfg = experiment(c)?;
    warn_model(&cfg.model);
    if counts_only {
        let counts = sample_counts(&cfg)?;
        return Ok(Output::Document(
            serde_json::to_value(counts).map_err(|e| CliError::Usage(e.to_string()))?,
        ));
    }
    let report = crb_consistency(&cfg)?;
    match c.output.format {
        OutputFormat::Json => Ok(Output::Document(
            serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?,
        )),
        OutputFormat::Csv => Ok(Output::Table(Table {
            command: "simulate",
            columns: [
                "scenario",
                "photons",
                "runs",
                "seed",
                "modes",
                "d_true",
                "d_hat_mean",
                "d_hat_std",
                "bias",
                "crb",
                "crb_truncated",
                "efficiency",
                "flags",
            ]
            .map(String::from)
            .to_vec(),
            rows: vec![vec![
                Cell::Text(report.scenario.clone()),
                Cell::Int(report.photons),
                Cell::Int(report.runs as u64),
                Cell::Int(report.seed),
                Cell::Int(report.modes as u64),
                Cell::Num(report.d_true),
                Cell::Num(report.d_hat_mean),
                Cell::Num(report.d_hat_std),
                Cell::Num(report.bias),
                Cell::Num(report.crb),
                Cell::Num(report.crb_truncated),
                Cell::Num(report.efficiency),
                Cell::Text(report.flags.join(";")),
            ]],
        })),
    }
}

pub fn cmd_estimate(c: &RunConfig, counts_path: Option<&PathBuf>) -> CliResult<Value> {
    let path = counts_path
        .or(c.experiment.counts.as_ref())
        .ok_or_else(|| {
            CliError::Usage("estimate needs a counts file (--counts or experiment.counts)".into())
        })?;
    let text = std::fs::read_to_string(path)?;
    let counts: PhotonCounts = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let x_ref = c.geometry.x;
    let model = c.scenario.model_at(x_ref)?;
    let known = c.geometry.at(x_ref, &c.scenario);
    let r = mle_estimate(
        &counts,
        &model,
        &known,
        &c.experiment.estimator(),
        &c.quadrature,
    )?;
    let crb = fisher_information(
        &model,
        &known.with_x(r.x_hat),
        counts.cutoff,
        &FisherOptions::default(),
    )
    .ok()
    .and_then(|f| {
        let total = match c.experiment.likelihood {
            Likelihood::WithOverflow => f.total_with_overflow(),
            Likelihood::DetectedOnly => f.total,
        };
        crb_from_total(total, counts.total()).ok()
    });
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "scenario": model.name(),
        "photons": counts.total(),
        "x_hat": r.x_hat,
        "d_hat": r.d_hat,
        "log_likelihood": r.log_likelihood,
        "crb_at_estimate": crb,
        "flags": r.flags,
    }))
}

struct CheckRow {
    name: &'static str,
    value: f64,
    expected: f64,
    tolerance: f64,
}

impl CheckRow {
    fn passed(&self) -> bool {
        (self.value - self.expected).abs() <= self.tolerance
    }
}

fn run_checks(c: &RunConfig) -> crate::error::Result<Vec<CheckRow>> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};
    let q = c.quadrature;
    let plain = FisherOptions {
        quadrature: q,
        ..Default::default()
    };
    let wf = |model: &DynamicsModel, g: &SourceGeometry, max: usize| -> crate::error::Result<f64> {
        Ok(fisher_information(model, g, Cutoff::per_index(max), &plain)?.scaled_total())
    };
    let at = |x: f64| SourceGeometry::from_x(x, 1.0);
    let mut rows = Vec::new();

    let g = at(1e-3).with_angles(FRAC_PI_4, FRAC_PI_2);
    rows.push(CheckRow {
        name: "quantum-limit",
        value: wf(&DynamicsModel::static_at(FRAC_PI_4, FRAC_PI_2), &g, 1)?,
        expected: 1.0,
        tolerance: 1e-3,
    });

    let mut worst: f64 = 0.0;
    for theta in [FRAC_PI_6, FRAC_PI_3, FRAC_PI_2] {
        let s2 = theta.sin().powi(2);
        for x in [0.1, 0.5, 1.0, 1.5] {
            let r = x * x * s2;
            let closed = s2 / 8.0 * (-r).exp() * (r.powi(3) + 4.0 * r * r - 4.0 * r + 8.0);
            worst = worst.max(
                ((wf(&DynamicsModel::phi_rotation(theta), &at(x), 1)? - closed) / closed).abs(),
            );
        }
    }
    rows.push(CheckRow {
        name: "in-plane-rotation-closed-form",
        value: worst,
        expected: 0.0,
        tolerance: 1e-6,
    });

    let rot = DynamicsModel::phi_rotation(FRAC_PI_2);
    let cc = c_total(&rot, &q)?;
    let mut worst: f64 = 0.0;
    for kappa in [-0.5, 0.0, 0.5] {
        for v in [0.25, 0.5, 0.75] {
            let g = at(1e-3).with_brightness(v).with_axis_offset(kappa * 1e-3);
            let l = small_separation_limit(kappa, v, cc)?;
            worst = worst.max(((wf(&rot, &g, 5)? - l) / l).abs());
        }
    }
    rows.push(CheckRow {
        name: "shifted-axis-limit",
        value: worst,
        expected: 0.0,
        tolerance: 1e-2,
    });

    let (kappa, v) = star_parameters(StarPair { m1: 1.2, m2: 1.0 })?;
    rows.push(CheckRow {
        name: "star-pair-limit",
        value: small_separation_limit(kappa, v, 1.0)?,
        expected: 0.99231,
        tolerance: 1e-4,
    });

    for (name, model, expected) in [
        (
            "polar-rotation-limit",
            DynamicsModel::theta_rotation(0.0),
            0.5,
        ),
        (
            "uniform-sphere-limit",
            DynamicsModel::UniformSphere,
            2.0 / 3.0,
        ),
        (
            "proportional-oscillation-limit",
            DynamicsModel::proportional_oscillation(0.25),
            1.03125,
        ),
        (
            "scaled-amplitude-limit",
            DynamicsModel::fixed_amplitude_oscillation(0.25e-3),
            2.0 / (2.0 + 0.0625),
        ),
    ] {
        rows.push(CheckRow {
            name,
            value: wf(&model, &at(1e-3), 5)?,
            expected,
            tolerance: 5e-3,
        });
    }

    let mut worst: f64 = 0.0;
    for model in [
        rot.clone(),
        DynamicsModel::phi_oscillation(FRAC_PI_2, FRAC_PI_4),
        DynamicsModel::phi_rotation(FRAC_PI_3),
    ] {
        for x in [0.1, 0.5, 1.0] {
            worst = worst.max(
                average_interchange_check(&model, &at(x), Cutoff::per_index(1), &q)?.discrepancy,
            );
        }
    }
    rows.push(CheckRow {
        name: "average-of-static-information",
        value: worst,
        expected: 0.0,
        tolerance: 1e-8,
    });

    let models = [
        DynamicsModel::static_at(0.3, 1.0),
        rot.clone(),
        DynamicsModel::theta_rotation(0.2),
        DynamicsModel::UniformSphere,
        DynamicsModel::proportional_oscillation(0.25),
        DynamicsModel::fixed_amplitude_oscillation(0.1),
    ];
    let g = at(0.5).with_brightness(0.7).with_axis_offset(0.05);
    let mut worst: f64 = 0.0;
    for model in &models {
        let p = averaged_mode_probabilities(model, &g, c.cutoff(), &q)?;
        worst = worst.max((p.total() - 1.0).abs());
    }
    rows.push(CheckRow {
        name: "probability-normalisation",
        value: worst,
        expected: 0.0,
        tolerance: 1e-12,
    });

    let stepped = FisherOptions {
        derivative: DerivativeMethod::CentralDifference {
            step: default_step_x(g.x()) * 2.0 * g.w,
        },
        ..plain
    };
    let mut worst: f64 = 0.0;
    for model in &models {
        let a = fisher_information(model, &g, c.cutoff(), &plain)?.total;
        let b = fisher_information(model, &g, c.cutoff(), &stepped)?.total;
        worst = worst.max((a - b).abs() / a);
    }
    rows.push(CheckRow {
        name: "derivative-cross-check",
        value: worst,
        expected: 0.0,
        tolerance: CROSS_CHECK_TOLERANCE,
    });

    let st = DynamicsModel::static_at(0.3, 1.0);
    let grid = ImagingGrid::covering(&st, &g, &q);
    rows.push(CheckRow {
        name: "image-normalisation",
        value: di_total_probability(&st, &g, grid, &q)?,
        expected: 1.0,
        tolerance: 1e-8,
    });
    let dopts = DirectOptions {
        quadrature: q,
        ..Default::default()
    };
    let x = 0.05;
    rows.push(CheckRow {
        name: "direct-imaging-equal-brightness",
        value: di_fisher_information(&DynamicsModel::static_at(0.0, FRAC_PI_2), &at(x), &dopts)?
            .scaled_total()
            / (8.0 * x * x),
        expected: 1.0,
        tolerance: 0.05,
    });
    Ok(rows)
}

pub fn cmd_check(c: &RunConfig) -> CliResult<(Table, Vec<String>)> {
    let rows = run_checks(c)?;
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.to_string())
        .collect();
    let table = Table {
        command: "check",
        columns: ["check", "value", "expected", "tolerance", "status"]
            .map(String::from)
            .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.name.into()),
                    Cell::Num(r.value),
                    Cell::Num(r.expected),
                    Cell::Num(r.tolerance),
                    Cell::Text(if r.passed() { "pass" } else { "fail" }.into()),
                ]
            })
            .collect(),
    };
    Ok((table, failures))
}

fn emit(c: &RunConfig, text: &str) -> CliResult<()> {
    match &c.output.path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: &Cli, c: &RunConfig) -> CliResult<()> {
    let format = c.output.format;
    match &cli.command {
        Command::FiCurve => emit(c, &Output::Table(cmd_fi_curve(c)?).render(format)),
        Command::Limit { over } => emit(c, &Output::Table(cmd_limit(c, *over)?).render(format)),
        Command::Oscillation => emit(c, &Output::Table(cmd_oscillation(c)?).render(format)),
        Command::CompareDirect => emit(c, &Output::Table(cmd_compare_direct(c)?).render(format)),
        Command::Simulate { counts_only, .. } => {
            emit(c, &cmd_simulate(c, *counts_only)?.render(format))
        }
        Command::Estimate { counts } => emit(c, &pretty(&cmd_estimate(c, counts.as_ref())?)),
        Command::Check => {
            let (table, failures) = cmd_check(c)?;
            let text = match format {
                OutputFormat::Csv => table.to_csv(),
                OutputFormat::Json => {
                    let mut v = table.to_json();
                    v["failures"] = json!(failures);
                    pretty(&v)
                }
            };
            emit(c, &text)?;
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(failures))
            }
        }
    }
}

/// Parse, run and report; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut c = cli.common.load()?;
    if let Command::Limit { over } = &cli.command {
        limit_sweep_defaults(&mut c, *over);
    }
    cli.common.apply(&mut c);
    if let Command::Simulate { photons, runs, .. } = &cli.command {
        if let Some(p) = photons {
            c.experiment.photons = *p;
        }
        if let Some(r) = runs {
            c.experiment.runs = *r;
        }
    }
    c.validate()?;
    match c.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| dispatch(cli, &c))
        }
        None => dispatch(cli, &c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(0.942_343_123_456, 9), "0.942343123");
        assert_eq!(format_sig(1.031_25, 9), "1.03125");
        assert_eq!(format_sig(3.257_571_234e-3, 9), "0.00325757123");
        assert_eq!(format_sig(1.234_567_891_23e-7, 9), "1.23456789e-7");
        assert_eq!(format_sig(-2.5, 9), "-2.5");
        assert_eq!(format_sig(123_456_789_012.0, 9), "1.23456789e11");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn csv_has_versioned_header() {
        let t = Table {
            command: "fi-curve",
            columns: vec!["x".into(), "F_total".into()],
            rows: vec![vec![Cell::Num(0.5), Cell::Num(0.707_310_000_1)]],
        };
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# spade fi-curve format-version 1"));
        assert_eq!(lines.next(), Some("x,F_total"));
        assert_eq!(lines.next(), Some("0.5,0.70731"));
        assert_eq!(t.to_json()["rows"][0]["x"], json!(0.5));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "modes = 2\n[geometry]\nx = 0.3\nkappa = 0.1\n").unwrap();
        let cli = Cli::try_parse_from([
            "spade",
            "fi-curve",
            "--config",
            path.to_str().unwrap(),
            "--modes",
            "4",
            "--xi",
            "0.02",
        ])
        .unwrap();
        let c = cli.common.resolve().unwrap();
        assert_eq!(c.modes, 4);
        assert_eq!(c.geometry.x, 0.3);
        assert_eq!(c.geometry.xi, Some(0.02));
        assert_eq!(c.geometry.kappa, None);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_CONFIG);
        assert_eq!(
            CliError::Numerical(SpadeError::NumericalHealth("x".into())).exit_code(),
            EXIT_NUMERICAL
        );
        assert_eq!(
            CliError::Numerical(SpadeError::invalid("x", "y")).exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(
            CliError::CheckFailed(vec!["a".into()]).exit_code(),
            EXIT_CHECK_FAILED
        );
    }

    #[test]
    fn limit_rows_reproduce_known_values() {
        let mut c = RunConfig::default();
        limit_sweep_defaults(&mut c, Some(LimitAxis::Kappa));
        let t = cmd_limit(&c, Some(LimitAxis::Kappa)).unwrap();
        for row in t.rows.iter().filter(|r| r[0] == Cell::Num(0.0)) {
            assert_eq!(row[3], Cell::Num(1.0));
        }
        limit_sweep_defaults(&mut c, Some(LimitAxis::Mass));
        let t = cmd_limit(&c, Some(LimitAxis::Mass)).unwrap();
        let best = t
            .rows
            .iter()
            .max_by(|a, b| match (&a[4], &b[4]) {
                (Cell::Num(x), Cell::Num(y)) => x.total_cmp(y),
                _ => unreachable!(),
            })
            .unwrap();
        assert_eq!(best[0], Cell::Num(1.0));
        assert_eq!(best[4], Cell::Num(1.0));
    }
}
