//! Command-line front end: argument/config-file parsing, the verification
//! suite, and file emission (CSV, JSON, SVG).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::integrate::{logistic_closed_form, simulate, simulate_deterministic, Scheme, SimParams, Trajectory};
use crate::models::{
    hermite, theta_env_general, theta_population, theta_rodrigues_population, CouplingRule,
    EnvironmentModel, GrowthModel,
};
use crate::scenarios::{preset, run_scenario, ScenarioReport, ScenarioSpec};
use crate::verify::{
    compare_density, conservation_check, fp_residual, time_average_theta_expression,
    zero_mean_quadrature, DensityReport, FokkerPlanck, Grid2, InvariantLogDensity, Measure,
    OdeMethod, TiltedLogDensity, DEFAULT_BINS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("invalid `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("simulation failed: {0}")]
    Run(Error),
    #[error("{failed} of {total} verification checks failed")]
    VerificationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Run(_) => 1,
            CliError::VerificationFailed { .. } => EXIT_VERIFY,
        }
    }

    fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, .. } => {
                CliError::config(&name.replace('_', "-"), e.to_string())
            }
            Error::UnknownPreset { .. } => CliError::config("scenario", e.to_string()),
            other => CliError::Run(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "coevo",
    version,
    about = "Stochastic population-environment coevolution: simulate, reproduce presets, verify",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one trajectory with explicit model parameters.
    Simulate(Flags),
    /// Run a named preset (fig1a, fig1b, fig2, fig3, fig3-coupled, fig4, fig4-coupled, gompertz).
    Scenario {
        name: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run the analytic verification checks (add --full for the statistical ones).
    Verify {
        /// Also run the long stochastic checks (about a second of CPU).
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Debug, Args, Default)]
struct Flags {
    /// `key = value` file; command-line flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Ecological temperature θ >= 0 (dimensionless) [default: 0.001]
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Environment relaxation rate γ >= 0, 1/time [default: 50]
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Population-environment coupling rate λ > 0, 1/time [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Carrying capacity K > 0 (population density) [default: 1]
    #[arg(long = "K", allow_hyphen_values = true)]
    k: Option<String>,
    /// Time step > 0, time units; dt*γ must stay below 0.5 [default: 0.001]
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<String>,
    /// Horizon > 0, time units [default: 20]
    #[arg(long = "t-max", allow_hyphen_values = true)]
    t_max: Option<String>,
    /// 64-bit generator seed [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Initial population density > 0 [default: 0.01]
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Initial environment value [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<String>,
    /// Record every k-th step, k >= 1 [default: 1]
    #[arg(long = "record-stride", allow_hyphen_values = true)]
    record_stride: Option<String>,
    /// Histogram bins [default: 50]
    #[arg(long, allow_hyphen_values = true)]
    bins: Option<String>,
    /// Histogram range `lo,hi` in population density [default: 0,4K]
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,
    /// Output directory [default: out]
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
    /// Comma-separated subset of csv,json,svg [default: csv,json,svg]
    #[arg(long, allow_hyphen_values = true)]
    format: Option<String>,
    /// Growth model: logistic | gompertz [default: logistic]
    #[arg(long, allow_hyphen_values = true)]
    model: Option<String>,
    /// Environment: gaussian | symmetric:m | asymmetric:D,a [default: gaussian]
    #[arg(long, allow_hyphen_values = true)]
    env: Option<String>,
    /// Coupling: fixed | heaviside:threshold [default: fixed]
    #[arg(long, allow_hyphen_values = true)]
    coupling: Option<String>,
    /// Environment update: leimkuhler-matthews | euler-maruyama [default: leimkuhler-matthews]
    #[arg(long, allow_hyphen_values = true)]
    scheme: Option<String>,
    /// Independent runs for scenarios [default: preset value]
    #[arg(long, allow_hyphen_values = true)]
    runs: Option<String>,
}

const KEYS: [&str; 19] = [
    "theta",
    "gamma",
    "lambda",
    "K",
    "dt",
    "t-max",
    "seed",
    "x0",
    "y0",
    "record-stride",
    "bins",
    "range",
    "out",
    "format",
    "model",
    "env",
    "coupling",
    "scheme",
    "runs",
];

impl Flags {
    fn entries(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("theta", &self.theta),
            ("gamma", &self.gamma),
            ("lambda", &self.lambda),
            ("K", &self.k),
            ("dt", &self.dt),
            ("t-max", &self.t_max),
            ("seed", &self.seed),
            ("x0", &self.x0),
            ("y0", &self.y0),
            ("record-stride", &self.record_stride),
            ("bins", &self.bins),
            ("range", &self.range),
            ("out", &self.out),
            ("format", &self.format),
            ("model", &self.model),
            ("env", &self.env),
            ("coupling", &self.coupling),
            ("scheme", &self.scheme),
            ("runs", &self.runs),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate,
    Scenario(ScenarioSpec),
    Verify { full: bool },
}

/// Fully validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: GrowthModel,
    pub env: EnvironmentModel,
    pub rule: CouplingRule,
    pub params: SimParams,
    pub bins: usize,
    pub range: (f64, f64),
    pub out: PathBuf,
    pub formats: Vec<Format>,
}

/// Parse `key = value` lines. Blank lines and `#` comments are skipped;
/// underscores in keys are read as dashes.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(
                &format!("line {}", i + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        let key = if key.eq_ignore_ascii_case("k") { "K".to_string() } else { key };
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::config(&key, "unknown key"));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| CliError::config(key, format!("cannot parse `{value}` as a number")))
}

fn parse_model(v: &str, k: f64) -> Result<GrowthModel, CliError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "logistic" => Ok(GrowthModel::logistic(k)),
        "gompertz" => Ok(GrowthModel::gompertz(k)),
        other => Err(CliError::config("model", format!("unknown model `{other}`"))),
    }
}

fn parse_env(v: &str) -> Result<EnvironmentModel, CliError> {
    let v = v.trim().to_ascii_lowercase();
    let (kind, args) = v.split_once(':').unwrap_or((v.as_str(), ""));
    let nums: Vec<&str> = args.split(',').filter(|s| !s.is_empty()).collect();
    match (kind, nums.as_slice()) {
        ("gaussian", []) => Ok(EnvironmentModel::Gaussian),
        ("symmetric", [m]) => Ok(EnvironmentModel::SymmetricBimodal {
            m: parse_num("env", m)?,
        }),
        ("asymmetric", [d, a]) => Ok(EnvironmentModel::AsymmetricBimodal {
            d: parse_num("env", d)?,
            a: parse_num("env", a)?,
        }),
        _ => Err(CliError::config(
            "env",
            format!("expected gaussian | symmetric:m | asymmetric:D,a, got `{v}`"),
        )),
    }
}

fn parse_coupling(v: &str) -> Result<CouplingRule, CliError> {
    let v = v.trim().to_ascii_lowercase();
    match v.split_once(':') {
        None if v == "fixed" => Ok(CouplingRule::Fixed),
        Some(("heaviside", t)) => Ok(CouplingRule::heaviside(parse_num("coupling", t)?)),
        _ => Err(CliError::config(
            "coupling",
            format!("expected fixed | heaviside:threshold, got `{v}`"),
        )),
    }
}

fn parse_scheme(v: &str) -> Result<Scheme, CliError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "leimkuhler-matthews" | "lm" => Ok(Scheme::LeimkuhlerMatthews),
        "euler-maruyama" | "em" | "euler" => Ok(Scheme::EulerMaruyama),
        other => Err(CliError::config("scheme", format!("unknown scheme `{other}`"))),
    }
}

fn parse_formats(v: &str) -> Result<Vec<Format>, CliError> {
    let mut out = Vec::new();
    for f in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let fmt = match f.to_ascii_lowercase().as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            "svg" => Format::Svg,
            other => return Err(CliError::config("format", format!("unknown format `{other}`"))),
        };
        if !out.contains(&fmt) {
            out.push(fmt);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("format", "no formats given"));
    }
    out.sort();
    Ok(out)
}

fn parse_range(v: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::config("range", format!("expected `lo,hi`, got `{v}`")));
    }
    let (lo, hi) = (parse_num("range", parts[0])?, parse_num("range", parts[1])?);
    if !(hi > lo) {
        return Err(CliError::config("range", "hi must exceed lo"));
    }
    Ok((lo, hi))
}

/// Parse argv (including the program name) and an optional config file.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (flags, preset_spec, verify) = match cli.command {
        Cmd::Simulate(f) => (f, None, None),
        Cmd::Scenario { name, flags } => (flags, Some(preset(&name)?), None),
        Cmd::Verify { full, flags } => (flags, None, Some(full)),
    };

    let mut values = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::config("config", format!("cannot read {}: {e}", path.display()))
            })?;
            parse_config_file(&text)?
        }
        None => BTreeMap::new(),
    };
    for (key, v) in flags.entries() {
        if let Some(v) = v {
            values.insert(key.to_string(), v.clone());
        }
    }
    let get = |k: &str| values.get(k).map(String::as_str);

    let (mut model, mut env, mut rule, mut params) = match &preset_spec {
        Some(s) => (s.model, s.env, s.rule, s.params),
        None => (
            GrowthModel::logistic(1.0),
            EnvironmentModel::Gaussian,
            CouplingRule::Fixed,
            SimParams::default(),
        ),
    };

    if let Some(v) = get("K") {
        model.k = parse_num("K", v)?;
    }
    if let Some(v) = get("model") {
        model = parse_model(v, model.k)?;
    }
    if let Some(v) = get("env") {
        env = parse_env(v)?;
    }
    if let Some(v) = get("coupling") {
        rule = parse_coupling(v)?;
    }
    macro_rules! set {
        ($key:literal, $field:expr) => {
            if let Some(v) = get($key) {
                $field = parse_num($key, v)?;
            }
        };
    }
    set!("theta", params.theta);
    set!("gamma", params.gamma);
    set!("lambda", params.lambda);
    set!("dt", params.dt);
    set!("t-max", params.t_max);
    set!("seed", params.seed);
    set!("x0", params.x0);
    set!("y0", params.y0);
    set!("record-stride", params.record_stride);
    if let Some(v) = get("scheme") {
        params.scheme = parse_scheme(v)?;
    }

    let bins = match get("bins") {
        Some(v) => parse_num::<usize>("bins", v)?,
        None => DEFAULT_BINS,
    };
    if bins == 0 {
        return Err(CliError::config("bins", "must be >= 1"));
    }
    let range = match get("range") {
        Some(v) => parse_range(v)?,
        None => (0.0, 4.0 * model.k),
    };
    let formats = parse_formats(get("format").unwrap_or("csv,json,svg"))?;
    let out = PathBuf::from(get("out").unwrap_or("out"));

    model.validate()?;
    env.validate()?;
    rule.validate()?;
    params.validate()?;

    let command = match preset_spec {
        Some(mut spec) => {
            spec.model = model;
            spec.env = env;
            spec.rule = rule;
            spec.params = params;
            if let Some(v) = get("runs") {
                spec.runs = parse_num("runs", v)?;
            }
            if let Some(d) = spec.density.as_mut() {
                if get("bins").is_some() {
                    d.bins = bins;
                }
                if get("range").is_some() {
                    d.range = range;
                }
            }
            spec.validate()?;
            Command::Scenario(spec)
        }
        None if get("runs").is_some() => {
            return Err(CliError::config("runs", "only valid for scenarios"))
        }
        None => match verify {
            Some(full) => Command::Verify { full },
            None => Command::Simulate,
        },
    };
    Ok(RunConfig {
        command,
        model,
        env,
        rule,
        params,
        bins,
        range,
        out,
        formats,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// `t,x,y` rows in shortest round-trip decimal.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.len() * 48 + 8);
    s.push_str("t,x,y\n");
    for i in 0..traj.len() {
        let _ = writeln!(s, "{},{},{}", traj.times[i], traj.xs[i], traj.ys[i]);
    }
    s
}

/// `bin_lo,bin_hi,empirical,theoretical` rows.
pub fn histogram_csv(report: &DensityReport) -> String {
    let h = &report.histogram;
    let mut s = String::from("bin_lo,bin_hi,empirical,theoretical\n");
    for (i, w) in h.edges.windows(2).enumerate() {
        let _ = writeln!(s, "{},{},{},{}", w[0], w[1], h.densities[i], report.theoretical[i]);
    }
    s
}

/// Parse a `t,x,y` CSV back into columns.
pub fn read_trajectory_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), CliError> {
    let mut lines = text.lines();
    if lines.next() != Some("t,x,y") {
        return Err(CliError::config("csv", "missing `t,x,y` header"));
    }
    let (mut t, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(CliError::config("csv", format!("bad row `{line}`")));
        }
        t.push(parse_num("t", cols[0])?);
        x.push(parse_num("x", cols[1])?);
        y.push(parse_num("y", cols[2])?);
    }
    Ok((t, x, y))
}

fn metadata(traj: &Trajectory) -> serde_json::Value {
    json!({
        "version": VERSION,
        "model": traj.model,
        "env": traj.env,
        "rule": traj.rule,
        "params": traj.params,
        "seed": traj.params.seed,
        "stream": traj.stream,
    })
}

fn trajectory_json(traj: &Trajectory) -> serde_json::Value {
    let mut v = metadata(traj);
    v["t"] = json!(traj.times);
    v["x"] = json!(traj.xs);
    v["y"] = json!(traj.ys);
    v
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    t: &'a [f64],
    v: &'a [f64],
}

fn svg_panel(s: &mut String, top: f64, title: &str, series: &[Series<'_>]) {
    const W: f64 = 800.0;
    const H: f64 = 260.0;
    const PAD: f64 = 50.0;
    let (mut t0, mut t1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for se in series {
        for (&t, &v) in se.t.iter().zip(se.v) {
            t0 = t0.min(t);
            t1 = t1.max(t);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
    }
    if !(t1 > t0) {
        t1 = t0 + 1.0;
    }
    if !(v1 > v0) {
        v1 = v0 + 1.0;
    }
    let px = |t: f64| PAD + (t - t0) / (t1 - t0) * (W - 2.0 * PAD);
    let py = |v: f64| top + H - PAD * 0.5 - (v - v0) / (v1 - v0) * (H - PAD);
    let _ = writeln!(
        s,
        r##"<rect x="{PAD}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        top + PAD * 0.5,
        W - 2.0 * PAD,
        H - PAD
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-size="13">{title}</text>"#, top + 18.0);
    let _ = writeln!(
        s,
        r#"<text x="5" y="{}" font-size="10">{v1:.3}</text><text x="5" y="{}" font-size="10">{v0:.3}</text>"#,
        py(v1) + 4.0,
        py(v0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-size="10">{t0}</text><text x="{}" y="{}" font-size="10" text-anchor="end">{t1}</text>"#,
        top + H + 8.0,
        W - PAD,
        top + H + 8.0
    );
    // thin dense series down to ~4000 vertices
    for (k, se) in series.iter().enumerate() {
        let step = (se.t.len() / 4000).max(1);
        let pts: Vec<String> = se
            .t
            .iter()
            .zip(se.v)
            .step_by(step)
            .map(|(&t, &v)| format!("{:.2},{:.2}", px(t), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            se.color,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{}" text-anchor="end">{}</text>"#,
            W - PAD - 4.0,
            top + 40.0 + 14.0 * k as f64,
            se.color,
            se.label
        );
    }
}

/// Static line plot: `x` against `t` (with optional comparison curve), and
/// `y` against `t` underneath.
pub fn trajectory_svg(traj: &Trajectory, comparison: Option<(&[f64], &[f64])>) -> String {
    let mut s = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"560\" font-family=\"sans-serif\">\n",
    );
    let mut top = vec![Series {
        label: "x (stochastic)",
        color: "#c0392b",
        t: &traj.times,
        v: &traj.xs,
    }];
    if let Some((t, v)) = comparison {
        top.push(Series {
            label: "x (deterministic)",
            color: "#2c6fbb",
            t,
            v,
        });
    }
    svg_panel(&mut s, 0.0, "population density x", &top);
    svg_panel(
        &mut s,
        280.0,
        "environment y",
        &[Series {
            label: "y",
            color: "#27864a",
            t: &traj.times,
            v: &traj.ys,
        }],
    );
    s.push_str("</svg>\n");
    s
}

/// Write one trajectory as `<name>.csv`, `<name>.json`, `<name>.svg`.
pub fn emit_trajectory(
    traj: &Trajectory,
    name: &str,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for f in formats {
        let (path, body) = match f {
            Format::Csv => (dir.join(format!("{name}.csv")), trajectory_csv(traj)),
            Format::Json => (
                dir.join(format!("{name}.json")),
                serde_json::to_string_pretty(&trajectory_json(traj)).expect("serializable"),
            ),
            Format::Svg => (dir.join(format!("{name}.svg")), trajectory_svg(traj, None)),
        };
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

/// Write a density comparison as `<name>_hist.csv` / `<name>_hist.json`.
pub fn emit_histogram(
    report: &DensityReport,
    name: &str,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if formats.contains(&Format::Csv) {
        let path = dir.join(format!("{name}_hist.csv"));
        write_file(&path, &histogram_csv(report))?;
        written.push(path);
    }
    if formats.contains(&Format::Json) {
        let path = dir.join(format!("{name}_hist.json"));
        let body = json!({ "version": VERSION, "report": report });
        write_file(&path, &serde_json::to_string_pretty(&body).expect("serializable"))?;
        written.push(path);
    }
    Ok(written)
}

/// Write a scenario: run 0 as `<name>.*`, further runs as `<name>_run<i>.*`,
/// the deterministic comparison as `<name>_comparison.csv`, and the density
/// comparison when present.
pub fn emit_scenario(
    report: &ScenarioReport,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = &report.spec.name;
    let mut written = Vec::new();
    for (i, run) in report.runs.iter().enumerate() {
        let stem = if i == 0 { name.clone() } else { format!("{name}_run{i}") };
        let traj = &run.trajectory;
        for f in formats {
            let (path, body) = match f {
                Format::Csv => (dir.join(format!("{stem}.csv")), trajectory_csv(traj)),
                Format::Json => {
                    let mut v = trajectory_json(traj);
                    v["scenario"] = json!(report.spec);
                    v["transitions"] = json!(run.transitions);
                    v["windowed_means"] = json!(run.windowed_means);
                    v["final_window_mean"] = json!(run.final_window_mean);
                    v["sync_fraction"] = json!(run.sync_fraction);
                    if i == 0 {
                        v["comparison_gap"] = json!(report.comparison_gap);
                        v["ensemble_mean"] = json!(report.ensemble_mean);
                        if let Some(d) = &report.density {
                            v["density"] = json!({
                                "l1_distance": d.l1_distance,
                                "ks_distance": d.ks_distance,
                            });
                        }
                    }
                    (
                        dir.join(format!("{stem}.json")),
                        serde_json::to_string_pretty(&v).expect("serializable"),
                    )
                }
                Format::Svg => {
                    let cmp = report
                        .comparison
                        .as_ref()
                        .map(|c| (c.times.as_slice(), c.xs.as_slice()));
                    (dir.join(format!("{stem}.svg")), trajectory_svg(traj, cmp))
                }
            };
            write_file(&path, &body)?;
            written.push(path);
        }
    }
    if let (Some(c), true) = (&report.comparison, formats.contains(&Format::Csv)) {
        let path = dir.join(format!("{name}_comparison.csv"));
        let mut s = String::from("t,x\n");
        for (t, x) in c.times.iter().zip(&c.xs) {
            let _ = writeln!(s, "{t},{x}");
        }
        write_file(&path, &s)?;
        written.push(path);
    }
    if let Some(d) = &report.density {
        written.extend(emit_histogram(d, name, formats, dir)?);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("< {limit:e}"),
            passed: value < limit,
        }
    }
    fn above(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("> {limit:e}"),
            passed: value > limit,
        }
    }
}

/// Analytic checks (and, with `full`, the long stochastic ones at the
/// given parameters).
pub fn run_verification(full: bool, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let mut out = Vec::new();
    let grid = Grid2::uniform((0.05, 4.0), 101, (-3.0, 3.0), 101);
    let logistic = GrowthModel::logistic(1.0);
    let envs = [
        ("gaussian", EnvironmentModel::Gaussian),
        ("symmetric", EnvironmentModel::SymmetricBimodal { m: 0.5 }),
        ("asymmetric", EnvironmentModel::AsymmetricBimodal { d: 4.0, a: 0.25 }),
    ];
    for model in [logistic, GrowthModel::gompertz(1.0)] {
        for (label, env) in envs {
            let r = fp_residual(&model, &env, 0.5, 1.0, 50.0, &grid)?;
            out.push(CheckResult::below(
                &format!("fp_residual {:?}/{label}", model.kind).to_lowercase(),
                r,
                1e-10,
            ));
        }
    }
    let base = InvariantLogDensity {
        model: logistic,
        env: EnvironmentModel::Gaussian,
        theta: 0.5,
    };
    let op = FokkerPlanck {
        model: logistic,
        env: EnvironmentModel::Gaussian,
        theta: 0.5,
        lambda: 1.0,
        gamma: 50.0,
    };
    out.push(CheckResult::above(
        "fp_residual negative control",
        op.residual(&TiltedLogDensity { base, slope: 0.1 }, &grid),
        1e-3,
    ));

    for theta in [0.1, 0.5, 1.0] {
        let pop = Measure::Population(logistic);
        let worst = [
            zero_mean_quadrature(|x| theta_population(&logistic, x, theta).unwrap_or(f64::NAN), &pop, theta)?,
            zero_mean_quadrature(
                |x| theta_rodrigues_population(&logistic, |x| (x * x, 2.0 * x), x, theta).unwrap_or(f64::NAN),
                &pop,
                theta,
            )?,
        ]
        .into_iter()
        .chain(envs.iter().map(|(_, env)| {
            zero_mean_quadrature(|y| theta_env_general(env, y, theta, 1.0, 50.0), &Measure::Environment(*env), theta)
                .unwrap_or(f64::NAN)
        }))
        .chain((1..=4).map(|n| {
            zero_mean_quadrature(|y| hermite(n, y, theta), &Measure::Environment(EnvironmentModel::Gaussian), theta)
                .unwrap_or(f64::NAN)
        }))
        .map(f64::abs)
        .fold(0.0, f64::max);
        out.push(CheckResult::below(&format!("theta-expression zero means θ={theta}"), worst, 1e-8));
    }

    let g = EnvironmentModel::Gaussian;
    let c1 = conservation_check(&logistic, &g, 0.1, 1.0, 0.5, 0.0, 1e-3, 100.0, OdeMethod::Rk4)?;
    out.push(CheckResult::below("conservation drift rk4 dt=1e-3", c1, 1e-8));

    let curve = simulate_deterministic(&logistic, 1.0, 0.01, 1e-3, 20.0, 1)?;
    let err = curve
        .times
        .iter()
        .zip(&curve.xs)
        .map(|(&t, &x)| (x - logistic_closed_form(0.01, 1.0, 1.0, t)).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::below("rk4 vs logistic closed form", err, 1e-8));

    if full {
        let spec = preset("fig2")?;
        let traj = simulate(&spec.model, &spec.env, &spec.rule, &SimParams { seed, ..spec.params })?;
        let d = compare_density(&traj.xs, &spec.model, 0.5, DEFAULT_BINS, (0.0, 4.0), 0.1)?;
        out.push(CheckResult::below("fig2 density l1", d.l1_distance, 0.05));
        let y2 = traj.ys.iter().map(|y| y * y).sum::<f64>() / traj.len() as f64;
        out.push(CheckResult::below("fig2 |<y²>/θ - 1|", (y2 / 0.5 - 1.0).abs(), 0.05));
        let ta = time_average_theta_expression(&traj, &g, 0.5, 1.0, 50.0)?;
        out.push(CheckResult::below(
            "fig2 |<Θ*>| / stderr",
            ta.mean.abs() / ta.stderr,
            3.0,
        ));
    }
    Ok(out)
}

/// Execute a parsed configuration; returns the written file manifest.
pub fn execute(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    match &config.command {
        Command::Simulate => {
            let traj = simulate(&config.model, &config.env, &config.rule, &config.params)?;
            emit_trajectory(&traj, "simulate", &config.formats, &config.out)
        }
        Command::Scenario(spec) => {
            let report = run_scenario(spec, None)?;
            emit_scenario(&report, &config.formats, &config.out)
        }
        Command::Verify { full } => {
            let checks = run_verification(*full, config.params.seed)?;
            for c in &checks {
                println!(
                    "{} {:<44} {:>12.3e}  ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            let mut written = Vec::new();
            if config.formats.contains(&Format::Json) {
                fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
                let path = config.out.join("verify.json");
                let body = json!({ "version": VERSION, "checks": checks });
                write_file(&path, &serde_json::to_string_pretty(&body).expect("serializable"))?;
                written.push(path);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::VerificationFailed {
                    failed,
                    total: checks.len(),
                });
            }
            Ok(written)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::compare_density;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        parse_config(std::iter::once("coevo").chain(args.iter().copied()))
    }

    fn key_of(e: CliError) -> String {
        match e {
            CliError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn flags_fill_params() {
        let c = parse(&["simulate", "--theta", "0.005", "--gamma", "50", "--K", "2", "--seed", "7"]).unwrap();
        assert_eq!(c.command, Command::Simulate);
        assert_eq!(c.params.theta, 0.005);
        assert_eq!(c.params.gamma, 50.0);
        assert_eq!(c.params.seed, 7);
        assert_eq!(c.model.k, 2.0);
        assert_eq!(c.range, (0.0, 8.0));
        assert_eq!(c.formats, vec![Format::Csv, Format::Json, Format::Svg]);
    }

    #[test]
    fn negative_theta_names_the_key() {
        let e = parse(&["simulate", "--theta", "-1"]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        assert_eq!(key_of(e), "theta");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let e = parse(&["simulate", "--dt", "fast"]).unwrap_err();
        assert_eq!(key_of(e), "dt");
        let e = parse(&["simulate", "--record-stride", "0.5"]).unwrap_err();
        assert_eq!(key_of(e), "record-stride");
        let e = parse(&["simulate", "--record-stride", "0"]).unwrap_err();
        assert_eq!(key_of(e), "record-stride");
    }

    #[test]
    fn unstable_step_is_rejected() {
        let e = parse(&["simulate", "--dt", "0.01", "--gamma", "50"]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn empty_argv_is_usage_error() {
        let e = parse(&[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn config_file_keys_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\ntheta = 0.2\nt_max = 5\nenv = symmetric:0.5\n\ncoupling = heaviside:0\n").unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["simulate", "--config", p, "--theta", "0.3"]).unwrap();
        assert_eq!(c.params.theta, 0.3);
        assert_eq!(c.params.t_max, 5.0);
        assert_eq!(c.env, EnvironmentModel::SymmetricBimodal { m: 0.5 });
        assert_eq!(c.rule, CouplingRule::heaviside(0.0));

        fs::write(&path, "thta = 0.2\n").unwrap();
        assert_eq!(key_of(parse(&["simulate", "--config", p]).unwrap_err()), "thta");
        fs::write(&path, "gamma = lots\n").unwrap();
        assert_eq!(key_of(parse(&["simulate", "--config", p]).unwrap_err()), "gamma");
    }

    #[test]
    fn scenario_overrides_preset() {
        let c = parse(&["scenario", "fig2", "--t-max", "100", "--bins", "20"]).unwrap();
        let Command::Scenario(spec) = c.command else { panic!() };
        assert_eq!(spec.params.t_max, 100.0);
        assert_eq!(spec.params.theta, 0.5);
        assert_eq!(spec.density.unwrap().bins, 20);
        assert_eq!(key_of(parse(&["scenario", "fig9"]).unwrap_err()), "scenario");
        assert_eq!(key_of(parse(&["simulate", "--runs", "3"]).unwrap_err()), "runs");
    }

    #[test]
    fn verify_subcommand() {
        assert_eq!(parse(&["verify"]).unwrap().command, Command::Verify { full: false });
        assert_eq!(parse(&["verify", "--full"]).unwrap().command, Command::Verify { full: true });
    }

    #[test]
    fn env_and_format_syntax() {
        let c = parse(&["simulate", "--env", "asymmetric:4,0.25", "--format", "csv"]).unwrap();
        assert_eq!(c.env, EnvironmentModel::AsymmetricBimodal { d: 4.0, a: 0.25 });
        assert_eq!(c.formats, vec![Format::Csv]);
        assert_eq!(key_of(parse(&["simulate", "--env", "bimodal"]).unwrap_err()), "env");
        assert_eq!(key_of(parse(&["simulate", "--format", "png"]).unwrap_err()), "format");
        assert_eq!(key_of(parse(&["simulate", "--range", "4,0"]).unwrap_err()), "range");
    }

    fn short_run(seed: u64) -> Trajectory {
        let c = parse(&["simulate", "--t-max", "2", "--seed", &seed.to_string(), "--theta", "0.1"]).unwrap();
        simulate(&c.model, &c.env, &c.rule, &c.params).unwrap()
    }

    #[test]
    fn csv_round_trips_exactly() {
        let traj = short_run(3);
        let (t, x, y) = read_trajectory_csv(&trajectory_csv(&traj)).unwrap();
        assert_eq!(t, traj.times);
        assert_eq!(x, traj.xs);
        assert_eq!(y, traj.ys);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        assert_eq!(trajectory_csv(&short_run(11)), trajectory_csv(&short_run(11)));
        assert_ne!(trajectory_csv(&short_run(11)), trajectory_csv(&short_run(12)));
    }

    #[test]
    fn histogram_csv_integrates_to_one() {
        let model = GrowthModel::logistic(1.0);
        let samples: Vec<f64> = (0..5000).map(|i| 0.2 + 1.6 * (i as f64 / 5000.0)).collect();
        let report = compare_density(&samples, &model, 0.5, 50, (0.0, 4.0), 0.0).unwrap();
        let text = histogram_csv(&report);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin_lo,bin_hi,empirical,theoretical"));
        let total: f64 = lines
            .map(|l| {
                let c: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
                (c[1] - c[0]) * c[2]
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn emit_writes_requested_files() {
        let dir = tempfile::tempdir().unwrap();
        let traj = short_run(1);
        let files = emit_trajectory(&traj, "run", &[Format::Csv, Format::Json, Format::Svg], dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(meta["version"], VERSION);
        assert_eq!(meta["seed"], 1);
        assert!(fs::read_to_string(dir.path().join("run.svg")).unwrap().contains("<polyline"));
    }

    #[test]
    fn unwritable_output_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let e = emit_trajectory(&short_run(0), "run", &[Format::Csv], &blocker.join("sub")).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_IO);
    }
}
