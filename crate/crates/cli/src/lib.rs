//! `cosetsle` command line: coset inspection, martingale solving and
//! scanning, SLE simulation, and Monte Carlo checks.
//!
//! Exit status: 0 on success, 2 on parameter errors (including usage
//! errors), 1 on internal errors or failed verification.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use cosetsle_core::exact;
use cosetsle_core::loewner::generate_trace;
use cosetsle_core::martingale::compare_conventions;
use cosetsle_core::mcheck::{drift_test, left_passage_estimate, schramm_formula, DriftParams, Observable, PassageMethod, PassageParams};
use cosetsle_core::{
    build_system, make_family, scan, CosetConfig, CosetSpec, Error, Family, HConvention, MartingaleSystem, PrimaryLabel, RawCosetData, RngSpec,
    SolutionRecord, Weight,
};

pub const SEED_ENV: &str = "COSETSLE_SEED";

#[derive(Debug, Parser)]
#[command(name = "cosetsle", version, about = "Coset CFT data, SLE martingale relations, and Loewner-flow Monte Carlo")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Random seed (unsigned 64-bit) for ensemble commands.
    #[arg(long, env = SEED_ENV, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Worker threads for ensembles; 0 uses all cores. Output does not depend on it.
    #[arg(long, default_value_t = 0, global = true)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Raw,
    Shifted,
}

impl From<ConventionArg> for HConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Raw => HConvention::Raw,
            ConventionArg::Shifted => HConvention::Shifted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Flow,
    Polyline,
}

#[derive(Debug, Args)]
pub struct CosetArgs {
    /// Built-in coset family.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Family level N (positive integer).
    #[arg(long = "N", alias = "n")]
    pub n: Option<u32>,
    /// JSON config: {"family": "...", "N": n} or raw data fields. Flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Central charge, levels and primary count of a coset.
    CosetInfo(CosetArgs),
    /// Identification representatives with their CFT data.
    Primaries {
        #[command(flatten)]
        coset: CosetArgs,
        /// Convention for h: raw difference formula or reduced into [0, 1).
        #[arg(long, value_enum, default_value_t = ConventionArg::Raw)]
        h_convention: ConventionArg,
    },
    /// Solve the two martingale relations for one primary.
    Solve(SolveArgs),
    /// Solve every primary of a family, sorted by h.
    Scan {
        #[command(flatten)]
        coset: CosetArgs,
        /// Convention for h.
        #[arg(long, value_enum, default_value_t = ConventionArg::Raw)]
        h_convention: ConventionArg,
        /// Re-check a JSON scan output by back-substitution instead of scanning.
        #[arg(long)]
        verify: Option<PathBuf>,
    },
    /// Chordal SLE trace by the vertical-slit zipper (CSV: t,re,im).
    Trace {
        /// SLE parameter kappa (>= 0).
        #[arg(long)]
        kappa: f64,
        /// Number of capacity steps.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Capacity-time step (half-plane capacity units).
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// RNG stream id.
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Ensemble drift test of a single-point observable under the Loewner flow.
    DriftTest(DriftArgs),
    /// Left-passage frequency against Schramm's formula.
    LeftPassage(PassageArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub coset: CosetArgs,
    /// Numerator weight(s): Dynkin labels comma-separated; factors separated
    /// by ';' or by repeating the flag.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Vec<String>,
    /// Denominator weight, comma-separated Dynkin labels (rationals allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<String>,
    /// Convention for h.
    #[arg(long, value_enum, default_value_t = ConventionArg::Raw)]
    pub h_convention: ConventionArg,
    /// Raw data instead of labels: key=value with keys h, c, C_mu, C_nu,
    /// k_dim_g, xe_k_dim_a (rationals; missing keys are 0).
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub raw: Vec<String>,
    /// Solve under both conventions and report agreement with --expect.
    #[arg(long)]
    pub compare_conventions: bool,
    /// Reference solution "kappa,tau" for --compare-conventions.
    #[arg(long)]
    pub expect: Option<String>,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// SLE parameter kappa (> 0).
    #[arg(long)]
    pub kappa: f64,
    /// Exponent p of the observable w^p; default 1 - 4/kappa.
    #[arg(long, allow_hyphen_values = true)]
    pub exponent: Option<f64>,
    /// Use the constant observable 1 instead of a power.
    #[arg(long, conflicts_with = "exponent")]
    pub constant: bool,
    /// Start point "re,im" in the upper half-plane.
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub start: String,
    /// Number of trajectories (>= 100).
    #[arg(long, default_value_t = 10_000)]
    pub n_traj: usize,
    /// Time step (capacity units).
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Time horizon (capacity units).
    #[arg(long, default_value_t = 0.5)]
    pub horizon: f64,
    /// Recording grid intervals over the horizon.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Drop swallowed trajectories instead of freezing them (biased).
    #[arg(long)]
    pub exclude_swallowed: bool,
    /// Also write the time-series CSV to this file.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PassageArgs {
    /// SLE parameter kappa in [0, 8).
    #[arg(long)]
    pub kappa: f64,
    /// Target point "re,im"; default e^{i theta}.
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<String>,
    /// Target argument theta in radians (unit modulus), used without --target.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    pub theta: f64,
    /// Number of traces.
    #[arg(long, default_value_t = 10_000)]
    pub n_traces: usize,
    /// Capacity steps per trace.
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Capacity-time step.
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    /// Side classifier: target flow (linear) or polyline ray crossings (quadratic).
    #[arg(long, value_enum, default_value_t = MethodArg::Flow)]
    pub method: MethodArg,
}

/// Error carrying the exit status.
#[derive(Debug)]
pub enum CliError {
    Param(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Param(e.to_string())
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Param(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Param(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Internal(e.to_string())
}

/// Parses `argv` (program name first) and runs; returns the exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let mut buf = Vec::new();
    let result = if cli.threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
            Ok(pool) => pool.install(|| execute(&cli, &mut buf)),
            Err(e) => Err(CliError::Internal(e.to_string())),
        }
    } else {
        execute(&cli, &mut buf)
    };
    let result = result.and_then(|()| out.write_all(&buf).map_err(io_err));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::CosetInfo(c) => coset_info(cli, c, out),
        Command::Primaries { coset, h_convention } => primaries(cli, coset, (*h_convention).into(), out),
        Command::Solve(a) => solve_cmd(cli, a, out),
        Command::Scan { coset, h_convention, verify } => match verify {
            Some(path) => verify_cmd(cli, path, out),
            None => scan_cmd(cli, coset, (*h_convention).into(), out),
        },
        Command::Trace { kappa, steps, dt, stream } => trace_cmd(cli, *kappa, *steps, *dt, *stream, out),
        Command::DriftTest(a) => drift_cmd(cli, a, out),
        Command::LeftPassage(a) => passage_cmd(cli, a, out),
    }
}

fn read_config(path: &PathBuf) -> CliResult<CosetConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Param(format!("{}: {e}", path.display())))?;
    Ok(CosetConfig::from_json(&text)?)
}

/// Family spec from flags, falling back to the config file.
fn resolve_spec(args: &CosetArgs) -> CliResult<CosetSpec> {
    let from_config = match &args.config {
        Some(p) => match read_config(p)? {
            CosetConfig::Family { family, n } => Some((family, n)),
            CosetConfig::Raw(_) => None,
        },
        None => None,
    };
    let family = args.family.or(from_config.map(|c| c.0));
    let n = args.n.or(from_config.map(|c| c.1));
    match (family, n) {
        (Some(f), Some(n)) => Ok(make_family(f, n)?),
        _ => Err(CliError::Param("need --family and --N (or a family config)".into())),
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, v: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{s}").map_err(io_err)
}

fn emit_csv(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    out.write_all(&bytes).map_err(io_err)
}

fn emit_table(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut text = line(header.to_vec()) + "\n";
    for r in rows {
        text += &line(r.iter().map(String::as_str).collect());
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(io_err)
}

fn emit_rows(format: Format, out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    match format {
        Format::Csv => emit_csv(out, header, rows),
        _ => emit_table(out, header, rows),
    }
}

fn coset_info(cli: &Cli, args: &CosetArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = resolve_spec(args)?;
    let (family, n) = spec.family().expect("built-in family");
    let info = [
        ("coset", spec.to_string()),
        ("family", family.to_string()),
        ("N", n.to_string()),
        ("c", exact::fmt(&spec.central_charge())),
        ("denominator_level", exact::fmt(&spec.denominator_level())),
        ("k_dim_g", exact::fmt(&spec.k_dim_g())),
        ("xe_k_dim_a", exact::fmt(&spec.xe_k_dim_a())),
        ("primaries", spec.list_primaries()?.len().to_string()),
    ];
    match cli.format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = info.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            emit_json(out, &map)
        }
        f => emit_rows(f, out, &["field", "value"], &info.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect::<Vec<_>>()),
    }
}

#[derive(Serialize)]
struct PrimaryRow {
    label: String,
    mu: Vec<String>,
    nu: Vec<String>,
    h: String,
    h_mod_1: String,
    #[serde(rename = "C_mu")]
    c_mu: String,
    #[serde(rename = "C_nu")]
    c_nu: String,
}

fn primaries(cli: &Cli, args: &CosetArgs, conv: HConvention, out: &mut dyn Write) -> CliResult<()> {
    let spec = resolve_spec(args)?;
    let rows = spec
        .list_primaries()?
        .iter()
        .map(|p| {
            let d = spec.data(p, conv)?;
            Ok(PrimaryRow {
                label: p.to_string(),
                mu: p.mu_labels().iter().map(exact::fmt).collect(),
                nu: p.nu.labels.iter().map(exact::fmt).collect(),
                h: exact::fmt(&d.h),
                h_mod_1: exact::fmt(&exact::frac(&d.h)),
                c_mu: exact::fmt(&d.c_mu),
                c_nu: exact::fmt(&d.c_nu),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    match cli.format {
        Format::Json => emit_json(out, &rows),
        f => emit_rows(
            f,
            out,
            &["label", "mu", "nu", "h", "h_mod_1", "C_mu", "C_nu"],
            &rows
                .iter()
                .map(|r| vec![r.label.clone(), r.mu.join(" "), r.nu.join(" "), r.h.clone(), r.h_mod_1.clone(), r.c_mu.clone(), r.c_nu.clone()])
                .collect::<Vec<_>>(),
        ),
    }
}

fn parse_labels(s: &str) -> CliResult<Vec<cosetsle_core::Rational>> {
    s.split(',').map(|x| Ok(exact::parse(x.trim())?)).collect()
}

fn parse_label(spec: &CosetSpec, mu: &[String], nu: &Option<String>) -> CliResult<PrimaryLabel> {
    if mu.is_empty() || nu.is_none() {
        return Err(CliError::Param("need --mu and --nu (or --raw)".into()));
    }
    let factors: Vec<&str> = mu.iter().flat_map(|m| m.split(';')).collect();
    let mu = factors.iter().map(|f| Ok(Weight::new(parse_labels(f)?))).collect::<CliResult<Vec<_>>>()?;
    let label = PrimaryLabel::new(mu, Weight::new(parse_labels(nu.as_deref().unwrap_or_default())?));
    spec.check_label(&label)?;
    Ok(label)
}

fn parse_raw(entries: &[String], base: RawCosetData) -> CliResult<RawCosetData> {
    let mut d = base;
    for e in entries {
        let (k, v) = e.split_once('=').ok_or_else(|| CliError::Param(format!("--raw expects KEY=VALUE, got {e:?}")))?;
        d.set(k.trim(), exact::parse(v.trim())?)?;
    }
    Ok(d)
}

fn parse_pair(s: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(CliError::Param(format!("expected \"re,im\", got {s:?}")));
    };
    let p = |x: &str| x.parse::<f64>().map_err(|e| CliError::Param(format!("{x:?}: {e}")));
    Ok((p(a)?, p(b)?))
}

fn solve_cmd(cli: &Cli, a: &SolveArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = a.coset.config.as_ref().map(read_config).transpose()?;
    let raw_mode = !a.raw.is_empty() || (matches!(config, Some(CosetConfig::Raw(_))) && a.coset.family.is_none());
    if raw_mode {
        let base = match config {
            Some(CosetConfig::Raw(d)) => d,
            _ => RawCosetData::zero(),
        };
        let sys = MartingaleSystem::from_data(&parse_raw(&a.raw, base)?);
        let rec = SolutionRecord::raw(&sys, &sys.solve());
        return emit_records(cli.format, out, &[rec]);
    }
    let spec = resolve_spec(&a.coset)?;
    let label = parse_label(&spec, &a.mu, &a.nu)?;
    if a.compare_conventions {
        return compare_cmd(cli, &spec, &label, a.expect.as_deref(), out);
    }
    let conv = a.h_convention.into();
    let sys = build_system(&spec, &label, conv)?;
    let rec = SolutionRecord::new(&label, conv, &sys, &sys.solve());
    emit_records(cli.format, out, &[rec])
}

fn emit_records(format: Format, out: &mut dyn Write, recs: &[SolutionRecord]) -> CliResult<()> {
    match format {
        Format::Json if recs.len() == 1 => emit_json(out, &recs[0]),
        Format::Json => emit_json(out, &recs),
        f => emit_rows(f, out, &SolutionRecord::CSV_HEADER, &recs.iter().map(SolutionRecord::csv_fields).collect::<Vec<_>>()),
    }
}

#[derive(Serialize)]
struct ConventionReport {
    h_convention: HConvention,
    solution: SolutionRecord,
    residuals: Option<[String; 2]>,
    back_substitution_ok: Option<bool>,
    matches_expected: Option<bool>,
}

fn compare_cmd(cli: &Cli, spec: &CosetSpec, label: &PrimaryLabel, expect: Option<&str>, out: &mut dyn Write) -> CliResult<()> {
    let reference = expect
        .map(|s| {
            let (k, t) = s.split_once(',').ok_or_else(|| CliError::Param(format!("--expect wants \"kappa,tau\", got {s:?}")))?;
            Ok::<_, CliError>((exact::parse(k.trim())?, exact::parse(t.trim())?))
        })
        .transpose()?;
    let checks = compare_conventions(spec, label, reference.as_ref())?;
    let reports: Vec<ConventionReport> = checks
        .iter()
        .map(|c| ConventionReport {
            h_convention: c.convention,
            solution: SolutionRecord::new(label, c.convention, &c.system, &c.solution),
            residuals: c.residuals.as_ref().map(|(a, b)| [exact::fmt(a), exact::fmt(b)]),
            back_substitution_ok: c.residuals.as_ref().map(|(a, b)| a == &exact::int(0) && b == &exact::int(0)),
            matches_expected: c.matches_reference,
        })
        .collect();
    match cli.format {
        Format::Json => emit_json(out, &json!({ "label": label.to_string(), "expected": expect, "conventions": reports })),
        f => {
            let opt = |b: Option<bool>| b.map(|b| b.to_string()).unwrap_or_default();
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.h_convention.to_string(),
                        r.solution.h.clone(),
                        r.solution.classification.to_string(),
                        r.solution.kappa.clone().unwrap_or_default(),
                        r.solution.tau.clone().unwrap_or_default(),
                        opt(r.back_substitution_ok),
                        opt(r.matches_expected),
                    ]
                })
                .collect();
            emit_rows(f, out, &["h_convention", "h", "classification", "kappa", "tau", "back_substitution_ok", "matches_expected"], &rows)
        }
    }
}

fn scan_cmd(cli: &Cli, args: &CosetArgs, conv: HConvention, out: &mut dyn Write) -> CliResult<()> {
    let spec = resolve_spec(args)?;
    let recs: Vec<SolutionRecord> = scan(&spec, conv)?.iter().map(|r| r.record()).collect();
    match cli.format {
        Format::Json => emit_json(out, &recs),
        f => emit_records(f, out, &recs),
    }
}

fn verify_cmd(cli: &Cli, path: &PathBuf, out: &mut dyn Write) -> CliResult<()> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Param(format!("{}: {e}", path.display())))?;
    let recs: Vec<SolutionRecord> = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => vec![serde_json::from_str(&text).map_err(|e| CliError::Param(format!("{}: {e}", path.display())))?],
    };
    let results = recs.iter().map(|r| r.verify()).collect::<Result<Vec<_>, _>>()?;
    let failed = results.iter().filter(|v| !v.ok).count();
    let rows: Vec<serde_json::Value> = results
        .iter()
        .map(|v| json!({ "label": v.label, "ok": v.ok, "residuals": v.residuals.iter().map(exact::fmt).collect::<Vec<_>>() }))
        .collect();
    match cli.format {
        Format::Json => emit_json(out, &json!({ "rows": rows, "checked": results.len(), "failed": failed }))?,
        f => emit_rows(
            f,
            out,
            &["label", "ok", "residuals"],
            &results
                .iter()
                .map(|v| vec![v.label.clone(), v.ok.to_string(), v.residuals.iter().map(exact::fmt).collect::<Vec<_>>().join(" ")])
                .collect::<Vec<_>>(),
        )?,
    }
    if failed > 0 {
        return Err(CliError::Internal(format!("{failed} of {} rows failed back-substitution", results.len())));
    }
    Ok(())
}

fn trace_cmd(cli: &Cli, kappa: f64, steps: usize, dt: f64, stream: u64, out: &mut dyn Write) -> CliResult<()> {
    let tr = generate_trace(kappa, steps, dt, RngSpec::new(cli.seed, stream))?;
    match cli.format {
        Format::Json => emit_json(
            out,
            &json!({
                "kappa": kappa,
                "dt": dt,
                "seed": cli.seed,
                "stream": stream,
                "t": tr.times().collect::<Vec<_>>(),
                "re": tr.samples.iter().map(|z| z.re).collect::<Vec<_>>(),
                "im": tr.samples.iter().map(|z| z.im).collect::<Vec<_>>(),
            }),
        ),
        _ => out.write_all(tr.to_csv().as_bytes()).map_err(io_err),
    }
}

fn drift_cmd(cli: &Cli, a: &DriftArgs, out: &mut dyn Write) -> CliResult<()> {
    let (re, im) = parse_pair(&a.start)?;
    let obs = if a.constant {
        Observable::Constant(Complex64::new(1.0, 0.0))
    } else {
        if !(a.kappa > 0.0) && a.exponent.is_none() {
            return Err(CliError::Param("default exponent 1 - 4/kappa needs kappa > 0".into()));
        }
        Observable::PowerLaw(a.exponent.unwrap_or(1.0 - 4.0 / a.kappa))
    };
    let params = DriftParams {
        grid: a.grid,
        stopped: !a.exclude_swallowed,
        ..DriftParams::new(a.kappa, Complex64::new(re, im), a.n_traj, a.dt, a.horizon)
    };
    let report = drift_test(&obs, &params, RngSpec::new(cli.seed, 0))?;
    if let Some(path) = &a.series {
        fs::write(path, report.to_csv()).map_err(io_err)?;
    }
    match cli.format {
        Format::Json => emit_json(out, &report),
        Format::Csv => out.write_all(report.to_csv().as_bytes()).map_err(io_err),
        Format::Table => {
            let row = |name: &str, c: &cosetsle_core::mcheck::ComponentReport| {
                vec![
                    name.to_string(),
                    format!("{:.6e}", c.slope.slope),
                    format!("{:.6e}", c.slope.std_error),
                    format!("{:.3}", c.slope.z),
                    format!("{:.3}", c.max_deviation_ratio),
                    if c.pass { "pass" } else { "fail" }.to_string(),
                ]
            };
            emit_table(out, &["part", "slope", "slope_se", "z", "max_dev_over_se", "verdict"], &[row("re", &report.re), row("im", &report.im)])?;
            writeln!(out, "{}: {:?} ({} trajectories, {} swallowed)", report.observable, report.verdict, report.n_used, report.n_swallowed).map_err(io_err)
        }
    }
}

fn passage_cmd(cli: &Cli, a: &PassageArgs, out: &mut dyn Write) -> CliResult<()> {
    let target = match &a.target {
        Some(s) => {
            let (re, im) = parse_pair(s)?;
            Complex64::new(re, im)
        }
        None => Complex64::from_polar(1.0, a.theta),
    };
    let params = PassageParams {
        kappa: a.kappa,
        target,
        n_traces: a.n_traces,
        n_steps: a.steps,
        dt: a.dt,
        method: match a.method {
            MethodArg::Flow => PassageMethod::Flow,
            MethodArg::Polyline => PassageMethod::Polyline,
        },
    };
    let est = left_passage_estimate(&params, RngSpec::new(cli.seed, 0))?;
    let theta = target.arg();
    let oracle = if a.kappa > 0.0 { schramm_formula(a.kappa, theta).ok() } else { None };
    let z = oracle.map(|p| est.z_against(p));
    match cli.format {
        Format::Json => emit_json(out, &json!({ "estimate": est, "theta": theta, "schramm": oracle, "z": z })),
        f => {
            let opt = |x: Option<f64>| x.map(|v| format!("{v:.10}")).unwrap_or_default();
            emit_rows(
                f,
                out,
                &["kappa", "theta", "n_traces", "right", "probability", "std_error", "wilson_lo", "wilson_hi", "schramm", "z"],
                &[vec![
                    a.kappa.to_string(),
                    format!("{theta:.10}"),
                    est.params.n_traces.to_string(),
                    est.right.to_string(),
                    format!("{:.10}", est.probability),
                    format!("{:.10}", est.std_error),
                    format!("{:.10}", est.wilson95.0),
                    format!("{:.10}", est.wilson95.1),
                    opt(oracle),
                    opt(z),
                ]],
            )
        }
    }
}
