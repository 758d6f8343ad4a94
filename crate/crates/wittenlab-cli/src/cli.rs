//! Argument parsing and subcommand dispatch.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use wittenlab::bottleneck::stability_audit;
use wittenlab::landscapes::Builtin;
use wittenlab::spectra::fit::BarFit;
use wittenlab::svtoolkit::{run_suite, Suite};
use wittenlab::{
    barcode_over, build_filtration, classify, match_and_fit, predict_window_spectrum, CoefficientField, SampledField,
    SpectralPrediction, SpectralReport,
};

use crate::config::{parse_config, parse_list, parse_scheme, parse_window, validate_h, FieldSource, PrefactorSelect, Scenario};
use crate::error::{exit, CliError};
use crate::run::{self, count_checks, Check};

#[derive(Debug, Parser)]
#[command(name = "wittenlab", version, about = "Bar codes and small Witten Laplacian spectra of sampled potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline for a builtin scenario or a config file; exit 0 iff every check passes.
    Run(RunArgs),
    /// Persistence bar code of a field (JSON).
    Barcode(FieldCmd),
    /// Bottleneck stability audit of a field against a second field or a random perturbation.
    Stability(StabilityArgs),
    /// Endpoint classification and predicted small spectrum for a window (JSON).
    Predict(FieldCmd),
    /// Small singular values over an h sweep (CSV).
    Spectrum(SpectrumArgs),
    /// Reference prefactor-model eigenvalues of a builtin landscape (CSV).
    Prefactor(PrefactorArgs),
    /// Re-check counts and rates from saved prediction.json and spectra.json.
    Verify(VerifyArgs),
    /// Randomized property suites of the singular value toolkit.
    Svcheck(SvcheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct FieldArgs {
    /// Field file (CSV or JSON).
    #[arg(long, conflicts_with = "builtin")]
    pub input: Option<PathBuf>,
    /// Builtin landscape, e.g. double_well_1d or kwell_symmetric(4).
    #[arg(long)]
    pub builtin: Option<String>,
    /// Number of wells for kwell_symmetric.
    #[arg(long = "K", value_name = "K")]
    pub k: Option<usize>,
    /// Quartic-tilt parameter for degenerate_min.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Nodes per axis for builtins.
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct WindowArgs {
    /// Level window as a,b (default: the full window).
    #[arg(long, allow_hyphen_values = true, value_name = "A,B")]
    pub window: Option<String>,
    /// Coefficient field for persistence: 2, GF(p) or Q.
    #[arg(long = "field-coeff", value_name = "FIELD")]
    pub field_coeff: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// Decreasing h values, comma separated.
    #[arg(long, value_name = "H,...")]
    pub h: Option<String>,
    /// Blocks d^p to analyse, comma separated (default: all).
    #[arg(long, value_name = "P,...")]
    pub degree: Option<String>,
    /// Discretization: fitted or midpoint.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Seed for the iterative solver's start vector.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Builtin scenario name or path to a config file.
    pub target: Option<String>,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Output directory (default: out/<scenario>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the prefactor-model checks.
    #[arg(long)]
    pub no_prefactor: bool,
}

#[derive(Debug, Args)]
pub struct FieldCmd {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Second field on the same grid.
    #[arg(long, conflicts_with = "amplitude")]
    pub other: Option<PathBuf>,
    /// Sup-norm amplitude of a random perturbation (used without --other).
    #[arg(long, default_value_t = 0.05)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrefactorArgs {
    /// Builtin landscape.
    pub builtin: String,
    #[arg(long = "K", value_name = "K")]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    #[arg(long, value_name = "H,...")]
    pub h: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run output directory holding prediction.json and spectra.json.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    #[arg(long)]
    pub spectra: Option<PathBuf>,
    /// Relative tolerance on fitted rates.
    #[arg(long, default_value_t = run::RATE_TOL)]
    pub rate_tol: f64,
}

#[derive(Debug, Args)]
pub struct SvcheckArgs {
    /// Suite name, or `all`.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn builtin_from(name: &str, k: Option<usize>, delta: Option<&str>) -> Result<Builtin, CliError> {
    let mut b = Builtin::parse(name)?;
    if let Some(k) = k {
        if !matches!(b, Builtin::KwellSymmetric { .. }) {
            return Err(usage(format!("--K applies to kwell_symmetric, not {}", b.name())));
        }
        b = b.with_param(&k.to_string())?;
    }
    if let Some(d) = delta {
        if !matches!(b, Builtin::DegenerateMin { .. }) {
            return Err(usage(format!("--delta applies to degenerate_min, not {}", b.name())));
        }
        b = b.with_param(d)?;
    }
    Ok(b)
}

fn field_source(args: &FieldArgs, positional: Option<&str>) -> Result<Option<FieldSource>, CliError> {
    if let Some(p) = &args.input {
        if args.k.is_some() || args.delta.is_some() {
            return Err(usage("--K and --delta apply to builtins, not --input"));
        }
        return Ok(Some(FieldSource::File(p.clone())));
    }
    match args.builtin.as_deref().or(positional) {
        Some(name) => Ok(Some(FieldSource::Builtin(builtin_from(name, args.k, args.delta.as_deref())?))),
        None if args.k.is_some() || args.delta.is_some() => Err(usage("--K/--delta need a builtin")),
        None => Ok(None),
    }
}

fn load_field(args: &FieldArgs) -> Result<SampledField, CliError> {
    let src = field_source(args, None)?.ok_or_else(|| usage("give --input FILE or --builtin NAME"))?;
    let mut s = Scenario::new(src, vec![1.0]);
    s.resolution = args.resolution;
    Ok(run::load(&s)?.field)
}

fn coefficients(w: &WindowArgs) -> Result<CoefficientField, CliError> {
    match &w.field_coeff {
        Some(t) => t.parse().map_err(|e: wittenlab::persistence::PersistenceError| usage(format!("--field-coeff: {e}"))),
        None => Ok(CoefficientField::default()),
    }
}

fn window(w: &WindowArgs) -> Result<Option<(f64, f64)>, CliError> {
    w.window.as_deref().map(|t| parse_window(t).map_err(|e| usage(format!("--window: {e}")))).transpose()
}

fn h_list(text: &str) -> Result<Vec<f64>, CliError> {
    let h = parse_list(text).map_err(|e| usage(format!("--h: {e}")))?;
    validate_h(&h).map_err(|e| usage(format!("--h: {e}")))?;
    Ok(h)
}

fn degrees(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(d) if d <= 1 => Ok(d),
            _ => Err(usage(format!("--degree: '{}' is not 0 or 1", t.trim()))),
        })
        .collect()
}

fn apply_sweep(s: &mut Scenario, a: &SweepArgs) -> Result<(), CliError> {
    if let Some(h) = &a.h {
        s.h = h_list(h)?;
    }
    if let Some(d) = &a.degree {
        s.degrees = degrees(d)?;
    }
    if let Some(t) = &a.scheme {
        s.scheme = parse_scheme(t).ok_or_else(|| usage(format!("--scheme: unknown scheme '{t}'")))?;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    Ok(())
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, body).map_err(|source| CliError::Write { path: p.to_path_buf(), source }),
        None => {
            println!("{}", body.trim_end());
            Ok(())
        }
    }
}

/// Builtins whose degree-0 block only carries discretization artifacts.
fn default_degrees(src: &FieldSource) -> Vec<usize> {
    match src {
        FieldSource::Builtin(Builtin::MexicanHat2d) => vec![1],
        _ => vec![],
    }
}

/// Build the scenario for `run` from a config file or builtin plus flag overrides.
pub fn scenario_from_args(a: &RunArgs) -> Result<Scenario, CliError> {
    let from_file = a.target.as_deref().filter(|t| Path::new(t).is_file());
    let mut s = match from_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
            let mut s = parse_config(&text)?;
            if let Some(src) = field_source(&a.field, None)? {
                s.field = src;
            }
            s
        }
        None => {
            let src = field_source(&a.field, a.target.as_deref())?
                .ok_or_else(|| usage(format!("run needs a scenario: one of {} or a config file", Builtin::NAMES.join(", "))))?;
            let h = match (&src, &a.sweep.h) {
                (_, Some(_)) => vec![],
                (FieldSource::Builtin(b), None) => b.default_h(),
                (FieldSource::File(_), None) => return Err(usage("--h is required with --input")),
            };
            let degrees = default_degrees(&src);
            let mut s = Scenario::new(src, h);
            s.degrees = degrees;
            s
        }
    };
    if a.field.resolution.is_some() {
        s.resolution = a.field.resolution;
    }
    if let Some(w) = window(&a.window)? {
        s.window = Some(w);
    }
    if a.window.field_coeff.is_some() {
        s.coefficients = coefficients(&a.window)?;
    }
    apply_sweep(&mut s, &a.sweep)?;
    if a.no_prefactor {
        s.prefactor = PrefactorSelect::None;
    }
    if a.out.is_some() {
        s.out = a.out.clone();
    }
    Ok(s)
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let v = c.value.map(|v| format!(" value={v:.6}")).unwrap_or_default();
        let t = match (c.target, c.tolerance) {
            (Some(t), Some(tol)) => format!(" target={t}±{tol}"),
            _ => String::new(),
        };
        println!("{} {}{v}{t}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

/// `kwell_symmetric(4)` becomes `kwell_symmetric_4`.
fn dir_name(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    s.trim_end_matches('_').to_string()
}

fn cmd_run(a: &RunArgs) -> Result<i32, CliError> {
    let s = scenario_from_args(a)?;
    let out = run::execute(&s)?;
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("out").join(dir_name(&s.name)));
    let files = out.write(&dir)?;
    println!("scenario {} ({}), h = {:?}", s.name, out.report.source, s.h);
    print_checks(&out.report.checks);
    if let Some(note) = &out.report.fit_note {
        println!("fit skipped: {note}");
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(out.exit_code())
}

fn prediction_for(a: &FieldCmd) -> Result<(SpectralPrediction, wittenlab::BarCode), CliError> {
    let f = load_field(&a.field)?;
    let bc = barcode_over(&build_filtration(&f), coefficients(&a.window)?);
    let w = match window(&a.window)? {
        Some((lo, hi)) => wittenlab::LevelWindow::new(lo, hi)?,
        None => wittenlab::LevelWindow::full(),
    };
    Ok((predict_window_spectrum(&classify(&bc, &w)?), bc))
}

fn cmd_barcode(a: &FieldCmd) -> Result<i32, CliError> {
    let f = load_field(&a.field)?;
    let bc = barcode_over(&build_filtration(&f), coefficients(&a.window)?);
    emit(a.out.as_deref(), &bc.to_json())?;
    Ok(exit::OK)
}

fn cmd_predict(a: &FieldCmd) -> Result<i32, CliError> {
    let (pred, _) = prediction_for(a)?;
    emit(a.out.as_deref(), &pred.to_json())?;
    Ok(exit::OK)
}

fn cmd_stability(a: &StabilityArgs) -> Result<i32, CliError> {
    let f = load_field(&a.field)?;
    let g = match &a.other {
        Some(p) => run::read_field(p)?,
        None => {
            if !(a.amplitude.is_finite() && a.amplitude >= 0.0) {
                return Err(usage("--amplitude must be finite and nonnegative"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let u = Uniform::new_inclusive(-a.amplitude, a.amplitude).map_err(|e| usage(e.to_string()))?;
            let values = f.values.iter().map(|v| v + u.sample(&mut rng)).collect();
            SampledField::new(f.topology.clone(), values)?
        }
    };
    let rep = stability_audit(&f, &g)?;
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&rep).expect("json"))?;
    Ok(if rep.pass { exit::OK } else { exit::CHECK_FAILED })
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<i32, CliError> {
    let src = field_source(&a.field, None)?.ok_or_else(|| usage("give --input FILE or --builtin NAME"))?;
    let h = match (&src, &a.sweep.h) {
        (_, Some(t)) => h_list(t)?,
        (FieldSource::Builtin(b), None) => b.default_h(),
        (FieldSource::File(_), None) => return Err(usage("--h is required with --input")),
    };
    let mut s = Scenario::new(src, h);
    s.degrees = default_degrees(&s.field);
    s.resolution = a.field.resolution;
    s.window = window(&a.window)?;
    s.coefficients = coefficients(&a.window)?;
    apply_sweep(&mut s, &a.sweep)?;
    let loaded = run::load(&s)?;
    let bc = barcode_over(&build_filtration(&loaded.field), s.coefficients);
    let pred = predict_window_spectrum(&classify(&bc, &run::window_of(&s)?)?);
    let reports = run::sweep(&loaded.field, &pred, &s.h, &run::report_options(&s)).map_err(CliError::Spectral)?;
    let mut csv = format!("{}\n", SpectralReport::csv_header());
    for r in &reports {
        csv.push_str(&r.csv_rows());
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(exit::OK)
}

fn cmd_prefactor(a: &PrefactorArgs) -> Result<i32, CliError> {
    let b = builtin_from(&a.builtin, a.k, a.delta.as_deref())?;
    let land = b.build(None)?;
    let hs = match &a.h {
        Some(t) => h_list(t)?,
        None => land.h.clone(),
    };
    let mut csv = String::from("h,index,lambda_log,lambda\n");
    for h in hs {
        for (i, v) in land.reference_eigenvalues(h)?.iter().enumerate() {
            csv.push_str(&format!("{h:e},{i},{:e},{:e}\n", v.log_mag, v.value()));
        }
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(exit::OK)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Counts and rate checks recomputed from saved artifacts.
pub fn verify(pred: &SpectralPrediction, reports: &[SpectralReport], rate_tol: f64) -> Result<Vec<Check>, CliError> {
    let mut checks = count_checks(reports, pred);
    if checks.iter().all(|c| c.pass) && reports.len() >= 3 {
        let fit = match_and_fit(reports, pred).map_err(CliError::Fit)?;
        checks.extend(fit.bars.iter().map(|b: &BarFit| Check {
            name: format!("rate[bar {}]", b.bar_id),
            pass: (b.rate / b.predicted_rate - 1.0).abs() <= rate_tol,
            value: Some(b.rate / b.predicted_rate),
            target: Some(1.0),
            tolerance: Some(rate_tol),
            detail: format!("fitted rate {:.5} vs 2ℓ = {:.5}", b.rate, b.predicted_rate),
        }));
    }
    Ok(checks)
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf, CliError> {
        explicit
            .clone()
            .or_else(|| a.dir.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| usage(format!("give --dir or --{}", name.trim_end_matches(".json"))))
    };
    let pred: SpectralPrediction = read_json(&pick(&a.prediction, "prediction.json")?)?;
    let reports: Vec<SpectralReport> = read_json(&pick(&a.spectra, "spectra.json")?)?;
    let checks = verify(&pred, &reports, a.rate_tol)?;
    print_checks(&checks);
    Ok(if checks.iter().all(|c| c.pass) { exit::OK } else { exit::CHECK_FAILED })
}

fn cmd_svcheck(a: &SvcheckArgs) -> Result<i32, CliError> {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        vec![Suite::from_name(&a.suite).ok_or_else(|| usage(format!("unknown suite '{}'; one of all, {}", a.suite, names.join(", "))))?]
    };
    let mut ok = true;
    for s in suites {
        let r = run_suite(s, a.trials, a.seed)?;
        ok &= r.violations == 0;
        println!(
            "{} {:<18} trials={} passed={} skipped={} violations={}",
            if r.violations == 0 { "PASS" } else { "FAIL" },
            s.name(),
            r.trials,
            r.passed,
            r.skipped,
            r.violations
        );
    }
    Ok(if ok { exit::OK } else { exit::CHECK_FAILED })
}

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Barcode(a) => cmd_barcode(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Prefactor(a) => cmd_prefactor(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Svcheck(a) => cmd_svcheck(a),
    }
}

/// Parse, run and map every outcome to an exit code. Never panics outward.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            exit::INTERNAL
        }
    }
}
