//! The scenario pipeline: field → barcode → prediction → spectrum → checks.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use wittenlab::landscapes::Landscape;
use wittenlab::spectra::{Match, SpectraError, SvdOptions};
use wittenlab::{
    barcode_over, build_filtration, classify, match_and_fit, predict_window_spectrum, spectral_report, BarCode,
    FitSummary, LevelWindow, ReferenceModel, ReportOptions, SampledField, SpectralPrediction, SpectralReport,
};

use crate::config::{FieldSource, PrefactorSelect, Scenario};
use crate::error::{exit, CliError};

/// Relative tolerance on the fitted rate against 2ℓ.
pub const RATE_TOL: f64 = 0.05;
/// Looser rate tolerance for the 2D iterative path.
pub const RATE_TOL_2D: f64 = 0.08;
/// Measured over reference eigenvalue at the smallest h.
pub const PREFACTOR_TOL: f64 = 0.10;
/// Eigenvalue ratio pattern of circulant landscapes.
pub const PATTERN_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    fn within(name: impl Into<String>, value: f64, target: f64, tol: f64, detail: String) -> Check {
        Check {
            name: name.into(),
            pass: (value - target).abs() <= tol,
            value: Some(value),
            target: Some(target),
            tolerance: Some(tol),
            detail,
        }
    }

    fn exact(name: impl Into<String>, got: usize, want: usize, detail: String) -> Check {
        Check {
            name: name.into(),
            pass: got == want,
            value: Some(got as f64),
            target: Some(want as f64),
            tolerance: Some(0.0),
            detail,
        }
    }
}

/// Loaded field plus the builtin landscape it came from, if any.
pub struct Loaded {
    pub field: SampledField,
    pub landscape: Option<Landscape>,
    pub source: String,
}

pub fn read_field(path: &Path) -> Result<SampledField, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    let parsed = if is_json { SampledField::from_json(&text) } else { SampledField::from_csv(&text) };
    parsed.map_err(|source| CliError::Input { path: path.to_path_buf(), source })
}

pub fn load(scenario: &Scenario) -> Result<Loaded, CliError> {
    match &scenario.field {
        FieldSource::Builtin(b) => {
            let l = b.build(scenario.resolution)?;
            Ok(Loaded { field: l.field.clone(), source: b.to_string(), landscape: Some(l) })
        }
        FieldSource::File(p) => Ok(Loaded { field: read_field(p)?, landscape: None, source: p.display().to_string() }),
    }
}

pub fn window_of(scenario: &Scenario) -> Result<LevelWindow, CliError> {
    match scenario.window {
        Some((a, b)) => Ok(LevelWindow::new(a, b)?),
        None => Ok(LevelWindow::full()),
    }
}

pub fn report_options(scenario: &Scenario) -> ReportOptions {
    let mut opts = ReportOptions { scheme: scenario.scheme, degrees: scenario.degrees.clone(), ..Default::default() };
    opts.svd = SvdOptions { lanczos: wittenlab::spectra::LanczosOptions { seed: scenario.seed, ..Default::default() }, ..opts.svd };
    opts
}

/// Pool size from `WITTENLAB_THREADS`, falling back to rayon's default.
pub fn thread_cap() -> Option<usize> {
    std::env::var("WITTENLAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

/// One spectral report per h, in sweep order, computed on a worker pool.
pub fn sweep(
    field: &SampledField,
    pred: &SpectralPrediction,
    h: &[f64],
    opts: &ReportOptions,
) -> Result<Vec<SpectralReport>, SpectraError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let work = || h.par_iter().map(|&h| spectral_report(field, pred, h, opts)).collect::<Result<Vec<_>, _>>();
    match builder.build() {
        Ok(pool) => pool.install(work),
        Err(_) => h.iter().map(|&h| spectral_report(field, pred, h, opts)).collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockSummary {
    pub degree: usize,
    pub path: wittenlab::spectra::SolverPath,
    pub converged: bool,
    pub iterations: usize,
    pub zero_count: usize,
    pub small_count: usize,
    pub predicted_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub h: f64,
    pub kernel_dims: Vec<Option<usize>>,
    pub blocks: Vec<BlockSummary>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub source: String,
    pub digest: String,
    pub nodes: usize,
    pub window: Option<(f64, f64)>,
    pub coefficients: String,
    pub seed: u64,
    pub h: Vec<f64>,
    pub finite_bars: usize,
    pub infinite_bars: Vec<usize>,
    pub sweep: Vec<SweepEntry>,
    pub fit_note: Option<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub exit_code: i32,
    /// Seconds since the Unix epoch; the only nondeterministic field.
    pub generated_at: u64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run produces, before anything is written.
pub struct RunOutput {
    pub barcode: BarCode,
    pub prediction: SpectralPrediction,
    pub reports: Vec<SpectralReport>,
    pub fit: Option<FitSummary>,
    pub report: RunReport,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }

    pub fn spectrum_csv(&self) -> String {
        let mut s = format!("{}\n", SpectralReport::csv_header());
        for r in &self.reports {
            s.push_str(&r.csv_rows());
        }
        s
    }

    pub fn fit_json(&self) -> String {
        match &self.fit {
            Some(f) => f.to_json(),
            None => serde_json::to_string_pretty(&serde_json::json!({
                "h": self.report.h,
                "bars": [],
                "skipped": self.report.fit_note,
            }))
            .expect("json"),
        }
    }

    /// Write every artifact under `dir`; returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
        let spectra = serde_json::to_string_pretty(&self.reports).expect("reports serialize");
        let files = [
            ("barcode.json", self.barcode.to_json()),
            ("prediction.json", self.prediction.to_json()),
            ("spectrum.csv", self.spectrum_csv()),
            ("spectra.json", spectra),
            ("fit.json", self.fit_json()),
            ("report.json", self.report.to_json()),
            ("plot_spectrum.py", PLOT_STUB.to_string()),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|source| CliError::Write { path: path.clone(), source })?;
            out.push(path);
        }
        Ok(out)
    }
}

const PLOT_STUB: &str = r#"# Plots -h log(lambda) against h from spectrum.csv and fit.json.
# Needs matplotlib; run from the output directory.
import csv, json
import matplotlib.pyplot as plt

rows = [r for r in csv.DictReader(open("spectrum.csv")) if r["bar_id"] not in ("kernel", "unmatched")]
fit = json.load(open("fit.json"))
fig, ax = plt.subplots()
for bar in fit["bars"]:
    pts = [(float(r["h"]), -float(r["h"]) * float(r["lambda_log"])) for r in rows if int(r["bar_id"]) == bar["bar_id"]]
    ax.plot([p[0] for p in pts], [p[1] for p in pts], "o", label=f"bar {bar['bar_id']}")
    ax.axhline(bar["predicted_rate"], ls=":")
ax.set_xlabel("h")
ax.set_ylabel("-h log lambda")
ax.legend()
fig.savefig("spectrum.png", dpi=150)
"#;

fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Observed rate tolerance for a bar; `None` means the rate is reported only.
fn rate_tolerance(loaded: &Loaded) -> Option<f64> {
    loaded.landscape.as_ref().map(|_| if loaded.field.topology.dim() == 2 { RATE_TOL_2D } else { RATE_TOL })
}

fn power_tolerance(model: &ReferenceModel) -> f64 {
    match model {
        ReferenceModel::Morse { .. } | ReferenceModel::Circulant { .. } => 0.05,
        ReferenceModel::Basin { .. } | ReferenceModel::PiecewiseAffine { .. } => 0.10,
        ReferenceModel::CriticalCircle => 0.15,
        ReferenceModel::None => 0.0,
    }
}

pub fn count_checks(reports: &[SpectralReport], pred: &SpectralPrediction) -> Vec<Check> {
    let mut out = Vec::new();
    for r in reports {
        for b in &r.blocks {
            out.push(Check::exact(
                format!("small_count[h={},p={}]", r.h, b.degree),
                b.small_count,
                b.predicted_count,
                "nonzero singular values below the count threshold vs #X".into(),
            ));
        }
        for (p, k) in r.kernel_dims.iter().enumerate() {
            if let Some(k) = k {
                out.push(Check::exact(
                    format!("kernel_dim[h={},p={p}]", r.h),
                    *k,
                    pred.degree(p).zero_multiplicity,
                    "dim ker of the Laplacian vs #Z".into(),
                ));
            }
        }
    }
    out
}

/// Measured nonzero small eigenvalues (log λ) of one report, ascending.
pub fn small_lambda_logs(r: &SpectralReport) -> Vec<f64> {
    let mut v: Vec<f64> = r
        .blocks
        .iter()
        .flat_map(|b| b.entries.iter())
        .filter(|e| matches!(e.matched, Match::Bar(_)))
        .map(|e| e.lambda_log)
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn model_checks(land: &Landscape, reports: &[SpectralReport], fit: Option<&FitSummary>) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let Some(last) = reports.iter().min_by(|a, b| a.h.total_cmp(&b.h)) else { return Ok(out) };
    let refs = land.reference_eigenvalues(last.h)?;
    let meas = small_lambda_logs(last);
    for (i, (m, r)) in meas.iter().zip(&refs).enumerate() {
        let ratio = (m - r.log_mag).exp();
        out.push(Check::within(
            format!("prefactor_ratio[{i}]"),
            ratio,
            1.0,
            PREFACTOR_TOL,
            format!("measured/reference eigenvalue at h={}", last.h),
        ));
    }
    if let ReferenceModel::Circulant { .. } = land.model {
        if meas.len() == refs.len() && !meas.is_empty() {
            for i in 1..meas.len() {
                let got = (meas[i] - meas[0]).exp();
                let want = (refs[i].log_mag - refs[0].log_mag).exp();
                out.push(Check::within(
                    format!("circulant_pattern[{i}]"),
                    got / want,
                    1.0,
                    PATTERN_TOL,
                    format!("λ_{i}/λ_0 = {got:.4} vs |1-ω^k|² pattern {want:.4}"),
                ));
            }
        }
    }
    if let (Some(nu), Some(fit)) = (land.prefactor_power, fit) {
        let tol = power_tolerance(&land.model);
        if let Some(b) = fit.bars.iter().min_by(|a, b| a.predicted_rate.total_cmp(&b.predicted_rate)) {
            out.push(Check::within(
                format!("prefactor_power[bar {}]", b.bar_id),
                b.prefactor_power,
                nu,
                tol,
                "slope of log(λ e^{2ℓ/h}) against log h".into(),
            ));
        }
    }
    Ok(out)
}

/// Run the pipeline in memory.
pub fn execute(scenario: &Scenario) -> Result<RunOutput, CliError> {
    let loaded = load(scenario)?;
    let window = window_of(scenario)?;
    let field = &loaded.field;
    let bc = barcode_over(&build_filtration(field), scenario.coefficients);
    let cls = classify(&bc, &window)?;
    let prediction = predict_window_spectrum(&cls);
    let reports = sweep(field, &prediction, &scenario.h, &report_options(scenario)).map_err(CliError::Spectral)?;

    let mut checks = count_checks(&reports, &prediction);
    let counts_ok = checks.iter().all(|c| c.pass);
    let (fit, fit_note) = if !counts_ok {
        (None, Some("small singular value counts differ from the prediction".to_string()))
    } else if reports.len() < 3 {
        (None, Some(format!("fit needs at least 3 h values, got {}", reports.len())))
    } else {
        (Some(match_and_fit(&reports, &prediction).map_err(CliError::Fit)?), None)
    };
    if let (Some(f), Some(tol)) = (&fit, rate_tolerance(&loaded)) {
        for b in &f.bars {
            checks.push(Check::within(
                format!("rate[bar {}]", b.bar_id),
                b.rate / b.predicted_rate,
                1.0,
                tol,
                format!("fitted rate {:.5} vs 2ℓ = {:.5}", b.rate, b.predicted_rate),
            ));
        }
    }
    if let Some(land) = &loaded.landscape {
        if counts_ok && scenario.prefactor == PrefactorSelect::Auto && window.is_full() {
            checks.extend(model_checks(land, &reports, fit.as_ref())?);
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let sweep = reports
        .iter()
        .map(|r| SweepEntry {
            h: r.h,
            kernel_dims: r.kernel_dims.clone(),
            blocks: r
                .blocks
                .iter()
                .map(|b| BlockSummary {
                    degree: b.degree,
                    path: b.path,
                    converged: b.converged,
                    iterations: b.iterations,
                    zero_count: b.zero_count,
                    small_count: b.small_count,
                    predicted_count: b.predicted_count,
                })
                .collect(),
            warnings: r.warnings.clone(),
        })
        .collect();
    let report = RunReport {
        scenario: scenario.name.clone(),
        source: loaded.source.clone(),
        digest: field.digest(),
        nodes: field.len(),
        window: scenario.window,
        coefficients: scenario.coefficients.to_string(),
        seed: scenario.seed,
        h: scenario.h.clone(),
        finite_bars: bc.finite_bars().count(),
        infinite_bars: (0..=field.topology.dim()).map(|p| bc.infinite_count(p)).collect(),
        sweep,
        fit_note,
        checks,
        pass,
        exit_code: if pass { exit::OK } else { exit::CHECK_FAILED },
        generated_at: unix_now(),
    };
    Ok(RunOutput { barcode: bc, prediction, reports, fit, report })
}
