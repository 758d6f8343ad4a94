//! Smallest singular values of Witten differential blocks and their matching
//! against bar-code predictions.

pub mod fit;
pub mod jacobi;
pub mod lanczos;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrhenius::SpectralPrediction;
use crate::field::{LevelWindow, SampledField};
use crate::numeric::ext_f64;
use crate::sparse::SparseMatrix;
use crate::witten::{assemble_d0_with, assemble_d1_with, Scheme, WindowDomain, WittenError, WittenOperator};

pub use fit::{match_and_fit, BarFit, CountMismatch, FitSummary};
pub use jacobi::{jacobi_svd, JacobiSvd};
pub use lanczos::{gkl_smallest, LanczosOptions, LanczosResult};

/// Matrices with more columns than this (on the short side) go to Lanczos.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("requested {k} singular values of a {rows}x{cols} matrix")]
    TooMany { k: usize, rows: usize, cols: usize },
    #[error("need at least 3 h values, got {0}")]
    TooFewH(usize),
    #[error("h values must be positive and distinct")]
    BadH,
    #[error("predicted and observed small singular value counts differ: {0:?}")]
    CountMismatch(Vec<CountMismatch>),
    #[error(transparent)]
    Witten(#[from] WittenError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverPath {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct SvdOptions {
    pub vectors: bool,
    pub dense_limit: usize,
    pub lanczos: LanczosOptions,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions { vectors: false, dense_limit: DENSE_LIMIT, lanczos: LanczosOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unit singular vectors on the short side of the matrix, one per value:
    /// right vectors when rows ≥ cols, left vectors otherwise.
    pub vectors: Option<Vec<Vec<f64>>>,
    pub path: SolverPath,
    pub converged: bool,
    pub iterations: usize,
    pub sigma_max: f64,
    /// min(rows, cols): how many singular values the matrix has.
    pub total: usize,
}

pub fn smallest_singular_values(op: &WittenOperator, k: usize) -> Result<SvdResult, SpectraError> {
    smallest_singular_values_of(&op.matrix, k, &SvdOptions { vectors: true, ..Default::default() })
}

pub fn smallest_singular_values_of(a: &SparseMatrix, k: usize, opts: &SvdOptions) -> Result<SvdResult, SpectraError> {
    let short = a.nrows.min(a.ncols);
    if k > short {
        return Err(SpectraError::TooMany { k, rows: a.nrows, cols: a.ncols });
    }
    if short == 0 {
        return Ok(SvdResult {
            values: vec![],
            vectors: opts.vectors.then(Vec::new),
            path: SolverPath::Dense,
            converged: true,
            iterations: 0,
            sigma_max: 0.0,
            total: 0,
        });
    }
    if short <= opts.dense_limit {
        let dense = a.to_dense();
        let s = jacobi_svd(&dense, opts.vectors);
        let n = s.singular_values.len();
        let values: Vec<f64> = s.singular_values.iter().rev().take(k).cloned().collect();
        let vectors = if opts.vectors {
            let side: &DMatrix<f64> = if a.nrows >= a.ncols { s.v.as_ref().unwrap() } else { s.u.as_ref().unwrap() };
            Some((0..k).map(|i| side.column(n - 1 - i).iter().cloned().collect()).collect())
        } else {
            None
        };
        return Ok(SvdResult {
            values,
            vectors,
            path: SolverPath::Dense,
            converged: s.converged,
            iterations: s.sweeps,
            sigma_max: s.singular_values[0],
            total: n,
        });
    }
    let lopts = LanczosOptions { vectors: opts.vectors, ..opts.lanczos.clone() };
    let r = gkl_smallest(a, k, &lopts);
    Ok(SvdResult {
        values: r.singular_values,
        vectors: r.vectors,
        path: SolverPath::Lanczos,
        converged: r.converged,
        iterations: r.iterations,
        sigma_max: r.sigma_max,
        total: short,
    })
}

/// σ below this is treated as an exact zero for the block d^p.
pub fn kernel_threshold(pred: &SpectralPrediction, p: usize, h: f64, sigma_max: f64, path: SolverPath) -> f64 {
    // Zeros come out near ε·σ_max in general. On the dense path the graded
    // blocks resolve them much lower, so when a slow rate is expected the
    // floor drops to four decades below its e^{−ℓ/h} scale.
    let absolute = 1e-12 * sigma_max;
    let slowest = pred.degree(p).rates_up.iter().map(|r| r.rate).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    let floor = match (path, slowest) {
        (SolverPath::Dense, Some(rate)) => absolute.min(1e-4 * (-rate / (2.0 * h)).exp()),
        _ => absolute,
    };
    match (pred.eta, pred.level_span) {
        (Some(eta), Some((c1, cn))) => floor.max((-(2.0 * (cn - c1) + 10.0 * eta) / h).exp()),
        _ => floor,
    }
}

/// σ below this counts as exponentially small.
pub fn count_threshold(pred: &SpectralPrediction, h: f64) -> f64 {
    let floor = h.sqrt() / 4.0;
    match pred.eta {
        Some(eta) => floor.min((-eta / (2.0 * h)).exp()),
        None => floor,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum Match {
    Kernel,
    Bar(usize),
    Unmatched,
}

impl Match {
    fn csv(&self) -> String {
        match self {
            Match::Kernel => "kernel".into(),
            Match::Bar(id) => id.to_string(),
            Match::Unmatched => "unmatched".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub sigma: f64,
    /// log λ = 2 log σ.
    #[serde(with = "ext_f64")]
    pub lambda_log: f64,
    pub matched: Match,
    pub predicted_rate: Option<f64>,
    /// −h log λ − 2ℓ
    pub residual: Option<f64>,
}

/// Small singular values of the block d^p.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub degree: usize,
    pub nrows: usize,
    pub ncols: usize,
    pub path: SolverPath,
    pub converged: bool,
    pub iterations: usize,
    pub sigma_max: f64,
    pub kernel_threshold: f64,
    pub count_threshold: f64,
    /// Zero singular values on the short side.
    pub zero_count: usize,
    /// None when the iterative path did not see past the zeros.
    pub rank: Option<usize>,
    /// Nonzero singular values below the count threshold.
    pub small_count: usize,
    pub predicted_count: usize,
    /// Ascending; kernel entries first.
    pub entries: Vec<SpectralEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub h: f64,
    pub blocks: Vec<BlockReport>,
    /// dim ker Δ^p, when the ranks of both neighbouring blocks are known.
    pub kernel_dims: Vec<Option<usize>>,
    pub cells: Vec<usize>,
    pub warnings: Vec<String>,
}

impl SpectralReport {
    pub fn block(&self, p: usize) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.degree == p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "h,degree,sigma,lambda_log,bar_id,predicted_rate,residual"
    }

    pub fn csv_rows(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        let mut out = String::new();
        for b in &self.blocks {
            for e in &b.entries {
                out.push_str(&format!(
                    "{:e},{},{:e},{:e},{},{},{}\n",
                    self.h,
                    b.degree,
                    e.sigma,
                    e.lambda_log,
                    e.matched.csv(),
                    opt(e.predicted_rate),
                    opt(e.residual)
                ));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::csv_header(), self.csv_rows())
    }
}

#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub scheme: Scheme,
    /// Blocks d^p to analyse; empty means every block the topology has.
    pub degrees: Vec<usize>,
    pub svd: SvdOptions,
    /// Extra singular values requested beyond the prediction on the iterative path.
    pub margin: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { scheme: Scheme::Fitted, degrees: vec![], svd: SvdOptions::default(), margin: 4 }
    }
}

/// Analyse one block given its singular values (ascending, possibly partial).
pub fn block_report(op: &WittenOperator, svd: &SvdResult, pred: &SpectralPrediction) -> BlockReport {
    let h = op.h;
    let p = op.degree;
    let kt = kernel_threshold(pred, p, h, svd.sigma_max, svd.path);
    let ct = count_threshold(pred, h);
    let zero_count = svd.values.iter().filter(|&&s| s <= kt).count();
    let saw_past = zero_count < svd.values.len() || svd.values.len() == svd.total;
    let rank = saw_past.then(|| svd.total - zero_count);
    let mut rates = pred.degree(p).rates_up;
    rates.sort_by(|a, b| b.rate.total_cmp(&a.rate).then(a.bar_id.cmp(&b.bar_id)));
    let mut entries = Vec::new();
    let mut small = 0;
    for &s in &svd.values {
        if s >= ct {
            break;
        }
        let lambda_log = 2.0 * s.ln();
        if s <= kt {
            entries.push(SpectralEntry { sigma: s, lambda_log, matched: Match::Kernel, predicted_rate: None, residual: None });
            continue;
        }
        let e = match rates.get(small) {
            Some(r) => SpectralEntry {
                sigma: s,
                lambda_log,
                matched: Match::Bar(r.bar_id),
                predicted_rate: Some(r.rate),
                residual: Some(-h * lambda_log - r.rate),
            },
            None => SpectralEntry { sigma: s, lambda_log, matched: Match::Unmatched, predicted_rate: None, residual: None },
        };
        small += 1;
        entries.push(e);
    }
    BlockReport {
        degree: p,
        nrows: op.nrows(),
        ncols: op.ncols(),
        path: svd.path,
        converged: svd.converged,
        iterations: svd.iterations,
        sigma_max: svd.sigma_max,
        kernel_threshold: kt,
        count_threshold: ct,
        zero_count,
        rank,
        small_count: small,
        predicted_count: rates.len(),
        entries,
    }
}

/// Assemble every d^p block of `field` on `window` at one h.
pub fn assemble_blocks(
    field: &SampledField,
    window: &LevelWindow,
    h: f64,
    scheme: Scheme,
) -> Result<Vec<WittenOperator>, SpectraError> {
    let domain = if window.is_full() { WindowDomain::full(field) } else { WindowDomain::new(field, *window)? };
    let mut ops = vec![assemble_d0_with(field, h, &domain, scheme)?];
    if field.topology.dim() == 2 {
        ops.push(assemble_d1_with(field, h, &domain, scheme)?);
    }
    Ok(ops)
}

/// Full per-h analysis: assemble, solve, classify.
pub fn spectral_report(
    field: &SampledField,
    pred: &SpectralPrediction,
    h: f64,
    opts: &ReportOptions,
) -> Result<SpectralReport, SpectraError> {
    let ops = assemble_blocks(field, &pred.window, h, opts.scheme)?;
    let dim = field.topology.dim();
    let mut cells: Vec<usize> = ops.iter().map(|o| o.ncols()).collect();
    cells.push(ops.last().map(|o| o.nrows()).unwrap_or(0));
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    for op in &ops {
        if !opts.degrees.is_empty() && !opts.degrees.contains(&op.degree) {
            continue;
        }
        warnings.extend(op.warnings.iter().cloned());
        let short = op.nrows().min(op.ncols());
        let svd = if short <= opts.svd.dense_limit {
            smallest_singular_values_of(&op.matrix, short, &SvdOptions { vectors: false, ..opts.svd.clone() })?
        } else {
            let d = pred.degree(op.degree);
            let nxt = pred.degree(op.degree + 1);
            // Zeros on the short side are Z^{p+1} (wide) or Z^p (tall), plus the X^p values.
            let zeros = if op.nrows() < op.ncols() { nxt.zero_multiplicity } else { d.zero_multiplicity };
            let k = (zeros + d.rates_up.len() + opts.margin).min(short);
            smallest_singular_values_of(&op.matrix, k, &SvdOptions { vectors: false, ..opts.svd.clone() })?
        };
        blocks.push(block_report(op, &svd, pred));
    }
    let rank_of = |p: usize| -> Option<usize> {
        if p > dim || p >= ops.len() {
            return Some(0);
        }
        blocks.iter().find(|b| b.degree == p).and_then(|b| b.rank)
    };
    let kernel_dims = (0..=dim)
        .map(|p| {
            let below = if p == 0 { Some(0) } else { rank_of(p - 1) };
            match (rank_of(p), below) {
                (Some(r), Some(q)) => cells[p].checked_sub(r + q),
                _ => None,
            }
        })
        .collect();
    Ok(SpectralReport { h, blocks, kernel_dims, cells, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrhenius::{classify, predict_window_spectrum};
    use crate::field::{sample, Expr, GridTopology};
    use crate::persistence::{barcode, build_filtration};
    use crate::witten::assemble_d0;
    use std::f64::consts::PI;

    #[test]
    fn diagonal_smallest_exact() {
        let a = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 3.0), (1, 1, 2.0), (2, 2, 1e-8)]);
        let r = smallest_singular_values_of(&a, 1, &SvdOptions::default()).unwrap();
        assert_eq!(r.values, vec![1e-8]);
        assert_eq!(r.path, SolverPath::Dense);
    }

    #[test]
    fn flat_circle_fourier() {
        let topo = GridTopology::circle(8).unwrap();
        let f = sample(&Expr::new("0", |_| 0.0), &topo).unwrap();
        let op = assemble_d0(&f, 1.0, &WindowDomain::full(&f)).unwrap();
        let r = smallest_singular_values(&op, 3).unwrap();
        let dx = 2.0 * PI / 8.0;
        let s1 = 2.0 / dx * (PI / 8.0).sin();
        assert!(r.values[0] < 1e-14);
        assert!((r.values[1] - s1).abs() < 1e-13 && (r.values[2] - s1).abs() < 1e-13);
        let v = r.vectors.unwrap();
        let c = 1.0 / 8f64.sqrt();
        assert!(v[0].iter().all(|x| (x.abs() - c).abs() < 1e-12));
    }

    #[test]
    fn forced_lanczos_agrees_with_dense() {
        let topo = GridTopology::circle(256).unwrap();
        let f = sample(&Expr::new("cos", |x| x[0].cos()), &topo).unwrap();
        let op = assemble_d0(&f, 0.3, &WindowDomain::full(&f)).unwrap();
        let dense = smallest_singular_values_of(&op.matrix, 3, &SvdOptions::default()).unwrap();
        let it = smallest_singular_values_of(&op.matrix, 3, &SvdOptions { dense_limit: 0, ..Default::default() }).unwrap();
        assert_eq!(it.path, SolverPath::Lanczos);
        assert!(it.converged);
        for i in 0..3 {
            assert!((dense.values[i] - it.values[i]).abs() < 1e-6 * dense.sigma_max, "{i}");
        }
    }

    #[test]
    fn too_many_values_rejected() {
        let a = SparseMatrix::zeros(2, 3);
        assert!(matches!(smallest_singular_values_of(&a, 3, &SvdOptions::default()), Err(SpectraError::TooMany { .. })));
    }

    #[test]
    fn double_well_report_counts() {
        let topo = GridTopology::circle(256).unwrap();
        let f = sample(&Expr::new("dw", |x| (2.0 * x[0]).cos() + 0.3 * x[0].cos()), &topo).unwrap();
        let bc = barcode(&build_filtration(&f));
        let cls = classify(&bc, &LevelWindow::full()).unwrap();
        let pred = predict_window_spectrum(&cls);
        let rep = spectral_report(&f, &pred, 0.1, &ReportOptions::default()).unwrap();
        let b = rep.block(0).unwrap();
        assert_eq!(b.small_count, pred.degree(0).rates_up.len());
        assert_eq!(rep.kernel_dims, vec![Some(1), Some(1)]);
        let csv = rep.to_csv();
        assert!(csv.starts_with(SpectralReport::csv_header()));
        assert!(csv.contains(",kernel,,"));
        let e = b.entries.iter().find(|e| matches!(e.matched, Match::Bar(_))).unwrap();
        assert!(e.residual.unwrap().abs() < 0.5);
    }
}
