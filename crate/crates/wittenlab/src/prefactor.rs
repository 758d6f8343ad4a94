//! Eyring–Kramers prefactors: closed forms from Hessian data, Laplace
//! integrals for degenerate basins, slopes for piecewise-affine potentials
//! and κ-matrix systems with several critical points at nearby levels.
//!
//! Every calculator returns a [`LogValue`] (or a list of them) so that rates
//! like e^{−2·10⁵} stay representable.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::LogValue;
use crate::quad::{laplace_integral, QuadError, QuadOptions};
use crate::spectra::jacobi_svd;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrefactorError {
    #[error("h must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("{0}: zero Hessian eigenvalue; use degenerate_min_rate with a basin integral")]
    DegenerateHessian(&'static str),
    #[error("{what}: eigenvalue {value} has the wrong sign")]
    WrongSign { what: &'static str, value: f64 },
    #[error("index mismatch: expected index {expected}, got {got}")]
    IndexMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("critical values must satisfy y > x (gap {0})")]
    BadGap(f64),
    #[error("zero slope: constant interval at the {0}, prefactor not covered")]
    ConstantInterval(&'static str),
    #[error("slope at the {0} has the wrong sign")]
    SlopeSign(&'static str),
    #[error("integral is zero or not finite")]
    ZeroIntegral,
    #[error("κ must be nonzero")]
    ZeroKappa,
    #[error("circulant system needs K >= 2, got {0}")]
    TooFewWells(usize),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Nondegenerate critical point: value plus Hessian spectrum split by sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseDatum {
    pub value: f64,
    /// λ₁..λ_p, all < 0.
    pub negative: Vec<f64>,
    /// λ_{p+1}..λ_d, all > 0.
    pub positive: Vec<f64>,
}

impl MorseDatum {
    pub fn new(value: f64, negative: Vec<f64>, positive: Vec<f64>) -> Self {
        MorseDatum { value, negative, positive }
    }

    pub fn index(&self) -> usize {
        self.negative.len()
    }

    pub fn dim(&self) -> usize {
        self.negative.len() + self.positive.len()
    }

    pub fn validate(&self, what: &'static str) -> Result<(), PrefactorError> {
        for &v in self.negative.iter().chain(&self.positive) {
            if v == 0.0 {
                return Err(PrefactorError::DegenerateHessian(what));
            }
            if !v.is_finite() {
                return Err(PrefactorError::WrongSign { what, value: v });
            }
        }
        if let Some(&v) = self.negative.iter().find(|v| **v > 0.0) {
            return Err(PrefactorError::WrongSign { what, value: v });
        }
        if let Some(&v) = self.positive.iter().find(|v| **v < 0.0) {
            return Err(PrefactorError::WrongSign { what, value: v });
        }
        Ok(())
    }

    /// log |λ₁⋯λ_p|
    pub fn log_neg(&self) -> f64 {
        self.negative.iter().map(|v| v.abs().ln()).sum()
    }

    /// log |λ_{p+1}⋯λ_d|
    pub fn log_pos(&self) -> f64 {
        self.positive.iter().map(|v| v.ln()).sum()
    }

    pub fn log_det(&self) -> f64 {
        self.log_neg() + self.log_pos()
    }
}

fn check_h(h: f64) -> Result<(), PrefactorError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(PrefactorError::NonPositiveH(h))
    }
}

/// Morse–Morse leading term κ²(h/π)·|λ₁..λ_{p+1}(y)|/|λ₁..λ_p(x)|
/// ·|det Hess x|^{1/2}/|det Hess y|^{1/2}·e^{−2(y−x)/h}.
pub fn morse_rate(x: &MorseDatum, y: &MorseDatum, kappa_sq: f64, h: f64) -> Result<LogValue, PrefactorError> {
    check_h(h)?;
    x.validate("lower critical point")?;
    y.validate("upper critical point")?;
    if y.index() != x.index() + 1 {
        return Err(PrefactorError::IndexMismatch { expected: x.index() + 1, got: y.index() });
    }
    if x.dim() != y.dim() {
        return Err(PrefactorError::Dimension(format!("dim x = {}, dim y = {}", x.dim(), y.dim())));
    }
    let gap = y.value - x.value;
    if !(gap > 0.0) {
        return Err(PrefactorError::BadGap(gap));
    }
    if !(kappa_sq > 0.0) {
        return Err(PrefactorError::ZeroKappa);
    }
    let log = kappa_sq.ln() + (h / PI).ln() + y.log_neg() - x.log_neg() + 0.5 * x.log_det() - 0.5 * y.log_det()
        - 2.0 * gap / h;
    Ok(LogValue::from_log(log))
}

/// log ∫ e^{−2(f−f_min)/h} over a 1D basin, the denominator input of
/// [`degenerate_min_rate`]. `f_min` is subtracted by the caller.
pub fn basin_integral(phi: &dyn Fn(f64) -> f64, h: f64, lo: f64, hi: f64) -> Result<LogValue, PrefactorError> {
    check_h(h)?;
    Ok(laplace_integral(phi, 0.5 * h, lo, hi, &QuadOptions::default())?)
}

/// (h|λ₁(y)|/π|det Hess y|^{1/2})·e^{−2 gap/h} / ((πh)^{−d/2}·basin).
/// `basin` is ∫ e^{−2(f−f_min)/h} over the sublevel component; d = dim y.
pub fn degenerate_min_rate(saddle: &MorseDatum, basin: LogValue, gap: f64, h: f64) -> Result<LogValue, PrefactorError> {
    check_h(h)?;
    saddle.validate("saddle")?;
    if saddle.index() != 1 {
        return Err(PrefactorError::IndexMismatch { expected: 1, got: saddle.index() });
    }
    if !(gap > 0.0) {
        return Err(PrefactorError::BadGap(gap));
    }
    if basin.sign <= 0 || !basin.log_mag.is_finite() {
        return Err(PrefactorError::ZeroIntegral);
    }
    let d = saddle.dim() as f64;
    let log = h.ln() + saddle.log_neg() - PI.ln() - 0.5 * saddle.log_det() - 2.0 * gap / h
        + 0.5 * d * (PI * h).ln()
        - basin.log_mag;
    Ok(LogValue::from_log(log))
}

/// 2st/(s+t)
pub fn harmonic_mean(s: f64, t: f64) -> f64 {
    2.0 * s * t / (s + t)
}

/// One-sided slopes of a piecewise-affine potential at a critical point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    /// f'(·−0)
    pub left: f64,
    /// f'(·+0)
    pub right: f64,
}

/// H[|f'(y+0)|, f'(y−0)]·H[f'(x+0), |f'(x−0)|]·e^{−2 gap/h}; no power of h.
pub fn piecewise_affine_rate(min: Slopes, max: Slopes, gap: f64, h: f64) -> Result<LogValue, PrefactorError> {
    check_h(h)?;
    if min.left == 0.0 || min.right == 0.0 {
        return Err(PrefactorError::ConstantInterval("minimum"));
    }
    if max.left == 0.0 || max.right == 0.0 {
        return Err(PrefactorError::ConstantInterval("maximum"));
    }
    if !(min.left < 0.0 && min.right > 0.0) {
        return Err(PrefactorError::SlopeSign("minimum"));
    }
    if !(max.left > 0.0 && max.right < 0.0) {
        return Err(PrefactorError::SlopeSign("maximum"));
    }
    if !(gap > 0.0) {
        return Err(PrefactorError::BadGap(gap));
    }
    let hy = harmonic_mean(max.right.abs(), max.left);
    let hx = harmonic_mean(min.right, min.left.abs());
    Ok(LogValue::from_log(hy.ln() + hx.ln() - 2.0 * gap / h))
}

/// Critical points of index p (rows) and p+1 (columns) at levels c + δt_k,
/// c' + δt'_k, coupled by the integer matrix κ stored K×K'.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSystem {
    pub kappa: Vec<Vec<i64>>,
    pub lower: Vec<MorseDatum>,
    pub upper: Vec<MorseDatum>,
    #[serde(default)]
    pub lower_offsets: Vec<f64>,
    #[serde(default)]
    pub upper_offsets: Vec<f64>,
    #[serde(default)]
    pub delta: f64,
}

impl KappaSystem {
    pub fn validate(&self) -> Result<(usize, usize), PrefactorError> {
        let (k, k2) = (self.lower.len(), self.upper.len());
        if self.kappa.len() != k || self.kappa.iter().any(|r| r.len() != k2) {
            return Err(PrefactorError::Dimension(format!("κ must be {k}×{k2}")));
        }
        if !self.lower_offsets.is_empty() && self.lower_offsets.len() != k {
            return Err(PrefactorError::Dimension(format!("{} lower offsets for {k} points", self.lower_offsets.len())));
        }
        if !self.upper_offsets.is_empty() && self.upper_offsets.len() != k2 {
            return Err(PrefactorError::Dimension(format!("{} upper offsets for {k2} points", self.upper_offsets.len())));
        }
        let p = self.lower.first().map(|x| x.index()).unwrap_or(0);
        let d = self.lower.first().or(self.upper.first()).map(|x| x.dim()).unwrap_or(0);
        for x in &self.lower {
            x.validate("lower critical point")?;
            if x.index() != p {
                return Err(PrefactorError::IndexMismatch { expected: p, got: x.index() });
            }
        }
        for y in &self.upper {
            y.validate("upper critical point")?;
            if y.index() != p + 1 {
                return Err(PrefactorError::IndexMismatch { expected: p + 1, got: y.index() });
            }
        }
        if self.lower.iter().chain(&self.upper).any(|z| z.dim() != d) {
            return Err(PrefactorError::Dimension("mixed ambient dimensions".into()));
        }
        Ok((k, k2))
    }

    /// Rank of κ over the rationals.
    pub fn kappa_rank(&self) -> usize {
        rational_rank(&self.kappa)
    }

    fn lower_level(&self, k: usize) -> f64 {
        self.lower[k].value + self.delta * self.lower_offsets.get(k).copied().unwrap_or(0.0)
    }

    fn upper_level(&self, k: usize) -> f64 {
        self.upper[k].value + self.delta * self.upper_offsets.get(k).copied().unwrap_or(0.0)
    }

    /// Circle with K wells: minimum j sits between maxima j−1 and j, so
    /// κ = P − I with P the cyclic shift.
    pub fn circulant(k: usize, min_curvature: f64, max_curvature: f64, gap: f64) -> Result<Self, PrefactorError> {
        if k < 2 {
            return Err(PrefactorError::TooFewWells(k));
        }
        let mut kappa = vec![vec![0i64; k]; k];
        for j in 0..k {
            kappa[j][j] -= 1;
            kappa[(j + 1) % k][j] += 1;
        }
        Ok(KappaSystem {
            kappa,
            lower: vec![MorseDatum::new(0.0, vec![], vec![min_curvature]); k],
            upper: vec![MorseDatum::new(gap, vec![-max_curvature.abs()], vec![]); k],
            lower_offsets: vec![],
            upper_offsets: vec![],
            delta: 0.0,
        })
    }
}

fn rational_rank(m: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<BigRational>> =
        m.iter().map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect()).collect();
    let cols = a.first().map(|r| r.len()).unwrap_or(0);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..a.len()).find(|&r| !a[r][c].is_zero()) else { continue };
        a.swap(rank, piv);
        for r in 0..a.len() {
            if r != rank && !a[r][c].is_zero() {
                let f = &a[r][c] / &a[rank][c];
                for j in c..cols {
                    let t = &f * &a[rank][j];
                    a[r][j] -= t;
                }
            }
        }
        rank += 1;
    }
    debug_assert!(a.iter().skip(rank).all(|r| r.iter().all(|v| !v.is_negative() && v.is_zero())));
    rank
}

/// Squared singular values of (h/π)^{1/2}(D^{(p)})^{−1}κD^{(p+1)}, ascending,
/// min(K,K') of them with exact zeros for the rational rank deficit of κ.
///
/// D^{(p)}_k = |λ₁..λ_p(x_k)|^{1/4}/|λ_{p+1}..λ_d(x_k)|^{1/4}·e^{−f(x_k)/h},
/// likewise for D^{(p+1)} at the upper points. Entries more than e^{−700}
/// below the largest one underflow and are dropped.
pub fn kappa_rates(sys: &KappaSystem, h: f64) -> Result<Vec<LogValue>, PrefactorError> {
    check_h(h)?;
    let (k, k2) = sys.validate()?;
    let n = k.min(k2);
    if n == 0 {
        return Ok(vec![]);
    }
    let log_d = |z: &MorseDatum, level: f64| 0.25 * z.log_neg() - 0.25 * z.log_pos() - level / h;
    let d0: Vec<f64> = (0..k).map(|i| log_d(&sys.lower[i], sys.lower_level(i))).collect();
    let d1: Vec<f64> = (0..k2).map(|j| log_d(&sys.upper[j], sys.upper_level(j))).collect();
    let mut logs = DMatrix::from_element(k, k2, f64::NEG_INFINITY);
    for i in 0..k {
        for j in 0..k2 {
            let v = sys.kappa[i][j];
            if v != 0 {
                logs[(i, j)] = (v.unsigned_abs() as f64).ln() + d1[j] - d0[i];
            }
        }
    }
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rank = sys.kappa_rank();
    let mut out = vec![LogValue::zero(); n - rank];
    if rank == 0 {
        return Ok(out);
    }
    let m = DMatrix::from_fn(k, k2, |i, j| sys.kappa[i][j].signum() as f64 * (logs[(i, j)] - shift).exp());
    let svd = jacobi_svd(&m, false);
    // Descending; keep the `rank` largest.
    let mut vals: Vec<LogValue> = svd.singular_values[..rank]
        .iter()
        .map(|&s| {
            if s > 0.0 {
                LogValue::from_log(2.0 * (s.ln() + shift) + (h / PI).ln())
            } else {
                LogValue::zero()
            }
        })
        .collect();
    vals.reverse();
    out.extend(vals);
    Ok(out)
}

/// |1 − ω^k| for k = 1..K, ω = e^{2πi/K}; the last entry is exactly 0.
pub fn circulant_singular_values(k: usize) -> Vec<f64> {
    (1..=k).map(|j| if j == k { 0.0 } else { 2.0 * (PI * j as f64 / k as f64).sin().abs() }).collect()
}

/// Symmetric K-well rates (h/π)|λ(x)|^{1/2}|λ(y)|^{1/2}|1−ω^k|²e^{−2 gap/h},
/// k = 1..K.
pub fn circulant_rates(
    k: usize,
    min_curvature: f64,
    max_curvature: f64,
    gap: f64,
    h: f64,
) -> Result<Vec<LogValue>, PrefactorError> {
    check_h(h)?;
    if k < 2 {
        return Err(PrefactorError::TooFewWells(k));
    }
    if min_curvature <= 0.0 || max_curvature == 0.0 {
        return Err(PrefactorError::DegenerateHessian("circulant well"));
    }
    let base = (h / PI).ln() + 0.5 * min_curvature.ln() + 0.5 * max_curvature.abs().ln() - 2.0 * gap / h;
    Ok(circulant_singular_values(k)
        .into_iter()
        .map(|s| if s == 0.0 { LogValue::zero() } else { LogValue::from_log(base + 2.0 * s.ln()) })
        .collect())
}

/// Data for a critical submanifold M' of dimension p and the index-(p+1)
/// point y above it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmanifoldSystem {
    pub saddle: MorseDatum,
    pub min_value: f64,
    pub submanifold_dim: usize,
    pub kappa: f64,
    /// ∫_{M'} e^{2δφ/h}, with φ ≤ 0 of maximum 0 on M'.
    pub submanifold_integral: LogValue,
    /// ∫ e^{−2(f − f_min − δχφ)/h} over the tube M'×M''.
    pub basin_integral: LogValue,
}

/// (h/π)·|λ₁..λ_{p+1}(y)|^{1/2}/|λ_{p+2}..λ_d(y)|^{1/2}·(πh)^{−p}(κ∫_{M'})²
/// / ((πh)^{−d/2}∫_basin)·e^{−2(y−f_min)/h}.
pub fn critical_submanifold_rate(sys: &SubmanifoldSystem, h: f64) -> Result<LogValue, PrefactorError> {
    check_h(h)?;
    let y = &sys.saddle;
    y.validate("saddle")?;
    let p = sys.submanifold_dim;
    if y.index() != p + 1 {
        return Err(PrefactorError::IndexMismatch { expected: p + 1, got: y.index() });
    }
    let gap = y.value - sys.min_value;
    if !(gap > 0.0) {
        return Err(PrefactorError::BadGap(gap));
    }
    if sys.kappa == 0.0 {
        return Err(PrefactorError::ZeroKappa);
    }
    for v in [&sys.submanifold_integral, &sys.basin_integral] {
        if v.sign <= 0 || !v.log_mag.is_finite() {
            return Err(PrefactorError::ZeroIntegral);
        }
    }
    let d = y.dim() as f64;
    let lph = (PI * h).ln();
    let log = (h / PI).ln() + 0.5 * y.log_neg() - 0.5 * y.log_pos() - p as f64 * lph
        + 2.0 * (sys.kappa.abs().ln() + sys.submanifold_integral.log_mag)
        + 0.5 * d * lph
        - sys.basin_integral.log_mag
        - 2.0 * gap / h;
    Ok(LogValue::from_log(log))
}

/// Mexican hat f = (r²−1)²/4 at δ = 0: M' the unit circle, y the origin.
pub fn mexican_hat_system(h: f64) -> Result<SubmanifoldSystem, PrefactorError> {
    check_h(h)?;
    let f = |r: f64| (r * r - 1.0).powi(2) / 4.0;
    // Product metric dr² + dθ² around the circle, so no Jacobian r.
    let radial = basin_integral(&f, h, 0.0, f64::INFINITY)?;
    Ok(SubmanifoldSystem {
        saddle: MorseDatum::new(0.25, vec![-1.0, -1.0], vec![]),
        min_value: 0.0,
        submanifold_dim: 1,
        kappa: 1.0,
        submanifold_integral: LogValue::from_value(2.0 * PI),
        basin_integral: LogValue::from_log(radial.log_mag + (2.0 * PI).ln()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d1(value: f64, curv: f64) -> MorseDatum {
        if curv > 0.0 {
            MorseDatum::new(value, vec![], vec![curv])
        } else {
            MorseDatum::new(value, vec![curv], vec![])
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn morse_one_dimensional() {
        let r = morse_rate(&d1(0.0, 1.0), &d1(1.0, -1.0), 1.0, 0.1).unwrap();
        assert!((r.log_mag - ((0.1 / PI).ln() - 20.0)).abs() < 1e-14);
        let r4 = morse_rate(&d1(0.0, 1.0), &d1(1.0, -1.0), 4.0, 0.1).unwrap();
        assert!(close(r4.value(), 4.0 * r.value(), 1e-14));
        // (h/π)√(f''(x)|f''(y)|)
        let r = morse_rate(&d1(0.0, 2.0), &d1(0.5, -3.0), 1.0, 0.2).unwrap();
        assert!(close(r.value(), 0.2 / PI * 6f64.sqrt() * (-5.0f64).exp(), 1e-13));
    }

    #[test]
    fn morse_rejects_bad_data() {
        assert_eq!(
            morse_rate(&d1(0.0, 0.0), &d1(1.0, -1.0), 1.0, 0.1),
            Err(PrefactorError::DegenerateHessian("lower critical point"))
        );
        assert!(matches!(morse_rate(&d1(0.0, 1.0), &d1(1.0, 1.0), 1.0, 0.1), Err(PrefactorError::IndexMismatch { .. })));
        assert!(matches!(morse_rate(&d1(1.0, 1.0), &d1(0.5, -1.0), 1.0, 0.1), Err(PrefactorError::BadGap(_))));
        assert!(matches!(morse_rate(&d1(0.0, 1.0), &d1(1.0, -1.0), 1.0, -0.1), Err(PrefactorError::NonPositiveH(_))));
    }

    #[test]
    fn log_space_for_huge_gaps() {
        let r = morse_rate(&d1(0.0, 1.0), &d1(100.0, -1.0), 1.0, 1e-3).unwrap();
        assert!(r.log_mag.is_finite());
        assert!((r.log_mag - ((1e-3 / PI).ln() - 2e5)).abs() < 1e-9);
        assert_eq!(r.value(), 0.0);
    }

    #[test]
    fn gaussian_basin_matches_morse() {
        for (h, lam) in [(0.1, 1.0), (0.05, 2.5), (0.2, 0.7)] {
            let q = move |x: f64| 0.5 * lam * x * x;
            let basin = basin_integral(&q, h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            let sad = d1(1.0, -1.5);
            let deg = degenerate_min_rate(&sad, basin, 1.0, h).unwrap();
            let morse = morse_rate(&d1(0.0, lam), &sad, 1.0, h).unwrap();
            assert!((deg.log_mag - morse.log_mag).abs() < 1e-10, "{h} {lam}");
        }
    }

    #[test]
    fn gaussian_basin_in_two_dimensions() {
        // Product basin: the 2D integral is the product of 1D integrals.
        let h = 0.1;
        let b1 = basin_integral(&|x| 0.5 * x * x, h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let b2 = basin_integral(&|x| 1.5 * x * x, h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let basin = b1.mul(&b2);
        let sad = MorseDatum::new(0.3, vec![-2.0], vec![4.0]);
        let deg = degenerate_min_rate(&sad, basin, 0.3, h).unwrap();
        let morse = morse_rate(&MorseDatum::new(0.0, vec![], vec![1.0, 3.0]), &sad, 1.0, h).unwrap();
        assert!((deg.log_mag - morse.log_mag).abs() < 1e-10);
    }

    fn quartic_well(delta: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| (x.powi(4) + 2.0 * delta * x * x + if delta <= 0.0 { delta * delta } else { 0.0 }) / 4.0
    }

    #[test]
    fn quartic_basin_power() {
        let sad = d1(1.0, -1.0);
        let f = quartic_well(0.0);
        let rate = |h: f64| {
            let b = basin_integral(&f, h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            degenerate_min_rate(&sad, b, 1.0, h).unwrap().log_mag + 2.0 / h
        };
        let slope = (rate(1e-3) - rate(1e-2)) / (1e-3f64.ln() - 1e-2f64.ln());
        assert!((slope - 1.25).abs() < 1e-8, "{slope}");
        // h^{5/4}√λ₁e^{−2/h}/(√π ∫e^{−u⁴/2}du)
        let h: f64 = 0.01;
        let iu = laplace_integral(&|u| u.powi(4) / 2.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &QuadOptions::default())
            .unwrap()
            .value();
        let expect = h.powf(1.25) / (PI.sqrt() * iu);
        assert!(close(rate(h).exp(), expect, 1e-8));
    }

    #[test]
    fn double_quartic_basin_halves() {
        // δ < 0: two wells with f'' = 2|δ| each; the rate gets 1/√2.
        let (delta, sad) = (-0.5, d1(1.0, -1.0));
        let h = 1e-3;
        let b = basin_integral(&quartic_well(delta), h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let r = degenerate_min_rate(&sad, b, 1.0, h).unwrap();
        let expect = (h * delta.abs().sqrt() / (2f64.sqrt() * PI)).ln() - 2.0 / h;
        assert!((r.log_mag - expect).abs() < 5e-3, "{} {}", r.log_mag, expect);
        // δ > 0: a single well with f'' = δ.
        let b = basin_integral(&quartic_well(0.5), h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let r = degenerate_min_rate(&sad, b, 1.0, h).unwrap();
        let expect = (h * 0.5f64.sqrt() / PI).ln() - 2.0 / h;
        assert!((r.log_mag - expect).abs() < 5e-3);
    }

    #[test]
    fn piecewise_affine() {
        let one = Slopes { left: -1.0, right: 1.0 };
        let top = Slopes { left: 1.0, right: -1.0 };
        let r = piecewise_affine_rate(one, top, 1.0, 0.1).unwrap();
        assert!((r.log_mag + 20.0).abs() < 1e-14);
        assert_eq!(harmonic_mean(1.0, 3.0), 1.5);
        let r = piecewise_affine_rate(Slopes { left: -3.0, right: 1.0 }, top, 1.0, 0.1).unwrap();
        assert!(close(r.value(), 1.5 * (-20.0f64).exp(), 1e-14));
        assert_eq!(
            piecewise_affine_rate(Slopes { left: 0.0, right: 1.0 }, top, 1.0, 0.1),
            Err(PrefactorError::ConstantInterval("minimum"))
        );
        assert_eq!(piecewise_affine_rate(one, one, 1.0, 0.1), Err(PrefactorError::SlopeSign("maximum")));
    }

    fn example_one(ax: [f64; 2], by: [f64; 2], t: [f64; 2], delta: f64) -> KappaSystem {
        KappaSystem {
            kappa: vec![vec![1, -1], vec![0, 1]],
            lower: vec![d1(0.0, ax[0]), d1(0.0, ax[1])],
            upper: vec![d1(1.0, -by[0]), d1(1.0, -by[1])],
            lower_offsets: t.to_vec(),
            upper_offsets: vec![],
            delta,
        }
    }

    /// Closed-form eigenvalues of MMᵀ for M = [[a₁b₁, −a₁b₂],[0, a₂b₂]].
    fn two_by_two(a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
        let (a1, a2, b1, b2) = (a[0] * a[0], a[1] * a[1], b[0] * b[0], b[1] * b[1]);
        let tr = a1 * (b1 + b2) + a2 * b2;
        let det = a1 * b1 * a2 * b2;
        let disc = ((a1 * (b1 + b2) - a2 * b2).powi(2) + 4.0 * a1 * a2 * b2 * b2).sqrt();
        let big = 0.5 * (tr + disc);
        (det / big, big)
    }

    #[test]
    fn example_one_symmetric() {
        let h = 0.1;
        let sys = example_one([2.0, 2.0], [3.0, 3.0], [0.0, 0.0], 0.0);
        let r = kappa_rates(&sys, h).unwrap();
        let ab2 = (2.0f64 * 3.0).sqrt();
        let scale = h / PI * (-2.0 / h).exp() * ab2;
        let s5 = 5f64.sqrt();
        assert!(close(r[0].value(), (3.0 - s5) / 2.0 * scale, 1e-12));
        assert!(close(r[1].value(), (3.0 + s5) / 2.0 * scale, 1e-12));
    }

    #[test]
    fn example_one_generic_oracle() {
        let h = 0.07;
        let (ax, by, t, delta) = ([1.3, 0.4], [2.2, 0.9], [0.3, -0.2], 0.05);
        let sys = example_one(ax, by, t, delta);
        let r = kappa_rates(&sys, h).unwrap();
        let a = [ax[0].powf(0.25) * (delta * t[0] / h).exp(), ax[1].powf(0.25) * (delta * t[1] / h).exp()];
        let b = [by[0].powf(0.25), by[1].powf(0.25)];
        let (lo, hi) = two_by_two(a, b);
        let scale = h / PI * (-2.0 / h).exp();
        assert!(close(r[0].value(), lo * scale, 1e-12), "{} {}", r[0].value(), lo * scale);
        assert!(close(r[1].value(), hi * scale, 1e-12));
    }

    #[test]
    fn example_one_offset_asymptotics() {
        let (ax, by) = ([1.7, 0.6], [2.5, 1.1]);
        let h = 0.01;
        for delta in [0.1, 0.2] {
            let sys = example_one(ax, by, [-1.0, 0.0], delta);
            let r = kappa_rates(&sys, h).unwrap();
            let small = (h / PI).ln() + 0.5 * (ax[0] * by[0]).ln() - 2.0 * (1.0 + delta) / h;
            let big = (h / PI).ln() + 0.5 * (ax[1] * by[1]).ln() - 2.0 / h;
            assert!((r[0].log_mag - small).abs() < 0.01);
            assert!((r[1].log_mag - big).abs() < 0.01);
        }
    }

    #[test]
    fn circulant_values() {
        let s = circulant_singular_values(4);
        let r2 = 2f64.sqrt();
        for (a, b) in s.iter().zip([r2, 2.0, r2, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(circulant_singular_values(2), vec![2.0, 0.0]);
        let s3 = circulant_singular_values(3);
        assert!((s3[0] - 3f64.sqrt()).abs() < 1e-15 && (s3[1] - 3f64.sqrt()).abs() < 1e-15 && s3[2] == 0.0);
        assert!(matches!(circulant_rates(1, 1.0, 1.0, 1.0, 0.1), Err(PrefactorError::TooFewWells(1))));
    }

    #[test]
    fn circulant_through_kappa() {
        let h = 0.08;
        for k in 2..=7 {
            let sys = KappaSystem::circulant(k, 1.5, 2.5, 0.7).unwrap();
            assert_eq!(sys.kappa_rank(), k - 1);
            let mut direct = circulant_rates(k, 1.5, 2.5, 0.7, h).unwrap();
            direct.sort_by(|a, b| a.log_mag.total_cmp(&b.log_mag));
            let via = kappa_rates(&sys, h).unwrap();
            assert!(via[0].is_zero() && direct[0].is_zero());
            for (a, b) in via.iter().zip(&direct).skip(1) {
                assert!((a.log_mag - b.log_mag).abs() < 1e-12, "K={k}");
            }
        }
    }

    #[test]
    fn kappa_dimension_errors() {
        let mut sys = example_one([1.0, 1.0], [1.0, 1.0], [0.0, 0.0], 0.0);
        sys.kappa.pop();
        assert!(matches!(kappa_rates(&sys, 0.1), Err(PrefactorError::Dimension(_))));
    }

    #[test]
    fn mexican_hat_prefactor() {
        for h in [1e-2, 1e-3] {
            let sys = mexican_hat_system(h).unwrap();
            let r = critical_submanifold_rate(&sys, h).unwrap();
            let pref = r.log_mag + 0.5 / h;
            let expect = (2.0 * 2f64.sqrt() / PI.sqrt() * h.sqrt()).ln();
            assert!((pref - expect).abs() < 3.0 * h, "{h}: {pref} {expect}");
        }
    }

    #[test]
    fn point_submanifold_is_degenerate_min() {
        let h = 0.05;
        let sad = d1(0.8, -1.2);
        let basin = basin_integral(&|x: f64| x.powi(4) / 4.0, h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let sys = SubmanifoldSystem {
            saddle: sad.clone(),
            min_value: 0.0,
            submanifold_dim: 0,
            kappa: 1.0,
            submanifold_integral: LogValue::from_value(1.0),
            basin_integral: basin,
        };
        let a = critical_submanifold_rate(&sys, h).unwrap();
        let b = degenerate_min_rate(&sad, basin, 0.8, h).unwrap();
        assert!((a.log_mag - b.log_mag).abs() < 1e-12);
    }

    #[test]
    fn perturbed_hat_is_morse_like() {
        // f_δ = (r²−1)²/4 + δφ(θ) with φ = −1 − cos θ ≤ 0: an index-1 point at
        // (r=1, θ=π) with Hessian (2, −δ) replaces the critical circle.
        let delta = 0.3;
        let y = MorseDatum::new(0.25, vec![-1.0, -1.0], vec![]);
        let x = MorseDatum::new(0.0, vec![-delta], vec![2.0]);
        for h in [1e-2, 1e-3] {
            let ang = basin_integral(&|t: f64| delta * (1.0 + t.cos()), h, 0.0, 2.0 * PI).unwrap();
            let radial = basin_integral(&|r: f64| (r * r - 1.0).powi(2) / 4.0, h, 0.0, f64::INFINITY).unwrap();
            let sys = SubmanifoldSystem {
                saddle: y.clone(),
                min_value: 0.0,
                submanifold_dim: 1,
                kappa: 1.0,
                submanifold_integral: ang,
                basin_integral: radial.mul(&ang),
            };
            let a = critical_submanifold_rate(&sys, h).unwrap();
            let b = morse_rate(&x, &y, 1.0, h).unwrap();
            assert!((a.log_mag - b.log_mag).abs() < 5.0 * h, "{h}: {} {}", a.log_mag, b.log_mag);
        }
    }

    proptest! {
        #[test]
        fn kappa_sq_homogeneous(k2 in 1u32..50, lx in 0.1f64..5.0, ly in 0.1f64..5.0, h in 0.01f64..1.0) {
            let x = d1(0.0, lx);
            let y = d1(1.0, -ly);
            let a = morse_rate(&x, &y, k2 as f64, h).unwrap();
            let b = morse_rate(&x, &y, 2.0 * k2 as f64, h).unwrap();
            prop_assert!((b.log_mag - a.log_mag - 2f64.ln()).abs() < 1e-12);
        }

        #[test]
        fn kappa_rates_permutation_invariant(
            seed in 0u64..1000,
            k in 1usize..5,
            k2 in 1usize..5,
            h in 0.05f64..0.5,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let kappa: Vec<Vec<i64>> = (0..k).map(|_| (0..k2).map(|_| rng.random_range(-2..=2)).collect()).collect();
            let lower: Vec<MorseDatum> = (0..k).map(|_| d1(rng.random_range(-0.2..0.2), rng.random_range(0.2..3.0))).collect();
            let upper: Vec<MorseDatum> = (0..k2).map(|_| d1(rng.random_range(0.8..1.2), -rng.random_range(0.2..3.0))).collect();
            let sys = KappaSystem { kappa, lower, upper, lower_offsets: vec![], upper_offsets: vec![], delta: 0.0 };
            let rp: Vec<usize> = { let mut v: Vec<usize> = (0..k).collect(); v.rotate_left(seed as usize % k); v };
            let cp: Vec<usize> = { let mut v: Vec<usize> = (0..k2).collect(); v.reverse(); v };
            let perm = KappaSystem {
                kappa: rp.iter().map(|&i| cp.iter().map(|&j| sys.kappa[i][j]).collect()).collect(),
                lower: rp.iter().map(|&i| sys.lower[i].clone()).collect(),
                upper: cp.iter().map(|&j| sys.upper[j].clone()).collect(),
                ..sys.clone()
            };
            let a = kappa_rates(&sys, h).unwrap();
            let b = kappa_rates(&perm, h).unwrap();
            prop_assert_eq!(a.len(), k.min(k2));
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.is_zero(), y.is_zero());
                if !x.is_zero() {
                    prop_assert!((x.log_mag - y.log_mag).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn log_form_never_overflows(gap in 0.1f64..100.0, h in 1e-3f64..1.0) {
            let r = morse_rate(&d1(0.0, 1.0), &d1(gap, -1.0), 1.0, h).unwrap();
            prop_assert!(r.log_mag.is_finite());
            let c = circulant_rates(4, 1.0, 1.0, gap, h).unwrap();
            prop_assert!(c[0].log_mag.is_finite());
            let p = piecewise_affine_rate(Slopes { left: -1.0, right: 2.0 }, Slopes { left: 1.0, right: -3.0 }, gap, h).unwrap();
            prop_assert!(p.log_mag.is_finite());
        }
    }
}
