//! Finite-dimensional singular-value perturbation checks.
//!
//! Subspaces are orthonormal frames in ℝⁿ; every estimate is evaluated with a
//! dense SVD on both sides and compared against its explicit constant.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectra::jacobi_svd;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frame is not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
    #[error("ε = {0} is not in [0, 1)")]
    BadEpsilon(f64),
    #[error("factorization hypothesis fails: residual {0:e}")]
    Hypothesis(f64),
}

/// Relative level below which a singular value counts as zero.
const ZERO_REL: f64 = 1e-11;
/// Relative slack on the asserted inequalities (rounding only).
const ROUND: f64 = 1e-9;

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return vec![];
    }
    jacobi_svd(a, false).singular_values
}

pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

fn numerical_rank(s: &[f64], scale: f64) -> usize {
    s.iter().filter(|&&v| v > ZERO_REL * scale).count()
}

/// Orthonormal basis of the column span of `a`.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = jacobi_svd(a, true);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let keep = svd.singular_values.iter().take(u.ncols()).filter(|&&v| v > 1e-12 * smax).count();
    DMatrix::from_fn(n, keep, |r, c| u[(r, c)])
}

/// max(‖AᵀA − I‖, ‖AAᵀ − I‖)
pub fn eps_unitary_defect(a: &DMatrix<f64>) -> f64 {
    let ata = a.transpose() * a - DMatrix::identity(a.ncols(), a.ncols());
    let aat = a * a.transpose() - DMatrix::identity(a.nrows(), a.nrows());
    op_norm(&ata).max(op_norm(&aat))
}

/// Subspace E ⊂ ℝⁿ held as an orthonormal frame (n × dim E).
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    frame: DMatrix<f64>,
}

impl Subspace {
    pub fn from_frame(frame: DMatrix<f64>) -> Result<Self, SvError> {
        let k = frame.ncols();
        let defect = if k == 0 { 0.0 } else { op_norm(&(frame.transpose() * &frame - DMatrix::identity(k, k))) };
        if defect > 1e-12 {
            return Err(SvError::NotOrthonormal(defect));
        }
        Ok(Subspace { frame })
    }

    /// Span of the columns of `vectors`.
    pub fn span(vectors: &DMatrix<f64>) -> Self {
        Subspace { frame: orthonormalize(vectors) }
    }

    /// span(e_i, i ∈ idx) in ℝⁿ.
    pub fn coordinate(n: usize, idx: &[usize]) -> Self {
        Subspace { frame: DMatrix::from_fn(n, idx.len(), |r, c| if r == idx[c] { 1.0 } else { 0.0 }) }
    }

    pub fn random(n: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self::span(&gaussian(n, k, rng))
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn ambient(&self) -> usize {
        self.frame.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    pub fn complement(&self) -> Self {
        let n = self.ambient();
        let p = DMatrix::identity(n, n) - self.projector();
        Self::span(&p)
    }

    /// E + F
    pub fn sum(&self, other: &Subspace) -> Self {
        let mut m = DMatrix::zeros(self.ambient(), self.dim() + other.dim());
        m.columns_mut(0, self.dim()).copy_from(&self.frame);
        m.columns_mut(self.dim(), other.dim()).copy_from(&other.frame);
        Self::span(&m)
    }

    /// Tilt E towards E^⊥ by a random direction of size `t`.
    pub fn tilted(&self, t: f64, rng: &mut impl Rng) -> Self {
        let perp = self.complement();
        let x = gaussian(perp.dim(), self.dim(), rng);
        let nx = op_norm(&x).max(1e-300);
        Self::span(&(&self.frame + perp.frame() * x * (t / nx)))
    }
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    orthonormalize(&gaussian(n, n, rng))
}

fn same_ambient(a: &Subspace, b: &Subspace) -> Result<(), SvError> {
    if a.ambient() != b.ambient() {
        return Err(SvError::Dimension(format!("ambient {} vs {}", a.ambient(), b.ambient())));
    }
    Ok(())
}

/// d⃗(E,F) = ‖Π_E − Π_F Π_E‖, in [0, 1].
pub fn vec_d(e: &Subspace, f: &Subspace) -> Result<f64, SvError> {
    same_ambient(e, f)?;
    if e.dim() == 0 {
        return Ok(0.0);
    }
    let resid = e.frame() - f.frame() * (f.frame().transpose() * e.frame());
    Ok(op_norm(&resid).clamp(0.0, 1.0))
}

/// d⃗(E,F) + d⃗(F,E)
pub fn sym_d(e: &Subspace, f: &Subspace) -> Result<f64, SvError> {
    Ok(vec_d(e, f)? + vec_d(f, e)?)
}

/// ε₁, …, ε_n with every ε_k ∈ [0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauBudget {
    eps: Vec<f64>,
}

impl TauBudget {
    pub fn new(eps: Vec<f64>) -> Result<Self, SvError> {
        if let Some(&e) = eps.iter().find(|e| !(**e >= 0.0 && **e < 1.0)) {
            return Err(SvError::BadEpsilon(e));
        }
        Ok(TauBudget { eps })
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }
}

/// τ(ε₁,…,ε_n) = Π (1+ε_k)/(1−ε_k)
pub fn tau(budget: &TauBudget) -> f64 {
    budget.eps.iter().map(|e| (1.0 + e) / (1.0 - e)).product()
}

fn tau_of(eps: &[f64]) -> Result<f64, SvError> {
    Ok(tau(&TauBudget::new(eps.to_vec())?))
}

/// Compare two descending spectra: ratios a_ℓ/b_ℓ on the common nonzero
/// part, and whether each lies in [lo, hi] with matching zero patterns.
fn ratio_check(a: &[f64], b: &[f64], lo: f64, hi: f64) -> (Vec<f64>, bool) {
    let n = a.len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let scale = get(a, 0).max(get(b, 0));
    let mut ratios = Vec::new();
    let mut ok = true;
    for i in 0..n {
        let (x, y) = (get(a, i), get(b, i));
        let (zx, zy) = (x <= ZERO_REL * scale, y <= ZERO_REL * scale);
        if zx && zy {
            continue;
        }
        if zx != zy {
            // One side rounded to zero while the other did not.
            ok &= x.max(y) <= 1e3 * ZERO_REL * scale;
            continue;
        }
        let r = x / y;
        ok &= r >= lo * (1.0 - ROUND) && r <= hi * (1.0 + ROUND);
        ratios.push(r);
    }
    (ratios, ok)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSvReport {
    pub eps1: f64,
    pub eps2: f64,
    pub tau: f64,
    /// μ_ℓ(B)/μ_ℓ(Π_G B Π_F|_E)
    pub ratios: Vec<f64>,
    pub hypothesis_holds: bool,
    pub pass: bool,
}

/// B acts on F and is given in the coordinates of F's frame.
/// Checks τ(ε₁²,ε₂²)^{−1/2} ≤ μ_ℓ(B)/μ_ℓ(Π_G B Π_F|_E) ≤ τ(ε₁²,ε₂²)^{1/2}
/// with ε₁ = d⃗(E,F)+d⃗(F,E), ε₂ = d⃗(F,G)+d⃗(G,F).
pub fn check_projected_sv(b: &DMatrix<f64>, e: &Subspace, f: &Subspace, g: &Subspace) -> Result<ProjectedSvReport, SvError> {
    same_ambient(e, f)?;
    same_ambient(f, g)?;
    if b.nrows() != f.dim() || b.ncols() != f.dim() {
        return Err(SvError::Dimension(format!("B is {}×{}, dim F = {}", b.nrows(), b.ncols(), f.dim())));
    }
    let eps1 = sym_d(e, f)?;
    let eps2 = sym_d(f, g)?;
    if eps1 >= 1.0 || eps2 >= 1.0 {
        return Ok(ProjectedSvReport { eps1, eps2, tau: f64::INFINITY, ratios: vec![], hypothesis_holds: false, pass: false });
    }
    let t = tau_of(&[eps1 * eps1, eps2 * eps2])?;
    let bt = g.frame().transpose() * f.frame() * b * (f.frame().transpose() * e.frame());
    let (ratios, pass) = ratio_check(&singular_values(b), &singular_values(&bt), t.powf(-0.5), t.sqrt());
    Ok(ProjectedSvReport { eps1, eps2, tau: t, ratios, hypothesis_holds: true, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub eps1: f64,
    pub eps2: f64,
    /// max(‖C‖, ‖C⁻¹‖, ‖A‖, ‖A⁻¹‖) against τ^{1/2}
    pub norms_ok: bool,
    pub ratios: Vec<f64>,
    pub hypothesis_holds: bool,
    pub pass: bool,
}

/// ε-unitary C: F→G and A: E→F imply μ_ℓ(CBA)/μ_ℓ(B) ∈ τ(ε₁,ε₂)^{±1/2}.
pub fn check_chain(c: &DMatrix<f64>, b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<ChainReport, SvError> {
    if c.ncols() != b.nrows() || b.ncols() != a.nrows() {
        return Err(SvError::Dimension("C·B·A does not compose".into()));
    }
    let (eps1, eps2) = (eps_unitary_defect(c), eps_unitary_defect(a));
    if eps1 >= 1.0 || eps2 >= 1.0 {
        return Ok(ChainReport { eps1, eps2, norms_ok: false, ratios: vec![], hypothesis_holds: false, pass: false });
    }
    let norm_pair = |m: &DMatrix<f64>| {
        let s = singular_values(m);
        (s[0], 1.0 / s[s.len() - 1])
    };
    let (t1, t2) = (tau_of(&[eps1])?.sqrt(), tau_of(&[eps2])?.sqrt());
    let (cn, ci) = norm_pair(c);
    let (an, ai) = norm_pair(a);
    let norms_ok = cn.max(ci) <= t1 * (1.0 + ROUND) && an.max(ai) <= t2 * (1.0 + ROUND);
    let t = tau_of(&[eps1, eps2])?;
    let (ratios, ok) = ratio_check(&singular_values(&(c * b * a)), &singular_values(b), t.powf(-0.5), t.sqrt());
    Ok(ChainReport { eps1, eps2, norms_ok, ratios, hypothesis_holds: true, pass: ok && norms_ok })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsBasisReport {
    pub eps1: f64,
    pub eps2: f64,
    pub ratios: Vec<f64>,
    pub hypothesis_holds: bool,
    pub pass: bool,
}

/// Frames Φ (columns φ_j, basis of E = ℝ^m) and Ψ (basis of F = ℝ^k) with
/// Gram defects ε₁, ε₂; B̃ = (⟨ψ_k, Bφ_j⟩) has μ_ℓ(B)/μ_ℓ(B̃) ∈ τ^{±1/2}.
pub fn check_eps_basis(b: &DMatrix<f64>, phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<EpsBasisReport, SvError> {
    if phi.nrows() != b.ncols() || psi.nrows() != b.nrows() || !phi.is_square() || !psi.is_square() {
        return Err(SvError::Dimension("bases must be square and match B".into()));
    }
    let gram_defect = |m: &DMatrix<f64>| op_norm(&(m.transpose() * m - DMatrix::identity(m.ncols(), m.ncols())));
    let (eps1, eps2) = (gram_defect(phi), gram_defect(psi));
    if eps1 >= 1.0 || eps2 >= 1.0 {
        return Ok(EpsBasisReport { eps1, eps2, ratios: vec![], hypothesis_holds: false, pass: false });
    }
    let t = tau_of(&[eps1, eps2])?;
    let bt = psi.transpose() * b * phi;
    let (ratios, pass) = ratio_check(&singular_values(b), &singular_values(&bt), t.powf(-0.5), t.sqrt());
    Ok(EpsBasisReport { eps1, eps2, ratios, hypothesis_holds: true, pass })
}

/// E = E' ⊕ E'' ε₁-orthogonal, F = F' ⊕ F'' ε₂-orthogonal, B E' ⊂ F',
/// B E'' ⊂ F''. B̃ = Π_{F'}B|_{E'} ⊕ Π_{F''}B|_{E''}.
pub fn check_eps_decomposition(
    b: &DMatrix<f64>,
    e1: &Subspace,
    e2: &Subspace,
    f1: &Subspace,
    f2: &Subspace,
) -> Result<EpsBasisReport, SvError> {
    same_ambient(e1, e2)?;
    same_ambient(f1, f2)?;
    if b.ncols() != e1.ambient() || b.nrows() != f1.ambient() {
        return Err(SvError::Dimension("B does not map E into F".into()));
    }
    let eps1 = op_norm(&(e1.frame().transpose() * e2.frame()));
    let eps2 = op_norm(&(f1.frame().transpose() * f2.frame()));
    let invariant = |e: &Subspace, f: &Subspace| {
        let be = b * e.frame();
        let r = &be - f.projector() * &be;
        op_norm(&r) <= 1e-10 * op_norm(b).max(1e-300)
    };
    let full = e1.dim() + e2.dim() == e1.ambient() && f1.dim() + f2.dim() == f1.ambient();
    if eps1 >= 1.0 || eps2 >= 1.0 || !full || !invariant(e1, f1) || !invariant(e2, f2) {
        return Ok(EpsBasisReport { eps1, eps2, ratios: vec![], hypothesis_holds: false, pass: false });
    }
    let t = tau_of(&[eps1, eps2])?;
    let mut mu_t = singular_values(&(f1.frame().transpose() * b * e1.frame()));
    mu_t.extend(singular_values(&(f2.frame().transpose() * b * e2.frame())));
    mu_t.sort_by(|x, y| y.total_cmp(x));
    let (ratios, pass) = ratio_check(&singular_values(b), &mu_t, t.powf(-0.5), t.sqrt());
    Ok(EpsBasisReport { eps1, eps2, ratios, hypothesis_holds: true, pass })
}

/// E = E' ⊕ E'' ε₁-orthogonal, F' = B E', F'' = F'^⊥, ε₂ the smallest value
/// with ν ≥ ‖B|_{E''}‖/((1−ε₁)^{1/2}ε₂). B̃ = B|_{E'} ⊕ Π_{F''}B|_{E''};
/// ratios lie in τ(ε₁,ε₂)^{±1}.
pub fn check_compact_split(b: &DMatrix<f64>, e1: &Subspace, e2: &Subspace) -> Result<EpsBasisReport, SvError> {
    same_ambient(e1, e2)?;
    if b.ncols() != e1.ambient() {
        return Err(SvError::Dimension("B does not act on E".into()));
    }
    let eps1 = op_norm(&(e1.frame().transpose() * e2.frame()));
    let be1 = b * e1.frame();
    let be2 = b * e2.frame();
    let s1 = singular_values(&be1);
    let scale = op_norm(b).max(1e-300);
    let nu = s1.iter().cloned().filter(|&v| v > ZERO_REL * scale).fold(f64::INFINITY, f64::min);
    let n2 = op_norm(&be2);
    let eps2 = if n2 == 0.0 { 0.0 } else { n2 / ((1.0 - eps1).sqrt() * nu) };
    let full = e1.dim() + e2.dim() == e1.ambient();
    if eps1 >= 1.0 || eps2 >= 1.0 || !full {
        return Ok(EpsBasisReport { eps1, eps2, ratios: vec![], hypothesis_holds: false, pass: false });
    }
    let f1 = Subspace::span(&be1);
    let p2 = DMatrix::identity(b.nrows(), b.nrows()) - f1.projector();
    let mut mu_t = s1.clone();
    mu_t.extend(singular_values(&(p2 * be2)));
    mu_t.sort_by(|x, y| y.total_cmp(x));
    let t = tau_of(&[eps1, eps2])?;
    let (ratios, pass) = ratio_check(&singular_values(b), &mu_t, 1.0 / t, t);
    Ok(EpsBasisReport { eps1, eps2, ratios, hypothesis_holds: true, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageLemmaReport {
    /// |defect(|A|) − ‖AᵀA − I‖|
    pub abs_gap: f64,
    /// |‖AAᵀ − I‖ − ‖AᵀA − I‖| for square invertible A
    pub square_gap: f64,
    /// |defect(Φ) − ‖Gram(Φ) − I‖|
    pub gram_gap: f64,
    pub pass: bool,
}

/// Equalities behind the ε-unitary characterizations, for a square A.
pub fn check_image_lemma(a: &DMatrix<f64>) -> Result<ImageLemmaReport, SvError> {
    if !a.is_square() {
        return Err(SvError::Dimension("square matrix expected".into()));
    }
    let n = a.nrows();
    let svd = jacobi_svd(a, true);
    let v = svd.v.as_ref().expect("v requested");
    let r = v.ncols();
    let abs_a = v * DMatrix::from_fn(r, r, |i, j| if i == j { svd.singular_values[i] } else { 0.0 }) * v.transpose();
    let ata = op_norm(&(a.transpose() * a - DMatrix::identity(n, n)));
    let aat = op_norm(&(a * a.transpose() - DMatrix::identity(n, n)));
    let abs_gap = (eps_unitary_defect(&abs_a) - ata).abs();
    let square_gap = (aat - ata).abs();
    let gram_gap = (eps_unitary_defect(a) - ata).abs();
    let tol = 1e-10 * (1.0 + ata);
    Ok(ImageLemmaReport { abs_gap, square_gap, gram_gap, pass: abs_gap <= tol && square_gap <= tol && gram_gap <= tol })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditiveReport {
    pub norm_diff: f64,
    pub l0: usize,
    /// |μ_ℓ(B₂) − μ_ℓ(B₁)|, all ℓ
    pub weyl_gaps: Vec<f64>,
    pub weyl_ok: bool,
    /// ‖B₂ − B₁‖/μ_{ℓ0}(B₁)
    pub eps: f64,
    /// |μ_ℓ(B₂)/μ_ℓ(B₁) − 1|, ℓ ≤ ℓ0
    pub relative: Vec<f64>,
    /// (1−ε)μ_ℓ(B₁) ≤ μ_ℓ(B₂) ≤ (1+ε)μ_ℓ(B₁) for ℓ ≤ ℓ0, when ε < 1
    pub multiplicative_ok: bool,
    pub pass: bool,
}

pub fn check_additive(b1: &DMatrix<f64>, b2: &DMatrix<f64>, l0: usize) -> Result<AdditiveReport, SvError> {
    if b1.shape() != b2.shape() {
        return Err(SvError::Dimension(format!("{:?} vs {:?}", b1.shape(), b2.shape())));
    }
    let norm_diff = op_norm(&(b2 - b1));
    let (m1, m2) = (singular_values(b1), singular_values(b2));
    let scale = m1.first().copied().unwrap_or(0.0).max(m2.first().copied().unwrap_or(0.0));
    let weyl_gaps: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| (a - b).abs()).collect();
    let weyl_ok = weyl_gaps.iter().all(|g| *g <= norm_diff * (1.0 + ROUND) + 1e-14 * scale);
    let l0 = l0.min(m1.len());
    let mu0 = if l0 == 0 { f64::INFINITY } else { m1[l0 - 1] };
    let eps = if mu0 > 0.0 { norm_diff / mu0 } else { f64::INFINITY };
    let relative: Vec<f64> = (0..l0).map(|i| (m2[i] / m1[i] - 1.0).abs()).collect();
    let multiplicative_ok = eps >= 1.0 || relative.iter().all(|r| *r <= eps * (1.0 + ROUND) + 1e-14);
    Ok(AdditiveReport { norm_diff, l0, weyl_gaps, weyl_ok, eps, relative, multiplicative_ok, pass: weyl_ok && multiplicative_ok })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub hypothesis_residual: f64,
    /// (d⃗(F,G)+d⃗(G,F))‖C‖
    pub rho: f64,
    pub c_norm: f64,
    pub r_norm: f64,
    pub bound: f64,
    /// ‖Π_G B|_E − (I+R)Π_F B|_E‖
    pub identity_residual: f64,
    pub pass: bool,
}

/// Given B|_E = C Π_F B|_E (C acting on F), verify Π_G B|_E = (I+R) Π_F B|_E
/// with R = (Π_G − Π_F) C Π_W, W = Ran Π_F B|_E, and ‖R‖ ≤ 2ρ.
pub fn check_factorization(
    b: &DMatrix<f64>,
    e: &Subspace,
    f: &Subspace,
    g: &Subspace,
    c: &DMatrix<f64>,
) -> Result<FactorizationReport, SvError> {
    same_ambient(e, f)?;
    same_ambient(f, g)?;
    let n = e.ambient();
    if b.shape() != (n, n) || c.shape() != (n, n) {
        return Err(SvError::Dimension("B and C must be n×n on the ambient space".into()));
    }
    let be = b * e.frame();
    let pfbe = f.projector() * &be;
    let scale = op_norm(&be).max(1e-300);
    let hypothesis_residual = op_norm(&(&be - c * &pfbe)) / scale;
    if hypothesis_residual > 1e-10 {
        return Err(SvError::Hypothesis(hypothesis_residual));
    }
    let c_norm = op_norm(&(c * f.frame()));
    let rho = sym_d(f, g)? * c_norm;
    let w = Subspace::span(&pfbe);
    let r = (g.projector() - f.projector()) * c * w.projector();
    let r_norm = op_norm(&r);
    let bound = 2.0 * rho;
    let identity_residual =
        op_norm(&(g.projector() * &be - (DMatrix::identity(n, n) + &r) * &pfbe)) / scale;
    let pass = r_norm <= bound * (1.0 + ROUND) + 1e-14 && identity_residual <= 1e-10;
    Ok(FactorizationReport { hypothesis_residual, rho, c_norm, r_norm, bound, identity_residual, pass })
}

/// C = Π_F + (B Q − Π_F B Q)(Π_F B Q)⁺ for Q the frame of E', so that
/// B|_{E'} = C Π_F B|_{E'} whenever Π_F B|_{E'} is injective.
pub fn left_multiple(b: &DMatrix<f64>, e1: &Subspace, f: &Subspace) -> DMatrix<f64> {
    let bq = b * e1.frame();
    let pf = f.projector();
    let y = &pf * &bq;
    let svd = jacobi_svd(&y, true);
    let (u, v) = (svd.u.expect("u requested"), svd.v.expect("v requested"));
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let mut pinv = DMatrix::zeros(y.ncols(), y.nrows());
    for k in 0..u.ncols() {
        let sk = svd.singular_values[k];
        if sk > 1e-12 * smax {
            pinv += v.column(k) * u.column(k).transpose() / sk;
        }
    }
    &pf + (&bq - &y) * pinv
}

/// Certified slack on the multiplicative-additive O(ϱ) statements.
pub const MULTADD_SLACK: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MultAddScenario {
    pub b: DMatrix<f64>,
    pub e1: Subspace,
    pub e2: Subspace,
    pub f: Subspace,
    pub g: Subspace,
    /// Left factor; computed by [`left_multiple`] when absent.
    pub c: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultAddReport {
    pub rho: f64,
    pub hyp_distances: f64,
    pub hyp_budget: f64,
    pub orthogonality: f64,
    pub l0: usize,
    pub l1: usize,
    pub c_norm: f64,
    /// |μ_ℓ(Π_G B Π_E)/μ_ℓ(Π_F B Π_F) − 1|, ℓ ≤ ℓ0
    pub rel_gaps: Vec<f64>,
    pub max_gap: f64,
    /// μ_{ℓ0+1}(Π_G B Π_E)/μ_{ℓ0}(Π_G B Π_E)
    pub gap_ratio: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MultAddOutcome {
    Checked(MultAddReport),
    Skipped(String),
}

pub fn check_multadd(s: &MultAddScenario) -> Result<MultAddOutcome, SvError> {
    for x in [&s.e2, &s.f, &s.g] {
        same_ambient(&s.e1, x)?;
    }
    let n = s.e1.ambient();
    if s.b.shape() != (n, n) {
        return Err(SvError::Dimension("B must be n×n".into()));
    }
    let skip = |why: String| Ok(MultAddOutcome::Skipped(why));
    let e = s.e1.sum(&s.e2);
    if e.dim() != s.e1.dim() + s.e2.dim() {
        return skip("E' and E'' intersect".into());
    }
    if e.dim() != s.f.dim() || s.f.dim() != s.g.dim() {
        return skip(format!("dim E, F, G = {}, {}, {}", e.dim(), s.f.dim(), s.g.dim()));
    }
    let b = &s.b;
    let bn = op_norm(b).max(1e-300);
    let pf = s.f.projector();
    let comm = op_norm(&(&pf * b - b * &pf));
    if comm > 1e-10 * bn {
        return skip(format!("Π_F B ≠ B Π_F (defect {comm:e})"));
    }
    let mu_f = singular_values(&(s.f.frame().transpose() * b * s.f.frame()));
    let l0 = numerical_rank(&mu_f, bn);
    let c = s.c.clone().unwrap_or_else(|| left_multiple(b, &s.e1, &s.f));
    let be1 = b * s.e1.frame();
    let resid = op_norm(&(&be1 - &c * (&pf * &be1)));
    if resid > 1e-10 * bn {
        return skip(format!("B|E' is not a left multiple of Π_F B|E' (residual {resid:e})"));
    }
    let c_norm = op_norm(&(&c * s.f.frame())).max(1.0);
    let dfg = sym_d(&s.f, &s.g)?;
    let hyp_distances = sym_d(&e, &s.f)? + c_norm * dfg;
    let mu_ge1 = singular_values(&(s.g.frame().transpose() * &be1));
    let l1 = numerical_rank(&mu_ge1, bn);
    let mu_ge = singular_values(&(s.g.frame().transpose() * b * e.frame()));
    let inv_l1 = if l1 == 0 { 0.0 } else { 1.0 / mu_ge1[l1 - 1] };
    let mu_l0 = |m: &[f64]| if l0 == 0 { f64::INFINITY } else { m.get(l0 - 1).copied().unwrap_or(0.0) };
    let denom = mu_l0(&mu_ge).max(mu_l0(&mu_f));
    let b_e2 = op_norm(&(b * s.e2.frame()));
    let hyp_budget = b_e2 * (inv_l1 + if b_e2 == 0.0 { 0.0 } else { c_norm * dfg / denom });
    let orthogonality = op_norm(&(s.e1.frame().transpose() * s.e2.frame()));
    let rho = hyp_distances.max(hyp_budget).max(orthogonality);
    if !(rho < 1.0) {
        return skip(format!("ϱ = {rho} is outside the perturbative regime"));
    }
    let rel_gaps: Vec<f64> = (0..l0).map(|i| (mu_ge[i] / mu_f[i] - 1.0).abs()).collect();
    let max_gap = rel_gaps.iter().cloned().fold(0.0, f64::max);
    let gap_ratio = if l0 == 0 || l0 >= mu_ge.len() { 0.0 } else { mu_ge[l0] / mu_ge[l0 - 1] };
    let tol = MULTADD_SLACK * rho + 1e-12;
    Ok(MultAddOutcome::Checked(MultAddReport {
        rho,
        hyp_distances,
        hyp_budget,
        orthogonality,
        l0,
        l1,
        c_norm,
        rel_gaps,
        max_gap,
        gap_ratio,
        slack: MULTADD_SLACK,
        pass: max_gap <= tol && gap_ratio <= tol,
    }))
}

/// Block instance: F = span(e₁..e_m), B = B_F ⊕ B_⊥ with rank B_F = ℓ0,
/// E and G tilted away from F by `t`.
pub fn multadd_instance(n: usize, m: usize, l0: usize, t: f64, rng: &mut impl Rng) -> MultAddScenario {
    assert!(l0 <= m && m < n);
    let u = random_orthogonal(m, rng);
    let v = random_orthogonal(m, rng);
    let s: Vec<f64> = (0..m).map(|i| if i < l0 { rng.random_range(0.5..2.0) } else { 0.0 }).collect();
    let bf = &u * DMatrix::from_fn(m, m, |i, j| if i == j { s[i] } else { 0.0 }) * v.transpose();
    let bp = gaussian(n - m, n - m, rng);
    let bp = &bp / op_norm(&bp);
    let mut b = DMatrix::zeros(n, n);
    b.view_mut((0, 0), (m, m)).copy_from(&bf);
    b.view_mut((m, m), (n - m, n - m)).copy_from(&bp);
    let f = Subspace::coordinate(n, &(0..m).collect::<Vec<_>>());
    let x = gaussian(n - m, m, rng);
    let x = &x / op_norm(&x);
    let mut tilt = DMatrix::zeros(n, m);
    tilt.view_mut((0, 0), (m, m)).copy_from(&DMatrix::identity(m, m));
    tilt.view_mut((m, 0), (n - m, m)).copy_from(&(x * t));
    let e1 = Subspace::span(&(&tilt * v.columns(0, l0)));
    let e2 = Subspace::span(&(&tilt * v.columns(l0, m - l0)));
    let g = f.tilted(t, rng);
    MultAddScenario { b, e1, e2, f, g, c: None }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultAddRegression {
    pub rho: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Slope of log(gap) against log(ϱ).
    pub slope: f64,
    /// max gap/ϱ over the sweep
    pub constant: f64,
    pub pass: bool,
}

/// Sweep t over `ts`, regress log max-gap on log ϱ. Passes when every gap is
/// within MULTADD_SLACK·ϱ and the slope is at least 0.9 (gap = O(ϱ)).
pub fn multadd_regression(ts: &[f64], seed: u64) -> MultAddRegression {
    let (mut rho, mut gaps) = (vec![], vec![]);
    for &t in ts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = multadd_instance(12, 4, 2, t, &mut rng);
        if let Ok(MultAddOutcome::Checked(r)) = check_multadd(&s) {
            rho.push(r.rho);
            gaps.push(r.max_gap.max(r.gap_ratio).max(1e-300));
        }
    }
    let lx: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let constant = gaps.iter().zip(&rho).map(|(g, r)| g / r).fold(0.0, f64::max);
    let pass = rho.len() >= 3 && slope >= 0.9 && constant <= MULTADD_SLACK;
    MultAddRegression { rho, gaps, slope, constant, pass }
}

/// Randomized suites behind `svcheck` and the property tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Triangle,
    Chain,
    ProjectedSv,
    EpsBasis,
    EpsDecomposition,
    CompactSplit,
    ImageLemma,
    Additive,
    Factorization,
    MultAdd,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Triangle,
        Suite::Chain,
        Suite::ProjectedSv,
        Suite::EpsBasis,
        Suite::EpsDecomposition,
        Suite::CompactSplit,
        Suite::ImageLemma,
        Suite::Additive,
        Suite::Factorization,
        Suite::MultAdd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Triangle => "triangle",
            Suite::Chain => "chain",
            Suite::ProjectedSv => "projected-sv",
            Suite::EpsBasis => "eps-basis",
            Suite::EpsDecomposition => "eps-decomposition",
            Suite::CompactSplit => "compact-split",
            Suite::ImageLemma => "image-lemma",
            Suite::Additive => "additive",
            Suite::Factorization => "factorization",
            Suite::MultAdd => "multadd",
        }
    }

    pub fn from_name(s: &str) -> Option<Suite> {
        Suite::ALL.iter().copied().find(|x| x.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub trials: usize,
    pub passed: usize,
    pub violations: usize,
    /// Trials whose hypotheses did not hold.
    pub skipped: usize,
}

enum Trial {
    Pass,
    Fail,
    Skip,
}

fn near_orthogonal(n: usize, t: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    random_orthogonal(n, rng) + gaussian(n, n, rng) * (t / (n as f64).sqrt())
}

fn verdict(hyp: bool, pass: bool) -> Trial {
    match (hyp, pass) {
        (false, _) => Trial::Skip,
        (true, true) => Trial::Pass,
        (true, false) => Trial::Fail,
    }
}

fn one_trial(suite: Suite, rng: &mut ChaCha8Rng) -> Result<Trial, SvError> {
    Ok(match suite {
        Suite::Triangle => {
            let n = rng.random_range(2..=8);
            let mut sub = || {
                let k = rng.random_range(0..=n);
                Subspace::random(n, k, rng)
            };
            let (e, f, g) = (sub(), sub(), sub());
            let ok = vec_d(&e, &g)? <= vec_d(&e, &f)? + vec_d(&f, &g)? + 1e-12;
            verdict(true, ok)
        }
        Suite::Chain => {
            let (m, k) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let t1 = rng.random_range(0.0..0.4);
            let t2 = rng.random_range(0.0..0.4);
            let c = near_orthogonal(k, t1, rng);
            let a = near_orthogonal(m, t2, rng);
            let b = gaussian(k, m, rng);
            let r = check_chain(&c, &b, &a)?;
            verdict(r.hypothesis_holds, r.pass)
        }
        Suite::ProjectedSv => {
            let n = 6;
            let k = rng.random_range(1..=3);
            let f = Subspace::random(n, k, rng);
            let t: f64 = rng.random_range(0.0..0.4);
            let e = f.tilted(rng.random_range(0.0..t.max(1e-3)), rng);
            let g = f.tilted(rng.random_range(0.0..t.max(1e-3)), rng);
            let b = gaussian(k, k, rng);
            let r = check_projected_sv(&b, &e, &f, &g)?;
            verdict(r.hypothesis_holds, r.pass)
        }
        Suite::EpsBasis => {
            let (m, k) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let t = rng.random_range(0.0..0.3);
            let phi = near_orthogonal(m, t, rng);
            let psi = near_orthogonal(k, t, rng);
            let b = gaussian(k, m, rng);
            let r = check_eps_basis(&b, &phi, &psi)?;
            verdict(r.hypothesis_holds, r.pass)
        }
        Suite::EpsDecomposition => {
            let n = rng.random_range(2..=6);
            let k = rng.random_range(1..n);
            let t = rng.random_range(0.0..0.3);
            let e1 = Subspace::random(n, k, rng);
            let e2 = e1.complement().tilted(t, rng);
            let f1 = Subspace::random(n, k, rng);
            let f2 = f1.complement().tilted(t, rng);
            // B maps the frame of E' into F' and of E'' into F''.
            let m1 = gaussian(k, k, rng);
            let m2 = gaussian(n - k, n - k, rng);
            let mut src = DMatrix::zeros(n, n);
            src.columns_mut(0, k).copy_from(e1.frame());
            src.columns_mut(k, n - k).copy_from(e2.frame());
            let mut dst = DMatrix::zeros(n, n);
            dst.columns_mut(0, k).copy_from(&(f1.frame() * m1));
            dst.columns_mut(k, n - k).copy_from(&(f2.frame() * m2));
            let Some(inv) = src.try_inverse() else { return Ok(Trial::Skip) };
            let b = dst * inv;
            let r = check_eps_decomposition(&b, &e1, &e2, &f1, &f2)?;
            verdict(r.hypothesis_holds, r.pass)
        }
        Suite::CompactSplit => {
            let n = rng.random_range(2..=6);
            let k = rng.random_range(1..n);
            let e1 = Subspace::random(n, k, rng);
            let e2 = e1.complement().tilted(rng.random_range(0.0..0.3), rng);
            // Strong on E', weak on E''.
            let w = rng.random_range(1e-4..0.2);
            let b = gaussian(n, n, rng) * e1.projector() + gaussian(n, n, rng) * e2.projector() * w;
            let r = check_compact_split(&b, &e1, &e2)?;
            verdict(r.hypothesis_holds, r.pass)
        }
        Suite::ImageLemma => {
            let n = rng.random_range(1..=6);
            let a = near_orthogonal(n, rng.random_range(0.0..0.5), rng);
            let r = check_image_lemma(&a)?;
            verdict(true, r.pass)
        }
        Suite::Additive => {
            let (m, k) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let b1 = gaussian(k, m, rng);
            let b2 = &b1 + gaussian(k, m, rng) * rng.random_range(0.0..0.5);
            let l0 = rng.random_range(1..=m.min(k));
            let r = check_additive(&b1, &b2, l0)?;
            verdict(true, r.pass)
        }
        Suite::Factorization => {
            let n = rng.random_range(3..=8);
            let m = rng.random_range(1..n);
            let f = Subspace::random(n, m, rng);
            let pf = f.projector();
            let pperp = DMatrix::identity(n, n) - &pf;
            let c = &pf + pperp * gaussian(n, n, rng) * &pf;
            let b = &c * &pf * gaussian(n, n, rng);
            let e = Subspace::random(n, rng.random_range(1..=n), rng);
            let g = f.tilted(rng.random_range(0.0..0.3), rng);
            let r = check_factorization(&b, &e, &f, &g, &c)?;
            verdict(true, r.pass)
        }
        Suite::MultAdd => {
            let n = rng.random_range(6..=12);
            let m = rng.random_range(2..n.min(6));
            let l0 = rng.random_range(1..=m);
            let t = 10f64.powf(rng.random_range(-4.0..-1.0));
            let s = multadd_instance(n, m, l0, t, rng);
            match check_multadd(&s)? {
                MultAddOutcome::Checked(r) => verdict(true, r.pass),
                MultAddOutcome::Skipped(_) => Trial::Skip,
            }
        }
    })
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteSummary, SvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteSummary { suite, trials, passed: 0, violations: 0, skipped: 0 };
    for _ in 0..trials {
        match one_trial(suite, &mut rng)? {
            Trial::Pass => out.passed += 1,
            Trial::Fail => out.violations += 1,
            Trial::Skip => out.skipped += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn distance_examples() {
        let e1 = Subspace::coordinate(2, &[0]);
        let e2 = Subspace::coordinate(2, &[1]);
        assert_eq!(vec_d(&e1, &e1).unwrap(), 0.0);
        assert!((vec_d(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        for th in [0.1f64, 0.7, 1.3, 2.5] {
            let l = Subspace::from_frame(DMatrix::from_column_slice(2, 1, &[th.cos(), th.sin()])).unwrap();
            assert!((vec_d(&e1, &l).unwrap() - th.sin().abs()).abs() < 1e-14);
        }
        // Containment is not symmetric.
        let plane = Subspace::coordinate(3, &[0, 1]);
        let line = Subspace::coordinate(3, &[0]);
        assert!(vec_d(&line, &plane).unwrap() < 1e-15);
        assert!((vec_d(&plane, &line).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(vec_d(&line, &e1), Err(SvError::Dimension(_))));
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau(&TauBudget::new(vec![]).unwrap()), 1.0);
        assert!((tau(&TauBudget::new(vec![0.5]).unwrap()) - 3.0).abs() < 1e-15);
        let t = tau(&TauBudget::new(vec![0.1, 0.1]).unwrap());
        assert!((t - (1.1f64 / 0.9).powi(2)).abs() < 1e-15);
        assert!((t - 1.4938).abs() < 1e-4);
        assert_eq!(TauBudget::new(vec![1.0]), Err(SvError::BadEpsilon(1.0)));
    }

    #[test]
    fn unitary_defect_examples() {
        assert_eq!(eps_unitary_defect(&DMatrix::identity(3, 3)), 0.0);
        let th = 0.4f64;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 1.1f64.sqrt();
        assert!((eps_unitary_defect(&rot) - 0.1).abs() < 1e-14);
        // Gram oracle for a tall frame: only AᵀA is near identity.
        let mut r = rng(3);
        let q = orthonormalize(&gaussian(5, 3, &mut r)) + gaussian(5, 3, &mut r) * 0.01;
        let gram = q.transpose() * &q - DMatrix::identity(3, 3);
        let outer = &q * q.transpose() - DMatrix::identity(5, 5);
        let d = eps_unitary_defect(&q);
        assert!((d - op_norm(&gram).max(op_norm(&outer))).abs() < 1e-14);
        assert!(d > 0.9, "AAᵀ misses two directions");
    }

    #[test]
    fn projected_sv_identity_case() {
        let mut r = rng(5);
        let f = Subspace::random(6, 3, &mut r);
        let b = gaussian(3, 3, &mut r);
        let rep = check_projected_sv(&b, &f, &f, &f).unwrap();
        assert!(rep.pass);
        for x in rep.ratios {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projected_sv_near_degenerate() {
        let mut r = rng(11);
        let f = Subspace::random(6, 3, &mut r);
        let e = f.tilted(0.15, &mut r);
        let b = gaussian(3, 3, &mut r);
        let rep = check_projected_sv(&b, &e, &f, &f).unwrap();
        assert!((rep.eps1 - 0.3).abs() < 0.02, "{}", rep.eps1);
        let cap = tau_of(&[rep.eps1 * rep.eps1]).unwrap().sqrt();
        assert!(rep.pass);
        assert!(rep.ratios.iter().all(|x| *x <= cap && *x >= 1.0 / cap));
    }

    #[test]
    fn additive_examples() {
        let mut r = rng(2);
        let b = gaussian(4, 5, &mut r);
        let rep = check_additive(&b, &b, 3).unwrap();
        assert!(rep.pass && rep.weyl_gaps.iter().all(|g| *g == 0.0));
        let eps = 1e-3;
        let b2 = &b + DMatrix::identity(4, 5) * eps;
        let rep = check_additive(&b, &b2, 4).unwrap();
        assert!(rep.pass && rep.weyl_gaps.iter().all(|g| *g <= eps * (1.0 + 1e-9)));
    }

    #[test]
    fn factorization_examples() {
        let mut r = rng(8);
        let n = 6;
        let f = Subspace::random(n, 3, &mut r);
        let pf = f.projector();
        let c = &pf + (DMatrix::identity(n, n) - &pf) * gaussian(n, n, &mut r) * &pf;
        let b = &c * &pf * gaussian(n, n, &mut r);
        let e = Subspace::random(n, 4, &mut r);
        let rep = check_factorization(&b, &e, &f, &f, &c).unwrap();
        assert!(rep.r_norm < 1e-14 && rep.pass);
        for t in [1e-3, 1e-2, 0.1] {
            let g = f.tilted(t, &mut r);
            let rep = check_factorization(&b, &e, &f, &g, &c).unwrap();
            assert!(rep.pass, "{rep:?}");
            assert!(rep.r_norm > 0.0);
        }
        let bad = gaussian(n, n, &mut r);
        assert!(matches!(check_factorization(&bad, &e, &f, &f, &c), Err(SvError::Hypothesis(_))));
    }

    #[test]
    fn multadd_trivial_case() {
        let mut r = rng(4);
        let s = multadd_instance(10, 4, 2, 0.0, &mut r);
        let s = MultAddScenario { g: s.f.clone(), ..s };
        match check_multadd(&s).unwrap() {
            MultAddOutcome::Checked(rep) => {
                assert!(rep.pass);
                assert!(rep.max_gap < 1e-12 && rep.gap_ratio < 1e-12);
                assert_eq!(rep.l0, 2);
            }
            MultAddOutcome::Skipped(why) => panic!("{why}"),
        }
    }

    #[test]
    fn multadd_block_instance() {
        let mut r = rng(9);
        let s = multadd_instance(12, 4, 2, 1e-3, &mut r);
        let MultAddOutcome::Checked(rep) = check_multadd(&s).unwrap() else { panic!("skipped") };
        assert!(rep.pass, "{rep:?}");
        assert!(rep.rho < 0.05);
    }

    #[test]
    fn multadd_gap_tracks_rho() {
        let reg = multadd_regression(&[1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2], 21);
        assert!(reg.pass, "{reg:?}");
    }

    #[test]
    fn multadd_skips_non_commuting() {
        let mut r = rng(1);
        let mut s = multadd_instance(8, 3, 1, 1e-3, &mut r);
        s.b = gaussian(8, 8, &mut r);
        assert!(matches!(check_multadd(&s).unwrap(), MultAddOutcome::Skipped(_)));
    }

    #[test]
    fn suites_have_no_violations() {
        for (i, suite) in Suite::ALL.iter().enumerate() {
            let s = run_suite(*suite, 1000, 100 + i as u64).unwrap();
            assert_eq!(s.violations, 0, "{s:?}");
            assert!(s.passed >= 500, "{s:?}");
        }
    }
}
