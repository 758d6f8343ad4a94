//! Dense SVD with high relative accuracy on small singular values.
//!
//! A = X D Yᵀ by Gaussian elimination with complete pivoting, then
//! X D Π = Q R by Householder QR with column pivoting, then one-sided
//! (Hestenes) Jacobi on G = Y Π Rᵀ, so that A = Q Gᵀ. For diagonally scaled
//! totally unimodular matrices (the Witten differentials here are row and
//! column scalings of signed incidence matrices) every step is accurate
//! entrywise and tiny singular values keep their leading digits.

use nalgebra::DMatrix;

use crate::numeric::{axpy, dot};

#[derive(Clone, Debug)]
pub struct JacobiSvd {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub u: Option<DMatrix<f64>>,
    pub v: Option<DMatrix<f64>>,
    pub sweeps: usize,
    pub converged: bool,
}

const MAX_SWEEPS: usize = 60;

/// Column-major m×n storage.
struct ColMajor {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        // DMatrix is column-major already.
        ColMajor { m: a.nrows(), n: a.ncols(), data: a.as_slice().to_vec() }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    fn two_cols_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(i < j);
        let m = self.m;
        let (lo, hi) = self.data.split_at_mut(j * m);
        (&mut lo[i * m..(i + 1) * m], &mut hi[..m])
    }
}

struct PivotedQr {
    /// n×n upper triangle, row-major by construction of Rᵀ below.
    r: Vec<Vec<f64>>,
    perm: Vec<usize>,
    /// Householder vectors (acting on rows k..m) and their β = vᵀv / 2.
    reflectors: Vec<(Vec<f64>, f64)>,
    m: usize,
}

/// Householder QR with norm-based column pivoting of a tall matrix.
fn pivoted_qr(mut a: ColMajor) -> PivotedQr {
    let (m, n) = (a.m, a.n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::with_capacity(n);
    for k in 0..n {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let c = &a.col(j)[k..];
            let s = dot(c, c);
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if best != k {
            let (x, y) = a.two_cols_mut(k, best);
            x.swap_with_slice(y);
            perm.swap(k, best);
        }
        let x = a.col(k)[k..].to_vec();
        let norm = dot(&x, &x).sqrt();
        if norm == 0.0 {
            reflectors.push((vec![], 0.0));
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if vv == 0.0 {
            reflectors.push((vec![], 0.0));
            continue;
        }
        for j in k + 1..n {
            let c = &mut a.data[j * m + k..(j + 1) * m];
            let s = -2.0 * dot(&v, c) / vv;
            axpy(s, &v, c);
        }
        let c = &mut a.data[k * m + k..(k + 1) * m];
        c[0] = alpha;
        c[1..].iter_mut().for_each(|x| *x = 0.0);
        reflectors.push((v, vv));
    }
    let r = (0..n).map(|i| (0..n).map(|j| if j >= i { a.data[j * m + i] } else { 0.0 }).collect()).collect();
    PivotedQr { r, perm, reflectors, m }
}

impl PivotedQr {
    /// Q · X for X with n rows (zero-padded to m).
    fn apply_q(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut out = DMatrix::zeros(self.m, x.ncols());
        out.view_mut((0, 0), (n, x.ncols())).copy_from(x);
        for c in 0..x.ncols() {
            let m = self.m;
            let col = &mut out.as_mut_slice()[c * m..(c + 1) * m];
            for k in (0..self.reflectors.len()).rev() {
                let (v, vv) = &self.reflectors[k];
                if v.is_empty() {
                    continue;
                }
                let seg = &mut col[k..];
                let s = -2.0 * dot(v, seg) / vv;
                axpy(s, v, seg);
            }
        }
        out
    }
}

const BLOCK: usize = 32;

/// One-sided Jacobi on the columns of `g`; returns (sweeps, converged).
/// When `acc` is given the rotations are accumulated into it. Pairs are
/// visited block by block so both column blocks stay in cache, and columns
/// are sorted by decreasing norm before each sweep.
fn hestenes(g: &mut ColMajor, acc: Option<&mut ColMajor>) -> (usize, bool) {
    #[cfg(target_arch = "x86_64")]
    if is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { hestenes_avx2(g, acc) };
    }
    hestenes_impl(g, acc)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn hestenes_avx2(g: &mut ColMajor, acc: Option<&mut ColMajor>) -> (usize, bool) {
    hestenes_impl(g, acc)
}

#[inline(always)]
fn hestenes_impl(g: &mut ColMajor, mut acc: Option<&mut ColMajor>) -> (usize, bool) {
    let dot = dot_inline;
    let n = g.n;
    let tol = (g.m as f64).sqrt() * f64::EPSILON;
    let mut norms: Vec<f64> = (0..n).map(|j| dot(g.col(j), g.col(j))).collect();
    let nb = n.div_ceil(BLOCK);
    for sweep in 1..=MAX_SWEEPS {
        sort_columns(g, acc.as_deref_mut(), &mut norms);
        let mut rotated = false;
        for bi in 0..nb {
            for bj in bi..nb {
                for i in bi * BLOCK..((bi + 1) * BLOCK).min(n) {
                    let j0 = if bi == bj { i + 1 } else { bj * BLOCK };
                    for j in j0..((bj + 1) * BLOCK).min(n) {
                        let (a, b) = (norms[i], norms[j]);
                        if a == 0.0 || b == 0.0 {
                            continue;
                        }
                        let c = dot(g.col(i), g.col(j));
                        if c.abs() <= tol * (a * b).sqrt() {
                            continue;
                        }
                        rotated = true;
                        let zeta = (b - a) / (2.0 * c);
                        let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                        let cs = 1.0 / (1.0 + t * t).sqrt();
                        let sn = cs * t;
                        let (x, y) = g.two_cols_mut(i, j);
                        rotate(x, y, cs, sn);
                        // Cheap updates unless cancellation makes them unreliable.
                        let (na, nb) = (a - t * c, b + t * c);
                        norms[i] = if na < 0.25 * a { dot(x, x) } else { na };
                        norms[j] = if nb < 0.25 * b { dot(y, y) } else { nb };
                        if let Some(v) = acc.as_deref_mut() {
                            let (x, y) = v.two_cols_mut(i, j);
                            rotate(x, y, cs, sn);
                        }
                    }
                }
            }
        }
        // Refresh to stop drift of the updated norms.
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = dot(g.col(j), g.col(j));
        }
        if !rotated {
            return (sweep, true);
        }
    }
    (MAX_SWEEPS, false)
}

fn sort_columns(g: &mut ColMajor, acc: Option<&mut ColMajor>, norms: &mut Vec<f64>) {
    let n = g.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    if order.iter().enumerate().all(|(k, &j)| k == j) {
        return;
    }
    let permute = |c: &mut ColMajor| {
        let m = c.m;
        let mut data = Vec::with_capacity(c.data.len());
        for &j in &order {
            data.extend_from_slice(&c.data[j * m..(j + 1) * m]);
        }
        c.data = data;
    };
    permute(g);
    if let Some(v) = acc {
        permute(v);
    }
    *norms = order.iter().map(|&j| norms[j]).collect();
}

#[inline(always)]
fn dot_inline(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline(always)]
fn rotate(x: &mut [f64], y: &mut [f64], cs: f64, sn: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = cs * a - sn * b;
        *yi = sn * a + cs * b;
    }
}

/// Rank-revealing A = X D Yᵀ with X (m×r) and Y (n×r) unit trapezoidal up to permutation.
struct Rrd {
    x: ColMajor,
    d: Vec<f64>,
    y: ColMajor,
}

/// Gaussian elimination with complete pivoting.
fn gecp(a: &DMatrix<f64>) -> Rrd {
    let (m, n) = (a.nrows(), a.ncols());
    let mut w = ColMajor::from_dmatrix(a);
    let mut rp: Vec<usize> = (0..m).collect();
    let mut cp: Vec<usize> = (0..n).collect();
    let mut d = Vec::new();
    let kmax = m.min(n);
    // Locate the first pivot.
    let argmax = |w: &ColMajor, k: usize| {
        let mut best = (k, k, -1.0f64);
        for j in k..n {
            let c = &w.col(j)[k..];
            for (i, v) in c.iter().enumerate() {
                if v.abs() > best.2 {
                    best = (i + k, j, v.abs());
                }
            }
        }
        best
    };
    let mut piv = argmax(&w, 0);
    for k in 0..kmax {
        let (pi, pj, pv) = piv;
        if pv <= 0.0 {
            break;
        }
        if pj != k {
            let (x, y) = w.two_cols_mut(k, pj);
            x.swap_with_slice(y);
            cp.swap(k, pj);
        }
        if pi != k {
            for j in 0..n {
                w.data.swap(j * m + k, j * m + pi);
            }
            rp.swap(k, pi);
        }
        let p = w.data[k * m + k];
        d.push(p);
        for v in &mut w.data[k * m + k + 1..(k + 1) * m] {
            *v /= p;
        }
        // Rank-one update of the trailing block, tracking the next pivot.
        let mut best = (k + 1, k + 1, -1.0f64);
        let (head, tail) = w.data.split_at_mut((k + 1) * m);
        let lcol = &head[k * m + k + 1..(k + 1) * m];
        for j in k + 1..n {
            let col = &mut tail[(j - k - 1) * m..(j - k) * m];
            let u = col[k] / p;
            col[k] = u;
            let seg = &mut col[k + 1..];
            axpy(-u * p, lcol, seg);
            for (i, v) in seg.iter().enumerate() {
                if v.abs() > best.2 {
                    best = (i + k + 1, j, v.abs());
                }
            }
        }
        piv = best;
    }
    let r = d.len();
    // X = P_rᵀ L, Y = P_c Uᵀ.
    let mut x = ColMajor { m, n: r, data: vec![0.0; m * r] };
    for k in 0..r {
        x.data[k * m + rp[k]] = 1.0;
        for i in k + 1..m {
            x.data[k * m + rp[i]] = w.data[k * m + i];
        }
    }
    let mut y = ColMajor { m: n, n: r, data: vec![0.0; n * r] };
    for k in 0..r {
        y.data[k * n + cp[k]] = 1.0;
        for j in k + 1..n {
            y.data[k * n + cp[j]] = w.data[j * m + k];
        }
    }
    Rrd { x, d, y }
}

/// Extend orthonormal columns to `cols` columns by Gram–Schmidt on unit vectors.
fn complete_basis(q: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let m = q.nrows();
    let mut basis: Vec<Vec<f64>> = (0..q.ncols()).map(|c| q.column(c).iter().cloned().collect()).collect();
    let mut e = 0;
    while basis.len() < cols && e < m {
        let mut v = vec![0.0; m];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-3 {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    DMatrix::from_fn(m, cols, |r, c| basis[c][r])
}

/// Full dense SVD; vectors are optional since they need an extra r×r accumulator.
pub fn jacobi_svd(a: &DMatrix<f64>, vectors: bool) -> JacobiSvd {
    if a.nrows() < a.ncols() {
        let mut s = jacobi_svd(&a.transpose(), vectors);
        std::mem::swap(&mut s.u, &mut s.v);
        return s;
    }
    let (m, n) = (a.nrows(), a.ncols());
    let rrd = gecp(a);
    let r = rrd.d.len();
    let mut sig = vec![];
    let mut sweeps = 0;
    let mut converged = true;
    let mut uv = None;
    if r > 0 {
        let mut xd = rrd.x;
        for (k, dk) in rrd.d.iter().enumerate() {
            xd.data[k * m..(k + 1) * m].iter_mut().for_each(|v| *v *= dk);
        }
        let qr = pivoted_qr(xd);
        // G = Y Π Rᵀ, column c = Σ_{k ≥ c} R[c][k] · Y[:, perm[k]].
        let mut g = ColMajor { m: n, n: r, data: vec![0.0; n * r] };
        for c in 0..r {
            let col = &mut g.data[c * n..(c + 1) * n];
            for k in c..r {
                let rk = qr.r[c][k];
                if rk != 0.0 {
                    axpy(rk, rrd.y.col(qr.perm[k]), col);
                }
            }
        }
        let mut j_acc = vectors.then(|| {
            let mut d = vec![0.0; r * r];
            (0..r).for_each(|i| d[i * r + i] = 1.0);
            ColMajor { m: r, n: r, data: d }
        });
        let (sw, conv) = hestenes(&mut g, j_acc.as_mut());
        sweeps = sw;
        converged = conv;
        sig = (0..r).map(|j| dot(g.col(j), g.col(j)).sqrt()).collect();
        if let Some(jm) = j_acc {
            let mut order: Vec<usize> = (0..r).collect();
            order.sort_by(|&x, &y| sig[y].total_cmp(&sig[x]));
            // A = Q Gᵀ, G J = Ĝ  ⇒  U = Q J, V = Ĝ Σ⁻¹.
            let jd = DMatrix::from_fn(r, r, |row, c| jm.data[order[c] * r + row]);
            let u = qr.apply_q(&jd);
            let v = DMatrix::from_fn(n, r, |row, c| {
                let j = order[c];
                if sig[j] > 0.0 {
                    g.data[j * n + row] / sig[j]
                } else {
                    0.0
                }
            });
            uv = Some((u, v));
        }
    }
    let mut singular_values = sig.clone();
    singular_values.sort_by(|x, y| y.total_cmp(x));
    singular_values.resize(n, 0.0);
    let (u, v) = match uv {
        Some((u, v)) => (Some(complete_basis(&u, n)), Some(complete_basis(&v, n))),
        None if vectors => {
            (Some(complete_basis(&DMatrix::zeros(m, 0), n)), Some(complete_basis(&DMatrix::zeros(n, 0), n)))
        }
        None => (None, None),
    };
    JacobiSvd { singular_values, u, v, sweeps, converged }
}
