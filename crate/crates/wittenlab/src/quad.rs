//! Adaptive Gauss–Kronrod quadrature and Laplace-type integrals
//! ∫ e^{−φ(x)/h} dx evaluated in log form.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::numeric::LogValue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("h must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("empty integration domain [{0}, {1}]")]
    EmptyDomain(f64, f64),
    #[error("integrand is not finite at x = {0}")]
    NotFinite(f64),
    #[error("integrand does not decay towards {0}")]
    NoDecay(&'static str),
    #[error("no convergence after {intervals} subintervals (estimate {value:e}, error {error:e})")]
    NonConvergent { intervals: usize, value: f64, error: f64 },
    #[error("integral vanishes")]
    Zero,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-8, abs_tol: 0.0, max_intervals: 20_000 }
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7–K15 panel: (Kronrod value, |K − G|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NotFinite(x))
        }
    };
    let fc = eval(c)?;
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let (f1, f2) = (eval(c - r * XGK[i])?, eval(c + r * XGK[i])?);
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    Ok((k * r, ((k - g) * r).abs()))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive integration over the union of the given breakpoints.
pub fn integrate_on(f: &dyn Fn(f64) -> f64, breaks: &[f64], opts: &QuadOptions) -> Result<(f64, f64), QuadError> {
    if breaks.len() < 2 || !(breaks[0] < *breaks.last().unwrap()) {
        return Err(QuadError::EmptyDomain(breaks.first().copied().unwrap_or(f64::NAN), breaks.last().copied().unwrap_or(f64::NAN)));
    }
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        let (v, e) = gk15(f, w[0], w[1])?;
        total += v;
        err += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
    }
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_intervals {
            return Err(QuadError::NonConvergent { intervals: heap.len(), value: total, error: err });
        }
        let p = heap.pop().expect("nonempty");
        let m = 0.5 * (p.a + p.b);
        if !(p.a < m && m < p.b) {
            // Panel at floating-point resolution; nothing more to gain here.
            return Err(QuadError::NonConvergent { intervals: heap.len(), value: total, error: err });
        }
        let (v1, e1) = gk15(f, p.a, m)?;
        let (v2, e2) = gk15(f, m, p.b)?;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
    }
    // Re-sum to shed accumulated rounding from the running updates.
    let total: f64 = heap.iter().map(|p| p.value).sum();
    let err: f64 = heap.iter().map(|p| p.error).sum();
    Ok((total, err))
}

/// ∫_a^b f on a finite interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<(f64, f64), QuadError> {
    integrate_on(f, &[a, b], opts)
}

/// Threshold on (φ − φ_min)/h past which the integrand is dropped (e^{−60}).
const TAIL: f64 = 60.0;

fn scan_min(phi: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    (0..=n).map(|i| phi(a + (b - a) * i as f64 / n as f64)).fold(f64::INFINITY, f64::min)
}

/// Push `edge` outward from `anchor` until the integrand has decayed.
fn find_cutoff(phi: &dyn Fn(f64) -> f64, h: f64, anchor: f64, dir: f64, side: &'static str) -> Result<f64, QuadError> {
    let mut w = 1.0f64.max(h.sqrt());
    for _ in 0..80 {
        let x = anchor + dir * w;
        let lo = anchor.min(x);
        let hi = anchor.max(x);
        let m = scan_min(phi, lo, hi, 512);
        let (p1, p2) = (phi(x), phi(anchor + dir * 2.0 * w));
        if (p1 - m) / h > TAIL && p2 >= p1 {
            return Ok(x);
        }
        w *= 2.0;
    }
    Err(QuadError::NoDecay(side))
}

/// log ∫_{lo}^{hi} e^{−φ(x)/h} dx; either bound may be infinite.
pub fn laplace_integral(
    phi: &dyn Fn(f64) -> f64,
    h: f64,
    lo: f64,
    hi: f64,
    opts: &QuadOptions,
) -> Result<LogValue, QuadError> {
    if !(h > 0.0) {
        return Err(QuadError::NonPositiveH(h));
    }
    if !(lo < hi) {
        return Err(QuadError::EmptyDomain(lo, hi));
    }
    let anchor = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    let a = if lo.is_finite() { lo } else { find_cutoff(phi, h, anchor, -1.0, "-inf")? };
    let b = if hi.is_finite() { hi } else { find_cutoff(phi, h, anchor, 1.0, "+inf")? };
    // Panels of width ~√h so every Laplace peak is resolved from the start.
    let width = h.sqrt();
    let panels = (((b - a) / width).ceil() as usize).clamp(8, 4000);
    let phi_min = scan_min(phi, a, b, (panels * 16).max(2048));
    let g = |x: f64| (-(phi(x) - phi_min) / h).exp();
    let breaks: Vec<f64> = (0..=panels).map(|i| a + (b - a) * i as f64 / panels as f64).collect();
    let (v, _) = integrate_on(&g, &breaks, opts)?;
    if !(v > 0.0) {
        return Err(QuadError::Zero);
    }
    Ok(LogValue::from_log(v.ln() - phi_min / h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((v - 3.75).abs() < 1e-13);
    }

    #[test]
    fn gaussian_on_the_line() {
        let l = laplace_integral(&|x| x * x, 1.0, f64::NEG_INFINITY, f64::INFINITY, &QuadOptions::default()).unwrap();
        assert!((l.value() - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn quartic_against_gamma() {
        let l = laplace_integral(&|x| x.powi(4) / 4.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &QuadOptions::default())
            .unwrap();
        let exact = 4f64.powf(0.25) * statrs::function::gamma::gamma(0.25) / 2.0;
        assert!((l.value() - exact).abs() < 1e-8 * exact, "{} {}", l.value(), exact);
        assert!((exact - 2.5637).abs() < 1e-4);
    }

    #[test]
    fn tiny_h_stays_in_log_form() {
        // ∫ e^{−(x²+100)/h} at h = 1e-3: value e^{−1e5}·√(πh).
        let h = 1e-3;
        let l = laplace_integral(&|x| x * x + 100.0, h, f64::NEG_INFINITY, f64::INFINITY, &QuadOptions::default()).unwrap();
        let exact = -100.0 / h + 0.5 * (PI * h).ln();
        assert!((l.log_mag - exact).abs() < 1e-9);
        assert_eq!(l.value(), 0.0);
    }

    #[test]
    fn nonzero_delta_scales_like_sqrt_h() {
        // I(δ,h) with δ = 1 (minimum at x² = 1, f'' = 2 there, two wells).
        let phi = |x: f64| x.powi(4) / 4.0 - x * x / 2.0 + 0.25;
        for h in [1e-2, 1e-3] {
            let l = laplace_integral(&phi, h, f64::NEG_INFINITY, f64::INFINITY, &QuadOptions::default()).unwrap();
            let c = 2.0 * (2.0 * PI / 2.0).sqrt();
            let ratio = l.value() / (c * h.sqrt());
            assert!((ratio - 1.0).abs() < 2.0 * h, "{h} {ratio}");
        }
    }

    #[test]
    fn errors() {
        let o = QuadOptions::default();
        assert_eq!(laplace_integral(&|x| x, 0.0, 0.0, 1.0, &o), Err(QuadError::NonPositiveH(0.0)));
        assert!(matches!(laplace_integral(&|x| -x * x, 1.0, f64::NEG_INFINITY, 0.0, &o), Err(QuadError::NoDecay(_))));
        assert!(matches!(integrate(&|x| 1.0 / x, -1.0, 1.0, &o), Err(QuadError::NotFinite(_)) | Err(QuadError::NonConvergent { .. })));
        assert_eq!(laplace_integral(&|x| x, 1.0, 2.0, 1.0, &o), Err(QuadError::EmptyDomain(2.0, 1.0)));
    }
}
