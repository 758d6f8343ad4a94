//! Built-in landscapes with reference prefactor data.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{sample, Expr, FieldError, GridTopology, LevelWindow, SampledField};
use crate::numeric::LogValue;
use crate::prefactor::{
    basin_integral, circulant_rates, critical_submanifold_rate, degenerate_min_rate, mexican_hat_system, morse_rate,
    piecewise_affine_rate, MorseDatum, PrefactorError, Slopes,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("unknown builtin landscape '{0}'")]
    Unknown(String),
    #[error("bad parameter for {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Selector for one of the built-in scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Builtin {
    Cosine,
    DoubleWell1d,
    KwellSymmetric { k: usize },
    PiecewiseAffine1d,
    DegenerateMin { delta: f64 },
    MexicanHat2d,
    TorusFlat,
}

impl Builtin {
    pub const NAMES: [&'static str; 7] = [
        "cosine",
        "double_well_1d",
        "kwell_symmetric",
        "piecewise_affine_1d",
        "degenerate_min",
        "mexican_hat_2d",
        "torus_flat",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Cosine => "cosine",
            Builtin::DoubleWell1d => "double_well_1d",
            Builtin::KwellSymmetric { .. } => "kwell_symmetric",
            Builtin::PiecewiseAffine1d => "piecewise_affine_1d",
            Builtin::DegenerateMin { .. } => "degenerate_min",
            Builtin::MexicanHat2d => "mexican_hat_2d",
            Builtin::TorusFlat => "torus_flat",
        }
    }

    /// Accepts `name` or `name(param)`, e.g. `kwell_symmetric(4)`.
    pub fn parse(text: &str) -> Result<Self, LandscapeError> {
        let text = text.trim();
        let (name, arg) = match text.find('(') {
            Some(i) if text.ends_with(')') => (&text[..i], Some(text[i + 1..text.len() - 1].trim())),
            _ => (text, None),
        };
        let b = Self::from_name(name)?;
        match arg {
            None | Some("") => Ok(b),
            Some(a) => b.with_param(a),
        }
    }

    pub fn from_name(name: &str) -> Result<Self, LandscapeError> {
        Ok(match name.trim() {
            "cosine" => Builtin::Cosine,
            "double_well_1d" => Builtin::DoubleWell1d,
            "kwell_symmetric" => Builtin::KwellSymmetric { k: 4 },
            "piecewise_affine_1d" => Builtin::PiecewiseAffine1d,
            "degenerate_min" => Builtin::DegenerateMin { delta: 0.0 },
            "mexican_hat_2d" => Builtin::MexicanHat2d,
            "torus_flat" => Builtin::TorusFlat,
            other => return Err(LandscapeError::Unknown(other.to_string())),
        })
    }

    /// Set the single numeric parameter (K or δ).
    pub fn with_param(self, text: &str) -> Result<Self, LandscapeError> {
        let name = self.name();
        let bad = |msg: String| LandscapeError::Param { name, msg };
        match self {
            Builtin::KwellSymmetric { .. } => {
                let k: usize = text.parse().map_err(|_| bad(format!("K must be an integer, got '{text}'")))?;
                if !(2..=64).contains(&k) {
                    return Err(bad(format!("K must lie in 2..=64, got {k}")));
                }
                Ok(Builtin::KwellSymmetric { k })
            }
            Builtin::DegenerateMin { .. } => {
                let delta: f64 = text.parse().map_err(|_| bad(format!("δ must be a number, got '{text}'")))?;
                if !(-0.5..=0.5).contains(&delta) {
                    return Err(bad(format!("δ must lie in [-0.5, 0.5], got {delta}")));
                }
                Ok(Builtin::DegenerateMin { delta })
            }
            _ => Err(bad("takes no parameter".into())),
        }
    }

    pub fn default_resolution(&self) -> usize {
        match self {
            Builtin::Cosine => 256,
            Builtin::DoubleWell1d | Builtin::DegenerateMin { .. } => 1024,
            Builtin::KwellSymmetric { k } => 128 * k,
            Builtin::PiecewiseAffine1d => 1024,
            Builtin::MexicanHat2d => 128,
            Builtin::TorusFlat => 16,
        }
    }

    /// Decreasing h sweep suited to the landscape's bar lengths.
    pub fn default_h(&self) -> Vec<f64> {
        match self {
            Builtin::Cosine | Builtin::TorusFlat => vec![0.5, 0.3, 0.2],
            Builtin::DoubleWell1d | Builtin::DegenerateMin { .. } => vec![0.2, 0.15, 0.1, 0.07, 0.05],
            Builtin::KwellSymmetric { .. } => vec![0.2, 0.15, 0.1, 0.08],
            Builtin::PiecewiseAffine1d => vec![0.15, 0.1, 0.07, 0.05],
            Builtin::MexicanHat2d => vec![0.05, 0.035, 0.025, 0.02],
        }
    }

    /// Sample the landscape at `resolution` nodes per axis (default if `None`).
    pub fn build(&self, resolution: Option<usize>) -> Result<Landscape, LandscapeError> {
        let n = resolution.unwrap_or_else(|| self.default_resolution());
        let name = self.name();
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(LandscapeError::Param { name, msg }) };
        let (expr, topology, model, power) = match *self {
            Builtin::Cosine => {
                (Expr::new("cos(x)", |x| x[0].cos()), GridTopology::circle(n)?, ReferenceModel::None, None)
            }
            Builtin::DoubleWell1d => {
                let (expr, model) = double_well();
                (expr, GridTopology::circle(n)?, model, Some(1.0))
            }
            Builtin::KwellSymmetric { k } => {
                check(n % (2 * k) == 0, format!("resolution {n} must be a multiple of 2K = {}", 2 * k))?;
                let kf = k as f64;
                let model = ReferenceModel::Circulant { k, min_curvature: kf * kf, max_curvature: -kf * kf, gap: 2.0 };
                (Expr::new(format!("cos({k}x)"), move |x| (kf * x[0]).cos()), GridTopology::circle(n)?, model, Some(1.0))
            }
            Builtin::PiecewiseAffine1d => {
                check(n % 32 == 0, format!("resolution {n} must be a multiple of 32"))?;
                let (expr, model) = piecewise_affine();
                (expr, GridTopology::circle(n)?, model, Some(0.0))
            }
            Builtin::DegenerateMin { delta } => {
                let (expr, model) = degenerate_min(delta);
                let power = (delta == 0.0).then_some(1.25);
                (expr, GridTopology::circle(n)?, model, power)
            }
            Builtin::MexicanHat2d => {
                check(n % 2 == 0, format!("resolution {n} must be even"))?;
                let expr = Expr::new("(r²-1)²/4 on a periodic box", |x| {
                    let wrap = |t: f64| if t >= 0.5 * HAT_BOX { t - HAT_BOX } else { t };
                    let (a, b) = (wrap(x[0]), wrap(x[1]));
                    let r2 = a * a + b * b;
                    (r2 - 1.0).powi(2) / 4.0
                });
                (expr, GridTopology::torus(n, n, HAT_BOX, HAT_BOX)?, ReferenceModel::CriticalCircle, Some(0.5))
            }
            Builtin::TorusFlat => (Expr::new("0", |_| 0.0), GridTopology::torus(n, n, TAU, TAU)?, ReferenceModel::None, None),
        };
        let field = sample(&expr, &topology)?;
        Ok(Landscape {
            builtin: *self,
            expr,
            field,
            window: LevelWindow::full(),
            h: self.default_h(),
            model,
            prefactor_power: power,
        })
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::KwellSymmetric { k } => write!(f, "kwell_symmetric({k})"),
            Builtin::DegenerateMin { delta } => write!(f, "degenerate_min({delta})"),
            b => f.write_str(b.name()),
        }
    }
}

/// Which prefactor calculator describes the lowest finite bar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReferenceModel {
    None,
    /// Escape from `min` over each listed index-1 point, rates summed.
    Morse { min: MorseDatum, saddles: Vec<MorseDatum> },
    /// Escape from a possibly degenerate 1D well with a numerical basin
    /// integral of `profile` over [lo, hi].
    Basin { min_value: f64, lo: f64, hi: f64, saddles: Vec<MorseDatum> },
    PiecewiseAffine { min: Slopes, max: Slopes, gap: f64 },
    Circulant { k: usize, min_curvature: f64, max_curvature: f64, gap: f64 },
    /// Unit circle of minima below a nondegenerate maximum.
    CriticalCircle,
}

#[derive(Clone, Debug)]
pub struct Landscape {
    pub builtin: Builtin,
    pub expr: Expr,
    pub field: SampledField,
    pub window: LevelWindow,
    /// Default sweep, strictly decreasing.
    pub h: Vec<f64>,
    pub model: ReferenceModel,
    /// Expected exponent ν in λ ≈ C h^ν e^{−2ℓ/h} for the lowest finite bar.
    pub prefactor_power: Option<f64>,
}

impl Landscape {
    /// Reference small eigenvalues λ(h) (exponential factor included),
    /// ascending; empty when the landscape has no finite bar.
    pub fn reference_eigenvalues(&self, h: f64) -> Result<Vec<LogValue>, PrefactorError> {
        let mut out = match &self.model {
            ReferenceModel::None => vec![],
            ReferenceModel::Morse { min, saddles } => {
                vec![sum_log(saddles.iter().map(|s| morse_rate(min, s, 1.0, h)).collect::<Result<Vec<_>, _>>()?)]
            }
            ReferenceModel::Basin { min_value, lo, hi, saddles } => {
                let x = self.expr.clone();
                let m = *min_value;
                let phi = move |t: f64| x.eval(&[t]) - m;
                let basin = basin_integral(&phi, h, *lo, *hi)?;
                let rates = saddles
                    .iter()
                    .map(|s| degenerate_min_rate(s, basin, s.value - m, h))
                    .collect::<Result<Vec<_>, _>>()?;
                vec![sum_log(rates)]
            }
            ReferenceModel::PiecewiseAffine { min, max, gap } => vec![piecewise_affine_rate(*min, *max, *gap, h)?],
            ReferenceModel::Circulant { k, min_curvature, max_curvature, gap } => {
                circulant_rates(*k, *min_curvature, *max_curvature, *gap, h)?.into_iter().filter(|v| !v.is_zero()).collect()
            }
            ReferenceModel::CriticalCircle => vec![critical_submanifold_rate(&mexican_hat_system(h)?, h)?],
        };
        out.sort_by(|a, b| a.log_mag.total_cmp(&b.log_mag));
        Ok(out)
    }
}

fn sum_log(v: Vec<LogValue>) -> LogValue {
    let logs: Vec<f64> = v.iter().map(|x| x.log_mag).collect();
    LogValue::from_log(crate::numeric::logsumexp(&logs))
}

/// Critical point of a 1D function with its second derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Critical1d {
    pub x: f64,
    pub value: f64,
    pub curvature: f64,
}

/// Zeros of `df` on [0, 2π) bracketed on a uniform scan and refined by bisection.
pub fn periodic_critical_points(
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
    d2f: &dyn Fn(f64) -> f64,
    scan: usize,
) -> Vec<Critical1d> {
    let xs: Vec<f64> = (0..=scan).map(|i| TAU * i as f64 / scan as f64).collect();
    let mut out: Vec<Critical1d> = Vec::new();
    for w in xs.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (df(a), df(b));
        let x = if fa == 0.0 {
            a
        } else if fa * fb < 0.0 {
            let mut sa = fa.signum();
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let fm = df(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == sa {
                    a = m;
                    sa = fm.signum();
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        } else {
            continue;
        };
        if x < TAU && !out.iter().any(|c| (c.x - x).abs() < 1e-9) {
            out.push(Critical1d { x, value: f(x), curvature: d2f(x) });
        }
    }
    out
}

fn datum_1d(c: &Critical1d) -> MorseDatum {
    if c.curvature > 0.0 {
        MorseDatum::new(c.value, vec![], vec![c.curvature])
    } else {
        MorseDatum::new(c.value, vec![c.curvature], vec![])
    }
}

/// Side of the periodic box around the mexican hat.
pub const HAT_BOX: f64 = 3.0;

const DW: (f64, f64, f64) = (1.25, 0.375, 0.625);

/// a·cos 2θ + b·cos θ + c·sin θ: two wells of different depth, two saddles.
fn double_well() -> (Expr, ReferenceModel) {
    let (a, b, c) = DW;
    let f = move |t: f64| a * (2.0 * t).cos() + b * t.cos() + c * t.sin();
    let df = move |t: f64| -2.0 * a * (2.0 * t).sin() - b * t.sin() + c * t.cos();
    let d2f = move |t: f64| -4.0 * a * (2.0 * t).cos() - b * t.cos() - c * t.sin();
    let crit = periodic_critical_points(&f, &df, &d2f, 4096);
    let mut mins: Vec<_> = crit.iter().filter(|c| c.curvature > 0.0).copied().collect();
    let saddles: Vec<_> = crit.iter().filter(|c| c.curvature < 0.0).map(datum_1d).collect();
    mins.sort_by(|x, y| y.value.total_cmp(&x.value));
    let model = ReferenceModel::Morse { min: datum_1d(&mins[0]), saddles };
    (Expr::new("a cos2x + b cosx + c sinx", move |x| f(x[0])), model)
}

const PA_KINKS: [(f64, f64); 4] = [(0.0, 0.0), (7.0 / 32.0, 1.2), (14.0 / 32.0, 0.3), (23.0 / 32.0, 1.8)];

fn piecewise_affine_eval(t: f64) -> f64 {
    let s = (t / TAU).rem_euclid(1.0);
    for i in 0..PA_KINKS.len() {
        let (x0, y0) = PA_KINKS[i];
        let (x1, y1) = if i + 1 < PA_KINKS.len() { PA_KINKS[i + 1] } else { (1.0, PA_KINKS[0].1) };
        if s >= x0 && s <= x1 {
            return y0 + (y1 - y0) * (s - x0) / (x1 - x0);
        }
    }
    0.0
}

/// Slope of the segment from kink i to kink i+1, in θ units.
fn pa_slope(i: usize) -> f64 {
    let (x0, y0) = PA_KINKS[i % 4];
    let (x1, y1) = if i % 4 == 3 { (1.0, PA_KINKS[0].1) } else { PA_KINKS[i % 4 + 1] };
    (y1 - y0) / ((x1 - x0) * TAU)
}

/// Double well with kinks on grid nodes; the shallow well is at kink 2.
fn piecewise_affine() -> (Expr, ReferenceModel) {
    let min = Slopes { left: pa_slope(1), right: pa_slope(2) };
    let max = Slopes { left: pa_slope(0), right: pa_slope(1) };
    let gap = PA_KINKS[1].1 - PA_KINKS[2].1;
    (Expr::new("piecewise affine double well", |x| piecewise_affine_eval(x[0])), ReferenceModel::PiecewiseAffine { min, max, gap })
}

/// g(s) + δs with s = 1 − cos θ and g(s) = s² + s³/3 − s⁴/2, so that
/// f ≈ (θ⁴ + 2δθ²)/4 near 0 with no θ⁶ term. Deep well at θ = π.
fn degenerate_min(delta: f64) -> (Expr, ReferenceModel) {
    let g = move |s: f64| s * s + s.powi(3) / 3.0 - s.powi(4) / 2.0 + delta * s;
    let dg = move |s: f64| 2.0 * s + s * s - 2.0 * s.powi(3) + delta;
    let d2g = |s: f64| 2.0 + 2.0 * s - 6.0 * s * s;
    let f = move |t: f64| g(1.0 - t.cos());
    let df = move |t: f64| dg(1.0 - t.cos()) * t.sin();
    let d2f = move |t: f64| {
        let s = 1.0 - t.cos();
        d2g(s) * t.sin().powi(2) + dg(s) * t.cos()
    };
    let crit = periodic_critical_points(&f, &df, &d2f, 4096);
    // Saddles are the critical points bounding the well around θ = 0.
    let top = crit
        .iter()
        .filter(|c| c.curvature < 0.0 && c.x < PI)
        .min_by(|a, b| a.x.total_cmp(&b.x))
        .copied()
        .expect("saddle exists for |δ| ≤ 0.5");
    let lo = -top.x;
    let hi = top.x;
    let min_value = (0..=4000).map(|i| f(lo + (hi - lo) * i as f64 / 4000.0)).fold(f64::INFINITY, f64::min);
    let saddle = datum_1d(&top);
    let model = ReferenceModel::Basin { min_value, lo, hi, saddles: vec![saddle.clone(), saddle] };
    (Expr::new(format!("degenerate well δ={delta}"), move |x| f(x[0])), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::{barcode, build_filtration};

    #[test]
    fn parse_names_and_params() {
        assert_eq!(Builtin::parse("kwell_symmetric(3)").unwrap(), Builtin::KwellSymmetric { k: 3 });
        assert_eq!(Builtin::parse("degenerate_min(0.1)").unwrap(), Builtin::DegenerateMin { delta: 0.1 });
        assert_eq!(Builtin::parse("cosine").unwrap(), Builtin::Cosine);
        assert!(matches!(Builtin::parse("nope"), Err(LandscapeError::Unknown(_))));
        assert!(matches!(Builtin::parse("cosine(2)"), Err(LandscapeError::Param { .. })));
        assert!(matches!(Builtin::parse("kwell_symmetric(1)"), Err(LandscapeError::Param { .. })));
        for name in Builtin::NAMES {
            let b = Builtin::from_name(name).unwrap();
            assert_eq!(Builtin::parse(&b.to_string()).unwrap(), b);
        }
    }

    #[test]
    fn default_sweeps_decrease() {
        for name in Builtin::NAMES {
            let h = Builtin::from_name(name).unwrap().default_h();
            assert!(h.windows(2).all(|w| w[0] > w[1]) && h.len() >= 3, "{name}");
        }
    }

    fn finite_lengths(f: &SampledField) -> Vec<(usize, f64)> {
        let bc = barcode(&build_filtration(f));
        bc.finite_bars().map(|(_, b)| (b.degree, b.length())).filter(|b| b.1 > 1e-9).collect()
    }

    #[test]
    fn cosine_has_no_finite_bar() {
        let l = Builtin::Cosine.build(None).unwrap();
        assert!(finite_lengths(&l.field).is_empty());
        assert!(l.reference_eigenvalues(0.2).unwrap().is_empty());
    }

    #[test]
    fn double_well_bar_matches_saddle_gap() {
        let l = Builtin::DoubleWell1d.build(None).unwrap();
        let bars = finite_lengths(&l.field);
        assert_eq!(bars.len(), 1);
        let ReferenceModel::Morse { min, saddles } = &l.model else { panic!() };
        assert_eq!(saddles.len(), 2);
        let low = saddles.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
        // Sampling lowers the bar by at most ~f''·dx²/2 at each end.
        assert!((bars[0].1 - (low - min.value)).abs() < 1e-4, "{:?}", bars);
        assert!((low - min.value - 1.56).abs() < 0.01);
    }

    #[test]
    fn kwell_bars_and_reference_pattern() {
        let l = Builtin::KwellSymmetric { k: 4 }.build(None).unwrap();
        let bars = finite_lengths(&l.field);
        assert_eq!(bars.len(), 3);
        assert!(bars.iter().all(|b| b.0 == 0 && (b.1 - 2.0).abs() < 1e-12));
        let r = l.reference_eigenvalues(0.1).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r[2].log_mag - r[0].log_mag - 2f64.ln()).abs() < 1e-12);
        assert!((r[1].log_mag - r[0].log_mag).abs() < 1e-12);
    }

    #[test]
    fn piecewise_affine_kinks_on_nodes() {
        let l = Builtin::PiecewiseAffine1d.build(None).unwrap();
        let bars = finite_lengths(&l.field);
        assert_eq!(bars.len(), 1);
        assert!((bars[0].1 - 0.9).abs() < 1e-12);
        assert!(Builtin::PiecewiseAffine1d.build(Some(100)).is_err());
        let ReferenceModel::PiecewiseAffine { min, max, .. } = l.model else { panic!() };
        assert!(min.left < 0.0 && min.right > 0.0 && max.left > 0.0 && max.right < 0.0);
    }

    #[test]
    fn degenerate_well_geometry() {
        let l = Builtin::DegenerateMin { delta: 0.0 }.build(None).unwrap();
        let ReferenceModel::Basin { min_value, saddles, .. } = &l.model else { panic!() };
        assert!(min_value.abs() < 1e-12);
        assert_eq!(saddles.len(), 2);
        let bars = finite_lengths(&l.field);
        assert_eq!(bars.len(), 1);
        assert!((bars[0].1 - saddles[0].value).abs() < 1e-4);
        // Quartic bottom: f(θ) = θ⁴/4 + O(θ⁸).
        let t: f64 = 0.05;
        assert!((l.expr.eval(&[t]) - t.powi(4) / 4.0).abs() < 1e-9);
        // h^{5/4} scaling of the reference.
        let r1 = l.reference_eigenvalues(0.01).unwrap()[0].log_mag + 2.0 * saddles[0].value / 0.01;
        let r2 = l.reference_eigenvalues(0.005).unwrap()[0].log_mag + 2.0 * saddles[0].value / 0.005;
        let nu = (r1 - r2) / 2f64.ln();
        assert!((nu - 1.25).abs() < 0.02, "{nu}");
    }

    #[test]
    fn mexican_hat_bars() {
        let l = Builtin::MexicanHat2d.build(Some(64)).unwrap();
        let bc = barcode(&build_filtration(&l.field));
        let long: Vec<_> = bc.finite_bars().filter(|(_, b)| b.length() > 0.05).collect();
        assert_eq!(long.len(), 1);
        assert_eq!(long[0].1.degree, 1);
        assert!((long[0].1.length() - 0.25).abs() < 1e-2);
        assert_eq!(bc.infinite_count(1), 2);
    }

    #[test]
    fn critical_point_finder_on_cosine() {
        let c = periodic_critical_points(&|t| t.cos(), &|t| -t.sin(), &|t| -t.cos(), 100);
        assert_eq!(c.len(), 2);
        assert!(c[0].x.abs() < 1e-12 && (c[1].x - PI).abs() < 1e-12);
    }
}
