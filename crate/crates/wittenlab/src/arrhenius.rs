//! Endpoint classification of a bar code in a level window, and the
//! predicted small spectrum of the window Laplacians.

use serde::{Deserialize, Serialize};

use crate::field::{levels_from_barcode, CriticalLevels, LevelWindow};
use crate::persistence::BarCode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArrheniusError {
    #[error("window endpoint {0} is a critical level")]
    CriticalEndpoint(f64),
    #[error("h must be positive, got {0}")]
    NonPositiveH(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub bar_id: usize,
    pub value: f64,
}

/// X, Y, Z for one degree; J is their union.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegreeClasses {
    pub x: Vec<Endpoint>,
    pub y: Vec<Endpoint>,
    pub z: Vec<Endpoint>,
}

impl DegreeClasses {
    pub fn j_count(&self) -> usize {
        self.x.len() + self.y.len() + self.z.len()
    }

    pub fn j(&self) -> Vec<Endpoint> {
        self.x.iter().chain(&self.y).chain(&self.z).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointClassification {
    pub window: LevelWindow,
    /// Indexed by degree.
    pub degrees: Vec<DegreeClasses>,
    pub levels: Option<CriticalLevels>,
    /// (bar id, degree of the bar, a_α, b_α) for bars with both ends inside.
    pub interior_bars: Vec<(usize, usize, f64, f64)>,
}

impl EndpointClassification {
    pub fn degree(&self, p: usize) -> DegreeClasses {
        self.degrees.get(p).cloned().unwrap_or_default()
    }
}

pub fn classify(barcode: &BarCode, window: &LevelWindow) -> Result<EndpointClassification, ArrheniusError> {
    for b in &barcode.bars {
        for e in [b.birth, b.death] {
            if e.is_finite() && (e == window.a || e == window.b) {
                return Err(ArrheniusError::CriticalEndpoint(e));
            }
        }
    }
    let top = barcode.bars.iter().map(|b| if b.is_finite() { b.degree + 1 } else { b.degree }).max().unwrap_or(0);
    let mut degrees = vec![DegreeClasses::default(); top + 1];
    let mut interior_bars = Vec::new();
    for (id, b) in barcode.bars.iter().enumerate() {
        let (x_in, y_in) = (window.contains(b.birth), b.is_finite() && window.contains(b.death));
        let p = b.degree;
        if x_in && y_in {
            degrees[p].x.push(Endpoint { bar_id: id, value: b.birth });
            degrees[p + 1].y.push(Endpoint { bar_id: id, value: b.death });
            interior_bars.push((id, p, b.birth, b.death));
        } else if x_in {
            degrees[p].z.push(Endpoint { bar_id: id, value: b.birth });
        } else if y_in {
            degrees[p + 1].z.push(Endpoint { bar_id: id, value: b.death });
        }
    }
    Ok(EndpointClassification { window: *window, degrees, levels: levels_from_barcode(barcode).ok(), interior_bars })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub bar_id: usize,
    /// 2(b_α − a_α); the eigenvalue scale is e^{−rate/h}.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreePrediction {
    pub degree: usize,
    pub zero_multiplicity: usize,
    /// From X^p: small singular values of the d^p block.
    pub rates_up: Vec<Rate>,
    /// From Y^p: small singular values of the d^{p−1} block.
    pub rates_down: Vec<Rate>,
}

impl DegreePrediction {
    /// Number of o(1) eigenvalues of Δ^p, kernel included.
    pub fn small_count(&self) -> usize {
        self.zero_multiplicity + self.rates_up.len() + self.rates_down.len()
    }

    pub fn all_rates(&self) -> Vec<Rate> {
        self.rates_up.iter().chain(&self.rates_down).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPrediction {
    pub window: LevelWindow,
    pub eta: Option<f64>,
    /// (c_1, c_N)
    pub level_span: Option<(f64, f64)>,
    pub degrees: Vec<DegreePrediction>,
}

impl SpectralPrediction {
    pub fn degree(&self, p: usize) -> DegreePrediction {
        self.degrees.get(p).cloned().unwrap_or(DegreePrediction {
            degree: p,
            zero_multiplicity: 0,
            rates_up: vec![],
            rates_down: vec![],
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prediction serializes")
    }
}

pub fn predict_window_spectrum(cls: &EndpointClassification) -> SpectralPrediction {
    let rate_of = |id: usize| {
        cls.interior_bars.iter().find(|t| t.0 == id).map(|t| 2.0 * (t.3 - t.2)).expect("interior bar")
    };
    let degrees = cls
        .degrees
        .iter()
        .enumerate()
        .map(|(p, d)| DegreePrediction {
            degree: p,
            zero_multiplicity: d.z.len(),
            rates_up: d.x.iter().map(|e| Rate { bar_id: e.bar_id, rate: rate_of(e.bar_id) }).collect(),
            rates_down: d.y.iter().map(|e| Rate { bar_id: e.bar_id, rate: rate_of(e.bar_id) }).collect(),
        })
        .collect();
    let (eta, level_span) = match &cls.levels {
        Some(l) => (l.eta, Some((l.levels[0], *l.levels.last().unwrap()))),
        None => (None, None),
    };
    SpectralPrediction { window: cls.window, eta, level_span, degrees }
}

/// Interval [r(h), R(h)] in log form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughBounds {
    pub degree: usize,
    pub log_lower: f64,
    pub log_upper: f64,
    /// No nonzero small eigenvalue is predicted in this degree.
    pub empty: bool,
}

impl RoughBounds {
    pub fn contains_log(&self, log_lambda: f64) -> bool {
        !self.empty && self.log_lower <= log_lambda && log_lambda <= self.log_upper
    }
}

/// R = e^{−2η/h}, r = e^{−2(c_N − c_1 + η)/h}.
pub fn rough_bounds(pred: &SpectralPrediction, h: f64) -> Result<Vec<RoughBounds>, ArrheniusError> {
    if !(h > 0.0) {
        return Err(ArrheniusError::NonPositiveH(h));
    }
    Ok(pred
        .degrees
        .iter()
        .map(|d| match (pred.eta, pred.level_span) {
            (Some(eta), Some((c1, cn))) if !d.all_rates().is_empty() => RoughBounds {
                degree: d.degree,
                log_lower: -2.0 * (cn - c1 + eta) / h,
                log_upper: -2.0 * eta / h,
                empty: false,
            },
            _ => RoughBounds { degree: d.degree, log_lower: f64::NAN, log_upper: f64::NAN, empty: true },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample, Expr, GridTopology, SampledField};
    use crate::persistence::{barcode, build_filtration, relative_betti, Bar};
    use proptest::prelude::*;

    fn code(bars: &[(usize, f64, f64)]) -> BarCode {
        BarCode::from_bars(bars.iter().map(|&(degree, birth, death)| Bar { degree, birth, death }).collect())
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn cosine_full_window() {
        let bc = code(&[(0, -1.0, INF), (1, 1.0, INF)]);
        let cls = classify(&bc, &LevelWindow::new(-2.0, 2.0).unwrap()).unwrap();
        assert_eq!(cls.degree(0).z, vec![Endpoint { bar_id: 0, value: -1.0 }]);
        assert_eq!(cls.degree(1).z, vec![Endpoint { bar_id: 1, value: 1.0 }]);
        assert!(cls.degrees.iter().all(|d| d.x.is_empty() && d.y.is_empty()));
        let pred = predict_window_spectrum(&cls);
        assert_eq!((pred.degree(0).zero_multiplicity, pred.degree(0).small_count()), (1, 1));
        assert_eq!((pred.degree(1).zero_multiplicity, pred.degree(1).small_count()), (1, 1));
    }

    #[test]
    fn single_finite_bar() {
        let bc = code(&[(0, 0.0, 1.0)]);
        let cls = classify(&bc, &LevelWindow::new(-0.5, 1.5).unwrap()).unwrap();
        assert_eq!(cls.degree(0).x, vec![Endpoint { bar_id: 0, value: 0.0 }]);
        assert_eq!(cls.degree(1).y, vec![Endpoint { bar_id: 0, value: 1.0 }]);
        assert!(cls.degree(0).z.is_empty() && cls.degree(1).z.is_empty());
        let cls = classify(&bc, &LevelWindow::new(0.5, 1.5).unwrap()).unwrap();
        assert_eq!(cls.degree(1).z, vec![Endpoint { bar_id: 0, value: 1.0 }]);
        assert_eq!(cls.degree(0).j_count() + cls.degree(1).j_count(), 1);
        assert!(classify(&bc, &LevelWindow::new(0.0, 2.0).unwrap()).is_err());
    }

    #[test]
    fn one_bar_rate_pairs_degrees() {
        let bc = code(&[(0, 0.1, 0.8)]);
        let pred = predict_window_spectrum(&classify(&bc, &LevelWindow::full()).unwrap());
        assert_eq!(pred.degree(0).rates_up.len(), 1);
        assert_eq!(pred.degree(1).rates_down.len(), 1);
        assert!((pred.degree(0).rates_up[0].rate - 1.4).abs() < 1e-12);
        assert_eq!(pred.degree(0).rates_up, pred.degree(1).rates_down);
    }

    #[test]
    fn four_well_counts() {
        let t = GridTopology::circle(256).unwrap();
        let f = sample(&Expr::new("k4", |x| 0.25 * (4.0 * x[0]).cos()), &t).unwrap();
        let bc = barcode(&build_filtration(&f));
        let pred = predict_window_spectrum(&classify(&bc, &LevelWindow::new(-1.0, 1.0).unwrap()).unwrap());
        let d0 = pred.degree(0);
        assert_eq!(d0.small_count(), 4);
        assert_eq!(d0.zero_multiplicity, 1);
        assert_eq!(d0.rates_up.len(), 3);
        assert!(d0.rates_up.iter().all(|r| (r.rate - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rough_bounds_cases() {
        let pred = predict_window_spectrum(&classify(&code(&[(0, 0.0, INF)]), &LevelWindow::full()).unwrap());
        assert!(rough_bounds(&pred, 0.1).unwrap().iter().all(|b| b.empty));
        assert!(rough_bounds(&pred, 0.0).is_err());
        // One bar of length 1, levels {0, 1, 2} so η = 0.25.
        let bc = code(&[(0, 0.0, INF), (0, 1.0, 2.0), (1, 0.0 + 2.0, INF)]);
        let pred = predict_window_spectrum(&classify(&bc, &LevelWindow::full()).unwrap());
        assert_eq!(pred.eta, Some(0.25));
        let rb = rough_bounds(&pred, 0.1).unwrap();
        assert!((rb[0].log_upper + 5.0).abs() < 1e-12);
        assert!(rb[0].contains_log(-20.0));
    }

    fn random_field(seed: u64, n: usize) -> SampledField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<(f64, f64)> = (1..6).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let t = GridTopology::circle(n).unwrap();
        sample(
            &Expr::new("fourier", move |x| {
                coeffs.iter().enumerate().map(|(k, (a, b))| (a * ((k + 1) as f64 * x[0]).cos() + b * ((k + 1) as f64 * x[0]).sin()) / (k + 1) as f64).sum()
            }),
            &t,
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn prop_z_counts_relative_betti(seed in any::<u64>(), a in -2.0f64..0.5, len in 0.1f64..3.0) {
            let f = random_field(seed, 96);
            let filt = build_filtration(&f);
            let bc = barcode(&filt);
            let w = LevelWindow::new(a, a + len).unwrap();
            prop_assume!(!f.values.iter().any(|&v| v == w.a || v == w.b));
            let cls = classify(&bc, &w).unwrap();
            for p in 0..=1 {
                prop_assert_eq!(cls.degree(p).z.len(), relative_betti(&filt, &w, p).unwrap());
            }
            let pred = predict_window_spectrum(&cls);
            let mut up: Vec<f64> = pred.degree(0).rates_up.iter().map(|r| r.rate).collect();
            let mut down: Vec<f64> = pred.degree(1).rates_down.iter().map(|r| r.rate).collect();
            up.sort_by(f64::total_cmp);
            down.sort_by(f64::total_cmp);
            prop_assert_eq!(up, down);
            for h in [0.3, 0.1, 0.02] {
                let rb = rough_bounds(&pred, h).unwrap();
                for d in &pred.degrees {
                    for r in d.all_rates() {
                        prop_assert!(rb[d.degree].contains_log(-r.rate / h));
                    }
                }
            }
        }

        #[test]
        fn prop_shrinking_within_gap_is_stable(seed in any::<u64>(), t in 0.05f64..0.95) {
            let f = random_field(seed, 64);
            let bc = barcode(&build_filtration(&f));
            let levels = levels_from_barcode(&bc).unwrap().levels;
            prop_assume!(levels.len() >= 3);
            let lo = levels[0] + t * (levels[1] - levels[0]);
            let hi = levels[levels.len() - 2] + t * (levels[levels.len() - 1] - levels[levels.len() - 2]);
            let inner = LevelWindow::new(lo, hi).unwrap();
            let outer = LevelWindow::new(0.5 * (levels[0] + lo), 0.5 * (hi + levels[levels.len() - 1])).unwrap();
            prop_assert_eq!(classify(&bc, &inner).unwrap().degrees, classify(&bc, &outer).unwrap().degrees);
        }

        #[test]
        fn prop_rates_move_at_most_4eps(seed in any::<u64>(), nseed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let f = random_field(seed, 128);
            let bc = barcode(&build_filtration(&f));
            let lmin = bc.finite_bars().map(|(_, b)| b.length()).fold(INF, f64::min);
            prop_assume!(lmin.is_finite() && lmin > 0.05);
            let eps = lmin / 5.0;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(nseed);
            let g = SampledField::new(f.topology.clone(), f.values.iter().map(|v| v + rng.random_range(-eps..eps)).collect()).unwrap();
            let bg = barcode(&build_filtration(&g));
            let (d, m) = crate::bottleneck::bottleneck_distance(&bc, &bg, 0);
            prop_assert!(d <= eps);
            for pair in m.pairs {
                if let (Some(i), Some(j)) = (pair.left, pair.right) {
                    if bc.bars[i].is_finite() {
                        prop_assert!((2.0 * bc.bars[i].length() - 2.0 * bg.bars[j].length()).abs() <= 4.0 * eps);
                    }
                }
            }
        }
    }
}
