//! Rate and prefactor fits over an h-sweep.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Match, SpectraError, SpectralReport};
use crate::arrhenius::SpectralPrediction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub h: f64,
    pub degree: usize,
    pub predicted: usize,
    pub observed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarFit {
    pub bar_id: usize,
    pub degree: usize,
    /// 2ℓ
    pub predicted_rate: f64,
    pub h: Vec<f64>,
    pub lambda_log: Vec<f64>,
    /// −h log λ ≈ intercept + slope·h
    pub affine_intercept: f64,
    pub affine_slope: f64,
    /// log λ ≈ log C + ν log h − R/h
    pub rate: f64,
    pub power: f64,
    pub log_prefactor: f64,
    /// Slope of log(λ e^{2ℓ/h}) against log h.
    pub prefactor_power: f64,
    pub prefactor_log_c: f64,
}

impl BarFit {
    pub fn rate_rel_error(&self) -> f64 {
        (self.rate - self.predicted_rate).abs() / self.predicted_rate
    }

    pub fn affine_rel_error(&self) -> f64 {
        (self.affine_intercept - self.predicted_rate).abs() / self.predicted_rate
    }

    /// λ e^{2ℓ/h} at each h.
    pub fn prefactors(&self) -> Vec<f64> {
        self.h.iter().zip(&self.lambda_log).map(|(h, l)| (l + self.predicted_rate / h).exp()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub h: Vec<f64>,
    pub bars: Vec<BarFit>,
}

impl FitSummary {
    pub fn bar(&self, id: usize) -> Option<&BarFit> {
        self.bars.iter().find(|b| b.bar_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }
}

/// Least squares with columns `cols`; returns the coefficients.
pub fn lstsq(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(y.len(), cols.len(), |r, c| cols[c][r]);
    let b = DVector::from_column_slice(y);
    // Column equilibration keeps 1/h and log h on comparable scales.
    let scale: Vec<f64> = (0..cols.len()).map(|c| a.column(c).norm().max(1e-300)).collect();
    let a = DMatrix::from_fn(y.len(), cols.len(), |r, c| a[(r, c)] / scale[c]);
    let qr = a.qr();
    let x = qr.r().solve_upper_triangular(&(qr.q().transpose() * b)).expect("full column rank");
    x.iter().zip(&scale).map(|(v, s)| v / s).collect()
}

/// Pair small singular values with bars across the sweep and fit each bar.
pub fn match_and_fit(reports: &[SpectralReport], pred: &SpectralPrediction) -> Result<FitSummary, SpectraError> {
    if reports.len() < 3 {
        return Err(SpectraError::TooFewH(reports.len()));
    }
    let hs: Vec<f64> = reports.iter().map(|r| r.h).collect();
    for (i, h) in hs.iter().enumerate() {
        if !(*h > 0.0) || hs[..i].contains(h) {
            return Err(SpectraError::BadH);
        }
    }
    let mut mismatches = Vec::new();
    for r in reports {
        for b in &r.blocks {
            if b.small_count != b.predicted_count {
                mismatches.push(CountMismatch { h: r.h, degree: b.degree, predicted: b.predicted_count, observed: b.small_count });
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(SpectraError::CountMismatch(mismatches));
    }
    let mut series: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in reports {
        for b in &r.blocks {
            for e in &b.entries {
                if let Match::Bar(id) = e.matched {
                    series.entry((b.degree, id)).or_default().push((r.h, e.lambda_log));
                }
            }
        }
    }
    let mut bars = Vec::new();
    for d in &pred.degrees {
        for r in &d.rates_up {
            if let Some(pts) = series.get(&(d.degree, r.bar_id)) {
                bars.push(fit_bar(r.bar_id, d.degree, r.rate, pts));
            }
        }
    }
    Ok(FitSummary { h: hs, bars })
}

/// Fit one bar from (h, log λ) samples.
pub fn fit_bar(bar_id: usize, degree: usize, predicted_rate: f64, pts: &[(f64, f64)]) -> BarFit {
    let h: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ll: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let ones = vec![1.0; h.len()];
    let y_aff: Vec<f64> = h.iter().zip(&ll).map(|(h, l)| -h * l).collect();
    let aff = lstsq(&[ones.clone(), h.clone()], &y_aff);
    let inv_h: Vec<f64> = h.iter().map(|h| -1.0 / h).collect();
    let log_h: Vec<f64> = h.iter().map(|h| h.ln()).collect();
    let joint = lstsq(&[ones.clone(), log_h.clone(), inv_h], &ll);
    let y_pre: Vec<f64> = h.iter().zip(&ll).map(|(h, l)| l + predicted_rate / h).collect();
    let pre = lstsq(&[ones, log_h], &y_pre);
    BarFit {
        bar_id,
        degree,
        predicted_rate,
        h,
        lambda_log: ll,
        affine_intercept: aff[0],
        affine_slope: aff[1],
        rate: joint[2],
        power: joint[1],
        log_prefactor: joint[0],
        prefactor_power: pre[1],
        prefactor_log_c: pre[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(f: impl Fn(f64) -> f64, hs: &[f64]) -> Vec<(f64, f64)> {
        hs.iter().map(|&h| (h, f(h))).collect()
    }

    #[test]
    fn exact_arrhenius_model() {
        let pts = synth(|h| (0.3f64).ln() + h.ln() - 2.0 / h, &[0.2, 0.1, 0.05]);
        let fit = fit_bar(0, 0, 2.0, &pts);
        assert!((fit.rate - 2.0).abs() < 1e-9, "{}", fit.rate);
        assert!((fit.power - 1.0).abs() < 1e-9);
        assert!((fit.prefactor_power - 1.0).abs() < 1e-9);
        assert!((fit.log_prefactor - 0.3f64.ln()).abs() < 1e-9);
        // The affine intercept carries the h log h bias.
        assert!((fit.affine_intercept - 2.0).abs() < 0.2);
    }

    #[test]
    fn quartic_power() {
        let pts = synth(|h| 1.25 * h.ln() - 2.0 / h, &[0.2, 0.15, 0.1, 0.07, 0.05]);
        let fit = fit_bar(3, 1, 2.0, &pts);
        assert!((fit.prefactor_power - 1.25).abs() < 1e-9);
        assert!((fit.rate - 2.0).abs() < 1e-9);
    }
}
