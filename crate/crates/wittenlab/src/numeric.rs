//! Log-magnitude numbers and small numeric helpers shared by the calculators.

use serde::{Deserialize, Serialize};

/// A real number carried as `sign * exp(log_mag)`.
///
/// Zero is `sign == 0` with `log_mag == -inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    #[serde(with = "ext_f64")]
    pub log_mag: f64,
    pub sign: i8,
}

impl LogValue {
    pub fn zero() -> Self {
        LogValue { log_mag: f64::NEG_INFINITY, sign: 0 }
    }

    pub fn from_log(log_mag: f64) -> Self {
        LogValue { log_mag, sign: 1 }
    }

    pub fn from_value(v: f64) -> Self {
        if v == 0.0 {
            Self::zero()
        } else {
            LogValue { log_mag: v.abs().ln(), sign: if v > 0.0 { 1 } else { -1 } }
        }
    }

    /// Raw value; may underflow to zero.
    pub fn value(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            self.sign as f64 * self.log_mag.exp()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn mul(&self, other: &LogValue) -> LogValue {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        LogValue { log_mag: self.log_mag + other.log_mag, sign: self.sign * other.sign }
    }

    pub fn scale(&self, factor: f64) -> LogValue {
        self.mul(&LogValue::from_value(factor))
    }
}

/// log(sum exp(x_i)) without overflow.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Dot product with eight accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
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

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Serde helpers writing infinities as the strings "inf" / "-inf".
pub mod ext_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected number or \"inf\", got {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logvalue_roundtrip_and_product() {
        let a = LogValue::from_value(-3.0);
        assert_eq!(a.sign, -1);
        assert!((a.value() + 3.0).abs() < 1e-15);
        let tiny = LogValue::from_log(-1000.0);
        assert_eq!(tiny.value(), 0.0);
        let p = tiny.mul(&LogValue::from_log(999.0));
        assert!((p.value() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(LogValue::zero().mul(&a).is_zero());
    }

    #[test]
    fn logsumexp_large_arguments() {
        let v = logsumexp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..13).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
