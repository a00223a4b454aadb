//! Log-domain scalars: the shell geometry in this crate routinely produces
//! magnitudes like `exp(1e280)`, so products and sums of factor values are
//! carried as `value * exp(log_scale)` and only collapsed to plain floats
//! when the result is known to be representable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// ln(e^a + e^b), stable for widely separated arguments.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln(x² + 1) given λ = ln x, stable for any λ.
///
/// For λ = −∞ (x = 0) this is 0; for large λ it is 2λ + e^{−2λ} + …
pub fn ln_sq_plus_one(log_x: f64) -> f64 {
    if log_x == f64::NEG_INFINITY {
        return 0.0;
    }
    let t = 2.0 * log_x;
    if t > 35.0 {
        // ln(e^t + 1) = t + ln(1 + e^-t); the correction is below f64 eps
        // relative once t > 35 but keep it for the mid range.
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// A complex number stored as `value * exp(log_scale)`.
///
/// `log_scale = -inf` with `value = 0` is the canonical zero. A
/// `log_scale` of `+inf` or NaN marks a non-finite (singular) result and
/// propagates through arithmetic.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogComplex {
    pub log_scale: f64,
    pub value: Complex64,
}

impl LogComplex {
    pub fn zero() -> Self {
        LogComplex {
            log_scale: f64::NEG_INFINITY,
            value: Complex64::new(0.0, 0.0),
        }
    }

    pub fn non_finite() -> Self {
        LogComplex {
            log_scale: f64::INFINITY,
            value: Complex64::new(f64::NAN, f64::NAN),
        }
    }

    pub fn from_complex(v: Complex64) -> Self {
        LogComplex {
            log_scale: 0.0,
            value: v,
        }
        .normalized()
    }

    pub fn from_real(v: f64) -> Self {
        Self::from_complex(Complex64::new(v, 0.0))
    }

    /// A non-negative real with the given natural log magnitude.
    pub fn from_log_magnitude(log_mag: f64) -> Self {
        if log_mag == f64::NEG_INFINITY {
            return Self::zero();
        }
        if !log_mag.is_finite() {
            return Self::non_finite();
        }
        LogComplex {
            log_scale: log_mag,
            value: Complex64::new(1.0, 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value == Complex64::new(0.0, 0.0) || self.log_scale == f64::NEG_INFINITY
    }

    /// True unless the value carries a singular/NaN marker.
    pub fn is_finite(&self) -> bool {
        if self.is_zero() {
            return true;
        }
        self.log_scale < f64::INFINITY
            && !self.log_scale.is_nan()
            && self.value.re.is_finite()
            && self.value.im.is_finite()
    }

    fn normalized(mut self) -> Self {
        if !self.is_finite() {
            return Self::non_finite();
        }
        if self.is_zero() {
            return Self::zero();
        }
        let m = self.value.norm();
        if !(1e-8..=1e8).contains(&m) {
            self.log_scale += m.ln();
            self.value /= m;
        }
        self
    }

    pub fn mul(self, other: LogComplex) -> LogComplex {
        if !self.is_finite() || !other.is_finite() {
            return Self::non_finite();
        }
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        LogComplex {
            log_scale: self.log_scale + other.log_scale,
            value: self.value * other.value,
        }
        .normalized()
    }

    /// Multiply by a plain complex coefficient.
    pub fn mul_complex(self, c: Complex64) -> LogComplex {
        self.mul(Self::from_complex(c))
    }

    /// Multiply by exp(log_mag) (a non-negative real factor in log form).
    pub fn mul_log(self, log_mag: f64) -> LogComplex {
        self.mul(Self::from_log_magnitude(log_mag))
    }

    pub fn add(self, other: LogComplex) -> LogComplex {
        if !self.is_finite() || !other.is_finite() {
            return Self::non_finite();
        }
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.log_scale >= other.log_scale {
            (self, other)
        } else {
            (other, self)
        };
        let shift = (lo.log_scale - hi.log_scale).exp();
        LogComplex {
            log_scale: hi.log_scale,
            value: hi.value + lo.value * shift,
        }
        .normalized()
    }

    pub fn conj(self) -> LogComplex {
        LogComplex {
            log_scale: self.log_scale,
            value: self.value.conj(),
        }
    }

    pub fn neg(self) -> LogComplex {
        LogComplex {
            log_scale: self.log_scale,
            value: -self.value,
        }
    }

    /// |self|² as a log-domain non-negative real.
    pub fn norm_sq(self) -> LogComplex {
        if !self.is_finite() {
            return Self::non_finite();
        }
        if self.is_zero() {
            return Self::zero();
        }
        LogComplex {
            log_scale: 2.0 * self.log_scale,
            value: Complex64::new(self.value.norm_sqr(), 0.0),
        }
        .normalized()
    }

    /// ln |self|, −∞ for zero.
    pub fn log_abs(self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.log_scale + self.value.norm().ln()
        }
    }

    /// Collapse to a plain complex number; None when out of f64 range.
    pub fn to_complex(self) -> Option<Complex64> {
        if self.is_zero() {
            return Some(Complex64::new(0.0, 0.0));
        }
        if !self.is_finite() {
            return None;
        }
        let la = self.log_abs();
        if la > 700.0 {
            return None;
        }
        if la < -740.0 {
            return Some(Complex64::new(0.0, 0.0));
        }
        let s = self.log_scale.exp();
        Some(self.value * s)
    }

    /// Collapse to f64 real part, mapping out-of-range to ±inf and exact
    /// underflow to 0. Intended for display paths.
    pub fn to_f64_lossy(self) -> f64 {
        match self.to_complex() {
            Some(c) => c.re,
            None => {
                if self.log_abs() > 0.0 {
                    f64::INFINITY * self.value.re.signum()
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_add_exp_matches_direct() {
        let a: f64 = 1.3;
        let b: f64 = -0.7;
        let direct = (a.exp() + b.exp()).ln();
        assert!((ln_add_exp(a, b) - direct).abs() < 1e-14);
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        // widely separated: result is the max
        assert_eq!(ln_add_exp(1e300, -1e300), 1e300);
    }

    #[test]
    fn ln_sq_plus_one_ranges() {
        assert_eq!(ln_sq_plus_one(f64::NEG_INFINITY), 0.0);
        let l = ln_sq_plus_one(0.0); // x = 1
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let big = ln_sq_plus_one(1e200);
        assert_eq!(big, 2e200);
    }

    #[test]
    fn add_and_mul_track_scale() {
        let a = LogComplex::from_log_magnitude(1000.0);
        let b = LogComplex::from_log_magnitude(1000.0);
        let s = a.add(b);
        assert!((s.log_abs() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let p = a.mul(b);
        assert!((p.log_abs() - 2000.0).abs() < 1e-9);
        assert!(p.to_complex().is_none());
    }

    #[test]
    fn exact_cancellation_is_zero() {
        let a = LogComplex::from_real(3.5);
        let s = a.add(a.neg());
        assert!(s.is_zero());
        assert_eq!(s.to_complex().unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn non_finite_propagates() {
        let bad = LogComplex::non_finite();
        assert!(!bad.is_finite());
        assert!(!bad.add(LogComplex::from_real(1.0)).is_finite());
        assert!(!bad.mul(LogComplex::zero()).is_finite());
    }

    #[test]
    fn tiny_values_survive_in_log_form() {
        let t = LogComplex::from_log_magnitude(-5e250);
        assert!(t.is_finite());
        assert!(!t.is_zero());
        assert_eq!(t.to_complex().unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(t.log_abs(), -5e250);
    }
}
