//! 1D quadrature rules and the spherical/radial product rules backing
//! embedded momentum integrals. The adaptive routine doubles as the
//! independent oracle for every closed-form radial integral.

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;

/// Orders and tolerances for embedded integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre order for the radial direction.
    pub radial_order: usize,
    /// Gauss–Legendre order in cos θ; the φ rule uses 2× this many points.
    pub angular_order: usize,
    /// Target relative tolerance for the adaptive 1D routine.
    pub adaptive_tol: f64,
    /// Radius used when an integrand has Gaussian decay but no hard cutoff.
    pub truncation_radius: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_order: 24,
            angular_order: 8,
            adaptive_tol: 1e-10,
            truncation_radius: 40.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.radial_order < 2 || self.angular_order < 2 {
            return Err("quadrature orders must be >= 2".into());
        }
        if !(self.adaptive_tol > 0.0) {
            return Err("adaptive tolerance must be positive".into());
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: Lazy<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> =
        Lazy::new(|| Mutex::new(HashMap::new()));
    if let Some(rule) = CACHE.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    let rule = (nodes, weights);
    CACHE.lock().unwrap().insert(n, rule.clone());
    rule
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed-order Gauss–Legendre on [a, b].
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Adaptive Simpson with absolute/relative stopping; the workhorse oracle.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Adaptive integral over [a, ∞) via the substitution x = a + t/(1−t).
pub fn integrate_adaptive_to_inf(f: &dyn Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    let g = move |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = a + t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        f(x) * jac
    };
    integrate_adaptive(&g, 0.0, 1.0 - 1e-12, tol)
}

/// Points and weights of a product rule on the unit sphere:
/// Gauss–Legendre in cos θ times a uniform (trapezoidal) rule in φ.
/// Weights sum to 4π.
pub fn sphere_rule(angular_order: usize) -> Vec<([f64; 3], f64)> {
    let n_theta = angular_order;
    let n_phi = 2 * angular_order;
    let (nodes, weights) = gauss_legendre(n_theta);
    let mut out = Vec::with_capacity(n_theta * n_phi);
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    for (ct, wt) in nodes.iter().zip(&weights) {
        let st = (1.0 - ct * ct).sqrt();
        for j in 0..n_phi {
            let phi = dphi * (j as f64 + 0.5);
            out.push(([st * phi.cos(), st * phi.sin(), *ct], wt * dphi));
        }
    }
    out
}

/// A radial integration domain, possibly far outside linear f64 range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialDomain {
    /// r from r_lo to r_hi, linear, r_lo ≥ 0.
    Interval { r_lo: f64, r_hi: f64 },
    /// ln r from log_lo to log_hi.
    LogInterval { log_lo: f64, log_hi: f64 },
    Empty,
}

/// Radial nodes for ∫ r² g(r) dr over the domain, returned as
/// (λ = ln r, log-weight) pairs where the weight already includes the r² dr
/// measure. Linear intervals touching 0 use the t = √r substitution so
/// integrands with fractional negative powers stay polynomial-smooth.
pub fn radial_rule(domain: RadialDomain, order: usize) -> Vec<(f64, f64)> {
    match domain {
        RadialDomain::Empty => Vec::new(),
        RadialDomain::LogInterval { log_lo, log_hi } => {
            if !(log_lo < log_hi) {
                return Vec::new();
            }
            // ∫ r² dr = ∫ e^{3λ} dλ
            let (nodes, weights) = gauss_legendre(order);
            let half = 0.5 * (log_hi - log_lo);
            let mid = 0.5 * (log_hi + log_lo);
            nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| {
                    let lam = mid + half * x;
                    (lam, 3.0 * lam + (w * half).ln())
                })
                .collect()
        }
        RadialDomain::Interval { r_lo, r_hi } => {
            if !(r_lo < r_hi) || r_hi <= 0.0 {
                return Vec::new();
            }
            let r_lo = r_lo.max(0.0);
            if r_lo == 0.0 {
                // t = √r: ∫₀^R r² g dr = ∫ 2 t⁵ g(t²) dt
                let (nodes, weights) = gauss_legendre(order);
                let t_hi = r_hi.sqrt();
                let half = 0.5 * t_hi;
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| {
                        let t = half + half * x;
                        let lam = 2.0 * t.ln();
                        (lam, (2.0 * t.powi(5) * w * half).ln())
                    })
                    .collect()
            } else {
                let (nodes, weights) = gauss_legendre(order);
                let half = 0.5 * (r_hi - r_lo);
                let mid = 0.5 * (r_hi + r_lo);
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| {
                        let r = mid + half * x;
                        (r.ln(), 2.0 * r.ln() + (w * half).ln())
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn gl_is_exact_for_polynomials() {
        // order n integrates degree 2n−1 exactly
        let v = integrate_gl(|x| x.powi(7) + 3.0 * x * x, -1.0, 2.0, 8);
        let exact = (2f64.powi(8) - 1.0) / 8.0 + (2f64.powi(3) + 1.0);
        assert!((v - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn adaptive_matches_known_integrals() {
        let v = integrate_adaptive(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        // ∫₁^∞ 4π k⁻³ dk = 2π
        let v = integrate_adaptive_to_inf(&|k: f64| 4.0 * PI / k.powi(3), 1.0, 1e-12);
        assert!(((v - 2.0 * PI) / (2.0 * PI)).abs() < 1e-9);
        // ∫₀^∞ 4π k (k²+1)⁻⁴ dk = 2π/3
        let v = integrate_adaptive_to_inf(&|k: f64| 4.0 * PI * k / (k * k + 1.0).powi(4), 0.0, 1e-12);
        assert!(((v - 2.0 * PI / 3.0) / (2.0 * PI / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn sphere_rule_weights_sum_to_full_solid_angle() {
        let rule = sphere_rule(8);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 4.0 * PI).abs() < 1e-10);
        // degree-2 exactness: ∫ z² dΩ = 4π/3
        let z2: f64 = rule.iter().map(|(d, w)| d[2] * d[2] * w).sum();
        assert!((z2 - 4.0 * PI / 3.0).abs() < 1e-10);
    }

    #[test]
    fn radial_log_rule_handles_huge_shells() {
        // ∫ r⁻³ dk over a shell with ln r in [5e13, 1e14]: nodes must not
        // overflow and ∫ e^{3λ} e^{-3λ} dλ = Δλ (times 4π from the sphere).
        let nodes = radial_rule(
            RadialDomain::LogInterval {
                log_lo: 5e13,
                log_hi: 1e14,
            },
            16,
        );
        let mut sum = 0.0;
        for (lam, lw) in nodes {
            sum += (lw - 3.0 * lam).exp();
        }
        assert!(((sum - 5e13) / 5e13).abs() < 1e-12);
    }

    #[test]
    fn radial_sqrt_rule_integrates_fractional_powers() {
        // ∫₀^1 r² · r^{-1/2} dr = 2/5
        let nodes = radial_rule(RadialDomain::Interval { r_lo: 0.0, r_hi: 1.0 }, 24);
        let mut sum = 0.0;
        for (lam, lw) in nodes {
            sum += (lw - 0.5 * lam).exp();
        }
        assert!((sum - 0.4).abs() < 1e-12);
    }
}
