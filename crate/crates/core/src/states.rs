//! The expression algebra for sector functions: factors, terms, embedded
//! integrals, Fock states, the permutation symmetrizer, and the compactly
//! supported base states.
//!
//! Everything evaluates through [`LogComplex`], so factor products that
//! individually overflow or underflow f64 stay exact in log form.

use crate::geometry::{AffineCoordMap, Coord, ConfigPoint, LogRadialVector, MomentumVector, Slot};
use crate::logdomain::LogComplex;
use crate::quadrature::{radial_rule, sphere_rule, QuadratureSpec, RadialDomain};
use crate::sets::{p_n, SetPredicate};
use itertools::Itertools;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatesError {
    #[error("capability limit: {0}")]
    Capability(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One multiplicative building block of a term. All factors are
/// non-negative reals; complex structure lives in the term coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    /// exp(−|arg|² / 2σ²) on the mapped argument.
    IsotropicGaussian { width: f64, map: AffineCoordMap },
    /// |arg|^a; negative exponents are singular at the origin and flagged
    /// as non-finite when evaluated exactly there.
    RadialPower { exponent: f64, map: AffineCoordMap },
    /// Indicator of a set over the selected coordinates; `complement`
    /// inverts it.
    SetIndicator {
        predicate: SetPredicate,
        coords: Vec<Slot>,
        complement: bool,
    },
    /// Indicator of log_lo < ln|arg| ≤ log_hi; log_lo = −∞ keeps the
    /// origin (a plain ball).
    BallCutoff {
        log_lo: f64,
        log_hi: f64,
        map: AffineCoordMap,
    },
    /// 1 / p_n over the selected coordinates (n = coords.len() + 1).
    ScalarReciprocal { coords: Vec<Slot> },
}

impl Factor {
    pub fn gaussian(width: f64, slot: Slot) -> Self {
        Factor::IsotropicGaussian {
            width,
            map: AffineCoordMap::of(slot),
        }
    }

    pub fn radial_power(exponent: f64, slot: Slot) -> Self {
        Factor::RadialPower {
            exponent,
            map: AffineCoordMap::of(slot),
        }
    }

    pub fn ball(log_radius: f64, slot: Slot) -> Self {
        Factor::BallCutoff {
            log_lo: f64::NEG_INFINITY,
            log_hi: log_radius,
            map: AffineCoordMap::of(slot),
        }
    }

    pub fn involves(&self, slot: Slot) -> bool {
        match self {
            Factor::IsotropicGaussian { map, .. }
            | Factor::RadialPower { map, .. }
            | Factor::BallCutoff { map, .. } => map.involves(slot),
            Factor::SetIndicator { coords, .. } | Factor::ScalarReciprocal { coords } => {
                coords.contains(&slot)
            }
        }
    }

    /// Natural log of the factor value: −∞ encodes zero, +∞ a singular
    /// evaluation.
    pub fn eval_log(&self, point: &ConfigPoint, inner: Option<&Coord>) -> f64 {
        match self {
            Factor::IsotropicGaussian { width, map } => {
                let arg = map.eval(point, inner);
                let lam = arg.log_mag();
                if lam == f64::NEG_INFINITY {
                    return 0.0;
                }
                let sq = (2.0 * lam).exp();
                -sq / (2.0 * width * width)
            }
            Factor::RadialPower { exponent, map } => {
                let lam = map.eval(point, inner).log_mag();
                if lam == f64::NEG_INFINITY {
                    if *exponent < 0.0 {
                        return f64::INFINITY;
                    }
                    if *exponent == 0.0 {
                        return 0.0;
                    }
                    return f64::NEG_INFINITY;
                }
                exponent * lam
            }
            Factor::SetIndicator {
                predicate,
                coords,
                complement,
            } => {
                let vals: Vec<Coord> = coords
                    .iter()
                    .map(|s| match s {
                        Slot::Inner => *inner.expect("Inner coordinate missing"),
                        other => *point.coord(*other),
                    })
                    .collect();
                let inside = predicate.contains(&vals);
                if inside != *complement {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Factor::BallCutoff {
                log_lo,
                log_hi,
                map,
            } => {
                let lam = map.eval(point, inner).log_mag();
                let above = *log_lo == f64::NEG_INFINITY || lam > *log_lo;
                if above && lam <= *log_hi {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Factor::ScalarReciprocal { coords } => {
                let vals: Vec<Coord> = coords
                    .iter()
                    .map(|s| match s {
                        Slot::Inner => *inner.expect("Inner coordinate missing"),
                        other => *point.coord(*other),
                    })
                    .collect();
                -crate::sets::p_n_log(coords.len() + 1, &vals)
            }
        }
    }

    fn remapped(&self, remap: &SlotRemap) -> Factor {
        match self {
            Factor::IsotropicGaussian { width, map } => Factor::IsotropicGaussian {
                width: *width,
                map: remap.apply_to_map(map),
            },
            Factor::RadialPower { exponent, map } => Factor::RadialPower {
                exponent: *exponent,
                map: remap.apply_to_map(map),
            },
            Factor::BallCutoff {
                log_lo,
                log_hi,
                map,
            } => Factor::BallCutoff {
                log_lo: *log_lo,
                log_hi: *log_hi,
                map: remap.apply_to_map(map),
            },
            Factor::SetIndicator {
                predicate,
                coords,
                complement,
            } => Factor::SetIndicator {
                predicate: predicate.clone(),
                coords: coords.iter().map(|s| remap.apply_to_slot(*s)).collect(),
                complement: *complement,
            },
            Factor::ScalarReciprocal { coords } => Factor::ScalarReciprocal {
                coords: coords.iter().map(|s| remap.apply_to_slot(*s)).collect(),
            },
        }
    }
}

/// Photon slots are renamed; the fermion argument may become an affine
/// combination (operator shifts like p ± k_i). Indicator coordinate lists
/// only ever hold photon slots, so the fermion substitution never reaches
/// them.
#[derive(Clone, Debug)]
pub struct SlotRemap {
    pub photon: Vec<Slot>,
    pub fermion: AffineCoordMap,
}

impl SlotRemap {
    pub fn identity(n: usize) -> Self {
        SlotRemap {
            photon: (0..n).map(Slot::Photon).collect(),
            fermion: AffineCoordMap::of(Slot::Fermion),
        }
    }

    pub fn apply_to_map(&self, m: &AffineCoordMap) -> AffineCoordMap {
        m.substitute(|s| match s {
            Slot::Photon(i) => AffineCoordMap::of(self.photon[i]),
            Slot::Fermion => self.fermion.clone(),
            Slot::Inner => AffineCoordMap::of(Slot::Inner),
        })
    }

    pub fn apply_to_slot(&self, s: Slot) -> Slot {
        match s {
            Slot::Photon(i) => self.photon[i],
            Slot::Inner => Slot::Inner,
            Slot::Fermion => panic!("fermion slot in a coordinate list"),
        }
    }
}

/// coefficient · ∏ factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Complex64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn real(coeff: f64, factors: Vec<Factor>) -> Self {
        Term {
            coeff: Complex64::new(coeff, 0.0),
            factors,
        }
    }

    pub fn evaluate(&self, point: &ConfigPoint, inner: Option<&Coord>) -> LogComplex {
        let mut log_sum = 0.0;
        for f in &self.factors {
            log_sum += f.eval_log(point, inner);
            if log_sum == f64::NEG_INFINITY {
                return LogComplex::zero();
            }
        }
        LogComplex::from_log_magnitude(log_sum).mul_complex(self.coeff)
    }

    pub fn remapped(&self, remap: &SlotRemap) -> Term {
        Term {
            coeff: self.coeff,
            factors: self.factors.iter().map(|f| f.remapped(remap)).collect(),
        }
    }

    pub fn scaled(&self, c: Complex64) -> Term {
        Term {
            coeff: self.coeff * c,
            factors: self.factors.clone(),
        }
    }
}

/// An embedded 3D integral: coeff · ∫ ∏ factors(..., k) dk, where the
/// factors reference the integration variable through `Slot::Inner`.
/// The quadrature spec is attached at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratedTerm {
    pub coeff: Complex64,
    pub factors: Vec<Factor>,
    pub quad: QuadratureSpec,
    /// Set when no indicator or Gaussian bounds the inner variable and the
    /// configured truncation radius was used instead.
    pub truncated: bool,
}

enum InnerDomain {
    Zero,
    Domain(RadialDomain),
}

impl IntegratedTerm {
    /// Hard radial bounds on the inner variable implied by the factors.
    /// Gaussian-derived bounds are exact in f64 (the tail is below the
    /// smallest subnormal); shells and cutoffs are exact by definition.
    fn radial_domain(&self, point: &ConfigPoint) -> InnerDomain {
        let mut lam_lo = f64::NEG_INFINITY;
        let mut lam_hi = f64::INFINITY;
        let mut bounded = false;
        for f in &self.factors {
            if !f.involves(Slot::Inner) {
                continue;
            }
            match f {
                Factor::BallCutoff {
                    log_lo,
                    log_hi,
                    map,
                } if map.is_pure(Slot::Inner) => {
                    lam_lo = lam_lo.max(*log_lo);
                    lam_hi = lam_hi.min(*log_hi);
                    bounded = true;
                }
                Factor::SetIndicator {
                    predicate: SetPredicate::EShell { n },
                    coords,
                    complement: false,
                } => {
                    let inner_pos = coords.iter().position(|s| *s == Slot::Inner).unwrap();
                    if inner_pos == n - 1 {
                        // the inner variable carries the shell condition
                        let prefix: Vec<Coord> =
                            coords[..n - 1].iter().map(|s| *point.coord(*s)).collect();
                        let scale = p_n(*n, &prefix);
                        if scale.overflowed() {
                            return InnerDomain::Zero;
                        }
                        lam_lo = lam_lo.max(scale.linear / 2.0);
                        lam_hi = lam_hi.min(scale.linear);
                        bounded = true;
                    } else {
                        // solve  p_n ∈ (λ_last, 2 λ_last)  for |inner|
                        let lam_last = point.coord(coords[n - 1]).log_mag();
                        if !(lam_last > 0.0) {
                            return InnerDomain::Zero;
                        }
                        let mut log_rest = 0.0;
                        for (i, s) in coords[..n - 1].iter().enumerate() {
                            if i != inner_pos {
                                let c = point.coord(*s);
                                log_rest +=
                                    crate::logdomain::ln_sq_plus_one(c.log_mag());
                            }
                        }
                        let ln_b_hi = (2.0 * lam_last).ln() - *n as f64 - 2.0 * log_rest;
                        let ln_b_lo = lam_last.ln() - *n as f64 - 2.0 * log_rest;
                        let hi = half_log_to_lambda(ln_b_hi);
                        let Some(hi) = hi else {
                            return InnerDomain::Zero;
                        };
                        lam_hi = lam_hi.min(hi);
                        if let Some(lo) = half_log_to_lambda(ln_b_lo) {
                            lam_lo = lam_lo.max(lo);
                        }
                        bounded = true;
                    }
                }
                Factor::IsotropicGaussian { width, map } => {
                    let c = map.coeff(Slot::Inner);
                    if c == 0 {
                        continue;
                    }
                    // arg = c·inner + v0; the factor underflows to exact 0
                    // once |arg| > 38.5 σ
                    let stripped = AffineCoordMap {
                        terms: map
                            .terms
                            .iter()
                            .filter(|(s, _)| *s != Slot::Inner)
                            .cloned()
                            .collect(),
                        shift: map.shift,
                    };
                    let v0 = stripped.eval(point, None);
                    let t = 38.5 * width;
                    let lam_v0 = v0.log_mag();
                    if lam_v0 > t.ln() + 36.0 {
                        // center so far out that the support window is below
                        // log-radial resolution; the factor is 0 everywhere
                        return InnerDomain::Zero;
                    }
                    let v0n = if lam_v0 == f64::NEG_INFINITY {
                        0.0
                    } else {
                        lam_v0.exp()
                    };
                    lam_hi = lam_hi.min((v0n + t).ln());
                    if v0n - t > 0.0 {
                        lam_lo = lam_lo.max((v0n - t).ln());
                    }
                    bounded = true;
                }
                _ => {}
            }
        }
        if !bounded || lam_hi == f64::INFINITY {
            lam_hi = self.quad.truncation_radius.ln();
        }
        if !(lam_lo < lam_hi) {
            return InnerDomain::Zero;
        }
        let domain = if lam_hi > 300.0 {
            RadialDomain::LogInterval {
                log_lo: lam_lo,
                log_hi: lam_hi,
            }
        } else {
            RadialDomain::Interval {
                r_lo: if lam_lo == f64::NEG_INFINITY {
                    0.0
                } else {
                    lam_lo.exp()
                },
                r_hi: lam_hi.exp(),
            }
        };
        InnerDomain::Domain(domain)
    }

    pub fn evaluate(&self, point: &ConfigPoint) -> LogComplex {
        // outer (inner-free) part first: an outer indicator can kill the
        // whole term without touching the quadrature
        let mut outer_log = 0.0;
        for f in &self.factors {
            if !f.involves(Slot::Inner) {
                outer_log += f.eval_log(point, None);
                if outer_log == f64::NEG_INFINITY {
                    return LogComplex::zero();
                }
            }
        }
        let domain = match self.radial_domain(point) {
            InnerDomain::Zero => return LogComplex::zero(),
            InnerDomain::Domain(d) => d,
        };
        let radial = radial_rule(domain, self.quad.radial_order);
        if radial.is_empty() {
            return LogComplex::zero();
        }
        let sphere = sphere_rule(self.quad.angular_order);
        let inner_factors: Vec<&Factor> = self
            .factors
            .iter()
            .filter(|f| f.involves(Slot::Inner))
            .collect();
        let mut acc = LogComplex::zero();
        for (lam, lwr) in &radial {
            for (dir, ws) in &sphere {
                let inner = Coord::LogRadial(LogRadialVector::new(*dir, *lam));
                let mut lg = lwr + ws.ln();
                for f in &inner_factors {
                    lg += f.eval_log(point, Some(&inner));
                    if lg == f64::NEG_INFINITY {
                        break;
                    }
                }
                if lg > f64::NEG_INFINITY {
                    acc = acc.add(LogComplex::from_log_magnitude(lg));
                }
            }
        }
        acc.mul_complex(self.coeff).mul_log(outer_log)
    }

    pub fn remapped(&self, remap: &SlotRemap) -> IntegratedTerm {
        IntegratedTerm {
            coeff: self.coeff,
            factors: self.factors.iter().map(|f| f.remapped(remap)).collect(),
            quad: self.quad,
            truncated: self.truncated,
        }
    }
}

/// λ bound from ln B where (r²+1) = e^{lnB/2}: λ = ½ ln(e^{lnB/2} − 1).
/// None when the bound forces r² ≤ 0.
fn half_log_to_lambda(ln_b: f64) -> Option<f64> {
    let h = 0.5 * ln_b;
    if h <= 0.0 {
        return None;
    }
    if h > 35.0 {
        Some(0.5 * h)
    } else {
        let r2 = h.exp_m1();
        if r2 <= 0.0 {
            None
        } else {
            Some(0.5 * r2.ln())
        }
    }
}

/// An evaluable function on one Fock sector: a finite sum of terms and
/// embedded integrals over ℝ^{3n+3}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorFunction {
    pub sector: usize,
    pub terms: Vec<Term>,
    pub integrated_terms: Vec<IntegratedTerm>,
}

impl SectorFunction {
    pub fn zero(sector: usize) -> Self {
        SectorFunction {
            sector,
            terms: Vec::new(),
            integrated_terms: Vec::new(),
        }
    }

    pub fn from_terms(sector: usize, terms: Vec<Term>) -> Self {
        SectorFunction {
            sector,
            terms,
            integrated_terms: Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.integrated_terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len() + self.integrated_terms.len()
    }

    pub fn evaluate(&self, point: &ConfigPoint) -> LogComplex {
        debug_assert_eq!(point.sector(), self.sector);
        let mut acc = LogComplex::zero();
        for t in &self.terms {
            acc = acc.add(t.evaluate(point, None));
        }
        for t in &self.integrated_terms {
            acc = acc.add(t.evaluate(point));
        }
        acc
    }

    /// Plain complex value; non-finite (singular) evaluations come back as
    /// NaN components so callers can flag them.
    pub fn evaluate_c64(&self, point: &ConfigPoint) -> Complex64 {
        let v = self.evaluate(point);
        if !v.is_finite() {
            return Complex64::new(f64::NAN, f64::NAN);
        }
        v.to_complex()
            .unwrap_or(Complex64::new(f64::INFINITY, f64::INFINITY))
    }

    /// Append factors to every term (pointwise multiplication by their
    /// product).
    pub fn multiplied_by(&self, extra: &[Factor]) -> SectorFunction {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut f = t.factors.clone();
                f.extend_from_slice(extra);
                Term {
                    coeff: t.coeff,
                    factors: f,
                }
            })
            .collect();
        let integrated_terms = self
            .integrated_terms
            .iter()
            .map(|t| {
                let mut f = t.factors.clone();
                f.extend_from_slice(extra);
                IntegratedTerm {
                    coeff: t.coeff,
                    factors: f,
                    quad: t.quad,
                    truncated: t.truncated,
                }
            })
            .collect();
        SectorFunction {
            sector: self.sector,
            terms,
            integrated_terms,
        }
    }

    pub fn scaled(&self, c: Complex64) -> SectorFunction {
        SectorFunction {
            sector: self.sector,
            terms: self.terms.iter().map(|t| t.scaled(c)).collect(),
            integrated_terms: self
                .integrated_terms
                .iter()
                .map(|t| IntegratedTerm {
                    coeff: t.coeff * c,
                    factors: t.factors.clone(),
                    quad: t.quad,
                    truncated: t.truncated,
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &SectorFunction) -> SectorFunction {
        debug_assert_eq!(self.sector, other.sector);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let mut integrated_terms = self.integrated_terms.clone();
        integrated_terms.extend(other.integrated_terms.iter().cloned());
        SectorFunction {
            sector: self.sector,
            terms,
            integrated_terms,
        }
    }

    /// True if any embedded integral fell back to the configured
    /// truncation radius.
    pub fn has_truncation_warning(&self) -> bool {
        self.integrated_terms.iter().any(|t| t.truncated)
    }
}

/// Average over all photon-coordinate permutations: the bosonic
/// symmetrizer. Factorial blowup is capped at sector 6.
pub fn symmetrize(f: &SectorFunction) -> Result<SectorFunction, StatesError> {
    let n = f.sector;
    if n > 6 {
        return Err(StatesError::Capability(format!(
            "symmetrize is capped at sector 6 (n! terms); got sector {n}"
        )));
    }
    if n <= 1 {
        return Ok(f.clone());
    }
    let scale = {
        let mut fact = 1.0;
        for k in 2..=n {
            fact *= k as f64;
        }
        Complex64::new(1.0 / fact, 0.0)
    };
    let mut out = SectorFunction::zero(n);
    for perm in (0..n).permutations(n) {
        let remap = SlotRemap {
            photon: perm.iter().map(|j| Slot::Photon(*j)).collect(),
            fermion: AffineCoordMap::of(Slot::Fermion),
        };
        for t in &f.terms {
            out.terms.push(t.remapped(&remap).scaled(scale));
        }
        for t in &f.integrated_terms {
            let mut r = t.remapped(&remap);
            r.coeff *= scale;
            out.integrated_terms.push(r);
        }
    }
    Ok(out)
}

/// The compactly supported base state: a product of isotropic Gaussians on
/// every coordinate times hard ball cutoffs of radius R. Square-integrable
/// by construction; smoothness of the cutoff is not needed numerically.
pub fn make_base_chi(
    m: usize,
    support_radius: f64,
    width: f64,
) -> Result<SectorFunction, StatesError> {
    if !(support_radius > 0.0) {
        return Err(StatesError::InvalidParameter(
            "support radius must be positive".into(),
        ));
    }
    if !(width > 0.0) {
        return Err(StatesError::InvalidParameter(
            "gaussian width must be positive".into(),
        ));
    }
    let log_r = support_radius.ln();
    let mut factors = Vec::with_capacity(2 * (m + 1));
    for i in 0..m {
        factors.push(Factor::gaussian(width, Slot::Photon(i)));
        factors.push(Factor::ball(log_r, Slot::Photon(i)));
    }
    factors.push(Factor::gaussian(width, Slot::Fermion));
    factors.push(Factor::ball(log_r, Slot::Fermion));
    Ok(SectorFunction::from_terms(m, vec![Term::real(1.0, factors)]))
}

/// A Fock state: finitely many populated sectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FockState {
    pub sectors: BTreeMap<usize, SectorFunction>,
}

impl FockState {
    pub fn zero() -> Self {
        FockState::default()
    }

    pub fn from_sector(f: SectorFunction) -> Self {
        let mut s = FockState::zero();
        s.insert(f);
        s
    }

    pub fn insert(&mut self, f: SectorFunction) {
        if !f.is_zero() {
            match self.sectors.get_mut(&f.sector) {
                Some(existing) => *existing = existing.plus(&f),
                None => {
                    self.sectors.insert(f.sector, f);
                }
            }
        }
    }

    pub fn sector(&self, n: usize) -> Option<&SectorFunction> {
        self.sectors.get(&n)
    }

    pub fn populated(&self) -> impl Iterator<Item = (usize, &SectorFunction)> {
        self.sectors.iter().map(|(n, f)| (*n, f))
    }

    pub fn is_zero(&self) -> bool {
        self.sectors.is_empty()
    }
}
