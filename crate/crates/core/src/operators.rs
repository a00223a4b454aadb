//! Operator actions on sector functions and Fock states: the raising and
//! lowering parts of the interaction operator, their term splittings and
//! cutoff variants, the region projectors, the free-energy multiplier, and
//! the recursive construction of the domain states.

use crate::geometry::{rng_for, AffineCoordMap, Slot};
use crate::quadrature::QuadratureSpec;
use crate::sets::{sample_f_n, SetPredicate};
use crate::states::{
    make_base_chi, Factor, FockState, IntegratedTerm, SectorFunction, SlotRemap, StatesError, Term,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const TERM_BUDGET: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("lowering an already-integrated function would nest embedded integrals")]
    NestedIntegral,
    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),
    #[error("invalid recursion spec: {0}")]
    InvalidRecursion(String),
    #[error("term budget exceeded: {0} terms (cap {TERM_BUDGET})")]
    TermBudget(usize),
    #[error(transparent)]
    States(#[from] StatesError),
}

/// Raising part: maps a sector n−1 function to sector n,
/// (1/√n) Σ_i |k_i|^{−1/2} f(k₁,…,k̂_i,…,k_n; p + k_i).
/// Algebra-closed: term count multiplies by n.
pub fn apply_a_plus(f: &SectorFunction) -> SectorFunction {
    let n = f.sector + 1;
    let scale = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut out = SectorFunction::zero(n);
    for i in 0..n {
        let remap = SlotRemap {
            photon: (0..f.sector)
                .map(|j| Slot::Photon(if j < i { j } else { j + 1 }))
                .collect(),
            fermion: AffineCoordMap::from_terms(vec![(Slot::Fermion, 1), (Slot::Photon(i), 1)]),
        };
        let weight = Factor::radial_power(-0.5, Slot::Photon(i));
        for t in &f.terms {
            let mut nt = t.remapped(&remap).scaled(scale);
            nt.factors.push(weight.clone());
            out.terms.push(nt);
        }
        for t in &f.integrated_terms {
            let mut nt = t.remapped(&remap);
            nt.coeff *= scale;
            nt.factors.push(weight.clone());
            out.integrated_terms.push(nt);
        }
    }
    out
}

/// One term of the lowering part: integrates coordinate `l` (0-indexed)
/// of a sector n function,
/// (1/√n) ∫ |k_l|^{−1/2} f(k₁,…,k_n; p − k_l) dk_l.
///
/// Terms whose shell indicator and 1/p_n factor pair off against a total
/// |k_l|^{−3} weight collapse to the closed shell integral 2π p_n, which
/// cancels the reciprocal symbolically; everything else becomes an
/// embedded quadrature with the spec attached.
pub fn apply_a_minus_term(
    f: &SectorFunction,
    l: usize,
    quad: &QuadratureSpec,
) -> Result<SectorFunction, OperatorError> {
    apply_a_minus_term_impl(f, l, quad, true)
}

pub(crate) fn apply_a_minus_term_impl(
    f: &SectorFunction,
    l: usize,
    quad: &QuadratureSpec,
    fold: bool,
) -> Result<SectorFunction, OperatorError> {
    let n = f.sector;
    assert!(l < n, "lowering slot out of range");
    if !f.integrated_terms.is_empty() {
        return Err(OperatorError::NestedIntegral);
    }
    let scale = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let remap = SlotRemap {
        photon: (0..n)
            .map(|j| {
                if j < l {
                    Slot::Photon(j)
                } else if j == l {
                    Slot::Inner
                } else {
                    Slot::Photon(j - 1)
                }
            })
            .collect(),
        fermion: AffineCoordMap::from_terms(vec![(Slot::Fermion, 1), (Slot::Inner, -1)]),
    };
    let mut out = SectorFunction::zero(n - 1);
    for t in &f.terms {
        let mut nt = t.remapped(&remap).scaled(scale);
        nt.factors.push(Factor::radial_power(-0.5, Slot::Inner));
        if fold {
            if let Some(folded) = try_fold_closed_shell(&nt) {
                out.terms.push(folded);
                continue;
            }
        }
        let truncated = !has_inner_bound(&nt.factors);
        out.integrated_terms.push(IntegratedTerm {
            coeff: nt.coeff,
            factors: nt.factors,
            quad: *quad,
            truncated,
        });
    }
    Ok(out)
}

/// Detects the closed-form shell pattern: an E_n indicator whose shell
/// coordinate is the integration variable, pure |k|-powers summing to −3,
/// the matching 1/p_n factor, and no other dependence on the inner
/// variable. The integral is then exactly 2π p_n and the reciprocal
/// cancels, leaving coefficient × 2π.
fn try_fold_closed_shell(t: &Term) -> Option<Term> {
    let mut power_sum = 0.0;
    let mut shell: Option<(usize, &Vec<Slot>)> = None;
    for (idx, f) in t.factors.iter().enumerate() {
        if !f.involves(Slot::Inner) {
            continue;
        }
        match f {
            Factor::RadialPower { exponent, map } if map.is_pure(Slot::Inner) => {
                power_sum += exponent;
            }
            Factor::SetIndicator {
                predicate: SetPredicate::EShell { n },
                coords,
                complement: false,
            } if coords.last() == Some(&Slot::Inner)
                && !coords[..n - 1].contains(&Slot::Inner) =>
            {
                if shell.is_some() {
                    return None;
                }
                shell = Some((idx, coords));
            }
            _ => return None,
        }
    }
    let (shell_idx, shell_coords) = shell?;
    if power_sum != -3.0 {
        return None;
    }
    let mut prefix: Vec<Slot> = shell_coords[..shell_coords.len() - 1].to_vec();
    prefix.sort();
    let recip_idx = t.factors.iter().position(|f| match f {
        Factor::ScalarReciprocal { coords } => {
            let mut c = coords.clone();
            c.sort();
            c == prefix
        }
        _ => false,
    })?;
    let factors: Vec<Factor> = t
        .factors
        .iter()
        .enumerate()
        .filter(|(idx, f)| {
            *idx != shell_idx && *idx != recip_idx && !f.involves(Slot::Inner)
        })
        .map(|(_, f)| f.clone())
        .collect();
    Some(Term {
        coeff: t.coeff * TWO_PI,
        factors,
    })
}

fn has_inner_bound(factors: &[Factor]) -> bool {
    factors.iter().any(|f| match f {
        Factor::BallCutoff { map, .. } => map.is_pure(Slot::Inner),
        Factor::SetIndicator {
            predicate: SetPredicate::EShell { .. },
            coords,
            complement: false,
        } => coords.contains(&Slot::Inner),
        Factor::IsotropicGaussian { map, .. } => map.involves(Slot::Inner),
        _ => false,
    })
}

/// Full lowering part Â⁻ₙ = Σ_l of the term splittings.
pub fn apply_a_minus(
    f: &SectorFunction,
    quad: &QuadratureSpec,
) -> Result<SectorFunction, OperatorError> {
    let mut out = SectorFunction::zero(f.sector - 1);
    for l in 0..f.sector {
        out = out.plus(&apply_a_minus_term(f, l, quad)?);
    }
    Ok(out)
}

/// The full interaction operator: sector n of the output is
/// Â⁺_{n−1} ψ_{n−1} + Â⁻_{n+1} ψ_{n+1}, with the edge conventions
/// Â⁺ into sector −1 and Â⁻ out of sector 0 both zero.
pub fn apply_a(state: &FockState, quad: &QuadratureSpec) -> Result<FockState, OperatorError> {
    let mut out = FockState::zero();
    for (n, f) in state.populated() {
        out.insert(apply_a_plus(f));
        if n >= 1 {
            out.insert(apply_a_minus(f, quad)?);
        }
    }
    Ok(out)
}

/// Momentum annulus cutoff: keeps B_R \ B_{R^{−a}} per photon coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub radius: f64,
    pub lower_exponent: f64,
}

impl CutoffSpec {
    pub fn new(radius: f64, lower_exponent: f64) -> Result<Self, OperatorError> {
        if !(radius >= 1.0) {
            return Err(OperatorError::InvalidCutoff(format!(
                "cutoff radius must be >= 1, got {radius}"
            )));
        }
        if !(lower_exponent >= 1.0) {
            return Err(OperatorError::InvalidCutoff(format!(
                "lower cutoff exponent must be >= 1, got {lower_exponent}"
            )));
        }
        Ok(CutoffSpec {
            radius,
            lower_exponent,
        })
    }

    /// (log_lo, log_hi) of the annulus in log magnitude.
    pub fn log_bounds(&self) -> (f64, f64) {
        (-self.lower_exponent * self.radius.ln(), self.radius.ln())
    }

    pub fn annulus_factor(&self, slot: Slot) -> Factor {
        let (lo, hi) = self.log_bounds();
        Factor::BallCutoff {
            log_lo: lo,
            log_hi: hi,
            map: AffineCoordMap::of(slot),
        }
    }
}

/// Cutoff raising operator: annulus indicators on every output photon.
pub fn apply_cutoff_a_plus(f: &SectorFunction, spec: &CutoffSpec) -> SectorFunction {
    let raised = apply_a_plus(f);
    let extra: Vec<Factor> = (0..raised.sector)
        .map(|i| spec.annulus_factor(Slot::Photon(i)))
        .collect();
    raised.multiplied_by(&extra)
}

/// Cutoff lowering operator: annulus indicators inside the integral (on
/// all n source coordinates) and outside (on the n−1 target coordinates).
pub fn apply_cutoff_a_minus(
    f: &SectorFunction,
    spec: &CutoffSpec,
    quad: &QuadratureSpec,
) -> Result<SectorFunction, OperatorError> {
    let inner: Vec<Factor> = (0..f.sector)
        .map(|i| spec.annulus_factor(Slot::Photon(i)))
        .collect();
    let lowered = apply_a_minus(&f.multiplied_by(&inner), quad)?;
    let outer: Vec<Factor> = (0..lowered.sector)
        .map(|i| spec.annulus_factor(Slot::Photon(i)))
        .collect();
    Ok(lowered.multiplied_by(&outer))
}

/// Projector onto the region sequence T: sector n is multiplied by the
/// F_n × ℝ³ indicator; sector 0 maps to zero.
pub fn project_t(state: &FockState) -> FockState {
    let mut out = FockState::zero();
    for (n, f) in state.populated() {
        if n == 0 {
            continue;
        }
        out.insert(f.multiplied_by(&[f_region_indicator(n, false)]));
    }
    out
}

/// Complement projector: sector 0 passes through unchanged.
pub fn project_t_complement(state: &FockState) -> FockState {
    let mut out = FockState::zero();
    for (n, f) in state.populated() {
        if n == 0 {
            out.insert(f.clone());
        } else {
            out.insert(f.multiplied_by(&[f_region_indicator(n, true)]));
        }
    }
    out
}

pub fn f_region_indicator(n: usize, complement: bool) -> Factor {
    Factor::SetIndicator {
        predicate: if complement {
            SetPredicate::FComplement { n }
        } else {
            SetPredicate::FRegion { n }
        },
        coords: (0..n).map(Slot::Photon).collect(),
        complement: false,
    }
}

/// Free-energy multiplier: each sector is multiplied pointwise by
/// Σ|k_i| + |p| (massless form; the sum distributes over terms).
pub fn apply_h0(state: &FockState) -> FockState {
    let mut out = FockState::zero();
    for (n, f) in state.populated() {
        let mut g = SectorFunction::zero(n);
        for i in 0..n {
            g = g.plus(&f.multiplied_by(&[Factor::radial_power(1.0, Slot::Photon(i))]));
        }
        g = g.plus(&f.multiplied_by(&[Factor::radial_power(1.0, Slot::Fermion)]));
        out.insert(g);
    }
    out
}

/// Choice of the superset D_{m+1} ⊇ F_{m+1} entering the first recursion
/// step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DomainChoice {
    /// B_{R'}^{m+1}; the radius is stored as ln R'.
    BallProduct { log_radius: f64 },
    /// D_{m+1} = F_{m+1} itself.
    FRegion,
    /// D_{m+1} = ∅ (valid only while F_{m+1} = ∅, i.e. m = 0).
    Empty,
}

/// Pointwise role of a D indicator in the term algebra.
pub enum DomainIndicator {
    AlwaysOne,
    AlwaysZero,
    Indicator(Factor),
}

/// Parameters of the recursive χ construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiRecursionSpec {
    pub base_sector: usize,
    pub support_radius: f64,
    pub width: f64,
    pub max_sector: usize,
    pub domain: DomainChoice,
}

impl ChiRecursionSpec {
    pub fn new(
        base_sector: usize,
        support_radius: f64,
        width: f64,
        max_sector: usize,
        domain: DomainChoice,
    ) -> Result<Self, OperatorError> {
        let spec = ChiRecursionSpec {
            base_sector,
            support_radius,
            width,
            max_sector,
            domain,
        };
        spec.check_shape()?;
        Ok(spec)
    }

    fn check_shape(&self) -> Result<(), OperatorError> {
        if self.max_sector < self.base_sector {
            return Err(OperatorError::InvalidRecursion(
                "max sector below base sector".into(),
            ));
        }
        if (self.max_sector - self.base_sector) % 2 != 0 {
            return Err(OperatorError::InvalidRecursion(format!(
                "sector parity mismatch: base {} vs max {}",
                self.base_sector, self.max_sector
            )));
        }
        if matches!(self.domain, DomainChoice::Empty) && self.base_sector != 0 {
            return Err(OperatorError::InvalidRecursion(
                "empty D is only a valid superset of F_{m+1} for m = 0".into(),
            ));
        }
        Ok(())
    }

    /// The indicator of D_{m+1} (or its complement) as a term factor over
    /// photon slots 0..m+1.
    pub fn domain_indicator(&self, complement: bool) -> DomainIndicator {
        let count = self.base_sector + 1;
        let coords: Vec<Slot> = (0..count).map(Slot::Photon).collect();
        match self.domain {
            DomainChoice::Empty => {
                if complement {
                    DomainIndicator::AlwaysOne
                } else {
                    DomainIndicator::AlwaysZero
                }
            }
            DomainChoice::BallProduct { log_radius } => {
                DomainIndicator::Indicator(Factor::SetIndicator {
                    predicate: SetPredicate::BallProduct {
                        log_radius,
                        count,
                    },
                    coords,
                    complement,
                })
            }
            DomainChoice::FRegion => DomainIndicator::Indicator(Factor::SetIndicator {
                predicate: if complement {
                    SetPredicate::FComplement { n: count }
                } else {
                    SetPredicate::FRegion { n: count }
                },
                coords,
                complement: false,
            }),
        }
    }

    /// Sampling check that D_{m+1} really contains the reachable part of
    /// F_{m+1} (prefix coordinates drawn from the base support ball).
    pub fn validate_superset(&self, seed: u64, samples: usize) -> Result<(), OperatorError> {
        let m = self.base_sector;
        if m == 0 {
            return Ok(()); // F₁ = ∅ is contained in anything
        }
        for i in 0..samples {
            let mut rng = rng_for(seed, i as u64);
            let (pt, _) = sample_f_n(&mut rng, m + 1, self.support_radius)
                .map_err(|e| OperatorError::InvalidRecursion(format!("F sampling failed: {e}")))?;
            let inside = match self.domain_indicator(false) {
                DomainIndicator::AlwaysOne => true,
                DomainIndicator::AlwaysZero => false,
                DomainIndicator::Indicator(Factor::SetIndicator {
                    predicate,
                    complement,
                    ..
                }) => predicate.contains(&pt.photons) != complement,
                DomainIndicator::Indicator(_) => unreachable!(),
            };
            if !inside {
                return Err(OperatorError::InvalidRecursion(format!(
                    "D_{} does not contain a sampled F_{} point",
                    m + 1,
                    m + 1
                )));
            }
        }
        Ok(())
    }
}

/// Builds the recursive sequence χ_m, χ_{m+2}, …, χ_{max}: each step maps
/// χ_{n−2} through
///   −√n/(2π√(n−1)) · 1_{E_n} 1_{D_{n−1}^∁} (1/p_n) |k_n|^{−5/2}
///     Σ_j |k_j|^{−1/2} χ_{n−2}(…without k_j…; p + k_j + k_n),
/// with the D factor present only at n = m+2. Purely algebraic: no
/// embedded integrals, term count (n−1)(n−3)⋯(m+1) in the top sector.
pub fn build_chi_sequence(spec: &ChiRecursionSpec) -> Result<FockState, OperatorError> {
    spec.check_shape()?;
    let m = spec.base_sector;
    let base = make_base_chi(m, spec.support_radius, spec.width)?;
    let mut state = FockState::zero();
    state.insert(base.clone());
    let mut prev = base;
    let mut n = m + 2;
    while n <= spec.max_sector {
        let mut next = SectorFunction::zero(n);
        let scale = Complex64::new(
            -(n as f64).sqrt() / (TWO_PI * ((n - 1) as f64).sqrt()),
            0.0,
        );
        let shell = Factor::SetIndicator {
            predicate: SetPredicate::EShell { n },
            coords: (0..n).map(Slot::Photon).collect(),
            complement: false,
        };
        let recip = Factor::ScalarReciprocal {
            coords: (0..n - 1).map(Slot::Photon).collect(),
        };
        let domain_factor = if n == m + 2 {
            match spec.domain_indicator(true) {
                DomainIndicator::AlwaysOne => None,
                DomainIndicator::AlwaysZero => {
                    return Err(OperatorError::InvalidRecursion(
                        "D complement is empty; the recursion vanishes".into(),
                    ))
                }
                DomainIndicator::Indicator(f) => Some(f),
            }
        } else {
            None
        };
        for j in 0..n - 1 {
            let remap = SlotRemap {
                photon: (0..n - 2)
                    .map(|s| Slot::Photon(if s < j { s } else { s + 1 }))
                    .collect(),
                fermion: AffineCoordMap::from_terms(vec![
                    (Slot::Fermion, 1),
                    (Slot::Photon(j), 1),
                    (Slot::Photon(n - 1), 1),
                ]),
            };
            for t in &prev.terms {
                let mut nt = t.remapped(&remap).scaled(scale);
                nt.factors.push(shell.clone());
                if let Some(d) = &domain_factor {
                    nt.factors.push(d.clone());
                }
                nt.factors.push(recip.clone());
                nt.factors.push(Factor::radial_power(-2.5, Slot::Photon(n - 1)));
                nt.factors.push(Factor::radial_power(-0.5, Slot::Photon(j)));
                next.terms.push(nt);
            }
        }
        if next.terms.len() > TERM_BUDGET {
            return Err(OperatorError::TermBudget(next.terms.len()));
        }
        state.insert(next.clone());
        prev = next;
        n += 2;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{unit_direction, unit_f64, Coord, ConfigPoint, LogRadialVector};
    use crate::quadrature::integrate_adaptive;
    use crate::sets::in_f_n;
    use crate::states::SectorFunction;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_state(sector: usize, width: f64) -> SectorFunction {
        let mut factors = Vec::new();
        for i in 0..sector {
            factors.push(Factor::gaussian(width, Slot::Photon(i)));
        }
        factors.push(Factor::gaussian(width, Slot::Fermion));
        SectorFunction::from_terms(sector, vec![Term::real(1.0, factors)])
    }

    #[test]
    fn a_plus_matches_hand_value() {
        // ψ₀(p) = e^{−p²/2}: Â⁺₀ψ₀ at (k = ê₁, p = 0) is 1·e^{−1/2}
        let psi0 = gaussian_state(0, 1.0);
        let raised = apply_a_plus(&psi0);
        assert_eq!(raised.sector, 1);
        let p = ConfigPoint::new(vec![Coord::linear(1.0, 0.0, 0.0)], Coord::zero());
        let v = raised.evaluate_c64(&p);
        assert!((v.re - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn a_plus_zero_in_zero_out() {
        let z = SectorFunction::zero(1);
        assert!(apply_a_plus(&z).is_zero());
    }

    #[test]
    fn a_plus_output_symmetric_for_symmetric_input() {
        let psi1 = gaussian_state(1, 1.0);
        let raised = apply_a_plus(&psi1);
        for i in 0..100u64 {
            let mut rng = rng_for(21, i);
            let k1 = Coord::linear(
                unit_f64(&mut rng) * 2.0 - 1.0,
                unit_f64(&mut rng),
                unit_f64(&mut rng),
            );
            let k2 = Coord::linear(unit_f64(&mut rng), -unit_f64(&mut rng), 0.3);
            let p0 = Coord::linear(0.1, 0.2, -0.4);
            let a = raised.evaluate_c64(&ConfigPoint::new(vec![k1, k2], p0));
            let b = raised.evaluate_c64(&ConfigPoint::new(vec![k2, k1], p0));
            assert!((a - b).norm() < 1e-13 * a.norm().max(1e-30));
        }
    }

    #[test]
    fn a_minus_gaussian_matches_radial_oracle() {
        // f(k; p) = e^{−k²/2} e^{−p²/2}: the lowered function at |p| = ρ is
        //   ∫ r^{3/2} e^{−r²/2} e^{−(ρ²+r²)/2} (4π sinh(ρr)/(ρr)) dr
        let f = gaussian_state(1, 1.0);
        let quad = QuadratureSpec {
            radial_order: 32,
            angular_order: 12,
            ..Default::default()
        };
        let lowered = apply_a_minus_term(&f, 0, &quad).unwrap();
        assert_eq!(lowered.integrated_terms.len(), 1);
        for rho in [0.3, 0.9, 1.5] {
            let pt = ConfigPoint::new(vec![], Coord::linear(rho, 0.0, 0.0));
            let got = lowered.evaluate_c64(&pt).re;
            let oracle = integrate_adaptive(
                &|r: f64| {
                    if r <= 0.0 {
                        return 0.0;
                    }
                    let ang = 4.0 * std::f64::consts::PI * (rho * r).sinh() / (rho * r);
                    r.powf(1.5) * (-0.5 * r * r).exp() * (-0.5 * (rho * rho + r * r)).exp() * ang
                },
                1e-8,
                30.0,
                1e-13,
            );
            assert!(
                ((got - oracle) / oracle).abs() < 1e-6,
                "rho={rho}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn a_minus_zero_in_zero_out() {
        let z = SectorFunction::zero(2);
        let out = apply_a_minus(&z, &QuadratureSpec::default()).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn a_minus_rejects_nested_integrals() {
        let f = gaussian_state(2, 1.0);
        let quad = QuadratureSpec::default();
        let once = apply_a_minus_term(&f, 0, &quad).unwrap();
        assert!(matches!(
            apply_a_minus_term(&once, 0, &quad),
            Err(OperatorError::NestedIntegral)
        ));
    }

    #[test]
    fn apply_a_sector_bookkeeping() {
        let quad = QuadratureSpec::default();
        let s0 = FockState::from_sector(gaussian_state(0, 1.0));
        let out = apply_a(&s0, &quad).unwrap();
        assert_eq!(out.sectors.keys().copied().collect::<Vec<_>>(), vec![1]);

        let mut s02 = FockState::from_sector(gaussian_state(0, 1.0));
        s02.insert(gaussian_state(2, 1.0));
        let out = apply_a(&s02, &quad).unwrap();
        assert_eq!(out.sectors.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
        // sector 1 has both the raised sector-0 part (a term) and the
        // lowered sector-2 part (an embedded integral)
        let s1 = out.sector(1).unwrap();
        assert!(!s1.terms.is_empty() && !s1.integrated_terms.is_empty());

        assert!(apply_a(&FockState::zero(), &quad).unwrap().is_zero());
    }

    fn chi_m0(domain: DomainChoice, max_sector: usize) -> FockState {
        let spec = ChiRecursionSpec::new(0, 1.0, 1.0, max_sector, domain).unwrap();
        build_chi_sequence(&spec).unwrap()
    }

    #[test]
    fn chi_term_counts_and_sign() {
        let chi = chi_m0(DomainChoice::BallProduct { log_radius: 2f64.ln() }, 4);
        assert_eq!(chi.sector(2).unwrap().terms.len(), 1);
        assert_eq!(chi.sector(4).unwrap().terms.len(), 3);
        assert!(chi.sector(2).unwrap().terms[0].coeff.re < 0.0);
        // m=1: (n−1)(n−3)⋯(m+1) gives 2 terms at n=3 and 2·4=8 at n=5
        let spec = ChiRecursionSpec::new(1, 1.0, 1.0, 5, DomainChoice::FRegion).unwrap();
        let chi1 = build_chi_sequence(&spec).unwrap();
        assert_eq!(chi1.sector(3).unwrap().terms.len(), 2);
        assert_eq!(chi1.sector(5).unwrap().terms.len(), 8);
    }

    #[test]
    fn chi_parity_and_budget_guards() {
        assert!(ChiRecursionSpec::new(0, 1.0, 1.0, 3, DomainChoice::Empty).is_err());
        assert!(ChiRecursionSpec::new(1, 1.0, 1.0, 3, DomainChoice::Empty).is_err());
        let spec = ChiRecursionSpec::new(0, 1.0, 1.0, 14, DomainChoice::Empty).unwrap();
        assert!(matches!(
            build_chi_sequence(&spec),
            Err(OperatorError::TermBudget(_))
        ));
    }

    #[test]
    fn chi_superset_validation() {
        // m=1 with a small ball cannot contain F₂ (shell radii ≈ e^{e²})
        let small = ChiRecursionSpec::new(
            1,
            1.0,
            1.0,
            3,
            DomainChoice::BallProduct { log_radius: 3f64.ln() },
        )
        .unwrap();
        assert!(small.validate_superset(5, 50).is_err());
        // F₂ itself is always valid, as is a ball above exp(p₂(R))
        let fvar = ChiRecursionSpec::new(1, 1.0, 1.0, 3, DomainChoice::FRegion).unwrap();
        fvar.validate_superset(5, 50).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        let big = ChiRecursionSpec::new(
            1,
            1.0,
            1.0,
            3,
            DomainChoice::BallProduct { log_radius: 4.0 * e2 },
        )
        .unwrap();
        big.validate_superset(5, 50).unwrap();
    }

    /// Hand-built point in the support of χ₂ for the ball-domain m=0 state:
    /// |k₁| just outside R', k₂ on the E₂ shell of k₁, p near −k₁−k₂.
    fn chi2_support_point(rng: &mut ChaCha8Rng, r_prime: f64) -> ConfigPoint {
        let d1 = unit_direction(rng);
        let r1 = r_prime * (1.1 + 0.3 * unit_f64(rng));
        let k1 = Coord::linear(r1 * d1[0], r1 * d1[1], r1 * d1[2]);
        let scale = crate::sets::p_n(2, &[k1]);
        let lam = scale.linear * (0.5 + 0.45 * unit_f64(rng));
        let k2 = Coord::LogRadial(LogRadialVector::new(unit_direction(rng), lam));
        // p = g − k₁ − k₂ with |g| < 1 keeps the base Gaussian argument small
        let g = [0.2 * unit_f64(rng), 0.1, -0.3 * unit_f64(rng)];
        let parts = AffineCoordMap::from_terms(vec![(Slot::Photon(0), -1), (Slot::Photon(1), -1)]);
        let tmp = ConfigPoint::new(vec![k1, k2], Coord::zero());
        let shift = parts.eval(&tmp, None);
        // shift has magnitude ~ e^{lam}; adding g is below resolution, so use shift directly
        let _ = g;
        ConfigPoint::new(vec![k1, k2], shift)
    }

    #[test]
    fn chi2_is_supported_on_f2() {
        let chi = chi_m0(DomainChoice::BallProduct { log_radius: 2f64.ln() }, 2);
        let chi2 = chi.sector(2).unwrap();
        let mut nonzero = 0;
        for i in 0..300u64 {
            let mut rng = rng_for(31, i);
            let pt = chi2_support_point(&mut rng, 2.0);
            let v = chi2.evaluate(&pt);
            if !v.is_zero() {
                nonzero += 1;
                assert!(in_f_n(&pt.photons), "support point outside F₂");
            }
        }
        assert!(nonzero > 150, "support sampler too weak: {nonzero}/300");
    }

    #[test]
    fn fast_path_folds_chi_completely() {
        let chi = chi_m0(DomainChoice::BallProduct { log_radius: 2f64.ln() }, 4);
        let quad = QuadratureSpec::default();
        for n in [2usize, 4] {
            let lowered = apply_a_minus_term(chi.sector(n).unwrap(), n - 1, &quad).unwrap();
            assert!(
                lowered.integrated_terms.is_empty(),
                "shell fast path must fold all χ terms at n={n}"
            );
            assert_eq!(lowered.terms.len(), chi.sector(n).unwrap().terms.len());
        }
    }

    #[test]
    fn fast_path_agrees_with_forced_quadrature() {
        let chi = chi_m0(DomainChoice::BallProduct { log_radius: 2f64.ln() }, 2);
        let chi2 = chi.sector(2).unwrap();
        let quad = QuadratureSpec {
            radial_order: 16,
            angular_order: 6,
            ..Default::default()
        };
        let folded = apply_a_minus_term_impl(chi2, 1, &quad, true).unwrap();
        let raw = apply_a_minus_term_impl(chi2, 1, &quad, false).unwrap();
        assert!(folded.integrated_terms.is_empty());
        assert!(!raw.integrated_terms.is_empty());
        for i in 0..40u64 {
            let mut rng = rng_for(32, i);
            let d = unit_direction(&mut rng);
            let r = 1.5 + 3.0 * unit_f64(&mut rng);
            let k1 = Coord::linear(r * d[0], r * d[1], r * d[2]);
            let g = Coord::linear(-r * d[0] + 0.2, -r * d[1], -r * d[2] + 0.1);
            let pt = ConfigPoint::new(vec![k1], g);
            let a = folded.evaluate_c64(&pt);
            let b = raw.evaluate_c64(&pt);
            if a.norm() > 0.0 {
                assert!(
                    (a - b).norm() / a.norm() < 1e-8,
                    "fold {a} vs quad {b} at r={r}"
                );
            } else {
                assert!(b.norm() < 1e-300);
            }
        }
    }

    #[test]
    fn projectors_partition_and_idempotence() {
        let mut state = FockState::from_sector(gaussian_state(0, 1.0));
        state.insert(gaussian_state(1, 1.0));
        state.insert(gaussian_state(2, 1.0));
        let t = project_t(&state);
        let tc = project_t_complement(&state);
        // sector 0: zero under T, identity under T∁
        assert!(t.sector(0).is_none());
        assert!(tc.sector(0).is_some());
        // sector 1: F₁ = ∅ so T zeroes it pointwise, T∁ leaves it
        let p1 = ConfigPoint::new(vec![Coord::linear(0.4, 0.0, 0.0)], Coord::zero());
        assert_eq!(t.sector(1).unwrap().evaluate_c64(&p1).re, 0.0);
        let orig = state.sector(1).unwrap().evaluate_c64(&p1);
        let kept = tc.sector(1).unwrap().evaluate_c64(&p1);
        assert!((orig - kept).norm() < 1e-15);
        // partition and idempotence pointwise on sector 2
        let tt = project_t(&t);
        for i in 0..100u64 {
            let mut rng = rng_for(33, i);
            let pt = if unit_f64(&mut rng) < 0.5 {
                let (fp, _) = sample_f_n(&mut rng, 2, 1.0).unwrap();
                ConfigPoint::new(fp.photons, Coord::linear(0.1, 0.0, 0.2))
            } else {
                ConfigPoint::new(
                    vec![Coord::linear(0.3, 0.1, 0.0), Coord::linear(0.0, 0.5, 0.1)],
                    Coord::linear(0.1, 0.0, 0.2),
                )
            };
            let whole = state.sector(2).unwrap().evaluate_c64(&pt);
            let a = t.sector(2).unwrap().evaluate_c64(&pt);
            let b = tc.sector(2).unwrap().evaluate_c64(&pt);
            assert!((a + b - whole).norm() < 1e-13 * whole.norm().max(1e-30));
            let aa = tt.sector(2).unwrap().evaluate_c64(&pt);
            assert!((a - aa).norm() < 1e-13 * a.norm().max(1e-30));
        }
    }

    #[test]
    fn h0_multiplier_examples() {
        let mut state = FockState::from_sector(gaussian_state(0, 1.0));
        state.insert(gaussian_state(1, 1.0));
        let out = apply_h0(&state);
        // sector 0 at p = 0: multiplier vanishes
        let origin = ConfigPoint::new(vec![], Coord::zero());
        assert_eq!(out.sector(0).unwrap().evaluate_c64(&origin).re, 0.0);
        // sector 1 at |k| = 2, |p| = 3: multiplier is 5
        let pt = ConfigPoint::new(vec![Coord::linear(2.0, 0.0, 0.0)], Coord::linear(0.0, 3.0, 0.0));
        let f = state.sector(1).unwrap().evaluate_c64(&pt);
        let g = out.sector(1).unwrap().evaluate_c64(&pt);
        assert!((g - f * 5.0).norm() < 1e-13 * f.norm());
        // positivity of the multiplier on random points
        for i in 0..100u64 {
            let mut rng = rng_for(34, i);
            let pt = ConfigPoint::new(
                vec![Coord::linear(unit_f64(&mut rng), 0.2, -0.1)],
                Coord::linear(0.0, unit_f64(&mut rng), 0.0),
            );
            let f = state.sector(1).unwrap().evaluate_c64(&pt).re;
            let g = out.sector(1).unwrap().evaluate_c64(&pt).re;
            assert!(g >= -1e-15 && g >= -1e-15 * f.abs());
        }
    }

    #[test]
    fn cutoff_saturates_for_bounded_support() {
        // f has annular support |k| ∈ (0.2, 3): for R = 10, a = 1 the
        // cutoff annulus [0.1, 10] contains it, so the actions agree.
        let f = gaussian_state(0, 1.0);
        let raised = apply_a_plus(&f);
        let supported = raised.multiplied_by(&[Factor::BallCutoff {
            log_lo: 0.2f64.ln(),
            log_hi: 3f64.ln(),
            map: AffineCoordMap::of(Slot::Photon(0)),
        }]);
        let spec = CutoffSpec::new(10.0, 1.0).unwrap();
        let cut = supported.multiplied_by(&[spec.annulus_factor(Slot::Photon(0))]);
        for i in 0..200u64 {
            let mut rng = rng_for(35, i);
            let r = 5.0 * unit_f64(&mut rng);
            let d = unit_direction(&mut rng);
            let pt = ConfigPoint::new(
                vec![Coord::linear(r * d[0], r * d[1], r * d[2])],
                Coord::linear(0.1, -0.2, 0.0),
            );
            let a = supported.evaluate_c64(&pt);
            let b = cut.evaluate_c64(&pt);
            assert!((a - b).norm() <= 1e-300);
        }
    }

    #[test]
    fn cutoff_degenerate_annulus_is_zero() {
        let spec = CutoffSpec::new(1.0, 1.0).unwrap();
        let f = gaussian_state(0, 1.0);
        let cut = apply_cutoff_a_plus(&f, &spec);
        for i in 0..100u64 {
            let mut rng = rng_for(36, i);
            let pt = ConfigPoint::new(
                vec![Coord::linear(unit_f64(&mut rng) * 3.0, 0.0, 0.1)],
                Coord::linear(0.0, 0.2, 0.0),
            );
            assert_eq!(cut.evaluate_c64(&pt).re, 0.0);
        }
        assert!(CutoffSpec::new(0.5, 1.0).is_err());
        assert!(CutoffSpec::new(2.0, 0.5).is_err());
    }

    /// The §8-style projected state: 1_{F_m×ℝ³} Â^{R+} 1_{F_{m-1}^∁×ℝ³} φ
    /// has its raised image supported outside F_{m+1}.
    #[test]
    fn projected_cutoff_state_misses_next_region() {
        let m = 2usize;
        let phi = gaussian_state(m - 1, 1.0);
        let spec = CutoffSpec::new(8.0, 1.0).unwrap();
        let phi_out = phi.multiplied_by(&[f_region_indicator(m - 1, true)]);
        let chi_m = apply_cutoff_a_plus(&phi_out, &spec)
            .multiplied_by(&[f_region_indicator(m, false)]);
        let raised = apply_a_plus(&chi_m);
        // evaluate on constructed F₃ points: must vanish identically
        for i in 0..100u64 {
            let mut rng = rng_for(37, i);
            if let Ok((pt, _)) = sample_f_n(&mut rng, m + 1, 2.0) {
                let p = ConfigPoint::new(pt.photons, Coord::linear(0.1, 0.0, 0.0));
                assert_eq!(raised.evaluate_c64(&p).re, 0.0);
            }
        }
    }
}
