//! Decidable membership and constructive samplers for the nested set
//! hierarchy: the shell scale p_n, the shells E_n, the recursive regions
//! F_n, ball products, annulus partitions, and the set symmetrizer.
//!
//! All membership tests work on log magnitudes. p_n itself can exceed f64
//! range for deeply nested points; in that case the shell is treated as
//! unreachable (membership false), which is conservative: no representable
//! coordinate can reach a shell whose floor exceeds exp(1.8e308).

use crate::geometry::{rng_for, sample_ball, unit_f64, unit_direction, Coord, ConfigPoint, LogRadialVector};
use crate::logdomain::ln_sq_plus_one;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SetsError {
    #[error("{0} requires n >= {1}")]
    SectorTooSmall(&'static str, usize),
    #[error("rejection budget exhausted after {0} attempts")]
    RejectionBudget(usize),
    #[error("shell scale overflows f64 for this prefix; shell unreachable")]
    ShellOverflow,
}

/// Weakened-predicate variants used as mutation controls: every scan that
/// must report zero violations ships a falsified twin that must not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShellMutation {
    None,
    /// Lower shell edge exp(p/2) weakened to exp(p/4).
    LowerEdgeHalved,
}

/// Shell scale value, carried in both linear and log form. The linear
/// value is +inf when out of range; the log form is always finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellScale {
    pub linear: f64,
    pub log: f64,
}

impl ShellScale {
    pub fn overflowed(&self) -> bool {
        !self.linear.is_finite()
    }
}

/// p_n over the n−1 coordinates preceding the shell coordinate:
/// eⁿ ∏ (k_i² + 1)². Permutation invariant; ≥ eⁿ always.
pub fn p_n(n: usize, prefix: &[Coord]) -> ShellScale {
    debug_assert!(n >= 2, "p_n needs n >= 2");
    debug_assert_eq!(prefix.len(), n - 1);
    let log = p_n_log(n, prefix);
    let linear = if log > 709.0 { f64::INFINITY } else { log.exp() };
    ShellScale { linear, log }
}

/// ln p_n, finite for every representable prefix.
pub fn p_n_log(n: usize, prefix: &[Coord]) -> f64 {
    let mut log = n as f64;
    for k in prefix {
        log += 2.0 * ln_sq_plus_one(k.log_mag());
    }
    log
}

/// Scalar variant p′_n(x₁,…,x_{n−1}) = p_n(x₁ê₁,…): used for annulus-index
/// arguments in the lower-bound analysis.
pub fn p_n_scalar(n: usize, radii: &[f64]) -> f64 {
    debug_assert_eq!(radii.len(), n - 1);
    let mut log = n as f64;
    for r in radii {
        log += 2.0 * (r * r + 1.0).ln();
    }
    if log > 709.0 {
        f64::INFINITY
    } else {
        log.exp()
    }
}

fn shell_bounds(scale: ShellScale, mutation: ShellMutation) -> Option<(f64, f64)> {
    if scale.overflowed() {
        return None;
    }
    let lo = match mutation {
        ShellMutation::None => scale.linear / 2.0,
        ShellMutation::LowerEdgeHalved => scale.linear / 4.0,
    };
    Some((lo, scale.linear))
}

/// Membership in the shell set E_n: the last coordinate's log magnitude
/// lies strictly between p_n/2 and p_n of the others.
pub fn in_e_n(point: &[Coord]) -> bool {
    in_e_n_mutated(point, ShellMutation::None)
}

pub fn in_e_n_mutated(point: &[Coord], mutation: ShellMutation) -> bool {
    let n = point.len();
    assert!(n >= 2, "E_n needs n >= 2");
    let scale = p_n(n, &point[..n - 1]);
    let Some((lo, hi)) = shell_bounds(scale, mutation) else {
        return false;
    };
    let lam = point[n - 1].log_mag();
    lo < lam && lam < hi
}

/// Membership in the recursive region F_n.
///
/// F₁ = ∅. For n ≥ 2 the symmetrized recursive definition reduces to: the
/// unique maximum-log-norm coordinate satisfies the E_n shell condition
/// against the rest, and the rest lie outside F_{n−1}. Ties in the maximum
/// resolve to false (the shell inequalities are strict).
pub fn in_f_n(point: &[Coord]) -> bool {
    in_f_n_mutated(point, ShellMutation::None)
}

pub fn in_f_n_mutated(point: &[Coord], mutation: ShellMutation) -> bool {
    let n = point.len();
    if n <= 1 {
        return false;
    }
    let mut imax = 0usize;
    let mut lmax = f64::NEG_INFINITY;
    for (i, c) in point.iter().enumerate() {
        let l = c.log_mag();
        if l > lmax {
            lmax = l;
            imax = i;
        }
    }
    // strict maximum required
    for (i, c) in point.iter().enumerate() {
        if i != imax && c.log_mag() == lmax {
            return false;
        }
    }
    let rest: Vec<Coord> = point
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imax)
        .map(|(_, c)| *c)
        .collect();
    let scale = p_n(n, &rest);
    let Some((lo, hi)) = shell_bounds(scale, mutation) else {
        return false;
    };
    if !(lo < lmax && lmax < hi) {
        return false;
    }
    !in_f_n_mutated(&rest, mutation)
}

/// Reference implementation of F_n membership by explicit permutation
/// search over the recursive definition. Exponential; for tests and the
/// fast-path equivalence scan only (n ≤ 4 or so).
pub fn in_f_n_brute(point: &[Coord]) -> bool {
    use itertools::Itertools;
    let n = point.len();
    if n <= 1 {
        return false;
    }
    for perm in point.iter().copied().permutations(n) {
        if in_e_n(&perm) && !in_f_n_brute(&perm[..n - 1]) {
            return true;
        }
    }
    false
}

/// Membership in the annulus product X_{N,i}: i_l ≤ |k_l| < i_l + 1 for
/// every l (half-open so the partition is exact).
pub fn in_x(indices: &[u32], point: &[Coord]) -> bool {
    assert_eq!(indices.len(), point.len());
    indices.iter().zip(point).all(|(i, k)| {
        let lam = k.log_mag();
        let lo = *i as f64;
        let hi = lo + 1.0;
        let above = if lo == 0.0 {
            true
        } else {
            lam >= lo.ln()
        };
        above && lam < hi.ln()
    })
}

/// Membership in E′_{N,j}: the point with coordinate j moved to the end
/// lies in E_N (coordinate j carries the shell condition).
pub fn in_e_prime(j: usize, point: &[Coord]) -> bool {
    let n = point.len();
    assert!(j < n && n >= 2);
    let mut rearranged: Vec<Coord> = Vec::with_capacity(n);
    for (i, c) in point.iter().enumerate() {
        if i != j {
            rearranged.push(*c);
        }
    }
    rearranged.push(point[j]);
    in_e_n(&rearranged)
}

/// Membership in F_{N,j} = F_N ∩ E′_{N,j}: the F_N points whose j-th
/// coordinate has the greatest norm.
pub fn in_f_max(j: usize, point: &[Coord]) -> bool {
    in_f_n(point) && in_e_prime(j, point)
}

/// Decidable membership for every set the toolkit names. Parameters that
/// are radii of doubly-exponential balls are carried as logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SetPredicate {
    /// E_n shell set over n coordinates.
    EShell { n: usize },
    /// F_n region over n coordinates.
    FRegion { n: usize },
    /// Complement of F_n.
    FComplement { n: usize },
    /// Ball product B_R^count (the D supersets); radius stored as ln R.
    BallProduct { log_radius: f64, count: usize },
    /// Annulus product X_{N,i}.
    AnnulusProduct { indices: Vec<u32> },
    /// E′_{N,j}: coordinate j carries the shell condition.
    EPrime { n: usize, j: usize },
    /// F_{N,j} = F_N ∩ E′_{N,j}.
    FMax { n: usize, j: usize },
    /// Sector-level T member: photons in F_n (fermion free). Sector 0 is ∅.
    TSector { n: usize },
    /// Sector-level T∁ member: photons outside F_n. Sector 0 is full.
    TComplementSector { n: usize },
    /// The empty set (D_{n−1} for n ≥ m+4).
    Empty,
}

impl SetPredicate {
    /// Number of photon coordinates the predicate consumes.
    pub fn arity(&self) -> usize {
        match self {
            SetPredicate::EShell { n }
            | SetPredicate::FRegion { n }
            | SetPredicate::FComplement { n }
            | SetPredicate::EPrime { n, .. }
            | SetPredicate::FMax { n, .. }
            | SetPredicate::TSector { n }
            | SetPredicate::TComplementSector { n } => *n,
            SetPredicate::BallProduct { count, .. } => *count,
            SetPredicate::AnnulusProduct { indices } => indices.len(),
            SetPredicate::Empty => 0,
        }
    }

    pub fn contains(&self, coords: &[Coord]) -> bool {
        self.contains_mutated(coords, ShellMutation::None)
    }

    pub fn contains_mutated(&self, coords: &[Coord], mutation: ShellMutation) -> bool {
        match self {
            SetPredicate::EShell { .. } => in_e_n_mutated(coords, mutation),
            SetPredicate::FRegion { .. } => in_f_n_mutated(coords, mutation),
            SetPredicate::FComplement { .. } => !in_f_n_mutated(coords, mutation),
            SetPredicate::BallProduct { log_radius, .. } => {
                coords.iter().all(|c| c.log_mag() <= *log_radius)
            }
            SetPredicate::AnnulusProduct { indices } => in_x(indices, coords),
            SetPredicate::EPrime { j, .. } => in_e_prime(*j, coords),
            SetPredicate::FMax { j, .. } => in_f_max(*j, coords),
            SetPredicate::TSector { n } => *n > 0 && in_f_n_mutated(coords, mutation),
            SetPredicate::TComplementSector { n } => {
                *n == 0 || !in_f_n_mutated(coords, mutation)
            }
            SetPredicate::Empty => false,
        }
    }
}

const REJECTION_BUDGET: usize = 10_000;

/// Constructive sampler for F_n: draws the n−1 prefix coordinates uniformly
/// from a ball (rejecting the rare draws inside F_{n−1}), then the shell
/// coordinate log-uniformly from the E_n shell. The returned log-weight is
/// the product importance weight; the fermion slot is set to zero.
pub fn sample_f_n(
    rng: &mut ChaCha8Rng,
    n: usize,
    base_radius: f64,
) -> Result<(ConfigPoint, f64), SetsError> {
    if n < 2 {
        return Err(SetsError::SectorTooSmall("sample_f_n", 2));
    }
    let mut prefix: Vec<Coord> = Vec::with_capacity(n - 1);
    let mut log_weight = 0.0;
    for attempt in 0..=REJECTION_BUDGET {
        if attempt == REJECTION_BUDGET {
            return Err(SetsError::RejectionBudget(REJECTION_BUDGET));
        }
        prefix.clear();
        let mut lw = 0.0;
        for _ in 0..n - 1 {
            let (v, w) = sample_ball(rng, base_radius).expect("radius validated");
            prefix.push(Coord::Linear(v));
            lw += w;
        }
        if !in_f_n(&prefix) {
            log_weight = lw;
            break;
        }
    }
    let scale = p_n(n, &prefix);
    if scale.overflowed() {
        return Err(SetsError::ShellOverflow);
    }
    let (lo, hi) = (scale.linear / 2.0, scale.linear);
    let lam = lo + unit_f64(rng) * (hi - lo);
    let dir = unit_direction(rng);
    // shell weight: 4π r³ Δλ, in log form
    log_weight += (4.0 * std::f64::consts::PI).ln() + 3.0 * lam + (hi - lo).ln();
    let mut photons = prefix;
    photons.push(Coord::LogRadial(LogRadialVector::new(dir, lam)));
    debug_assert!(in_f_n(&photons));
    Ok((ConfigPoint::new(photons, Coord::zero()), log_weight))
}

/// Outcome of a disjointness scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub trials: usize,
    pub violations: usize,
    /// Samples that could not be constructed (shell overflow etc).
    pub skipped: usize,
}

/// Samples points of F_{n−1} × ℝ³ constructively and counts how many land
/// in F_n (the disjointness lemma predicts exactly zero). The extension
/// coordinate is drawn from a mixture tuned to probe the regions where a
/// faulty predicate would fire: small balls, the E_n shell of the prefix,
/// and magnitudes comparable to the prefix's own shell coordinate.
pub fn disjointness_witness_scan(
    seed: u64,
    n: usize,
    trials: usize,
    mutation: ShellMutation,
) -> Result<ScanOutcome, SetsError> {
    if n < 3 {
        return Err(SetsError::SectorTooSmall("disjointness_witness_scan", 3));
    }
    let mut violations = 0usize;
    let mut skipped = 0usize;
    for i in 0..trials {
        let mut rng = rng_for(seed, i as u64);
        let (base, _) = match sample_f_n(&mut rng, n - 1, 1.0) {
            Ok(x) => x,
            Err(SetsError::ShellOverflow) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut photons = base.photons;
        let extension = draw_probe_coord(&mut rng, &photons);
        photons.push(extension);
        if in_f_n_mutated(&photons, mutation) {
            violations += 1;
        }
    }
    Ok(ScanOutcome {
        trials,
        violations,
        skipped,
    })
}

/// Probe distribution for the "× ℝ³" coordinate in the disjointness scan.
fn draw_probe_coord(rng: &mut ChaCha8Rng, prefix: &[Coord]) -> Coord {
    let u = unit_f64(rng);
    let dir = unit_direction(rng);
    if u < 0.35 {
        // small ball, including very small radii (these feed the mutated
        // predicate's weakened shells)
        let radius = if u < 0.175 { 0.35 } else { 1.5 };
        let r = radius * unit_f64(rng).cbrt();
        Coord::linear(r * dir[0], r * dir[1], r * dir[2])
    } else if u < 0.65 {
        // around the E_{n+1} shell of the full prefix
        let scale = p_n(prefix.len() + 1, prefix);
        if scale.overflowed() {
            let lam = prefix.iter().map(|c| c.log_mag()).fold(0.0f64, f64::max);
            Coord::LogRadial(LogRadialVector::new(dir, lam * (0.5 + unit_f64(rng))))
        } else {
            let lam = scale.linear * (0.4 + 0.8 * unit_f64(rng));
            Coord::LogRadial(LogRadialVector::new(dir, lam))
        }
    } else {
        // magnitudes comparable to the existing coordinates (probes
        // reorderings of the max)
        let lmax = prefix
            .iter()
            .map(|c| c.log_mag())
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1.0);
        let lam = lmax * (0.5 + unit_f64(rng));
        Coord::LogRadial(LogRadialVector::new(dir, lam))
    }
}
