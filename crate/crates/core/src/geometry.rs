//! Momentum vectors in linear and log-radial form, affine coordinate maps,
//! and the seeded samplers every other module consumes.
//!
//! Shell radii here grow like exp(p_n) with p_n ≥ eⁿ, so any coordinate
//! living inside a shell must be stored as (unit direction, ln |k|). The
//! linear form is kept for the compactly supported base states.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("log_norm of the zero vector is undefined")]
    ZeroVector,
    #[error("invalid sampler bounds: {0}")]
    InvalidBounds(String),
}

/// A 3-momentum in linear components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MomentumVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        MomentumVector { x, y, z }
    }

    pub fn zero() -> Self {
        MomentumVector::new(0.0, 0.0, 0.0)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }
}

/// Euclidean norm of a linear momentum.
pub fn norm(v: &MomentumVector) -> f64 {
    v.norm()
}

/// A 3-momentum stored as unit direction plus ln |k|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRadialVector {
    pub direction: [f64; 3],
    pub log_magnitude: f64,
}

impl LogRadialVector {
    pub fn new(direction: [f64; 3], log_magnitude: f64) -> Self {
        let n = (direction[0] * direction[0]
            + direction[1] * direction[1]
            + direction[2] * direction[2])
            .sqrt();
        debug_assert!((n - 1.0).abs() < 1e-12, "direction must be unit length");
        LogRadialVector {
            direction,
            log_magnitude,
        }
    }
}

/// One photon or fermion coordinate, in whichever representation fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coord {
    Linear(MomentumVector),
    LogRadial(LogRadialVector),
}

impl Coord {
    pub fn linear(x: f64, y: f64, z: f64) -> Self {
        Coord::Linear(MomentumVector::new(x, y, z))
    }

    pub fn zero() -> Self {
        Coord::Linear(MomentumVector::zero())
    }

    /// ln |k|, total: −∞ for the zero vector.
    pub fn log_mag(&self) -> f64 {
        match self {
            Coord::Linear(v) => {
                if v.is_zero() {
                    f64::NEG_INFINITY
                } else {
                    v.norm().ln()
                }
            }
            Coord::LogRadial(l) => l.log_magnitude,
        }
    }

    /// Unit direction; arbitrary (ê₁) for the zero vector.
    pub fn direction(&self) -> [f64; 3] {
        match self {
            Coord::Linear(v) => {
                let n = v.norm();
                if n == 0.0 {
                    [1.0, 0.0, 0.0]
                } else {
                    [v.x / n, v.y / n, v.z / n]
                }
            }
            Coord::LogRadial(l) => l.direction,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_mag() == f64::NEG_INFINITY
    }

    /// Linear view; only valid when the magnitude fits in f64.
    pub fn to_linear(&self) -> Option<MomentumVector> {
        match self {
            Coord::Linear(v) => Some(*v),
            Coord::LogRadial(l) => {
                if l.log_magnitude > 700.0 {
                    None
                } else {
                    let r = l.log_magnitude.exp();
                    Some(MomentumVector::new(
                        r * l.direction[0],
                        r * l.direction[1],
                        r * l.direction[2],
                    ))
                }
            }
        }
    }
}

/// Convert a nonzero linear vector to log-radial form.
pub fn to_log_radial(v: &MomentumVector) -> Result<LogRadialVector, GeometryError> {
    if v.is_zero() {
        return Err(GeometryError::ZeroVector);
    }
    let n = v.norm();
    Ok(LogRadialVector {
        direction: [v.x / n, v.y / n, v.z / n],
        log_magnitude: n.ln(),
    })
}

/// ln |v|; the zero vector is a domain error.
pub fn log_norm(c: &Coord) -> Result<f64, GeometryError> {
    match c {
        Coord::Linear(v) if v.is_zero() => Err(GeometryError::ZeroVector),
        _ => Ok(c.log_mag()),
    }
}

/// A full configuration: n photon coordinates plus the fermion momentum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub photons: Vec<Coord>,
    pub fermion: Coord,
}

impl ConfigPoint {
    pub fn new(photons: Vec<Coord>, fermion: Coord) -> Self {
        ConfigPoint { photons, fermion }
    }

    pub fn sector(&self) -> usize {
        self.photons.len()
    }

    pub fn coord(&self, slot: Slot) -> &Coord {
        match slot {
            Slot::Photon(i) => &self.photons[i],
            Slot::Fermion => &self.fermion,
            Slot::Inner => panic!("Inner slot resolved outside an embedded integral"),
        }
    }
}

/// Argument-slot identifier for coordinate maps. `Inner` is only valid
/// inside the integrand of an embedded integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    Photon(usize),
    Fermion,
    Inner,
}

/// An integer-coefficient affine combination of coordinates, identifying
/// which argument a factor reads (e.g. "p + k_i" becomes
/// {Fermion:+1, Photon(i):+1}).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCoordMap {
    /// Sorted by slot; coefficients are −1 or +1, zeros dropped.
    pub terms: Vec<(Slot, i32)>,
    pub shift: Option<MomentumVector>,
}

impl AffineCoordMap {
    pub fn of(slot: Slot) -> Self {
        AffineCoordMap {
            terms: vec![(slot, 1)],
            shift: None,
        }
    }

    pub fn from_terms(terms: Vec<(Slot, i32)>) -> Self {
        AffineCoordMap { terms, shift: None }.canonicalized()
    }

    pub fn with_shift(mut self, shift: MomentumVector) -> Self {
        self.shift = Some(shift);
        self
    }

    fn canonicalized(mut self) -> Self {
        self.terms.sort_by_key(|(s, _)| *s);
        let mut out: Vec<(Slot, i32)> = Vec::with_capacity(self.terms.len());
        for (slot, c) in self.terms.drain(..) {
            if let Some(last) = out.last_mut() {
                if last.0 == slot {
                    last.1 += c;
                    continue;
                }
            }
            out.push((slot, c));
        }
        out.retain(|(_, c)| *c != 0);
        for (_, c) in &out {
            debug_assert!(c.abs() <= 1, "coefficients must stay in {{-1,0,1}}");
        }
        self.terms = out;
        self
    }

    pub fn coeff(&self, slot: Slot) -> i32 {
        self.terms
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }

    pub fn involves(&self, slot: Slot) -> bool {
        self.coeff(slot) != 0
    }

    pub fn is_pure(&self, slot: Slot) -> bool {
        self.shift.is_none() && self.terms.len() == 1 && self.terms[0].0 == slot
    }

    /// Substitute each slot by an affine combination (operator remaps).
    pub fn substitute(&self, f: impl Fn(Slot) -> AffineCoordMap) -> AffineCoordMap {
        let mut terms = Vec::new();
        let mut shift = self.shift;
        for (slot, c) in &self.terms {
            let sub = f(*slot);
            for (s2, c2) in &sub.terms {
                terms.push((*s2, c * c2));
            }
            if let Some(sh) = sub.shift {
                let add = MomentumVector::new(
                    *c as f64 * sh.x,
                    *c as f64 * sh.y,
                    *c as f64 * sh.z,
                );
                shift = Some(match shift {
                    None => add,
                    Some(prev) => MomentumVector::new(prev.x + add.x, prev.y + add.y, prev.z + add.z),
                });
            }
        }
        AffineCoordMap { terms, shift }.canonicalized()
    }

    /// Evaluate the combination at a point. Contributions are summed after
    /// factoring out the largest log-magnitude, so shell-scale coordinates
    /// never overflow.
    pub fn eval(&self, point: &ConfigPoint, inner: Option<&Coord>) -> Coord {
        let mut parts: Vec<(f64, [f64; 3], f64)> = Vec::with_capacity(self.terms.len() + 1);
        for (slot, c) in &self.terms {
            let coord = match slot {
                Slot::Inner => inner.expect("Inner slot requires an inner coordinate"),
                s => point.coord(*s),
            };
            let lm = coord.log_mag();
            if lm == f64::NEG_INFINITY {
                continue;
            }
            parts.push((*c as f64, coord.direction(), lm));
        }
        if let Some(sh) = self.shift {
            if !sh.is_zero() {
                let n = sh.norm();
                parts.push((1.0, [sh.x / n, sh.y / n, sh.z / n], n.ln()));
            }
        }
        if parts.is_empty() {
            return Coord::zero();
        }
        let lmax = parts
            .iter()
            .map(|(_, _, lm)| *lm)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut acc = [0.0f64; 3];
        for (c, dir, lm) in &parts {
            let s = c * (lm - lmax).exp();
            acc[0] += s * dir[0];
            acc[1] += s * dir[1];
            acc[2] += s * dir[2];
        }
        let n = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
        if n == 0.0 {
            return Coord::zero();
        }
        Coord::LogRadial(LogRadialVector {
            direction: [acc[0] / n, acc[1] / n, acc[2] / n],
            log_magnitude: lmax + n.ln(),
        })
    }
}

// ---------------------------------------------------------------------------
// Seeded sampling
// ---------------------------------------------------------------------------

/// SplitMix64 step; used to derive independent substream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed derivation from a label, so each check owns a reproducible stream.
pub fn seed_for_label(seed: u64, label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix_seed(seed, h)
}

/// Counter-based generator for one substream; identical (seed, stream)
/// always yields identical output, independent of threading.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

/// Uniform in [0,1) with 53-bit resolution, independent of rand's
/// distribution internals.
pub fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Standard normal via Box–Muller (self-contained for reproducibility).
pub fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u = unit_f64(rng);
        if u > 0.0 {
            let v = unit_f64(rng);
            return (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
        }
    }
}

/// Uniform direction on the unit sphere.
pub fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let x = std_normal(rng);
        let y = std_normal(rng);
        let z = std_normal(rng);
        let n = (x * x + y * y + z * z).sqrt();
        if n > 1e-12 {
            return [x / n, y / n, z / n];
        }
    }
}

/// One draw from a log-radial shell: direction uniform on the sphere,
/// ln |k| uniform on [log_lo, log_hi]. The returned weight is
/// ln(4π r³ (log_hi − log_lo)) so that averaging f(k)·e^{log_weight} over
/// draws estimates ∫_shell f dk.
pub fn sample_log_shell(
    rng: &mut ChaCha8Rng,
    log_lo: f64,
    log_hi: f64,
) -> Result<(LogRadialVector, f64), GeometryError> {
    if !(log_lo < log_hi) {
        return Err(GeometryError::InvalidBounds(format!(
            "log shell requires log_lo < log_hi, got [{log_lo}, {log_hi}]"
        )));
    }
    let lam = log_lo + unit_f64(rng) * (log_hi - log_lo);
    let dir = unit_direction(rng);
    let log_weight = (4.0 * std::f64::consts::PI).ln() + 3.0 * lam + (log_hi - log_lo).ln();
    Ok((LogRadialVector::new(dir, lam), log_weight))
}

/// One uniform draw from the ball of the given radius; weight is the ball
/// volume (ln form).
pub fn sample_ball(
    rng: &mut ChaCha8Rng,
    radius: f64,
) -> Result<(MomentumVector, f64), GeometryError> {
    if !(radius > 0.0) {
        return Err(GeometryError::InvalidBounds(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    let r = radius * unit_f64(rng).cbrt();
    let dir = unit_direction(rng);
    let log_weight = (4.0 * std::f64::consts::PI / 3.0).ln() + 3.0 * radius.ln();
    Ok((
        MomentumVector::new(r * dir[0], r * dir[1], r * dir[2]),
        log_weight,
    ))
}

/// A materialized batch of weighted sample points. Weights are kept in log
/// form; identical (seed, generator) reproduces the batch bit for bit.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub seed: u64,
    pub points: Vec<(ConfigPoint, f64)>,
}

impl SampleBatch {
    pub fn generate(
        seed: u64,
        count: usize,
        mut gen: impl FnMut(&mut ChaCha8Rng) -> (ConfigPoint, f64),
    ) -> Self {
        let points = (0..count)
            .map(|i| {
                let mut rng = rng_for(seed, i as u64);
                gen(&mut rng)
            })
            .collect();
        SampleBatch { seed, points }
    }
}
