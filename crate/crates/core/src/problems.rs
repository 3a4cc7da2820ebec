//! Benchmark problems: initial distributions, the beam matching field and
//! K-V equivalent-beam arithmetic.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Vec4;
use crate::particles::{ExternalField, ParticleSet, Species};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Landau,
    TwoStream,
    SemiGaussian,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Landau => "landau",
            ProblemKind::TwoStream => "twostream",
            ProblemKind::SemiGaussian => "beam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "landau" => Ok(ProblemKind::Landau),
            "twostream" | "two_stream" => Ok(ProblemKind::TwoStream),
            "beam" | "semi_gaussian" => Ok(ProblemKind::SemiGaussian),
            _ => Err(Error::InvalidParameter(format!("unknown problem '{s}' (expected landau, twostream or beam)"))),
        }
    }
}

/// Field boundary conditions for the spatial directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldBc {
    Periodic,
    FreeSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Perturbation amplitude.
    pub alpha: f64,
    /// Perturbation wavenumbers.
    pub k: [f64; 2],
    /// Velocity domain is `[-v_max, v_max]²`.
    pub v_max: f64,
    /// Tune depression (beam only).
    pub eta: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub bc: FieldBc,
    pub species: Species,
}

impl ProblemSpec {
    pub fn landau() -> Self {
        let k = [0.5, 0.5];
        Self {
            kind: ProblemKind::Landau,
            alpha: 0.05,
            k,
            v_max: 6.0,
            eta: 0.0,
            lo: [0.0, 0.0],
            hi: [2.0 * PI / k[0], 2.0 * PI / k[1]],
            bc: FieldBc::Periodic,
            species: Species::Negative,
        }
    }

    pub fn two_stream() -> Self {
        Self { kind: ProblemKind::TwoStream, v_max: 9.0, ..Self::landau() }
    }

    pub fn semi_gaussian(eta: f64) -> Self {
        Self {
            kind: ProblemKind::SemiGaussian,
            alpha: 0.0,
            k: [0.0, 0.0],
            v_max: 10.0,
            eta,
            lo: [-10.0, -10.0],
            hi: [10.0, 10.0],
            bc: FieldBc::FreeSpace,
            species: Species::Positive,
        }
    }

    /// Default problem of the given kind.
    pub fn preset(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Landau => Self::landau(),
            ProblemKind::TwoStream => Self::two_stream(),
            ProblemKind::SemiGaussian => Self::semi_gaussian(0.5),
        }
    }

    /// Resets the spatial domain to one period of the perturbation.
    pub fn with_wavenumbers(mut self, k: [f64; 2]) -> Self {
        self.k = k;
        if self.bc == FieldBc::Periodic {
            self.lo = [0.0, 0.0];
            self.hi = [2.0 * PI / k[0], 2.0 * PI / k[1]];
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        for d in 0..2 {
            if !(self.hi[d] > self.lo[d]) || !self.lo[d].is_finite() || !self.hi[d].is_finite() {
                return bad(format!("empty spatial domain in direction {d}"));
            }
        }
        match self.kind {
            ProblemKind::Landau | ProblemKind::TwoStream => {
                if self.bc != FieldBc::Periodic {
                    return bad(format!("{} requires periodic boundaries", self.kind.name()));
                }
                for d in 0..2 {
                    if !(self.k[d] > 0.0 && self.k[d].is_finite()) {
                        return bad(format!("wavenumber k[{d}] must be positive, got {}", self.k[d]));
                    }
                    let period = 2.0 * PI / self.k[d];
                    if self.lo[d] != 0.0 || (self.hi[d] - period).abs() > 1e-12 * period {
                        return bad(format!("domain in direction {d} must be [0, 2pi/k] = [0, {period}]"));
                    }
                }
            }
            ProblemKind::SemiGaussian => {
                if self.bc != FieldBc::FreeSpace {
                    return bad("beam requires free-space boundaries".into());
                }
                if !(self.eta > 0.0 && self.eta < 1.0) {
                    return bad(format!("tune depression eta must lie in (0, 1), got {}", self.eta));
                }
            }
        }
        Ok(())
    }

    pub fn phase_lo(&self) -> Vec4 {
        [self.lo[0], self.lo[1], -self.v_max, -self.v_max]
    }

    pub fn phase_hi(&self) -> Vec4 {
        [self.hi[0], self.hi[1], self.v_max, self.v_max]
    }

    pub fn periodic(&self) -> [bool; 4] {
        let p = self.bc == FieldBc::Periodic;
        [p, p, false, false]
    }

    pub fn f0(&self, p: Vec4) -> f64 {
        match self.kind {
            ProblemKind::Landau => landau_f0(p, self.alpha, self.k),
            ProblemKind::TwoStream => twostream_f0(p, self.alpha, self.k[0]),
            ProblemKind::SemiGaussian => semigaussian_f0(p, self.eta),
        }
    }

    pub fn external_field(&self) -> Option<MatchingField> {
        (self.kind == ProblemKind::SemiGaussian).then(|| MatchingField::new(self.eta))
    }
}

/// `(1/2π) exp(-|v|²/2) (1 + α cos(k_x x) cos(k_y y))`.
pub fn landau_f0(p: Vec4, alpha: f64, k: [f64; 2]) -> f64 {
    let [x, y, vx, vy] = p;
    (-(vx * vx + vy * vy) / 2.0).exp() / (2.0 * PI) * (1.0 + alpha * (k[0] * x).cos() * (k[1] * y).cos())
}

/// `(1/12π) exp(-|v|²/2) (1 + α cos(k_x x)) (1 + 5 vx²)`.
pub fn twostream_f0(p: Vec4, alpha: f64, kx: f64) -> f64 {
    let [x, _, vx, vy] = p;
    (-(vx * vx + vy * vy) / 2.0).exp() / (12.0 * PI) * (1.0 + alpha * (kx * x).cos()) * (1.0 + 5.0 * vx * vx)
}

/// Uniform unit disc in space times a Maxwellian, with amplitude
/// `4(1-η²)/(πη²)`.
pub fn semigaussian_f0(p: Vec4, eta: f64) -> f64 {
    let [x, y, vx, vy] = p;
    if x * x + y * y <= 1.0 {
        4.0 * (1.0 - eta * eta) / (PI * eta * eta) * (-(vx * vx + vy * vy) / 2.0).exp()
    } else {
        0.0
    }
}

/// `-(4/η²)(x, y)`.
pub fn matching_field(x: [f64; 2], eta: f64) -> [f64; 2] {
    MatchingField::new(eta).at(x, 0.0)
}

/// Linear focusing field `-c (x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingField {
    pub coefficient: f64,
}

impl MatchingField {
    pub fn new(eta: f64) -> Self {
        Self { coefficient: 4.0 / (eta * eta) }
    }
}

impl ExternalField for MatchingField {
    fn at(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        [-self.coefficient * x[0], -self.coefficient * x[1]]
    }
}

/// Stationary K-V beam. `focusing` holds the focusing wavenumbers, so the
/// linear restoring term of the envelope equation is `k² a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KvBeam {
    pub emittance: [f64; 2],
    pub radius: [f64; 2],
    pub perveance: f64,
    pub focusing: [f64; 2],
}

impl KvBeam {
    /// Round beam matched to the given perveance, focusing and emittance.
    pub fn matched(perveance: f64, focusing: f64, emittance: f64) -> Result<Self> {
        let a = kv_envelope_radius(perveance, focusing, emittance)?;
        Ok(Self { emittance: [emittance; 2], radius: [a; 2], perveance, focusing: [focusing; 2] })
    }

    /// The beam in units where `x0 = a` and `v0 = ε v_b / (2a)`: radius 1,
    /// emittance 2, focusing `2/η`, perveance `4(1-η²)/η²`.
    pub fn normalized(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("tune depression eta must lie in (0, 1), got {eta}")));
        }
        let k = 2.0 / eta;
        Self::matched(k * k * (1.0 - eta * eta), k, 2.0)
    }

    /// Envelope equation residuals for both axes.
    pub fn residual(&self) -> [f64; 2] {
        let [a, b] = self.radius;
        [
            envelope_residual(a, b, self.perveance, self.focusing[0], self.emittance[0]),
            envelope_residual(b, a, self.perveance, self.focusing[1], self.emittance[1]),
        ]
    }

    pub fn rms_targets(&self) -> RmsMoments {
        let [a, b] = self.radius;
        RmsMoments { x: a / 2.0, y: b / 2.0, vx: self.emittance[0] / (2.0 * a), vy: self.emittance[1] / (2.0 * b) }
    }

    /// Normalized charge per unit length, `2πK`.
    pub fn line_charge(&self) -> f64 {
        2.0 * PI * self.perveance
    }
}

/// `k² a - 2K/(a+b) - ε²/a³`.
pub fn envelope_residual(a: f64, b: f64, perveance: f64, focusing: f64, emittance: f64) -> f64 {
    focusing * focusing * a - 2.0 * perveance / (a + b) - emittance * emittance / (a * a * a)
}

/// `a = sqrt((K + sqrt(K² + 4k²ε²)) / (2k²))`.
pub fn kv_envelope_radius(perveance: f64, focusing: f64, emittance: f64) -> Result<f64> {
    if focusing == 0.0 {
        return Err(Error::InvalidParameter("focusing strength is zero; the envelope radius divides by it".into()));
    }
    if !(focusing > 0.0 && emittance > 0.0 && perveance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need k > 0, emittance > 0, K >= 0; got k = {focusing}, emittance = {emittance}, K = {perveance}"
        )));
    }
    let k2 = focusing * focusing;
    let disc = (perveance * perveance + 4.0 * k2 * emittance * emittance).sqrt();
    Ok(((perveance + disc) / (2.0 * k2)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsMoments {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// `(a', b', c', d')` with `f(x, v) = N f'(x/a', y/b', vx/c', vy/d')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactors {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Scale factors that give `f'` the RMS sizes of the K-V beam.
pub fn equivalent_beam_scaling(moments: &RmsMoments, target: &KvBeam) -> Result<ScaleFactors> {
    let m = [moments.x, moments.y, moments.vx, moments.vy];
    if m.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate(format!("RMS moments must be positive, got {m:?}")));
    }
    let t = target.rms_targets();
    Ok(ScaleFactors { a: t.x / moments.x, b: t.y / moments.y, c: t.vx / moments.vx, d: t.vy / moments.vy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    X,
    Y,
    Vx,
    Vy,
}

/// Charge-weighted `sqrt(Σ q χ² / Σ q)`.
pub fn rms(particles: &ParticleSet, coordinate: Coordinate) -> Result<f64> {
    if particles.is_empty() {
        return Err(Error::Degenerate("RMS of an empty particle set".into()));
    }
    let values = match coordinate {
        Coordinate::X => &particles.x,
        Coordinate::Y => &particles.y,
        Coordinate::Vx => &particles.vx,
        Coordinate::Vy => &particles.vy,
    };
    let w = crate::sum::accurate_sum(particles.q.iter().copied());
    if !(w > 0.0) {
        return Err(Error::Degenerate(format!("total weight {w} is not positive")));
    }
    let m2 = crate::sum::accurate_sum(values.iter().zip(&particles.q).map(|(c, q)| q * c * c));
    Ok((m2 / w).sqrt())
}

pub fn rms_moments(particles: &ParticleSet) -> Result<RmsMoments> {
    Ok(RmsMoments {
        x: rms(particles, Coordinate::X)?,
        y: rms(particles, Coordinate::Y)?,
        vx: rms(particles, Coordinate::Vx)?,
        vy: rms(particles, Coordinate::Vy)?,
    })
}

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A round beam in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalBeam {
    pub mass: f64,
    pub charge: f64,
    pub current: f64,
    pub velocity: f64,
    pub radius: f64,
    pub eta: f64,
}

impl PhysicalBeam {
    /// Singly ionized potassium, 0.2 A at 0.63e6 m/s, radius 2 cm.
    pub fn potassium(eta: f64) -> Self {
        Self {
            mass: 39.0983 * ATOMIC_MASS,
            charge: ELEMENTARY_CHARGE,
            current: 0.2,
            velocity: 0.63e6,
            radius: 0.02,
            eta,
        }
    }

    pub fn normalize(&self) -> Result<Normalization> {
        let vals = [self.mass, self.charge, self.current, self.velocity, self.radius];
        if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("beam parameters must be positive, got {self:?}")));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("tune depression eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.velocity >= SPEED_OF_LIGHT {
            return Err(Error::InvalidParameter("beam velocity must be below the speed of light".into()));
        }
        let (m, q, vb, a, eta) = (self.mass, self.charge, self.velocity, self.radius, self.eta);
        let gamma = 1.0 / (1.0 - (vb / SPEED_OF_LIGHT).powi(2)).sqrt();
        let line_density = self.current / (q * vb);
        let perveance = q * q * line_density / (2.0 * PI * VACUUM_PERMITTIVITY * gamma.powi(3) * m * vb * vb);
        let focusing = (perveance / (a * a * (1.0 - eta * eta))).sqrt();
        let emittance = eta * a * a * focusing;
        let x0 = a;
        let v0 = emittance * vb / (2.0 * a);
        Ok(Normalization {
            gamma,
            line_density,
            perveance,
            focusing,
            emittance,
            external_gradient: gamma * m * (focusing * vb).powi(2) / q,
            x0,
            v0,
            z0: x0 * vb / v0,
            n0: VACUUM_PERMITTIVITY * m * v0 * v0 / (q * q * x0 * x0),
            e0: m * v0 * v0 / (q * x0),
            k0: gamma * m * v0 * v0 / (q * x0 * x0),
        })
    }
}

/// SI beam quantities and the scales that make the beam dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub gamma: f64,
    /// Particles per metre.
    pub line_density: f64,
    pub perveance: f64,
    /// Focusing wavenumber, 1/m.
    pub focusing: f64,
    pub emittance: f64,
    /// `E^e = -external_gradient (x, y)`, V/m².
    pub external_gradient: f64,
    pub x0: f64,
    pub v0: f64,
    pub z0: f64,
    pub n0: f64,
    pub e0: f64,
    pub k0: f64,
}

impl Normalization {
    /// Dimensionless focusing field coefficient, `4/η²`.
    pub fn normalized_gradient(&self) -> f64 {
        self.external_gradient / self.k0
    }

    /// Dimensionless charge per unit length, `8πγ³(1-η²)/η²`.
    pub fn normalized_line_density(&self) -> f64 {
        self.line_density / (self.n0 * self.x0 * self.x0)
    }

    /// The same beam in normalized units.
    pub fn normalized_beam(&self) -> KvBeam {
        let s = self.z0 / self.x0;
        let k = self.focusing * self.z0;
        KvBeam {
            emittance: [self.emittance * s / self.x0; 2],
            radius: [1.0; 2],
            perveance: self.perveance * s * s,
            focusing: [k; 2],
        }
    }
}
