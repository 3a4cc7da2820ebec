//! Particles, quiet-start loading, linear-kernel charge deposition and field
//! gather, and the midpoint Runge-Kutta push.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Boundary, FieldGrid2D, ScalarField, VectorField};
use crate::grid::{CompositeGrid, Vec4};
use crate::sum::{accurate_sum, Accumulator};

/// Particles per private accumulation grid during deposition. Fixed so the
/// summation order does not depend on the number of workers.
const DEPOSIT_CHUNK: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Species {
    /// Positive charges; acceleration follows the field.
    #[default]
    Positive,
    /// Negative charges; acceleration opposes the field.
    Negative,
}

impl Species {
    /// `(-1)^s`.
    pub fn sign(self) -> f64 {
        match self {
            Species::Positive => 1.0,
            Species::Negative => -1.0,
        }
    }

    pub fn from_exponent(s: u8) -> Result<Self> {
        match s {
            0 => Ok(Species::Positive),
            1 => Ok(Species::Negative),
            _ => Err(Error::InvalidParameter(format!("species sign must be 0 or 1, got {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub q: f64,
}

/// Structure-of-arrays particle storage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub q: Vec<f64>,
    pub species: Species,
}

impl ParticleSet {
    pub fn new(species: Species) -> Self {
        Self { species, ..Default::default() }
    }

    pub fn with_capacity(species: Species, n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            vx: Vec::with_capacity(n),
            vy: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            species,
        }
    }

    pub fn push(&mut self, p: Particle) {
        self.x.push(p.x[0]);
        self.y.push(p.x[1]);
        self.vx.push(p.v[0]);
        self.vy.push(p.v[1]);
        self.q.push(p.q);
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn get(&self, k: usize) -> Particle {
        Particle { x: [self.x[k], self.y[k]], v: [self.vx[k], self.vy[k]], q: self.q[k] }
    }

    pub fn phase_point(&self, k: usize) -> Vec4 {
        [self.x[k], self.y[k], self.vx[k], self.vy[k]]
    }

    pub fn iter(&self) -> impl Iterator<Item = Particle> + '_ {
        (0..self.len()).map(|k| self.get(k))
    }

    pub fn total_charge(&self) -> f64 {
        accurate_sum(self.q.iter().copied())
    }
}

/// Result of loading particles at valid-cell centers.
#[derive(Debug, Clone)]
pub struct QuietStart {
    pub particles: ParticleSet,
    /// Charge of the cells whose weight fell below the threshold.
    pub dropped_charge: f64,
    pub dropped_count: usize,
}

/// One particle per valid cell, at the cell center, with weight
/// `f0(center) * cell volume`. Weights with magnitude below `threshold` are
/// not stored.
pub fn quiet_start_init(
    grid: &CompositeGrid,
    f0: impl Fn(Vec4) -> f64,
    threshold: f64,
    species: Species,
) -> Result<QuietStart> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!("drop threshold must be >= 0, got {threshold}")));
    }
    let mut particles = ParticleSet::new(species);
    let mut dropped = Accumulator::default();
    let mut dropped_count = 0;
    let mut failure = None;
    grid.for_each_valid_cell(|cell| {
        if failure.is_some() {
            return;
        }
        let c = grid.cell_center(&cell);
        let f = f0(c);
        if !f.is_finite() {
            failure = Some(Error::NonFiniteDistribution { point: c });
            return;
        }
        let q = f * grid.level(cell.level).cell_volume();
        if q.abs() < threshold {
            if q != 0.0 {
                dropped.add(q);
            }
            dropped_count += 1;
        } else {
            particles.push(Particle { x: [c[0], c[1]], v: [c[2], c[3]], q });
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(QuietStart { particles, dropped_count, dropped_charge: dropped.value() })
}

/// First-order (hat) interpolation function.
#[inline]
pub fn u1(z: f64) -> f64 {
    let a = z.abs();
    if a <= 1.0 {
        1.0 - a
    } else {
        0.0
    }
}

/// The two nodes whose hat functions overlap `pos`, with their weights.
#[inline]
fn hat_stencil(pos: f64, origin: f64, h: f64, n: usize, bc: Boundary) -> Option<([usize; 2], [f64; 2])> {
    let s = (pos - origin) / h;
    if !s.is_finite() {
        return None;
    }
    let base = s.floor();
    let frac = s - base;
    let base = base as i64;
    let n = n as i64;
    match bc {
        Boundary::Periodic => {
            let i0 = base.rem_euclid(n) as usize;
            let i1 = (base + 1).rem_euclid(n) as usize;
            Some(([i0, i1], [1.0 - frac, frac]))
        }
        Boundary::Dirichlet => {
            if base < 0 || base > n - 1 || (base == n - 1 && frac > 0.0) {
                return None;
            }
            if base == n - 1 {
                let i = (n - 2) as usize;
                return Some(([i, i + 1], [0.0, 1.0]));
            }
            Some(([base as usize, base as usize + 1], [1.0 - frac, frac]))
        }
    }
}

/// Node indices and weights in x, then in y.
type Stencil2 = ([usize; 2], [f64; 2], [usize; 2], [f64; 2]);

#[inline]
fn stencil_2d<T>(grid: &FieldGrid2D<T>, x: f64, y: f64) -> Result<Stencil2> {
    let sx = hat_stencil(x, grid.origin[0], grid.spacing[0], grid.n[0], grid.bc);
    let sy = hat_stencil(y, grid.origin[1], grid.spacing[1], grid.n[1], grid.bc);
    match (sx, sy) {
        (Some((ix, wx)), Some((iy, wy))) => Ok((ix, wx, iy, wy)),
        _ => Err(Error::OutsideFieldGrid { x, y }),
    }
}

/// Charge density on the nodes of `grid`:
/// `rho_j = sum_k q_k u1((x_j - X_k)/hx) u1((y_j - Y_k)/hy) / (hx hy)`.
///
/// Particles are processed in fixed-size chunks, each into a private grid,
/// and the chunk grids are summed in chunk order.
pub fn deposit_charge(particles: &ParticleSet, grid: &ScalarField) -> Result<ScalarField> {
    let inv_area = 1.0 / grid.cell_area();
    let n = particles.len();
    let chunks = n.div_ceil(DEPOSIT_CHUNK);
    let partials = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; grid.len()];
            for k in c * DEPOSIT_CHUNK..n.min((c + 1) * DEPOSIT_CHUNK) {
                let (ix, wx, iy, wy) = stencil_2d(grid, particles.x[k], particles.y[k])?;
                let w = particles.q[k] * inv_area;
                for b in 0..2 {
                    let row = iy[b] * grid.n[0];
                    let wyb = w * wy[b];
                    for a in 0..2 {
                        acc[row + ix[a]] += wyb * wx[a];
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rho = grid.zeros_like::<f64>();
    for part in &partials {
        for (r, p) in rho.values.iter_mut().zip(part) {
            *r += p;
        }
    }
    Ok(rho)
}

/// Interpolates a nodal vector field to `pos` with the deposition kernel.
pub fn gather_field(e: &VectorField, pos: [f64; 2]) -> Result<[f64; 2]> {
    let (ix, wx, iy, wy) = stencil_2d(e, pos[0], pos[1])?;
    let mut out = [0.0; 2];
    for b in 0..2 {
        for a in 0..2 {
            let w = wx[a] * wy[b];
            let v = e.get(ix[a], iy[b]);
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
    }
    Ok(out)
}

/// Applied field `E^e(x, t)`.
pub trait ExternalField: Sync {
    fn at(&self, x: [f64; 2], t: f64) -> [f64; 2];
}

impl<F: Fn([f64; 2], f64) -> [f64; 2] + Sync> ExternalField for F {
    fn at(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self(x, t)
    }
}

/// No applied field.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoExternalField;

impl ExternalField for NoExternalField {
    fn at(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Produces the self-consistent field for the current particle positions.
pub trait FieldSolver: Send {
    fn solve(&mut self, particles: &ParticleSet) -> Result<VectorField>;

    /// Maps positions back into the spatial domain after a move. Bounded
    /// domains leave positions untouched.
    fn wrap_positions(&self, _particles: &mut ParticleSet) {}
}

/// Wraps coordinates into `[origin, origin + length)`.
pub fn wrap_periodic(values: &mut [f64], origin: f64, length: f64) {
    values.par_iter_mut().for_each(|x| {
        if *x < origin || *x >= origin + length {
            let mut w = origin + (*x - origin).rem_euclid(length);
            if w >= origin + length {
                w = origin;
            }
            *x = w;
        }
    });
}

/// `(-1)^s (E + E^e)` at every particle.
fn accelerations(particles: &ParticleSet, e: &VectorField, ext: &dyn ExternalField, t: f64) -> Result<Vec<[f64; 2]>> {
    let sign = particles.species.sign();
    (0..particles.len())
        .into_par_iter()
        .map(|k| {
            let pos = [particles.x[k], particles.y[k]];
            let ei = gather_field(e, pos)?;
            let ee = ext.at(pos, t);
            Ok([sign * (ei[0] + ee[0]), sign * (ei[1] + ee[1])])
        })
        .collect()
}

/// One midpoint RK2 step. Returns the self-consistent field at the start
/// of the step (time `t`).
pub fn rk2_step<S: FieldSolver + ?Sized>(
    particles: &mut ParticleSet,
    solver: &mut S,
    ext: &dyn ExternalField,
    dt: f64,
    t: f64,
) -> Result<VectorField> {
    let e0 = solver.solve(particles)?;
    rk2_advance(particles, &e0, solver, ext, dt, t)?;
    Ok(e0)
}

/// Midpoint RK2 given the field already solved at the start of the step:
/// predict to `t + dt/2`, re-deposit and re-solve there, then take the full
/// step with the midpoint velocity and acceleration. Weights never change.
pub fn rk2_advance<S: FieldSolver + ?Sized>(
    particles: &mut ParticleSet,
    e0: &VectorField,
    solver: &mut S,
    ext: &dyn ExternalField,
    dt: f64,
    t: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let half = 0.5 * dt;
    let a0 = accelerations(particles, e0, ext, t)?;

    let mut mid = particles.clone();
    mid.x.par_iter_mut().zip(&particles.vx).for_each(|(x, v)| *x += half * v);
    mid.y.par_iter_mut().zip(&particles.vy).for_each(|(y, v)| *y += half * v);
    mid.vx.par_iter_mut().zip(&a0).for_each(|(v, a)| *v += half * a[0]);
    mid.vy.par_iter_mut().zip(&a0).for_each(|(v, a)| *v += half * a[1]);
    drop(a0);
    solver.wrap_positions(&mut mid);

    let e_mid = solver.solve(&mid)?;
    let a_mid = accelerations(&mid, &e_mid, ext, t + half)?;

    particles.x.par_iter_mut().zip(&mid.vx).for_each(|(x, v)| *x += dt * v);
    particles.y.par_iter_mut().zip(&mid.vy).for_each(|(y, v)| *y += dt * v);
    particles.vx.par_iter_mut().zip(&a_mid).for_each(|(v, a)| *v += dt * a[0]);
    particles.vy.par_iter_mut().zip(&a_mid).for_each(|(v, a)| *v += dt * a[1]);
    solver.wrap_positions(particles);
    Ok(())
}
