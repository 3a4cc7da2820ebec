//! Periodic reconstruction of the particle distribution on the phase-space
//! grid: W4 deposit, interface transfer, positivity repair, regeneration.

pub mod field;
pub mod kernel;
pub mod positivity;
pub mod transfer;

use crate::error::{Error, Result};
use crate::grid::CompositeGrid;
use crate::particles::{Particle, ParticleSet};
use crate::sum::Accumulator;

pub use field::{deposit_w4_composite, CellKind, CompositeField, LevelField};
pub use kernel::{w4, w4_eval};
pub use positivity::{redistribute, redistribute_positivity, Lattice, PositivityReport};
pub use transfer::transfer_interface_charge;

#[derive(Debug, Clone, PartialEq)]
pub struct RemapConfig {
    /// Time steps between remaps.
    pub interval: usize,
    pub drop_threshold: f64,
    pub iterations: usize,
    /// Half-width of the redistribution neighborhood in cells.
    pub radius: usize,
    /// Largest neighborhood tried for a negative cell whose neighbors cannot
    /// absorb its undershoot.
    pub max_radius: usize,
}

impl Default for RemapConfig {
    fn default() -> Self {
        Self { interval: 5, drop_threshold: 1e-9, iterations: 3, radius: 1, max_radius: 3 }
    }
}

impl RemapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidParameter("remap interval must be >= 1".into()));
        }
        if !(self.drop_threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!("drop threshold must be >= 0, got {}", self.drop_threshold)));
        }
        if self.radius == 0 {
            return Err(Error::InvalidParameter("redistribution radius must be >= 1".into()));
        }
        if self.max_radius < self.radius {
            return Err(Error::InvalidParameter(format!(
                "max radius {} is below the redistribution radius {}",
                self.max_radius, self.radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RemapReport {
    pub charge_before: f64,
    pub charge_after: f64,
    /// Charge of regenerated particles below the drop threshold.
    pub dropped: f64,
    pub dropped_count: usize,
    /// Charge deposited outside the domain or carried by escaped particles.
    pub lost: f64,
    pub escaped: usize,
    pub particles_before: usize,
    pub particles_after: usize,
    pub positivity: PositivityReport,
}

impl RemapReport {
    /// `Q_after - Q_before + dropped + lost`.
    pub fn imbalance(&self) -> f64 {
        self.charge_after - self.charge_before + self.dropped + self.lost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regenerated {
    pub particles: ParticleSet,
    pub dropped: f64,
    pub dropped_count: usize,
}

/// One particle at the center of each valid cell with `q = f · volume`,
/// skipping `|q| < threshold`. Cells are visited level by level in storage
/// order, which is the quiet-start order.
pub fn regenerate_particles(
    field: &CompositeField,
    grid: &CompositeGrid,
    threshold: f64,
    species: crate::particles::Species,
) -> Regenerated {
    let mut particles = ParticleSet::new(species);
    let mut dropped = Accumulator::default();
    let mut dropped_count = 0;
    for level in &field.levels {
        for (k, (&f, kind)) in level.values.iter().zip(&level.kinds).enumerate() {
            if *kind != CellKind::Valid {
                continue;
            }
            let q = f * level.volume;
            if q.abs() < threshold || q == 0.0 {
                if q != 0.0 {
                    dropped.add(q);
                    dropped_count += 1;
                }
                continue;
            }
            let c = grid.cell_center(&crate::grid::CellId { level: level.level, idx: level.index_of(k) });
            particles.push(Particle { x: [c[0], c[1]], v: [c[2], c[3]], q });
        }
    }
    Regenerated { particles, dropped: dropped.value(), dropped_count }
}

/// Full remap. The returned particles replace the input set.
pub fn remap(
    particles: &ParticleSet,
    grid: &CompositeGrid,
    config: &RemapConfig,
) -> Result<(ParticleSet, RemapReport)> {
    let (out, report, _) = remap_with_field(particles, grid, config)?;
    Ok((out, report))
}

/// As [`remap`], also returning the repaired grid values.
pub fn remap_with_field(
    particles: &ParticleSet,
    grid: &CompositeGrid,
    config: &RemapConfig,
) -> Result<(ParticleSet, RemapReport, CompositeField)> {
    config.validate()?;
    let charge_before = particles.total_charge();
    let mut field = deposit_w4_composite(particles, grid)?;
    transfer_interface_charge(&mut field, grid);
    let positivity = redistribute_positivity(&mut field, config.radius, config.max_radius, config.iterations);
    let regen = regenerate_particles(&field, grid, config.drop_threshold, particles.species);
    let report = RemapReport {
        charge_before,
        charge_after: regen.particles.total_charge(),
        dropped: regen.dropped,
        dropped_count: regen.dropped_count,
        lost: field.lost,
        escaped: field.escaped,
        particles_before: particles.len(),
        particles_after: regen.particles.len(),
        positivity,
    };
    Ok((regen.particles, report, field))
}
