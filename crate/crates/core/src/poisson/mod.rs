//! Poisson solvers for the 2D physical-space potential, and the field
//! solvers that couple them to particles.

pub mod freespace;
pub mod periodic;

use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::particles::{deposit_charge, wrap_periodic, FieldSolver, ParticleSet};

pub use freespace::FreeSpacePoisson;
pub use periodic::{compute_e, PeriodicPoisson};

/// Doubly periodic box with a uniform neutralizing background.
#[derive(Debug)]
pub struct PeriodicFieldSolver {
    template: ScalarField,
    op: PeriodicPoisson,
}

impl PeriodicFieldSolver {
    pub fn new(n: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        let op = PeriodicPoisson::new(n, spacing, true)?;
        Ok(Self { template: op.grid(origin), op })
    }

    pub fn grid(&self) -> &ScalarField {
        &self.template
    }
}

impl FieldSolver for PeriodicFieldSolver {
    fn solve(&mut self, particles: &ParticleSet) -> Result<VectorField> {
        let mut rhs = deposit_charge(particles, &self.template)?;
        let sign = particles.species.sign();
        rhs.values.iter_mut().for_each(|v| *v *= sign);
        let phi = self.op.solve(&rhs)?;
        Ok(compute_e(&phi))
    }

    fn wrap_positions(&self, particles: &mut ParticleSet) {
        let [lx, ly] = self.template.lengths();
        wrap_periodic(&mut particles.x, self.template.origin[0], lx);
        wrap_periodic(&mut particles.y, self.template.origin[1], ly);
    }
}

/// Isolated charge in an unbounded plane. Charge must stay on the node box
/// given at construction; a particle leaving it is reported as an error.
#[derive(Debug)]
pub struct FreeSpaceFieldSolver {
    op: FreeSpacePoisson,
    template: ScalarField,
}

impl FreeSpaceFieldSolver {
    pub fn new(n: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        let op = FreeSpacePoisson::with_default_padding(n, spacing, origin)?;
        let template = op.charge_grid();
        Ok(Self { op, template })
    }

    pub fn grid(&self) -> &ScalarField {
        &self.template
    }

    pub fn potential(&self, particles: &ParticleSet) -> Result<ScalarField> {
        let mut rhs = deposit_charge(particles, &self.template)?;
        let sign = particles.species.sign();
        rhs.values.iter_mut().for_each(|v| *v *= sign);
        self.op.solve(&rhs)
    }
}

impl FieldSolver for FreeSpaceFieldSolver {
    fn solve(&mut self, particles: &ParticleSet) -> Result<VectorField> {
        let phi = self.potential(particles)?;
        Ok(self.op.field_on_charge_grid(&phi))
    }
}
