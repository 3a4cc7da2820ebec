//! Node-centered 2D grids in physical space.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// `n` nodes per dimension with period `n * spacing`.
    Periodic,
    /// `n` nodes spanning `[origin, origin + (n - 1) * spacing]`.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid2D<T> {
    pub n: [usize; 2],
    pub spacing: [f64; 2],
    pub origin: [f64; 2],
    pub bc: Boundary,
    pub values: Vec<T>,
}

pub type ScalarField = FieldGrid2D<f64>;
pub type VectorField = FieldGrid2D<[f64; 2]>;

impl<T: Copy + Default> FieldGrid2D<T> {
    pub fn zeros(n: [usize; 2], spacing: [f64; 2], origin: [f64; 2], bc: Boundary) -> Result<Self> {
        if spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {spacing:?}")));
        }
        if n.iter().any(|&k| k < 2) {
            return Err(Error::InvalidParameter(format!("grid needs at least 2 nodes per dimension, got {n:?}")));
        }
        Ok(Self { n, spacing, origin, bc, values: vec![T::default(); n[0] * n[1]] })
    }

    /// Same geometry, zero values, possibly another value type.
    pub fn zeros_like<U: Copy + Default>(&self) -> FieldGrid2D<U> {
        FieldGrid2D {
            n: self.n,
            spacing: self.spacing,
            origin: self.origin,
            bc: self.bc,
            values: vec![U::default(); self.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.index(i, j);
        self.values[k] = v;
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.spacing[0], self.origin[1] + j as f64 * self.spacing[1]]
    }

    pub fn same_geometry<U>(&self, other: &FieldGrid2D<U>) -> bool {
        self.n == other.n && self.spacing == other.spacing && self.origin == other.origin && self.bc == other.bc
    }

    /// Physical period (periodic grids) or span (Dirichlet grids).
    pub fn lengths(&self) -> [f64; 2] {
        match self.bc {
            Boundary::Periodic => [self.n[0] as f64 * self.spacing[0], self.n[1] as f64 * self.spacing[1]],
            Boundary::Dirichlet => [(self.n[0] - 1) as f64 * self.spacing[0], (self.n[1] - 1) as f64 * self.spacing[1]],
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }
}

impl ScalarField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }
}
