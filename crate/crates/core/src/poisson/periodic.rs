use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Boundary, ScalarField, VectorField};

/// Five-point finite-difference Poisson operator on a doubly periodic node
/// grid, diagonalized exactly in Fourier space.
pub struct PeriodicPoisson {
    n: [usize; 2],
    spacing: [f64; 2],
    neutralize: bool,
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
    /// Eigenvalues of `-Δ^H`, zero for the mean mode.
    symbol: Vec<f64>,
}

impl std::fmt::Debug for PeriodicPoisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicPoisson")
            .field("n", &self.n)
            .field("spacing", &self.spacing)
            .field("neutralize", &self.neutralize)
            .finish()
    }
}

impl PeriodicPoisson {
    pub fn new(n: [usize; 2], spacing: [f64; 2], neutralize: bool) -> Result<Self> {
        if n.iter().any(|&k| k < 4 || k % 2 != 0) {
            return Err(Error::InvalidParameter(format!("periodic grid needs an even node count >= 4, got {n:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {spacing:?}")));
        }
        let mut planner = FftPlanner::new();
        let forward = [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1])];
        let inverse = [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1])];
        let eig = |m: usize, len: usize, h: f64| {
            (2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / len as f64).cos()) / (h * h)
        };
        let mut symbol = vec![0.0; n[0] * n[1]];
        for p in 0..n[1] {
            for m in 0..n[0] {
                symbol[m + n[0] * p] = eig(m, n[0], spacing[0]) + eig(p, n[1], spacing[1]);
            }
        }
        Ok(Self { n, spacing, neutralize, forward, inverse, symbol })
    }

    /// Grid with matching geometry and zero values.
    pub fn grid(&self, origin: [f64; 2]) -> ScalarField {
        ScalarField::zeros(self.n, self.spacing, origin, Boundary::Periodic).expect("validated at construction")
    }

    /// Solves `-Δ^H φ = rhs` with `mean(φ) = 0`. When the operator was built
    /// with a neutralizing background the mean of `rhs` is removed first;
    /// otherwise a nonzero mean is a solvability error.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        if rhs.n != self.n || rhs.spacing != self.spacing || rhs.bc != Boundary::Periodic {
            return Err(Error::Shape(format!(
                "rhs grid {:?}/{:?} does not match operator {:?}/{:?}",
                rhs.n, rhs.spacing, self.n, self.spacing
            )));
        }
        let mean = rhs.mean();
        if !self.neutralize && mean.abs() > 1e-12 * rhs.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Solvability { mean });
        }
        let mut data: Vec<Complex<f64>> = rhs.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2(&mut data, self.n, &self.forward);
        data[0] = Complex::new(0.0, 0.0);
        for (c, &lam) in data.iter_mut().zip(&self.symbol).skip(1) {
            *c /= lam;
        }
        fft2(&mut data, self.n, &self.inverse);
        let norm = 1.0 / (self.n[0] * self.n[1]) as f64;
        let mut phi = rhs.zeros_like::<f64>();
        for (p, c) in phi.values.iter_mut().zip(&data) {
            *p = c.re * norm;
        }
        Ok(phi)
    }
}

fn fft2(data: &mut [Complex<f64>], n: [usize; 2], plans: &[Arc<dyn Fft<f64>>; 2]) {
    plans[0].process(data);
    let mut column = vec![Complex::new(0.0, 0.0); n[1]];
    for i in 0..n[0] {
        for j in 0..n[1] {
            column[j] = data[i + n[0] * j];
        }
        plans[1].process(&mut column);
        for j in 0..n[1] {
            data[i + n[0] * j] = column[j];
        }
    }
}

/// `-Δ^H φ` with the five-point stencil. On Dirichlet grids only interior
/// nodes are filled; edge entries are zero.
pub fn neg_laplacian(phi: &ScalarField) -> ScalarField {
    let [nx, ny] = phi.n;
    let [hx, hy] = phi.spacing;
    let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let mut out = phi.zeros_like::<f64>();
    let periodic = phi.bc == Boundary::Periodic;
    for j in 0..ny {
        for i in 0..nx {
            let edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
            if !periodic && edge {
                continue;
            }
            let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
            let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
            let c = phi.get(i, j);
            let v =
                -(phi.get(ip, j) - 2.0 * c + phi.get(im, j)) * cx - (phi.get(i, jp) - 2.0 * c + phi.get(i, jm)) * cy;
            out.set(i, j, v);
        }
    }
    out
}

/// `E = -∇φ` by centered differences. Periodic grids wrap; on Dirichlet
/// grids the edge nodes use one-sided second-order differences.
pub fn compute_e(phi: &ScalarField) -> VectorField {
    let [nx, ny] = phi.n;
    let [hx, hy] = phi.spacing;
    let mut e = phi.zeros_like::<[f64; 2]>();
    let periodic = phi.bc == Boundary::Periodic;
    let derivative = |get: &dyn Fn(usize) -> f64, k: usize, len: usize, h: f64| -> f64 {
        if periodic {
            (get((k + len - 1) % len) - get((k + 1) % len)) / (2.0 * h)
        } else if k == 0 {
            (3.0 * get(0) - 4.0 * get(1) + get(2)) / (2.0 * h)
        } else if k == len - 1 {
            -(3.0 * get(k) - 4.0 * get(k - 1) + get(k - 2)) / (2.0 * h)
        } else {
            (get(k - 1) - get(k + 1)) / (2.0 * h)
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let ex = derivative(&|a| phi.get(a, j), i, nx, hx);
            let ey = derivative(&|b| phi.get(i, b), j, ny, hy);
            e.set(i, j, [ex, ey]);
        }
    }
    e
}
