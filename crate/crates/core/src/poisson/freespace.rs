//! Infinite-domain Poisson solver after James: a homogeneous Dirichlet solve
//! on a slightly padded box, the surface charge it induces on that box, a
//! boundary-to-boundary Green's function convolution out to a larger box,
//! and a final inhomogeneous Dirichlet solve on the larger box.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Boundary, ScalarField, VectorField};

/// Free-space Green's function of `-Δ` in two dimensions.
#[inline]
pub fn green_2d(r: f64) -> f64 {
    -r.ln() / (2.0 * PI)
}

/// Rectangle of nodes with a one-node Dirichlet ring around `n` interior
/// nodes per dimension, solved by sine transforms.
pub struct DirichletDomain {
    pub n: [usize; 2],
    pub spacing: [f64; 2],
    /// Position of the corner boundary node.
    pub origin: [f64; 2],
    plans: [Arc<dyn Fft<f64>>; 2],
    symbol: Vec<f64>,
}

impl std::fmt::Debug for DirichletDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletDomain")
            .field("n", &self.n)
            .field("spacing", &self.spacing)
            .field("origin", &self.origin)
            .finish()
    }
}

impl DirichletDomain {
    pub fn new(n: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        if n.contains(&0) {
            return Err(Error::InvalidParameter("Dirichlet domain needs interior nodes".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {spacing:?}")));
        }
        let mut planner = FftPlanner::new();
        let plans = [planner.plan_fft_forward(2 * (n[0] + 1)), planner.plan_fft_forward(2 * (n[1] + 1))];
        let eig = |k: usize, m: usize, h: f64| (2.0 - 2.0 * (PI * k as f64 / (m + 1) as f64).cos()) / (h * h);
        let mut symbol = vec![0.0; n[0] * n[1]];
        for l in 0..n[1] {
            for k in 0..n[0] {
                symbol[k + n[0] * l] = eig(k + 1, n[0], spacing[0]) + eig(l + 1, n[1], spacing[1]);
            }
        }
        Ok(Self { n, spacing, origin, plans, symbol })
    }

    /// Node counts including the boundary ring.
    pub fn nodes(&self) -> [usize; 2] {
        [self.n[0] + 2, self.n[1] + 2]
    }

    pub fn grid(&self) -> ScalarField {
        ScalarField::zeros(self.nodes(), self.spacing, self.origin, Boundary::Dirichlet)
            .expect("validated at construction")
    }

    /// Boundary node indices, each listed once, counter-clockwise from the
    /// lower-left corner.
    pub fn boundary_nodes(&self) -> Vec<[usize; 2]> {
        let [nx, ny] = self.nodes();
        let mut out = Vec::with_capacity(2 * (nx + ny) - 4);
        out.extend((0..nx).map(|i| [i, 0]));
        out.extend((1..ny).map(|j| [nx - 1, j]));
        out.extend((0..nx - 1).rev().map(|i| [i, ny - 1]));
        out.extend((1..ny - 1).rev().map(|j| [0, j]));
        out
    }

    /// Solves `-Δ^H φ = rhs` on the interior with `φ = boundary` on the ring.
    /// Only interior entries of `rhs` and ring entries of `boundary` are read.
    pub fn solve(&self, rhs: &ScalarField, boundary: &ScalarField) -> Result<ScalarField> {
        let nodes = self.nodes();
        for (name, g) in [("rhs", rhs), ("boundary", boundary)] {
            if g.n != nodes {
                return Err(Error::Shape(format!("{name} has {:?} nodes, domain has {:?}", g.n, nodes)));
            }
        }
        let [mx, my] = self.n;
        let [hx, hy] = self.spacing;
        let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        let mut f = vec![0.0; mx * my];
        for j in 0..my {
            for i in 0..mx {
                let (gi, gj) = (i + 1, j + 1);
                let mut v = rhs.get(gi, gj);
                if i == 0 {
                    v += boundary.get(0, gj) * cx;
                }
                if i == mx - 1 {
                    v += boundary.get(mx + 1, gj) * cx;
                }
                if j == 0 {
                    v += boundary.get(gi, 0) * cy;
                }
                if j == my - 1 {
                    v += boundary.get(gi, my + 1) * cy;
                }
                f[i + mx * j] = v;
            }
        }
        self.dst2(&mut f);
        for (c, lam) in f.iter_mut().zip(&self.symbol) {
            *c /= lam;
        }
        self.dst2(&mut f);
        let scale = 4.0 / ((mx + 1) * (my + 1)) as f64;

        let mut phi = self.grid();
        for j in 0..nodes[1] {
            for i in 0..nodes[0] {
                let interior = i >= 1 && j >= 1 && i <= mx && j <= my;
                let v = if interior { f[(i - 1) + mx * (j - 1)] * scale } else { boundary.get(i, j) };
                phi.set(i, j, v);
            }
        }
        Ok(phi)
    }

    /// Unnormalized 2D DST-I in place.
    fn dst2(&self, data: &mut [f64]) {
        let [mx, my] = self.n;
        let mut line = vec![0.0; mx.max(my)];
        for j in 0..my {
            line[..mx].copy_from_slice(&data[mx * j..mx * (j + 1)]);
            dst1(&self.plans[0], &mut line[..mx]);
            data[mx * j..mx * (j + 1)].copy_from_slice(&line[..mx]);
        }
        for i in 0..mx {
            for j in 0..my {
                line[j] = data[i + mx * j];
            }
            dst1(&self.plans[1], &mut line[..my]);
            for j in 0..my {
                data[i + mx * j] = line[j];
            }
        }
    }
}

/// `S_k = sum_j a_j sin(pi j k / (m + 1))`, via an odd extension of length
/// `2(m + 1)`.
fn dst1(plan: &Arc<dyn Fft<f64>>, a: &mut [f64]) {
    let m = a.len();
    let len = 2 * (m + 1);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (j, &v) in a.iter().enumerate() {
        buf[j + 1] = Complex::new(v, 0.0);
        buf[len - 1 - j] = Complex::new(-v, 0.0);
    }
    plan.process(&mut buf);
    for (k, out) in a.iter_mut().enumerate() {
        *out = -0.5 * buf[k + 1].im;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: [f64; 2],
    /// Single-layer density, `-∂φ₁/∂n` with `n` the outward normal.
    pub strength: f64,
    /// Arc length attributed to the sample.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceCharge {
    pub samples: Vec<SurfaceSample>,
}

impl SurfaceCharge {
    /// `∑ strength · weight`; equals the enclosed charge by Gauss' law.
    pub fn total(&self) -> f64 {
        self.samples.iter().map(|s| s.strength * s.weight).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }
}

/// Outward normal derivative of `φ` at boundary node `b`, given the two
/// nodes `b - 1` and `b - 2` stepping inward.
#[inline]
pub fn outward_derivative(phi_b: f64, inner1: f64, inner2: f64, h: f64) -> f64 {
    (3.0 * phi_b - 4.0 * inner1 + inner2) / (2.0 * h)
}

/// Surface charge induced on the boundary of a homogeneous Dirichlet
/// solution. Every edge contributes all of its nodes with trapezoidal arc
/// weights, so corner nodes appear once per adjoining edge with half weight.
pub fn surface_charge(phi1: &ScalarField) -> Result<SurfaceCharge> {
    let [nx, ny] = phi1.n;
    if nx < 3 || ny < 3 {
        return Err(Error::Shape(format!("surface charge needs at least 3 nodes per dimension, got {:?}", phi1.n)));
    }
    let [hx, hy] = phi1.spacing;
    let tol = 1e-12 * phi1.max_abs().max(1.0);
    for i in 0..nx {
        for j in [0, ny - 1] {
            if phi1.get(i, j).abs() > tol {
                return Err(Error::Precondition(format!("φ₁ = {:e} on boundary node ({i}, {j})", phi1.get(i, j))));
            }
        }
    }
    for j in 0..ny {
        for i in [0, nx - 1] {
            if phi1.get(i, j).abs() > tol {
                return Err(Error::Precondition(format!("φ₁ = {:e} on boundary node ({i}, {j})", phi1.get(i, j))));
            }
        }
    }

    let mut samples = Vec::with_capacity(2 * (nx + ny));
    let arc = |k: usize, len: usize, h: f64| if k == 0 || k == len - 1 { 0.5 * h } else { h };
    for i in 0..nx {
        let w = arc(i, nx, hx);
        let bottom = outward_derivative(phi1.get(i, 0), phi1.get(i, 1), phi1.get(i, 2), hy);
        let top = outward_derivative(phi1.get(i, ny - 1), phi1.get(i, ny - 2), phi1.get(i, ny - 3), hy);
        samples.push(SurfaceSample { position: phi1.node(i, 0), strength: -bottom, weight: w });
        samples.push(SurfaceSample { position: phi1.node(i, ny - 1), strength: -top, weight: w });
    }
    for j in 0..ny {
        let w = arc(j, ny, hy);
        let left = outward_derivative(phi1.get(0, j), phi1.get(1, j), phi1.get(2, j), hx);
        let right = outward_derivative(phi1.get(nx - 1, j), phi1.get(nx - 2, j), phi1.get(nx - 3, j), hx);
        samples.push(SurfaceSample { position: phi1.node(0, j), strength: -left, weight: w });
        samples.push(SurfaceSample { position: phi1.node(nx - 1, j), strength: -right, weight: w });
    }
    Ok(SurfaceCharge { samples })
}

/// Potential of the surface charge at each target by direct summation.
pub fn boundary_convolution(src: &SurfaceCharge, targets: &[[f64; 2]]) -> Result<Vec<f64>> {
    targets
        .par_iter()
        .map(|t| {
            let mut acc = 0.0;
            for s in &src.samples {
                let r = ((t[0] - s.position[0]).powi(2) + (t[1] - s.position[1]).powi(2)).sqrt();
                if r <= 1e-12 * (1.0 + t[0].abs().max(t[1].abs())) {
                    return Err(Error::SingularKernel { target: *t });
                }
                acc += green_2d(r) * s.strength * s.weight;
            }
            Ok(acc)
        })
        .collect()
}

/// Padding defaults: two cells around the charge box, then a quarter of the
/// charge box's cell count (at least two cells).
pub fn default_outer_padding(n0: [usize; 2]) -> usize {
    ((n0[0].max(n0[1]) - 1) / 4).max(2)
}

/// James solver for charge supported on the node box `D₀`.
#[derive(Debug)]
pub struct FreeSpacePoisson {
    n0: [usize; 2],
    spacing: [f64; 2],
    origin: [f64; 2],
    inner_pad: usize,
    outer_pad: usize,
    inner: DirichletDomain,
    outer: DirichletDomain,
}

impl FreeSpacePoisson {
    /// `n0` nodes of `D₀` with the given spacing and lower-left node. `D₁`
    /// grows `D₀` by `inner_pad` cells per side, `D₂` grows `D₁` by
    /// `outer_pad`.
    pub fn new(
        n0: [usize; 2],
        spacing: [f64; 2],
        origin: [f64; 2],
        inner_pad: usize,
        outer_pad: usize,
    ) -> Result<Self> {
        if inner_pad < 2 || outer_pad < 1 {
            return Err(Error::InvalidParameter(format!(
                "padding must be >= 2 cells inside and >= 1 outside, got {inner_pad} and {outer_pad}"
            )));
        }
        if n0.iter().any(|&k| k < 2) {
            return Err(Error::InvalidParameter(format!("charge box needs >= 2 nodes per dimension, got {n0:?}")));
        }
        let grow = |o: [f64; 2], p: usize| [o[0] - p as f64 * spacing[0], o[1] - p as f64 * spacing[1]];
        let n1 = [n0[0] + 2 * inner_pad, n0[1] + 2 * inner_pad];
        let n2 = [n1[0] + 2 * outer_pad, n1[1] + 2 * outer_pad];
        let inner = DirichletDomain::new([n1[0] - 2, n1[1] - 2], spacing, grow(origin, inner_pad))?;
        let outer = DirichletDomain::new([n2[0] - 2, n2[1] - 2], spacing, grow(origin, inner_pad + outer_pad))?;
        Ok(Self { n0, spacing, origin, inner_pad, outer_pad, inner, outer })
    }

    pub fn with_default_padding(n0: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        Self::new(n0, spacing, origin, 2, default_outer_padding(n0))
    }

    /// Empty grid shaped like `D₀`.
    pub fn charge_grid(&self) -> ScalarField {
        ScalarField::zeros(self.n0, self.spacing, self.origin, Boundary::Dirichlet).expect("validated at construction")
    }

    pub fn inner_domain(&self) -> &DirichletDomain {
        &self.inner
    }

    pub fn outer_domain(&self) -> &DirichletDomain {
        &self.outer
    }

    /// Node offset of `D₀` inside `D₂`.
    pub fn charge_offset(&self) -> usize {
        self.inner_pad + self.outer_pad
    }

    fn embed(&self, rhs: &ScalarField, target: &mut ScalarField, offset: usize) {
        for j in 0..self.n0[1] {
            for i in 0..self.n0[0] {
                target.set(i + offset, j + offset, rhs.get(i, j));
            }
        }
    }

    /// Potential on `D₂` for the charge `rhs` given on `D₀`.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        if rhs.n != self.n0 || rhs.spacing != self.spacing {
            return Err(Error::Shape(format!("rhs grid {:?} does not match charge box {:?}", rhs.n, self.n0)));
        }
        // Step 1: homogeneous Dirichlet problem on D₁.
        let mut rhs1 = self.inner.grid();
        self.embed(rhs, &mut rhs1, self.inner_pad);
        let phi1 = self.inner.solve(&rhs1, &self.inner.grid())?;
        // Step 2: induced surface charge on ∂D₁.
        let sigma = surface_charge(&phi1)?;
        // Step 3: boundary values on ∂D₂.
        let ring = self.outer.boundary_nodes();
        let probe = self.outer.grid();
        let targets: Vec<[f64; 2]> = ring.iter().map(|&[i, j]| probe.node(i, j)).collect();
        let values = boundary_convolution(&sigma, &targets)?;
        let mut boundary = probe;
        for (&[i, j], v) in ring.iter().zip(values) {
            boundary.set(i, j, v);
        }
        // Step 4: inhomogeneous Dirichlet problem on D₂.
        let mut rhs2 = self.outer.grid();
        self.embed(rhs, &mut rhs2, self.charge_offset());
        self.outer.solve(&rhs2, &boundary)
    }

    /// `E = -∇φ` at the nodes of `D₀` by centered differences of the `D₂`
    /// potential.
    pub fn field_on_charge_grid(&self, phi2: &ScalarField) -> VectorField {
        let o = self.charge_offset();
        let mut e = self.charge_grid().zeros_like::<[f64; 2]>();
        let [hx, hy] = self.spacing;
        for j in 0..self.n0[1] {
            for i in 0..self.n0[0] {
                let (gi, gj) = (i + o, j + o);
                let ex = (phi2.get(gi - 1, gj) - phi2.get(gi + 1, gj)) / (2.0 * hx);
                let ey = (phi2.get(gi, gj - 1) - phi2.get(gi, gj + 1)) / (2.0 * hy);
                e.set(i, j, [ex, ey]);
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::periodic::neg_laplacian;

    fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.values.iter().zip(&b.values).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn interior_residual(phi: &ScalarField, rhs: &ScalarField) -> f64 {
        let lap = neg_laplacian(phi);
        let [nx, ny] = phi.n;
        let mut m: f64 = 0.0;
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                m = m.max((lap.get(i, j) - rhs.get(i, j)).abs());
            }
        }
        m
    }

    fn bump(x: [f64; 2], c: [f64; 2], r: f64) -> f64 {
        let d2 = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (r * r);
        if d2 < 1.0 {
            (1.0 - d2).powi(4)
        } else {
            0.0
        }
    }

    #[test]
    fn dirichlet_zero_problem() {
        let dom = DirichletDomain::new([7, 5], [0.3, 0.2], [0.0, 0.0]).unwrap();
        let phi = dom.solve(&dom.grid(), &dom.grid()).unwrap();
        assert!(phi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_reproduces_linear_harmonic() {
        let dom = DirichletDomain::new([9, 6], [0.25, 0.5], [-1.0, 2.0]).unwrap();
        let mut boundary = dom.grid();
        for [i, j] in dom.boundary_nodes() {
            let x = boundary.node(i, j);
            boundary.set(i, j, x[0]);
        }
        let phi = dom.solve(&dom.grid(), &boundary).unwrap();
        let [nx, ny] = dom.nodes();
        for j in 0..ny {
            for i in 0..nx {
                assert!((phi.get(i, j) - phi.node(i, j)[0]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dirichlet_operator_round_trip() {
        let dom = DirichletDomain::new([30, 24], [0.1, 0.125], [0.0, 0.0]).unwrap();
        let mut exact = dom.grid();
        for j in 0..26 {
            for i in 0..32 {
                let x = exact.node(i, j);
                exact.set(i, j, bump(x, [1.5, 1.6], 1.0));
            }
        }
        let rhs = neg_laplacian(&exact);
        let phi = dom.solve(&rhs, &dom.grid()).unwrap();
        assert!(max_abs_diff(&phi, &exact) < 1e-10);
        assert!(interior_residual(&phi, &rhs) <= 1e-10 * rhs.max_abs());
    }

    #[test]
    fn dirichlet_shape_mismatch() {
        let dom = DirichletDomain::new([4, 4], [1.0, 1.0], [0.0, 0.0]).unwrap();
        let wrong = ScalarField::zeros([5, 6], [1.0, 1.0], [0.0, 0.0], Boundary::Dirichlet).unwrap();
        assert!(matches!(dom.solve(&wrong, &dom.grid()), Err(Error::Shape(_))));
    }

    #[test]
    fn boundary_ring_lists_each_node_once() {
        let dom = DirichletDomain::new([3, 2], [1.0, 1.0], [0.0, 0.0]).unwrap();
        let ring = dom.boundary_nodes();
        assert_eq!(ring.len(), 2 * (5 + 4) - 4);
        let mut sorted = ring.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ring.len());
    }

    #[test]
    fn surface_charge_of_zero_and_ramp() {
        let zero = ScalarField::zeros([6, 6], [1.0, 1.0], [0.0, 0.0], Boundary::Dirichlet).unwrap();
        let s = surface_charge(&zero).unwrap();
        assert!(s.samples.iter().all(|x| x.strength == 0.0));
        assert!((s.perimeter() - 20.0).abs() < 1e-14);

        // values ..., 2h, h, 0 approaching the right edge
        let h = 0.5;
        assert_eq!(outward_derivative(0.0, h, 2.0 * h, h), -1.0);
    }

    #[test]
    fn surface_charge_rejects_nonzero_boundary() {
        let mut g = ScalarField::zeros([5, 5], [1.0, 1.0], [0.0, 0.0], Boundary::Dirichlet).unwrap();
        g.set(0, 2, 1e-6);
        assert!(matches!(surface_charge(&g), Err(Error::Precondition(_))));
    }

    #[test]
    fn surface_charge_satisfies_gauss_law() {
        // 64² charge grid; the surface charge lives on the padded box around it
        let n = 64;
        let h = 1.0 / (n - 1) as f64;
        let solver = FreeSpacePoisson::with_default_padding([n, n], [h, h], [0.0, 0.0]).unwrap();
        let mut rho = solver.charge_grid();
        for j in 0..n {
            for i in 0..n {
                let x = rho.node(i, j);
                rho.set(i, j, bump(x, [0.5, 0.5], 0.3));
            }
        }
        let q: f64 = rho.values.iter().sum::<f64>() * h * h;
        let dom = solver.inner_domain();
        let mut rhs = dom.grid();
        for j in 0..n {
            for i in 0..n {
                rhs.set(i + 2, j + 2, rho.get(i, j));
            }
        }
        let phi = dom.solve(&rhs, &dom.grid()).unwrap();
        let s = surface_charge(&phi).unwrap();
        assert!((s.total() - q).abs() <= 1e-3 * q, "{} vs {}", s.total(), q);
    }

    #[test]
    fn kernel_values() {
        let unit = SurfaceCharge { samples: vec![SurfaceSample { position: [0.0, 0.0], strength: 1.0, weight: 1.0 }] };
        let v = boundary_convolution(&unit, &[[1.0, 0.0], [0.0, std::f64::consts::E]]).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((v[1] + 0.15915).abs() < 1e-5);

        let pair = SurfaceCharge {
            samples: vec![
                SurfaceSample { position: [-1.0, 0.0], strength: 1.0, weight: 1.0 },
                SurfaceSample { position: [1.0, 0.0], strength: 1.0, weight: 1.0 },
            ],
        };
        let t = [0.0, 2.0];
        let both = boundary_convolution(&pair, &[t]).unwrap()[0];
        assert!((both - 2.0 * green_2d(5f64.sqrt())).abs() < 1e-15);

        assert!(matches!(boundary_convolution(&unit, &[[0.0, 0.0]]), Err(Error::SingularKernel { .. })));
    }

    fn blob_solver(n: usize, outer_pad: usize) -> (FreeSpacePoisson, ScalarField) {
        let h = 2.0 / (n - 1) as f64;
        let solver = FreeSpacePoisson::new([n, n], [h, h], [-1.0, -1.0], 2, outer_pad).unwrap();
        let mut rhs = solver.charge_grid();
        for j in 0..n {
            for i in 0..n {
                let x = rhs.node(i, j);
                rhs.set(i, j, bump(x, [0.0, 0.0], 0.5));
            }
        }
        let q: f64 = rhs.values.iter().sum::<f64>() * h * h;
        rhs.values.iter_mut().for_each(|v| *v /= q);
        (solver, rhs)
    }

    #[test]
    fn zero_charge_gives_zero_potential() {
        let (solver, _) = blob_solver(17, 4);
        let phi = solver.solve(&solver.charge_grid()).unwrap();
        assert!(phi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn far_field_follows_log_law() {
        let (solver, rhs) = blob_solver(41, 40);
        let phi = solver.solve(&rhs).unwrap();
        let o = solver.charge_offset();
        let c = o + 20;
        let h = rhs.spacing[0];
        let r_ref = 20.0 * h;
        let reference = phi.get(c + 20, c);
        for k in [24usize, 30, 40, 50] {
            let r = k as f64 * h;
            let got = phi.get(c + k, c) - reference;
            let want = -(r / r_ref).ln() / (2.0 * PI);
            assert!((got - want).abs() <= 0.01 * want.abs(), "r = {r}: {got} vs {want}");
        }
    }

    #[test]
    fn padding_does_not_change_interior_potential() {
        let n = 513;
        let (a, rhs) = blob_solver(n, default_outer_padding([n, n]));
        let (b, _) = blob_solver(n, 2 * default_outer_padding([n, n]));
        let pa = a.solve(&rhs).unwrap();
        let pb = b.solve(&rhs).unwrap();
        let (oa, ob) = (a.charge_offset(), b.charge_offset());
        let ref_a = pa.get(oa, oa);
        let ref_b = pb.get(ob, ob);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let va = pa.get(i + oa, j + oa) - ref_a;
                let vb = pb.get(i + ob, j + ob) - ref_b;
                worst = worst.max((va - vb).abs());
                scale = scale.max(va.abs());
            }
        }
        assert!(worst < 1e-6 * scale, "relative change {}", worst / scale);
    }

    #[test]
    fn linear_in_the_charge() {
        let (solver, rhs) = blob_solver(21, 5);
        let mut other = solver.charge_grid();
        for j in 0..21 {
            for i in 0..21 {
                let x = other.node(i, j);
                other.set(i, j, bump(x, [0.3, -0.2], 0.4));
            }
        }
        let mut combo = solver.charge_grid();
        for k in 0..combo.len() {
            combo.values[k] = 2.0 * rhs.values[k] - 0.5 * other.values[k];
        }
        let p1 = solver.solve(&rhs).unwrap();
        let p2 = solver.solve(&other).unwrap();
        let pc = solver.solve(&combo).unwrap();
        let scale = pc.max_abs();
        for k in 0..pc.len() {
            assert!((pc.values[k] - (2.0 * p1.values[k] - 0.5 * p2.values[k])).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn translation_shifts_potential() {
        let n = 25;
        let h = 0.1;
        let solver = FreeSpacePoisson::new([n, n], [h, h], [0.0, 0.0], 2, 6).unwrap();
        let place = |c: [f64; 2]| {
            let mut g = solver.charge_grid();
            for j in 0..n {
                for i in 0..n {
                    let x = g.node(i, j);
                    g.set(i, j, bump(x, c, 0.5));
                }
            }
            g
        };
        let pa = solver.solve(&place([1.0, 1.2])).unwrap();
        let pb = solver.solve(&place([1.0 + 3.0 * h, 1.2 - 2.0 * h])).unwrap();
        let o = solver.charge_offset();
        // compare around the blob, shifted by (3, -2) cells
        let mut worst: f64 = 0.0;
        for j in 4..18 {
            for i in 3..18 {
                let a = pa.get(o + i, o + j);
                let b = pb.get(o + i + 3, o + j - 2);
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-3 * pa.max_abs(), "{worst}");
    }

    #[test]
    fn converges_to_fine_reference() {
        // potential of the same blob on nested grids, sampled at shared nodes
        let sample = |n: usize| {
            let (solver, rhs) = blob_solver(n, (n - 1) / 2);
            let phi = solver.solve(&rhs).unwrap();
            let o = solver.charge_offset();
            let stride = (n - 1) / 8;
            let reference = phi.get(o, o);
            (0..=8).map(|k| phi.get(o + k * stride, o + 4 * stride) - reference).collect::<Vec<_>>()
        };
        let reference = sample(257);
        let err = |n: usize| sample(n).iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let (e1, e2) = (err(33), err(65));
        let order = (e1 / e2).log2();
        assert!(order >= 1.8, "order {order} ({e1}, {e2})");
    }
}
