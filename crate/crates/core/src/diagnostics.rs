//! Field amplitudes, damping and growth fits, Richardson error estimates and
//! the (x, vx) projection of the particle distribution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Boundary, VectorField};
use crate::particles::{u1, ParticleSet};

/// One row of the per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub ex_l2: f64,
    pub ex_linf: f64,
    pub ey_l2: f64,
    pub total_q: f64,
    pub rms_x: f64,
    pub rms_vx: f64,
    /// Minimum cell value at the most recent remap; NaN before the first.
    pub minf: f64,
}

impl Record {
    pub const COLUMNS: [&'static str; 8] = ["t", "ex_l2", "ex_linf", "ey_l2", "total_q", "rms_x", "rms_vx", "minf"];

    pub fn values(&self) -> [f64; 8] {
        [self.t, self.ex_l2, self.ex_linf, self.ey_l2, self.total_q, self.rms_x, self.rms_vx, self.minf]
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        Self { t: v[0], ex_l2: v[1], ex_linf: v[2], ey_l2: v[3], total_q: v[4], rms_x: v[5], rms_vx: v[6], minf: v[7] }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    records: Vec<Record>,
}

impl TimeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; times must increase strictly.
    pub fn push(&mut self, r: Record) -> Result<()> {
        if !r.t.is_finite() {
            return Err(Error::InvalidParameter(format!("time {} is not finite", r.t)));
        }
        if let Some(last) = self.records.last() {
            if !(r.t > last.t) {
                return Err(Error::InvalidParameter(format!("time {} does not follow {}", r.t, last.t)));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&Record) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude {
    /// `sqrt(sum_j E_j² hx hy)` per component.
    pub l2: [f64; 2],
    pub linf: [f64; 2],
}

pub fn field_amplitude(e: &VectorField) -> Amplitude {
    let area = e.cell_area();
    let mut l2 = [0.0; 2];
    let mut linf = [0.0f64; 2];
    for v in &e.values {
        for d in 0..2 {
            l2[d] += v[d] * v[d];
            linf[d] = linf[d].max(v[d].abs());
        }
    }
    Amplitude { l2: l2.map(|s| (s * area).sqrt()), linf }
}

/// Minimum spacing, in samples, between two detected peaks.
pub const PEAK_SEPARATION: usize = 3;

/// Strict local maxima of `ln a` inside `[t0, t1]`, refined by the vertex of
/// the parabola through each maximum and its neighbors. Returns
/// `(time, ln amplitude)` pairs.
pub fn find_peaks(t: &[f64], a: &[f64], window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if t.len() != a.len() {
        return Err(Error::Shape(format!("{} times but {} amplitudes", t.len(), a.len())));
    }
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let mut idx: Vec<usize> = Vec::new();
    for i in 1..t.len().saturating_sub(1) {
        if t[i] < window.0 || t[i] > window.1 || !la[i].is_finite() {
            continue;
        }
        if la[i] > la[i - 1] && la[i] > la[i + 1] {
            match idx.last() {
                Some(&p) if i - p < PEAK_SEPARATION => {
                    if la[i] > la[p] {
                        *idx.last_mut().unwrap() = i;
                    }
                }
                _ => idx.push(i),
            }
        }
    }
    Ok(idx
        .into_iter()
        .map(|i| {
            // p(s) = y1 + b s + c s² through the maximum and its neighbors
            let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            let d0 = (la[i] - la[i - 1]) / h0;
            let d1 = (la[i + 1] - la[i]) / h1;
            let c = (d1 - d0) / (h0 + h1);
            let b = d0 + c * h0;
            let s = (-b / (2.0 * c)).clamp(-h0, h1);
            (t[i] + s, la[i] + b * s + c * s * s)
        })
        .collect())
}

/// Exponent of the envelope: least-squares slope of ln(peak amplitude)
/// against peak time. A constant signal has rate 0.
pub fn fit_damping_rate(t: &[f64], a: &[f64], window: (f64, f64)) -> Result<f64> {
    let inside: Vec<f64> =
        t.iter().zip(a).filter(|(t, _)| **t >= window.0 && **t <= window.1).map(|(_, a)| *a).collect();
    if inside.len() >= 3 && inside.iter().all(|v| *v == inside[0]) && inside[0] > 0.0 {
        return Ok(0.0);
    }
    let peaks = find_peaks(t, a, window)?;
    if peaks.len() < 3 {
        return Err(Error::Fit(format!(
            "found {} peaks in [{}, {}], need at least 3",
            peaks.len(),
            window.0,
            window.1
        )));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = peaks.into_iter().unzip();
    Ok(least_squares_slope(&ts, &ys))
}

/// Least-squares slope of `ln a` against `t` over all samples in the window.
pub fn fit_growth_rate(t: &[f64], a: &[f64], window: (f64, f64)) -> Result<f64> {
    if t.len() != a.len() {
        return Err(Error::Shape(format!("{} times but {} amplitudes", t.len(), a.len())));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(a)
        .filter(|(t, a)| **t >= window.0 && **t <= window.1 && **a > 0.0)
        .map(|(t, a)| (*t, a.ln()))
        .unzip();
    if ts.len() < 2 {
        return Err(Error::Fit(format!("fewer than 2 positive samples in [{}, {}]", window.0, window.1)));
    }
    Ok(least_squares_slope(&ts, &ys))
}

/// Largest growth rate over windows of the given width sliding by one
/// sample. Returns `(window start, rate)`.
pub fn max_sliding_growth_rate(t: &[f64], a: &[f64], width: f64) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &t0 in t {
        if t0 + width > t[t.len() - 1] {
            break;
        }
        let r = fit_growth_rate(t, a, (t0, t0 + width))?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((t0, r));
        }
    }
    best.ok_or_else(|| Error::Fit(format!("series is shorter than the window width {width}")))
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn nested(fine: &VectorField, coarse: &VectorField) -> Result<()> {
    if fine.bc != coarse.bc {
        return Err(Error::NotNested("boundary conditions differ".into()));
    }
    for d in 0..2 {
        let want = match fine.bc {
            Boundary::Periodic => 2 * coarse.n[d],
            Boundary::Dirichlet => 2 * coarse.n[d] - 1,
        };
        let h = coarse.spacing[d];
        if fine.n[d] != want
            || (2.0 * fine.spacing[d] - h).abs() > 1e-12 * h
            || (fine.origin[d] - coarse.origin[d]).abs() > 1e-12 * h
        {
            return Err(Error::NotNested(format!(
                "direction {d}: fine has {} nodes at spacing {}, coarse {} at {}",
                fine.n[d], fine.spacing[d], coarse.n[d], h
            )));
        }
    }
    Ok(())
}

/// `max_j |E^h_j - E^2h_j|` per component over the coarse nodes, which
/// coincide with every other fine node.
pub fn richardson_error(fine: &VectorField, coarse: &VectorField) -> Result<[f64; 2]> {
    nested(fine, coarse)?;
    let mut e = [0.0f64; 2];
    for j in 0..coarse.n[1] {
        for i in 0..coarse.n[0] {
            let c = coarse.get(i, j);
            let f = fine.get(2 * i, 2 * j);
            for d in 0..2 {
                e[d] = e[d].max((f[d] - c[d]).abs());
            }
        }
    }
    Ok(e)
}

/// `min_d log2(e2h_d / eh_d)`.
pub fn convergence_order(e_2h: [f64; 2], e_h: [f64; 2]) -> Result<f64> {
    if e_2h.iter().chain(&e_h).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Degenerate(format!("order undefined for errors {e_2h:?} and {e_h:?}")));
    }
    Ok((0..2).map(|d| (e_2h[d] / e_h[d]).log2()).fold(f64::INFINITY, f64::min))
}

/// Nodes of an (x, vx) projection plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionGrid {
    pub lo: [f64; 2],
    pub spacing: [f64; 2],
    pub n: [usize; 2],
    /// Node `n[0]` is node 0 again.
    pub periodic_x: bool,
}

impl ProjectionGrid {
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.lo[0] + i as f64 * self.spacing[0], self.lo[1] + j as f64 * self.spacing[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub grid: ProjectionGrid,
    /// `F(x_i, vx_j)` at `values[j * n[0] + i]`.
    pub values: Vec<f64>,
    /// Particles whose coordinates were clamped to the grid edge.
    pub clamped: usize,
    pub clamped_charge: f64,
}

impl Projection {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.n[0] + i]
    }

    /// `sum F hx hv`.
    pub fn integral(&self) -> f64 {
        crate::sum::accurate_sum(self.values.iter().copied()) * self.grid.spacing[0] * self.grid.spacing[1]
    }
}

const PROJECTION_CHUNK: usize = 16384;

/// `F(x, vx) = ∫∫ f dy dvy` by tensor-product hat deposition of the
/// particle weights, divided by the projection cell area.
pub fn project_xvx(particles: &ParticleSet, grid: &ProjectionGrid) -> Result<Projection> {
    if grid.n.iter().any(|&n| n < 2) || grid.spacing.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidGrid(format!("projection grid needs 2+ nodes and positive spacing: {grid:?}")));
    }
    let [nx, nv] = grid.n;
    let inv_area = 1.0 / (grid.spacing[0] * grid.spacing[1]);
    let axis = |pos: f64, d: usize| -> (usize, usize, f64, bool) {
        let n = grid.n[d];
        let s = (pos - grid.lo[d]) / grid.spacing[d];
        if d == 0 && grid.periodic_x {
            let s = s.rem_euclid(n as f64);
            let b = (s.floor() as usize).min(n - 1);
            return (b, (b + 1) % n, s - b as f64, false);
        }
        let top = (n - 1) as f64;
        let clamped = !(0.0..=top).contains(&s);
        let s = s.clamp(0.0, top);
        let b = (s.floor() as usize).min(n - 2);
        (b, b + 1, s - b as f64, clamped)
    };
    let len = particles.len();
    let parts: Vec<(Vec<f64>, usize, f64)> = (0..len.div_ceil(PROJECTION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; nx * nv];
            let (mut clamped, mut clamped_q) = (0, 0.0);
            for k in c * PROJECTION_CHUNK..len.min((c + 1) * PROJECTION_CHUNK) {
                let q = particles.q[k];
                let (i0, i1, fx, cx) = axis(particles.x[k], 0);
                let (j0, j1, fv, cv) = axis(particles.vx[k], 1);
                if cx || cv {
                    clamped += 1;
                    clamped_q += q;
                }
                let w = q * inv_area;
                let (wx0, wx1) = (u1(fx), u1(1.0 - fx));
                let (wv0, wv1) = (u1(fv), u1(1.0 - fv));
                acc[j0 * nx + i0] += w * wv0 * wx0;
                acc[j0 * nx + i1] += w * wv0 * wx1;
                acc[j1 * nx + i0] += w * wv1 * wx0;
                acc[j1 * nx + i1] += w * wv1 * wx1;
            }
            (acc, clamped, clamped_q)
        })
        .collect();
    let mut values = vec![0.0; nx * nv];
    let (mut clamped, mut clamped_charge) = (0, 0.0);
    for (acc, c, q) in &parts {
        values.iter_mut().zip(acc).for_each(|(v, a)| *v += a);
        clamped += c;
        clamped_charge += q;
    }
    Ok(Projection { grid: *grid, values, clamped, clamped_charge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldGrid2D;
    use crate::particles::{Particle, Species};
    use std::f64::consts::PI;

    fn periodic_field(n: usize, len: f64, f: impl Fn(f64, f64) -> [f64; 2]) -> VectorField {
        let h = len / n as f64;
        let mut e = FieldGrid2D::zeros([n, n], [h, h], [0.0, 0.0], Boundary::Periodic).unwrap();
        for j in 0..n {
            for i in 0..n {
                let p = e.node(i, j);
                e.set(i, j, f(p[0], p[1]));
            }
        }
        e
    }

    #[test]
    fn amplitude_examples() {
        let zero = periodic_field(8, 1.0, |_, _| [0.0, 0.0]);
        assert_eq!(field_amplitude(&zero).l2, [0.0, 0.0]);
        let c = periodic_field(16, 3.0, |_, _| [2.5, 0.0]);
        assert!((field_amplitude(&c).l2[0] - 2.5 * 3.0).abs() < 1e-13);
        let s = periodic_field(64, 2.0 * PI, |x, _| [x.sin(), 0.0]);
        let a = field_amplitude(&s);
        assert!((a.l2[0] - (2.0 * PI * PI).sqrt()).abs() < 1e-3);
        assert!((a.l2[0] - 4.4429).abs() < 1e-3);
        assert!((a.linf[0] - 1.0).abs() < 1e-12);
    }

    fn sampled(gamma: f64, omega: f64, dt: f64, t_end: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..=(t_end / dt).round() as usize).map(|k| k as f64 * dt).collect();
        let a = t.iter().map(|t| (gamma * t).exp() * (omega * t).cos().abs()).collect();
        (t, a)
    }

    #[test]
    fn recovers_damping_rate() {
        let (t, a) = sampled(-0.394, 1.4156, 1e-3, 20.0);
        let g = fit_damping_rate(&t, &a, (0.0, 20.0)).unwrap();
        assert!((g + 0.394).abs() <= 1e-6, "{g}");
    }

    #[test]
    fn recovers_growth_rate_with_the_same_fit() {
        let (t, a) = sampled(0.2, 2.3, 1e-3, 15.0);
        let g = fit_damping_rate(&t, &a, (0.0, 15.0)).unwrap();
        assert!((g - 0.2).abs() <= 1e-6, "{g}");
    }

    #[test]
    fn constant_amplitude_has_zero_rate() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.125).collect();
        let a = vec![0.3; 100];
        assert_eq!(fit_damping_rate(&t, &a, (0.0, 20.0)).unwrap(), 0.0);
    }

    #[test]
    fn too_few_peaks_is_a_fit_error() {
        let (t, a) = sampled(-0.394, 1.0, 0.01, 5.0);
        assert!(matches!(fit_damping_rate(&t, &a, (0.0, 5.0)), Err(Error::Fit(_))));
    }

    #[test]
    fn close_peaks_are_merged() {
        let t: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let a = [1.0, 2.0, 1.0, 2.5, 1.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0];
        let p = find_peaks(&t, &a, (0.0, 12.0)).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0].0 - 3.0).abs() < 0.5 && (p[1].0 - 8.0).abs() < 0.5);
    }

    #[test]
    fn growth_fits() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let a: Vec<f64> = t.iter().map(|t| if *t < 10.0 { (0.3 * t).exp() } else { 3f64.exp() }).collect();
        assert!((fit_growth_rate(&t, &a, (1.0, 9.0)).unwrap() - 0.3).abs() < 1e-12);
        let (t0, r) = max_sliding_growth_rate(&t, &a, 4.0).unwrap();
        assert!((r - 0.3).abs() < 1e-12 && t0 <= 6.0);
        assert!(fit_growth_rate(&t, &a, (50.0, 60.0)).is_err());
    }

    #[test]
    fn richardson_examples() {
        let n = 16;
        let len = 2.0;
        let coarse = periodic_field(n, len, |x, y| [x * x, y]);
        let fine = periodic_field(2 * n, len, |x, y| [x * x, y]);
        assert_eq!(richardson_error(&fine, &coarse).unwrap(), [0.0, 0.0]);

        let mut bumped = fine.clone();
        let v = bumped.get(6, 4);
        bumped.set(6, 4, [v[0] + 1e-3, v[1]]);
        let e = richardson_error(&bumped, &coarse).unwrap();
        assert!((e[0] - 1e-3).abs() < 1e-15 && e[1] == 0.0);

        let h = len / (2 * n) as f64;
        let shifted = periodic_field(n, len, |x, y| [x * x + h * h, y]);
        let e = richardson_error(&fine, &shifted).unwrap();
        assert!((e[0] - h * h).abs() < 1e-15);
        // every coincident node differs by the same amount
        for j in 0..n {
            for i in 0..n {
                assert!(((shifted.get(i, j)[0] - fine.get(2 * i, 2 * j)[0]) - h * h).abs() < 1e-15);
            }
        }

        let odd = periodic_field(2 * n + 1, len, |_, _| [0.0, 0.0]);
        assert!(matches!(richardson_error(&odd, &coarse), Err(Error::NotNested(_))));
    }

    #[test]
    fn dirichlet_grids_nest_on_shared_endpoints() {
        let coarse = FieldGrid2D::<[f64; 2]>::zeros([5, 5], [0.5, 0.5], [-1.0, -1.0], Boundary::Dirichlet).unwrap();
        let fine = FieldGrid2D::<[f64; 2]>::zeros([9, 9], [0.25, 0.25], [-1.0, -1.0], Boundary::Dirichlet).unwrap();
        assert_eq!(richardson_error(&fine, &coarse).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn order_examples() {
        assert!((convergence_order([4e-3; 2], [1e-3; 2]).unwrap() - 2.0).abs() < 1e-12);
        assert!((convergence_order([2e-3; 2], [1e-3; 2]).unwrap() - 1.0).abs() < 1e-12);
        assert!((convergence_order([4e-3, 2e-3], [1e-3, 1e-3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(convergence_order([0.0, 1.0], [1.0, 1.0]), Err(Error::Degenerate(_))));
    }

    fn plane(periodic_x: bool) -> ProjectionGrid {
        ProjectionGrid { lo: [0.0, -2.0], spacing: [0.5, 0.25], n: [8, 17], periodic_x }
    }

    #[test]
    fn single_particle_on_a_node() {
        let g = plane(false);
        let mut p = ParticleSet::new(Species::Negative);
        let at = g.node(3, 5);
        p.push(Particle { x: [at[0], 0.7], v: [at[1], 0.1], q: 1.0 });
        let f = project_xvx(&p, &g).unwrap();
        assert_eq!(f.get(3, 5), 1.0 / (0.5 * 0.25));
        assert_eq!(f.values.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(f.clamped, 0);
    }

    #[test]
    fn projection_conserves_charge_and_flags_clamping() {
        let g = plane(true);
        let mut p = ParticleSet::new(Species::Negative);
        for k in 0..500 {
            let s = k as f64;
            p.push(Particle {
                x: [(s * 0.731) % 4.0, 0.0],
                v: [-2.3 + (s * 0.377) % 4.8, 0.0],
                q: 0.1 + (s * 0.13) % 1.0,
            });
        }
        let f = project_xvx(&p, &g).unwrap();
        let q = p.total_charge();
        assert!((f.integral() - q).abs() <= 1e-12 * q);
        assert!(f.clamped > 0);
        let outside: f64 = p.iter().filter(|p| p.v[0] < -2.0 || p.v[0] > 2.0).map(|p| p.q).sum();
        assert!((f.clamped_charge - outside).abs() < 1e-12);
    }

    #[test]
    fn uniform_lattice_projects_flat() {
        let g = ProjectionGrid { lo: [0.0, -2.0], spacing: [0.25, 0.25], n: [16, 17], periodic_x: true };
        let mut p = ParticleSet::new(Species::Negative);
        // two particles per projection cell in each direction
        for i in 0..32 {
            for j in 0..32 {
                p.push(Particle { x: [0.0625 + i as f64 * 0.125, 0.0], v: [-1.9375 + j as f64 * 0.125, 0.0], q: 1.0 });
            }
        }
        let f = project_xvx(&p, &g).unwrap();
        let flat = 4.0 / (0.25 * 0.25);
        for j in 1..16 {
            for i in 0..16 {
                assert!((f.get(i, j) - flat).abs() < 1e-12 * flat, "{i} {j} {}", f.get(i, j));
            }
        }
    }

    #[test]
    fn time_series_requires_increasing_times() {
        let mut s = TimeSeries::new();
        let r = Record::from_values([0.0, 1.0, 1.0, 0.0, 1.0, 0.5, 1.0, f64::NAN]);
        s.push(r).unwrap();
        assert!(s.push(r).is_err());
        s.push(Record { t: 0.125, ..r }).unwrap();
        assert_eq!(s.times(), vec![0.0, 0.125]);
        assert_eq!(Record::from_values(r.values()).values()[..7], r.values()[..7]);
    }
}
