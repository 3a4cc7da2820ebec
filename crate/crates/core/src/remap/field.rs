//! Gridded distribution function on a composite grid, and the W4 deposit
//! onto it.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{CompositeGrid, Index4, LevelBox, DIM};
use crate::particles::ParticleSet;
use crate::remap::kernel::w4_stencil;
use crate::sum::{accurate_sum, Accumulator};

/// Cells stored around each level box when storage is not sized from
/// particles.
const HALO: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Valid,
    /// Inside a box of this level but under the next finer level.
    Covered,
    /// Inside the domain but outside every box of this level.
    Halo,
}

/// Cell values of one level on a rectangular window of its index space.
/// Cells outside the window hold zero.
/// Dimension 0 is the slowest-varying storage index. Wrapping dimensions
/// store the whole periodic extent.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelField {
    pub level: usize,
    pub lo: Index4,
    pub shape: [usize; DIM],
    pub wrap: [bool; DIM],
    pub volume: f64,
    pub values: Vec<f64>,
    pub kinds: Vec<CellKind>,
}

impl LevelField {
    /// Storage over `window` (inclusive level indices), clipped to the
    /// domain. Periodic dimensions always cover the whole extent.
    fn new(grid: &CompositeGrid, level: usize, window: Option<LevelBox>) -> Self {
        let lev = grid.level(level);
        let periodic = grid.periodic();
        let mut lo = [0i64; DIM];
        let mut shape = [0usize; DIM];
        for d in 0..DIM {
            if periodic[d] {
                shape[d] = lev.extent[d] as usize;
            } else if let Some(w) = window {
                let l = w.lo[d].max(0);
                let h = w.hi[d].min(lev.extent[d] - 1);
                lo[d] = l;
                shape[d] = (h - l + 1).max(0) as usize;
            }
        }
        let len = shape.iter().product();
        let mut field = Self {
            level,
            lo,
            shape,
            wrap: periodic,
            volume: lev.cell_volume(),
            values: vec![0.0; len],
            kinds: Vec::new(),
        };
        field.kinds = (0..len)
            .into_par_iter()
            .map(|k| {
                let idx = field.index_of(k);
                if !lev.contains(&idx) {
                    CellKind::Halo
                } else if grid.is_covered(level, &idx) {
                    CellKind::Covered
                } else {
                    CellKind::Valid
                }
            })
            .collect();
        field
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> [usize; DIM] {
        let s = self.shape;
        [s[1] * s[2] * s[3], s[2] * s[3], s[3], 1]
    }

    /// Storage position of level index `idx`, wrapping periodic dimensions.
    pub fn offset(&self, idx: &Index4) -> Option<usize> {
        let strides = self.strides();
        let mut off = 0;
        for d in 0..DIM {
            let l = self.local(d, idx[d])?;
            off += l * strides[d];
        }
        Some(off)
    }

    #[inline]
    fn local(&self, d: usize, g: i64) -> Option<usize> {
        let n = self.shape[d] as i64;
        if self.wrap[d] {
            Some(g.rem_euclid(n) as usize)
        } else {
            let l = g - self.lo[d];
            (0..n).contains(&l).then_some(l as usize)
        }
    }

    pub fn index_of(&self, mut off: usize) -> Index4 {
        let mut idx = [0i64; DIM];
        for d in (0..DIM).rev() {
            idx[d] = self.lo[d] + (off % self.shape[d]) as i64;
            off /= self.shape[d];
        }
        idx
    }

    pub fn get(&self, idx: &Index4) -> Option<f64> {
        self.offset(idx).map(|k| self.values[k])
    }

    /// `∑ f · volume` over cells of the given kind.
    pub fn charge(&self, kind: CellKind) -> f64 {
        accurate_sum(self.values.iter().zip(&self.kinds).filter(|(_, k)| **k == kind).map(|(v, _)| v * self.volume))
    }
}

/// Distribution function on every level plus the charge that left the
/// domain while depositing.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeField {
    pub levels: Vec<LevelField>,
    /// Charge of stencil cells outside the phase-space domain and of
    /// particles that could not be located.
    pub lost: f64,
    /// Particles outside the phase-space domain.
    pub escaped: usize,
}

impl CompositeField {
    /// Storage for every cell of every level box plus a two-cell halo.
    pub fn zeros(grid: &CompositeGrid) -> Self {
        let windows = grid
            .levels()
            .iter()
            .map(|lev| {
                let mut w = lev.boxes.iter().copied().reduce(hull)?;
                for d in 0..DIM {
                    w.lo[d] -= HALO;
                    w.hi[d] += HALO;
                }
                Some(w)
            })
            .collect::<Vec<_>>();
        Self::with_windows(grid, &windows)
    }

    fn with_windows(grid: &CompositeGrid, windows: &[Option<LevelBox>]) -> Self {
        Self {
            levels: (0..grid.num_levels()).map(|l| LevelField::new(grid, l, windows[l])).collect(),
            lost: 0.0,
            escaped: 0,
        }
    }

    /// Charge held by valid cells.
    pub fn valid_charge(&self) -> f64 {
        accurate_sum(self.levels.iter().map(|l| l.charge(CellKind::Valid)))
    }

    /// Charge held by every stored cell.
    pub fn stored_charge(&self) -> f64 {
        accurate_sum(self.levels.iter().map(|l| accurate_sum(l.values.iter().map(|v| v * l.volume))))
    }

    /// Smallest and largest `f` over valid cells.
    pub fn valid_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for l in &self.levels {
            for (v, k) in l.values.iter().zip(&l.kinds) {
                if *k == CellKind::Valid {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
            }
        }
        (lo, hi)
    }

    /// Iterates over `(level, index, f)` of valid cells, level by level in
    /// storage order.
    pub fn valid_cells(&self) -> impl Iterator<Item = (usize, Index4, f64)> + '_ {
        self.levels.iter().flat_map(|l| {
            l.values
                .iter()
                .zip(&l.kinds)
                .enumerate()
                .filter(|(_, (_, k))| **k == CellKind::Valid)
                .map(move |(off, (v, _))| (l.level, l.index_of(off), *v))
        })
    }
}

fn hull(a: LevelBox, b: LevelBox) -> LevelBox {
    LevelBox { lo: std::array::from_fn(|d| a.lo[d].min(b.lo[d])), hi: std::array::from_fn(|d| a.hi[d].max(b.hi[d])) }
}

fn hull_opt(a: Option<LevelBox>, b: Option<LevelBox>) -> Option<LevelBox> {
    match (a, b) {
        (Some(a), Some(b)) => Some(hull(a, b)),
        (a, None) => a,
        (None, b) => b,
    }
}

fn intersect(a: LevelBox, b: LevelBox) -> Option<LevelBox> {
    let lo: Index4 = std::array::from_fn(|d| a.lo[d].max(b.lo[d]));
    let hi: Index4 = std::array::from_fn(|d| a.hi[d].min(b.hi[d]));
    (0..DIM).all(|d| lo[d] <= hi[d]).then_some(LevelBox { lo, hi })
}

/// Storage windows: the hull of each level's particle stencils, grown so
/// that parents of fine halo cells and children of covered coarse cells
/// are stored too.
fn stencil_windows(grid: &CompositeGrid, particles: &ParticleSet, levels: &[u8]) -> Vec<Option<LevelBox>> {
    let nl = grid.num_levels();
    let mut windows: Vec<Option<LevelBox>> = (0..nl)
        .map(|level| {
            (0..particles.len())
                .into_par_iter()
                .filter(|&k| levels[k] as usize == level)
                .map(|k| {
                    let st = stencils(grid, level, particles.phase_point(k));
                    Some(LevelBox { lo: std::array::from_fn(|d| st[d].0), hi: std::array::from_fn(|d| st[d].0 + 3) })
                })
                .reduce(|| None, hull_opt)
        })
        .collect();
    for level in (1..nl).rev() {
        if let Some(w) = windows[level] {
            let parent = w.coarsen(grid.level(level - 1).refine_ratio);
            windows[level - 1] = hull_opt(windows[level - 1], Some(parent));
        }
    }
    for level in 0..nl.saturating_sub(1) {
        let ratio = grid.level(level).refine_ratio;
        let Some(w) = windows[level] else { continue };
        for b in &grid.level(level + 1).boxes {
            if let Some(c) = intersect(w, b.coarsen(ratio)) {
                windows[level + 1] = hull_opt(windows[level + 1], Some(c.refine(ratio)));
            }
        }
    }
    windows
}

/// Per-particle stencil in the index space of the particle's level.
#[inline]
fn stencils(grid: &CompositeGrid, level: usize, p: [f64; DIM]) -> [(i64, [f64; 4]); DIM] {
    let lev = grid.level(level);
    let lo = grid.domain_lo();
    std::array::from_fn(|d| w4_stencil((p[d] - lo[d]) / lev.spacing[d]))
}

/// Deposits `q · ∏ W₄ / volume` of every particle onto the 4⁴ cells around
/// it, at the level of the valid cell that contains it. Cells of other
/// kinds keep their share for the interface transfer.
///
/// Each level is filled one dimension-0 plane at a time; a plane reads the
/// particles whose stencil starts at one of the four planes that can reach
/// it, so every plane has a single writer and a fixed summation order.
pub fn deposit_w4_composite(particles: &ParticleSet, grid: &CompositeGrid) -> Result<CompositeField> {
    const ESCAPED: u8 = u8::MAX;
    let n = particles.len();

    let levels: Vec<u8> = (0..n)
        .into_par_iter()
        .map(|k| match grid.locate_valid_cell(particles.phase_point(k)) {
            Ok(cell) => cell.level as u8,
            Err(_) => ESCAPED,
        })
        .collect();
    let mut field = CompositeField::with_windows(grid, &stencil_windows(grid, particles, &levels));

    // charge of stencil cells outside the stored window
    let outside: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            if levels[k] == ESCAPED {
                return particles.q[k];
            }
            let lf = &field.levels[levels[k] as usize];
            let st = stencils(grid, levels[k] as usize, particles.phase_point(k));
            let mut inside = 1.0;
            for d in 0..DIM {
                let (first, w) = st[d];
                inside *= (0..4).filter(|&j| lf.local(d, first + j as i64).is_some()).map(|j| w[j]).sum::<f64>();
            }
            particles.q[k] * (1.0 - inside)
        })
        .collect();
    let mut lost = Accumulator::default();
    for v in &outside {
        lost.add(*v);
    }
    field.lost = lost.value();
    field.escaped = levels.iter().filter(|&&l| l == ESCAPED).count();

    for lf in field.levels.iter_mut() {
        if lf.is_empty() {
            continue;
        }
        let level = lf.level;
        let n0 = lf.shape[0];
        // bucket key: first stencil plane, shifted by 3 on bounded dimensions
        let shift = if lf.wrap[0] { 0 } else { 3 };
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); n0 + 2 * shift];
        for k in 0..n {
            if levels[k] as usize != level {
                continue;
            }
            let first = stencils(grid, level, particles.phase_point(k))[0].0;
            let key = if lf.wrap[0] {
                first.rem_euclid(n0 as i64) as usize
            } else {
                let key = first - lf.lo[0] + shift as i64;
                debug_assert!(key >= 0 && (key as usize) < buckets.len());
                key as usize
            };
            buckets[key].push(k as u32);
        }

        let view = LevelView { lo: lf.lo, shape: lf.shape, wrap: lf.wrap, inv_volume: 1.0 / lf.volume };
        let plane_len = lf.shape[1] * lf.shape[2] * lf.shape[3];
        lf.values.par_chunks_mut(plane_len).enumerate().for_each(|(p, plane)| {
            for j in 0..4usize {
                let key =
                    if view.wrap[0] { (p as i64 - j as i64).rem_euclid(n0 as i64) as usize } else { p + shift - j };
                for &k in &buckets[key] {
                    let k = k as usize;
                    let st = stencils(grid, level, particles.phase_point(k));
                    let w0 = particles.q[k] * view.inv_volume * st[0].1[j];
                    view.scatter_plane(plane, &st, w0);
                }
            }
        });
    }
    Ok(field)
}

struct LevelView {
    lo: Index4,
    shape: [usize; DIM],
    wrap: [bool; DIM],
    inv_volume: f64,
}

impl LevelView {
    #[inline]
    fn local(&self, d: usize, g: i64) -> Option<usize> {
        let n = self.shape[d] as i64;
        if self.wrap[d] {
            Some(g.rem_euclid(n) as usize)
        } else {
            let l = g - self.lo[d];
            (0..n).contains(&l).then_some(l as usize)
        }
    }

    /// Adds `w0 · ∏_{d>0} W` onto one dimension-0 plane.
    #[inline]
    fn scatter_plane(&self, plane: &mut [f64], st: &[(i64, [f64; 4]); DIM], w0: f64) {
        let (s2, s1) = (self.shape[3], self.shape[2] * self.shape[3]);
        let idx = |d: usize| -> [Option<usize>; 4] { std::array::from_fn(|j| self.local(d, st[d].0 + j as i64)) };
        let (i1, i2, i3) = (idx(1), idx(2), idx(3));
        for a in 0..4 {
            let Some(l1) = i1[a] else { continue };
            let wa = w0 * st[1].1[a];
            for b in 0..4 {
                let Some(l2) = i2[b] else { continue };
                let wb = wa * st[2].1[b];
                let row = l1 * s1 + l2 * s2;
                for c in 0..4 {
                    if let Some(l3) = i3[c] {
                        plane[row + l3] += wb * st[3].1[c];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Refinement, RegionAlignment, Vec4};
    use crate::particles::{Particle, Species};
    use crate::remap::kernel::w4;

    fn single_level() -> CompositeGrid {
        CompositeGrid::build([0.0; 4], [8.0; 4], [8; 4], &[], RegionAlignment::Strict)
            .unwrap()
            .with_periodic([true, true, false, false])
    }

    fn two_level() -> CompositeGrid {
        CompositeGrid::build(
            [0.0; 4],
            [8.0; 4],
            [8; 4],
            &[Refinement { lo: [0.0, 0.0, 2.0, 2.0], hi: [8.0, 8.0, 6.0, 6.0], ratio: [1, 1, 2, 2] }],
            RegionAlignment::Strict,
        )
        .unwrap()
        .with_periodic([true, true, false, false])
    }

    fn one(p: Vec4, q: f64) -> ParticleSet {
        let mut s = ParticleSet::new(Species::Positive);
        s.push(Particle { x: [p[0], p[1]], v: [p[2], p[3]], q });
        s
    }

    #[test]
    fn particle_at_center_deposits_tensor_stencil() {
        let g = single_level();
        let f = deposit_w4_composite(&one([3.5, 4.5, 3.5, 4.5], 2.0), &g).unwrap();
        let l = &f.levels[0];
        assert_eq!(l.get(&[3, 4, 3, 4]).unwrap(), 2.0);
        assert_eq!(l.get(&[4, 4, 3, 4]).unwrap(), 0.0);
        assert_eq!(f.lost, 0.0);
        assert!((f.valid_charge() - 2.0).abs() < 1e-14);
        let p = f.levels[0].clone();
        for (k, v) in p.values.iter().enumerate() {
            let idx = p.index_of(k);
            let mirror = [2 * 3 - idx[0], 2 * 4 - idx[1], 2 * 3 - idx[2], 2 * 4 - idx[3]];
            if let Some(m) = p.get(&mirror) {
                assert_eq!(*v, m);
            }
        }
    }

    #[test]
    fn off_center_matches_direct_products() {
        let g = single_level();
        let p = [3.3, 0.2, 4.9, 6.1];
        let f = deposit_w4_composite(&one(p, 1.0), &g).unwrap();
        let l = &f.levels[0];
        for (k, v) in l.values.iter().enumerate() {
            let idx = l.index_of(k);
            let mut w = 1.0;
            for d in 0..4 {
                let mut dist = p[d] - (idx[d] as f64 + 0.5);
                if d < 2 {
                    dist -= 8.0 * (dist / 8.0).round();
                }
                w *= w4(dist);
            }
            assert!((v - w).abs() < 1e-15, "{idx:?}");
        }
        assert!((f.valid_charge() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn velocity_edge_truncation_goes_to_lost() {
        let g = single_level();
        let f = deposit_w4_composite(&one([4.0, 4.0, 0.2, 4.0], 1.0), &g).unwrap();
        assert!(f.lost != 0.0);
        assert!((f.valid_charge() + f.lost - 1.0).abs() < 1e-14);
    }

    #[test]
    fn escaped_particles_are_counted() {
        let g = single_level();
        let f = deposit_w4_composite(&one([4.0, 4.0, 9.0, 4.0], 0.5), &g).unwrap();
        assert_eq!(f.escaped, 1);
        assert_eq!(f.lost, 0.5);
        assert_eq!(f.stored_charge(), 0.0);
    }

    #[test]
    fn far_from_interface_matches_single_level() {
        let g1 = single_level();
        let g2 = two_level();
        let p = [5.5, 1.2, 0.6, 7.3];
        let a = deposit_w4_composite(&one(p, 1.0), &g1).unwrap();
        let b = deposit_w4_composite(&one(p, 1.0), &g2).unwrap();
        for (k, v) in a.levels[0].values.iter().enumerate() {
            let idx = a.levels[0].index_of(k);
            assert_eq!(b.levels[0].get(&idx).unwrap(), *v);
        }
        assert!(b.levels[1].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fine_particle_deposits_at_fine_spacing() {
        let g = two_level();
        let f = deposit_w4_composite(&one([4.5, 4.5, 4.25, 4.25], 1.0), &g).unwrap();
        assert!(f.levels[0].values.iter().all(|&v| v == 0.0));
        let fine = &f.levels[1];
        assert_eq!(fine.get(&[4, 4, 8, 8]).unwrap(), 1.0 / fine.volume);
        assert!((f.stored_charge() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kinds_follow_grid_validity() {
        let g = two_level();
        let f = CompositeField::zeros(&g);
        let coarse = &f.levels[0];
        assert_eq!(coarse.kinds[coarse.offset(&[0, 0, 3, 3]).unwrap()], CellKind::Covered);
        assert_eq!(coarse.kinds[coarse.offset(&[0, 0, 1, 3]).unwrap()], CellKind::Valid);
        let fine = &f.levels[1];
        assert_eq!(fine.lo, [0, 0, 2, 2]);
        assert_eq!(fine.shape, [8, 8, 12, 12]);
        assert_eq!(fine.kinds[fine.offset(&[0, 0, 3, 5]).unwrap()], CellKind::Halo);
        assert_eq!(fine.kinds[fine.offset(&[7, 7, 4, 11]).unwrap()], CellKind::Valid);
        let valid: usize = f.levels.iter().map(|l| l.kinds.iter().filter(|k| **k == CellKind::Valid).count()).sum();
        assert_eq!(valid as u64, g.valid_cell_count());
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let g = two_level();
        let mut s = ParticleSet::new(Species::Positive);
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 8.0
        };
        for _ in 0..5000 {
            s.push(Particle { x: [next(), next()], v: [next(), next()], q: next() - 4.0 });
        }
        let run = |t: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| deposit_w4_composite(&s, &g).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        let q = s.total_charge();
        assert!((a.stored_charge() + a.lost - q).abs() <= 1e-12 * s.q.iter().map(|v| v.abs()).sum::<f64>());
    }
}
