//! Four-dimensional phase-space composite grid.
//!
//! Coordinates are ordered `(x, y, vx, vy)`. Every level owns a global,
//! cell-centered index space covering the whole domain at its spacing; boxes
//! pick out the cells that actually exist on that level. A cell is *valid*
//! when no cell of the next finer level lies on top of it, and the valid
//! cells of all levels tile the domain exactly once.

use crate::error::{Error, Result};

pub const DIM: usize = 4;

pub type Vec4 = [f64; DIM];
pub type Index4 = [i64; DIM];
pub type Ratio4 = [usize; DIM];

/// Tolerance, in units of parent cells, for a region edge to count as lying
/// on a cell face.
const FACE_TOL: f64 = 1e-9;

/// Inclusive box of cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LevelBox {
    pub lo: Index4,
    pub hi: Index4,
}

impl LevelBox {
    pub fn new(lo: Index4, hi: Index4) -> Result<Self> {
        if (0..DIM).any(|d| lo[d] > hi[d]) {
            return Err(Error::InvalidGrid(format!("empty box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, idx: &Index4) -> bool {
        (0..DIM).all(|d| self.lo[d] <= idx[d] && idx[d] <= self.hi[d])
    }

    pub fn contains_box(&self, other: &LevelBox) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn intersects(&self, other: &LevelBox) -> bool {
        (0..DIM).all(|d| self.lo[d] <= other.hi[d] && other.lo[d] <= self.hi[d])
    }

    pub fn coarsen(&self, ratio: Ratio4) -> LevelBox {
        let mut b = *self;
        for d in 0..DIM {
            let r = ratio[d] as i64;
            b.lo[d] = self.lo[d].div_euclid(r);
            b.hi[d] = self.hi[d].div_euclid(r);
        }
        b
    }

    pub fn refine(&self, ratio: Ratio4) -> LevelBox {
        let mut b = *self;
        for d in 0..DIM {
            let r = ratio[d] as i64;
            b.lo[d] = self.lo[d] * r;
            b.hi[d] = (self.hi[d] + 1) * r - 1;
        }
        b
    }

    pub fn shape(&self) -> [usize; DIM] {
        std::array::from_fn(|d| (self.hi[d] - self.lo[d] + 1) as usize)
    }

    pub fn num_cells(&self) -> u64 {
        self.shape().iter().map(|&n| n as u64).product()
    }

    /// Cells in lexicographic order, first dimension slowest.
    pub fn cells(&self) -> impl Iterator<Item = Index4> + '_ {
        let shape = self.shape();
        let total = self.num_cells();
        (0..total).map(move |mut lin| {
            let mut idx = [0i64; DIM];
            for d in (0..DIM).rev() {
                let n = shape[d] as u64;
                idx[d] = self.lo[d] + (lin % n) as i64;
                lin /= n;
            }
            idx
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub index: usize,
    pub boxes: Vec<LevelBox>,
    /// Phase-space units per cell.
    pub spacing: Vec4,
    /// Ratio to the next finer level; all ones on the finest level.
    pub refine_ratio: Ratio4,
    /// Number of cells of the global index space in each dimension.
    pub extent: Index4,
}

impl Level {
    pub fn contains(&self, idx: &Index4) -> bool {
        self.boxes.iter().any(|b| b.contains(idx))
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// A requested refinement: a physical-coordinate region of the previous
/// level and the ratio used to refine it.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub lo: Vec4,
    pub hi: Vec4,
    pub ratio: Ratio4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionAlignment {
    /// Region edges must already lie on parent cell faces.
    Strict,
    /// Region edges are moved outward to the nearest parent cell faces.
    #[default]
    SnapOutward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellId {
    pub level: usize,
    pub idx: Index4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeGrid {
    levels: Vec<Level>,
    domain_lo: Vec4,
    domain_hi: Vec4,
    periodic: [bool; DIM],
}

impl CompositeGrid {
    pub fn build(
        domain_lo: Vec4,
        domain_hi: Vec4,
        base_cells: Ratio4,
        refinements: &[Refinement],
        alignment: RegionAlignment,
    ) -> Result<Self> {
        for d in 0..DIM {
            if base_cells[d] == 0 {
                return Err(Error::InvalidGrid(format!("base cells must be >= 1 (dimension {d})")));
            }
            if !(domain_hi[d] > domain_lo[d]) {
                return Err(Error::InvalidGrid(format!("empty domain in dimension {d}")));
            }
        }
        let spacing = std::array::from_fn(|d| (domain_hi[d] - domain_lo[d]) / base_cells[d] as f64);
        let extent = base_cells.map(|n| n as i64);
        let base_box = LevelBox::new([0; DIM], extent.map(|n| n - 1))?;
        let mut levels = vec![Level { index: 0, boxes: vec![base_box], spacing, refine_ratio: [1; DIM], extent }];

        for (k, refinement) in refinements.iter().enumerate() {
            let level = k + 1;
            if refinement.ratio.contains(&0) {
                return Err(Error::InvalidGrid(format!("refinement {level}: ratio components must be >= 1")));
            }
            let parent = &levels[k];
            let mut lo = [0i64; DIM];
            let mut hi = [0i64; DIM];
            for d in 0..DIM {
                let s_lo = (refinement.lo[d] - domain_lo[d]) / parent.spacing[d];
                let s_hi = (refinement.hi[d] - domain_lo[d]) / parent.spacing[d];
                match alignment {
                    RegionAlignment::Strict => {
                        for s in [s_lo, s_hi] {
                            if (s - s.round()).abs() > FACE_TOL * s.abs().max(1.0) {
                                return Err(Error::Alignment { level, dim: d });
                            }
                        }
                        lo[d] = s_lo.round() as i64;
                        hi[d] = s_hi.round() as i64 - 1;
                    }
                    RegionAlignment::SnapOutward => {
                        lo[d] = (s_lo + FACE_TOL).floor() as i64;
                        hi[d] = (s_hi - FACE_TOL).ceil() as i64 - 1;
                    }
                }
            }
            let coarse = LevelBox::new(lo, hi)?;
            if !parent.boxes.iter().any(|b| b.contains_box(&coarse)) {
                return Err(Error::Nesting { level });
            }
            let ratio = refinement.ratio;
            let spacing = std::array::from_fn(|d| parent.spacing[d] / ratio[d] as f64);
            let extent = std::array::from_fn(|d| parent.extent[d] * ratio[d] as i64);
            levels[k].refine_ratio = ratio;
            levels.push(Level {
                index: level,
                boxes: vec![coarse.refine(ratio)],
                spacing,
                refine_ratio: [1; DIM],
                extent,
            });
        }

        Ok(Self { levels, domain_lo, domain_hi, periodic: [false; DIM] })
    }

    /// Marks dimensions whose index space wraps around.
    pub fn with_periodic(mut self, periodic: [bool; DIM]) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, level: usize) -> &Level {
        &self.levels[level]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn domain_lo(&self) -> Vec4 {
        self.domain_lo
    }

    pub fn domain_hi(&self) -> Vec4 {
        self.domain_hi
    }

    pub fn periodic(&self) -> [bool; DIM] {
        self.periodic
    }

    pub fn domain_volume(&self) -> f64 {
        (0..DIM).map(|d| self.domain_hi[d] - self.domain_lo[d]).product()
    }

    /// Whether a level-`level` index lies under a box of the next finer level.
    pub fn is_covered(&self, level: usize, idx: &Index4) -> bool {
        if level >= self.finest_level() {
            return false;
        }
        let ratio = self.levels[level].refine_ratio;
        self.levels[level + 1].boxes.iter().any(|b| b.coarsen(ratio).contains(idx))
    }

    pub fn is_valid(&self, cell: &CellId) -> Result<bool> {
        let level = self.levels.get(cell.level).ok_or(Error::OutOfLevel { level: cell.level, idx: cell.idx })?;
        if !level.contains(&cell.idx) {
            return Err(Error::OutOfLevel { level: cell.level, idx: cell.idx });
        }
        Ok(!self.is_covered(cell.level, &cell.idx))
    }

    pub fn in_domain(&self, point: &Vec4) -> bool {
        (0..DIM).all(|d| point[d] >= self.domain_lo[d] && point[d] <= self.domain_hi[d])
    }

    /// Index of the level-`level` cell containing `coord` along dimension `d`.
    /// Points on a face go to the lower cell.
    fn index_along(&self, level: usize, d: usize, coord: f64) -> i64 {
        let lev = &self.levels[level];
        let s = (coord - self.domain_lo[d]) / lev.spacing[d];
        (s.ceil() as i64 - 1).clamp(0, lev.extent[d] - 1)
    }

    /// The unique valid cell containing `point`.
    ///
    /// The search descends from level 0, so a point sitting on a coarse-fine
    /// face resolves to the same side at every level.
    pub fn locate_valid_cell(&self, point: Vec4) -> Result<CellId> {
        if !self.in_domain(&point) {
            return Err(Error::OutsideDomain { point });
        }
        let mut idx: Index4 = std::array::from_fn(|d| self.index_along(0, d, point[d]));
        let mut level = 0;
        loop {
            if !self.is_covered(level, &idx) {
                return Ok(CellId { level, idx });
            }
            let ratio = self.levels[level].refine_ratio;
            for d in 0..DIM {
                let r = ratio[d] as i64;
                let fine = self.index_along(level + 1, d, point[d]);
                idx[d] = fine.clamp(idx[d] * r, idx[d] * r + r - 1);
            }
            level += 1;
        }
    }

    pub fn cell_center(&self, cell: &CellId) -> Vec4 {
        let h = self.levels[cell.level].spacing;
        std::array::from_fn(|d| self.domain_lo[d] + (cell.idx[d] as f64 + 0.5) * h[d])
    }

    /// Visits every valid cell: level by level, box by box, lexicographically.
    pub fn for_each_valid_cell(&self, mut f: impl FnMut(CellId)) {
        for level in &self.levels {
            for b in &level.boxes {
                for idx in b.cells() {
                    if !self.is_covered(level.index, &idx) {
                        f(CellId { level: level.index, idx });
                    }
                }
            }
        }
    }

    pub fn valid_cell_count(&self) -> u64 {
        let mut n = 0;
        self.for_each_valid_cell(|_| n += 1);
        n
    }
}
