//! Local redistribution of negative cell values.

use rayon::prelude::*;

use crate::remap::field::{CellKind, CompositeField};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositivityReport {
    /// Negative valid cells before the first sweep.
    pub negatives_before: usize,
    /// Negative valid cells after the last sweep.
    pub negatives_after: usize,
    /// Negative cells whose neighborhood had no capacity in the last sweep.
    pub flagged: usize,
    /// Largest number of sweeps used on any level.
    pub iterations: usize,
    pub min_f: f64,
    pub max_f: f64,
}

impl PositivityReport {
    fn merge(&mut self, other: &PositivityReport) {
        self.negatives_before += other.negatives_before;
        self.negatives_after += other.negatives_after;
        self.flagged += other.flagged;
        self.iterations = self.iterations.max(other.iterations);
        self.min_f = self.min_f.min(other.min_f);
        self.max_f = self.max_f.max(other.max_f);
    }
}

/// A rectangular block of cells. Dimension 0 is the slowest storage index.
#[derive(Debug, Clone, Copy)]
pub struct Lattice<'a, const N: usize> {
    pub shape: [usize; N],
    pub wrap: [bool; N],
    /// Cells that may give or receive charge.
    pub active: &'a [bool],
}

impl<const N: usize> Lattice<'_, N> {
    fn strides(&self) -> [usize; N] {
        let mut s = [1; N];
        for d in (0..N.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.shape[d + 1];
        }
        s
    }

    /// All offsets of the hypercube of the given radius except the center.
    fn offsets(radius: usize) -> Vec<[i64; N]> {
        let r = radius as i64;
        let side = (2 * r + 1) as usize;
        let mut out = Vec::new();
        for mut lin in 0..side.pow(N as u32) {
            let mut o = [0i64; N];
            for d in (0..N).rev() {
                o[d] = (lin % side) as i64 - r;
                lin /= side;
            }
            if o.iter().any(|&v| v != 0) {
                out.push(o);
            }
        }
        out
    }

    fn neighbor(&self, cell: usize, strides: &[usize; N], o: &[i64; N]) -> Option<usize> {
        let mut rem = cell;
        let mut out = 0;
        for d in 0..N {
            let i = (rem / strides[d]) as i64;
            rem %= strides[d];
            let n = self.shape[d] as i64;
            let mut j = i + o[d];
            if self.wrap[d] {
                j = j.rem_euclid(n);
            } else if j < 0 || j >= n {
                return None;
            }
            out += j as usize * strides[d];
        }
        self.active[out].then_some(out)
    }
}

/// Sweeps of `δf_i = min(0, f_i)` handed to active neighbors in proportion
/// to `ξ = max(0, f)`. Within a sweep, negative cells are visited in
/// storage order and each one sees the values left by the ones before it.
/// A negative cell whose hypercube of `radius` cannot absorb the
/// undershoot widens it one ring at a time up to `max_radius`; a cell with
/// no capacity even then is left alone and flagged. Stops early once no active cell is negative.
pub fn redistribute<const N: usize>(
    values: &mut [f64],
    lattice: Lattice<'_, N>,
    radius: usize,
    max_radius: usize,
    iterations: usize,
) -> PositivityReport {
    let strides = lattice.strides();
    let shells: Vec<Vec<[i64; N]>> = (radius..=max_radius.max(radius)).map(Lattice::<N>::offsets).collect();
    let negatives = |v: &[f64]| -> Vec<usize> {
        (0..v.len()).into_par_iter().filter(|&k| lattice.active[k] && v[k] < 0.0).collect()
    };

    let mut neg = negatives(values);
    let mut report = PositivityReport { negatives_before: neg.len(), ..Default::default() };
    let mut sweeps = 0;
    while sweeps < iterations && !neg.is_empty() {
        sweeps += 1;
        let mut flagged = 0;
        for &i in &neg {
            let undershoot = values[i];
            let capacity = |offsets: &[[i64; N]], v: &[f64]| -> f64 {
                offsets.iter().filter_map(|o| lattice.neighbor(i, &strides, o)).map(|j| v[j].max(0.0)).sum()
            };
            // smallest neighborhood that absorbs the whole undershoot,
            // otherwise the widest one with any capacity
            let mut pick = None;
            for o in &shells {
                let s = capacity(o, values);
                if s > 0.0 {
                    pick = Some((o, s));
                    if s >= -undershoot {
                        break;
                    }
                }
            }
            let Some((offsets, s)) = pick else {
                flagged += 1;
                continue;
            };
            let share = undershoot / s;
            for o in offsets {
                if let Some(j) = lattice.neighbor(i, &strides, o) {
                    if values[j] > 0.0 {
                        values[j] += values[j] * share;
                    }
                }
            }
            values[i] = 0.0;
        }
        report.flagged = flagged;
        neg = negatives(values);
    }
    report.iterations = sweeps;
    report.negatives_after = neg.len();
    let (lo, hi) = values
        .iter()
        .zip(lattice.active)
        .filter(|(_, a)| **a)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
    report.min_f = lo;
    report.max_f = hi;
    report
}

/// Level-by-level redistribution over valid cells; neighborhoods never
/// cross a coarse-fine interface.
pub fn redistribute_positivity(
    field: &mut CompositeField,
    radius: usize,
    max_radius: usize,
    iterations: usize,
) -> PositivityReport {
    let mut report = PositivityReport { min_f: f64::INFINITY, max_f: f64::NEG_INFINITY, ..Default::default() };
    for level in field.levels.iter_mut() {
        let active: Vec<bool> = level.kinds.iter().map(|k| *k == CellKind::Valid).collect();
        let lattice = Lattice { shape: level.shape, wrap: level.wrap, active: &active };
        let r = redistribute(&mut level.values, lattice, radius, max_radius, iterations);
        report.merge(&r);
    }
    report
}
