//! Moves deposits out of halo and covered cells so that all charge sits in
//! valid cells.

use crate::grid::{CompositeGrid, Index4, DIM};
use crate::remap::field::{CellKind, CompositeField};

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Projects fine halo deposits onto their parent cells (finest level
/// first), then splits covered coarse cells among their children with
/// limited linear profiles (coarsest level first). Source cells end at zero.
pub fn transfer_interface_charge(field: &mut CompositeField, grid: &CompositeGrid) {
    let nl = field.levels.len();

    for level in (1..nl).rev() {
        let ratio = grid.level(level - 1).refine_ratio;
        let (coarse_part, fine_part) = field.levels.split_at_mut(level);
        let coarse = &mut coarse_part[level - 1];
        let fine = &mut fine_part[0];
        let scale = fine.volume / coarse.volume;
        for k in 0..fine.len() {
            if fine.kinds[k] != CellKind::Halo || fine.values[k] == 0.0 {
                continue;
            }
            let idx = fine.index_of(k);
            let parent: Index4 = std::array::from_fn(|d| idx[d].div_euclid(ratio[d] as i64));
            match coarse.offset(&parent) {
                Some(c) => coarse.values[c] += fine.values[k] * scale,
                None => field.lost += fine.values[k] * fine.volume,
            }
            fine.values[k] = 0.0;
        }
    }

    for level in 0..nl.saturating_sub(1) {
        let ratio = grid.level(level).refine_ratio;
        let (coarse_part, fine_part) = field.levels.split_at_mut(level + 1);
        let coarse = &mut coarse_part[level];
        let fine = &mut fine_part[0];
        let snapshot = coarse.values.clone();
        let children: usize = ratio.iter().product();
        let xi = |d: usize, o: i64| (o as f64 + 0.5) / ratio[d] as f64 - 0.5;
        let max_xi: [f64; DIM] = std::array::from_fn(|d| xi(d, ratio[d] as i64 - 1));

        for k in 0..coarse.len() {
            if coarse.kinds[k] != CellKind::Covered {
                continue;
            }
            let fc = snapshot[k];
            coarse.values[k] = 0.0;
            if fc == 0.0 {
                continue;
            }
            let idx = coarse.index_of(k);
            let mut slope = [0.0; DIM];
            if fc > 0.0 {
                for d in 0..DIM {
                    if ratio[d] == 1 {
                        continue;
                    }
                    let mut lo = idx;
                    let mut hi = idx;
                    lo[d] -= 1;
                    hi[d] += 1;
                    let (Some(a), Some(b)) = (coarse.offset(&lo), coarse.offset(&hi)) else { continue };
                    slope[d] = minmod(fc - snapshot[a], snapshot[b] - fc);
                }
                let reach: f64 = (0..DIM).map(|d| slope[d].abs() * max_xi[d]).sum();
                if reach > fc {
                    let s = fc / reach;
                    slope.iter_mut().for_each(|v| *v *= s);
                }
            }
            for c in 0..children {
                let mut rem = c;
                let mut child = [0i64; DIM];
                let mut value = fc;
                for d in (0..DIM).rev() {
                    let r = ratio[d];
                    let o = (rem % r) as i64;
                    rem /= r;
                    child[d] = idx[d] * r as i64 + o;
                    value += slope[d] * xi(d, o);
                }
                let off = fine.offset(&child).expect("children of covered cells lie in the finer level box");
                fine.values[off] += value;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Refinement, RegionAlignment};
    use crate::particles::{Particle, ParticleSet, Species};
    use crate::remap::field::deposit_w4_composite;

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

    fn non_valid_charge(f: &CompositeField) -> f64 {
        f.levels.iter().map(|l| l.charge(CellKind::Covered).abs() + l.charge(CellKind::Halo).abs()).sum()
    }

    #[test]
    fn nothing_near_interfaces_is_identity() {
        let g = two_level();
        let mut s = ParticleSet::new(Species::Positive);
        s.push(Particle { x: [3.5, 3.5], v: [0.5, 7.5], q: 1.0 });
        s.push(Particle { x: [1.5, 3.5], v: [4.25, 4.25], q: 1.0 });
        let mut f = deposit_w4_composite(&s, &g).unwrap();
        let before = f.clone();
        transfer_interface_charge(&mut f, &g);
        assert_eq!(f, before);
    }

    #[test]
    fn covered_cell_splits_into_children() {
        let g = two_level();
        let mut f = CompositeField::zeros(&g);
        let coarse = &mut f.levels[0];
        let k = coarse.offset(&[1, 1, 3, 4]).unwrap();
        assert_eq!(coarse.kinds[k], CellKind::Covered);
        coarse.values[k] = 1.0 / coarse.volume;
        transfer_interface_charge(&mut f, &g);
        let fine = &f.levels[1];
        let mut total = 0.0;
        let mut count = 0;
        for (k, v) in fine.values.iter().enumerate() {
            if *v != 0.0 {
                let idx = fine.index_of(k);
                assert!((6..8).contains(&idx[2]) && (8..10).contains(&idx[3]));
                assert!(*v > 0.0);
                total += v * fine.volume;
                count += 1;
            }
        }
        assert_eq!(count, 4);
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(non_valid_charge(&f), 0.0);
    }

    #[test]
    fn linear_profile_is_conservative_and_positive() {
        let g = two_level();
        let mut f = CompositeField::zeros(&g);
        let coarse = &mut f.levels[0];
        for v2 in 1..7 {
            for v3 in 1..7 {
                let k = coarse.offset(&[2, 2, v2, v3]).unwrap();
                coarse.values[k] = 1.0 + v2 as f64 + 0.1 * (v3 * v3) as f64;
            }
        }
        let before = f.stored_charge();
        transfer_interface_charge(&mut f, &g);
        assert!((f.valid_charge() - before).abs() < 1e-13 * before);
        let fine = &f.levels[1];
        assert!(fine.values.iter().all(|&v| v >= 0.0));
        // a linear coarse profile is reproduced at the children
        let a = fine.get(&[2, 2, 6, 8]).unwrap();
        let b = fine.get(&[2, 2, 7, 8]).unwrap();
        assert!((b - a - 0.5).abs() < 1e-13);
    }

    #[test]
    fn halo_cell_projects_to_one_parent() {
        let g = two_level();
        let mut f = CompositeField::zeros(&g);
        let fine = &mut f.levels[1];
        let k = fine.offset(&[5, 6, 3, 7]).unwrap();
        assert_eq!(fine.kinds[k], CellKind::Halo);
        fine.values[k] = 1.0 / fine.volume;
        transfer_interface_charge(&mut f, &g);
        let coarse = &f.levels[0];
        let hits: Vec<_> = coarse.values.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(coarse.index_of(hits[0].0), [5, 6, 1, 3]);
        assert!((hits[0].1 * coarse.volume - 1.0).abs() < 1e-15);
        assert_eq!(f.levels[1].values.iter().filter(|v| **v != 0.0).count(), 0);
    }

    #[test]
    fn interface_particles_end_up_in_valid_cells() {
        let g = two_level();
        let mut s = ParticleSet::new(Species::Positive);
        for (k, v) in [[1.9, 2.1], [2.05, 5.95], [6.1, 3.0], [4.0, 6.02], [1.7, 1.7]].into_iter().enumerate() {
            s.push(Particle { x: [0.5 + k as f64, 7.9], v, q: 0.3 + k as f64 });
        }
        let mut f = deposit_w4_composite(&s, &g).unwrap();
        let q = f.stored_charge();
        transfer_interface_charge(&mut f, &g);
        assert_eq!(non_valid_charge(&f), 0.0);
        assert!((f.valid_charge() - q).abs() <= 1e-12 * q);
        assert!((f.valid_charge() + f.lost - s.total_charge()).abs() <= 1e-12 * s.total_charge());
    }
}
