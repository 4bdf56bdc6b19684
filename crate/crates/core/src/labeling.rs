//! Connected-component labeling and Euler characteristic on voxel grids.

use std::collections::VecDeque;

use crate::volume::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face and edge neighbours.
    Eighteen,
    /// Face, edge and vertex neighbours.
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::Eighteen => (1..=2).contains(&manhattan),
                        Connectivity::TwentySix => manhattan >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Component labels (0 = not in the set, 1.. = component id in scan order)
/// and the size of each component.
#[derive(Clone, Debug)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// Labels the voxels where `member` is true. Components are numbered in
/// order of their lowest voxel index.
pub fn label(dims: [usize; 3], member: &[bool], conn: Connectivity) -> Components {
    let [nx, ny, nz] = dims;
    assert_eq!(member.len(), nx * ny * nz);
    let offsets = conn.offsets();
    let mut labels = vec![0u32; member.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..member.len() {
        if !member[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
            for d in &offsets {
                let (x, y, z) = (i as isize + d[0], j as isize + d[1], k as isize + d[2]);
                if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
                    continue;
                }
                let n = x as usize + nx * (y as usize + ny * z as usize);
                if member[n] && labels[n] == 0 {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

pub fn label_mask(mask: &BinaryMask, conn: Connectivity) -> Components {
    let member: Vec<bool> = mask.data().iter().map(|&v| v != 0).collect();
    label(mask.dims(), &member, conn)
}

/// Number of foreground components under `conn`.
pub fn count_foreground(mask: &BinaryMask, conn: Connectivity) -> usize {
    label_mask(mask, conn).count()
}

/// Number of background components under `conn`, treating everything
/// outside the grid as one extra background region connected to every
/// border background voxel.
pub fn count_background(mask: &BinaryMask, conn: Connectivity) -> usize {
    let [nx, ny, nz] = mask.dims();
    let padded = [nx + 2, ny + 2, nz + 2];
    let mut member = vec![true; padded[0] * padded[1] * padded[2]];
    for idx in mask.indices() {
        let [i, j, k] = mask.geometry().coords(idx);
        member[(i + 1) + padded[0] * ((j + 1) + padded[1] * (k + 1))] = false;
    }
    label(padded, &member, conn).count()
}

/// Euler characteristic of the union of closed unit cubes at the foreground
/// voxels (the complex matching 26-connected foreground).
pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let [nx, ny, nz] = mask.dims();
    let at = |i: isize, j: isize, k: isize| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && (k as usize) < nz
            && mask.get(i as usize, j as usize, k as usize)
    };
    let any = |cells: &[(isize, isize, isize)]| cells.iter().any(|&(i, j, k)| at(i, j, k));

    let (mut v, mut e, mut f) = (0i64, 0i64, 0i64);
    let c = mask.count() as i64;
    // Lattice points range over 0..=n on each axis; voxel (i,j,k) spans
    // points i..=i+1.
    for z in 0..=nz as isize {
        for y in 0..=ny as isize {
            for x in 0..=nx as isize {
                let mut around = [(0, 0, 0); 8];
                let mut n = 0;
                for dz in [-1, 0] {
                    for dy in [-1, 0] {
                        for dx in [-1, 0] {
                            around[n] = (x + dx, y + dy, z + dz);
                            n += 1;
                        }
                    }
                }
                v += any(&around) as i64;
                // Edges starting at this point along +x, +y, +z.
                e += any(&[(x, y - 1, z - 1), (x, y, z - 1), (x, y - 1, z), (x, y, z)]) as i64;
                e += any(&[(x - 1, y, z - 1), (x, y, z - 1), (x - 1, y, z), (x, y, z)]) as i64;
                e += any(&[(x - 1, y - 1, z), (x, y - 1, z), (x - 1, y, z), (x, y, z)]) as i64;
                // Faces with lower corner at this point, normal to x, y, z.
                f += any(&[(x - 1, y, z), (x, y, z)]) as i64;
                f += any(&[(x, y - 1, z), (x, y, z)]) as i64;
                f += any(&[(x, y, z - 1), (x, y, z)]) as i64;
            }
        }
    }
    v - e + f - c
}

/// First Betti number (independent loops) of the foreground, from
/// `chi = b0 - b1 + b2`, with `b2` the number of enclosed cavities.
pub fn cycle_count(mask: &BinaryMask) -> i64 {
    let b0 = count_foreground(mask, Connectivity::TwentySix) as i64;
    let b2 = count_background(mask, Connectivity::Six) as i64 - 1;
    b0 + b2 - euler_characteristic(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridGeometry;

    fn mask(dims: [usize; 3], f: impl FnMut([usize; 3]) -> bool) -> BinaryMask {
        BinaryMask::from_fn(GridGeometry::unit(dims), f)
    }

    #[test]
    fn neighbourhood_sizes() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask([2, 2, 2], |p| p == [0, 0, 0] || p == [1, 1, 1]);
        assert_eq!(count_foreground(&m, Connectivity::TwentySix), 1);
        assert_eq!(count_foreground(&m, Connectivity::Eighteen), 2);
        assert_eq!(count_foreground(&m, Connectivity::Six), 2);
        let m = mask([2, 2, 1], |p| p == [0, 0, 0] || p == [1, 1, 0]);
        assert_eq!(count_foreground(&m, Connectivity::Eighteen), 1);
    }

    #[test]
    fn sizes_and_labels() {
        let m = mask([5, 1, 1], |[i, _, _]| i != 2);
        let c = label_mask(&m, Connectivity::Six);
        assert_eq!(c.sizes, vec![2, 2]);
        assert_eq!(c.labels, vec![1, 1, 0, 2, 2]);
    }

    #[test]
    fn euler_of_simple_shapes() {
        assert_eq!(euler_characteristic(&mask([3, 3, 3], |_| false)), 0);
        assert_eq!(euler_characteristic(&mask([3, 3, 3], |p| p == [1, 1, 1])), 1);
        assert_eq!(euler_characteristic(&mask([4, 4, 4], |_| true)), 1);
        // Two cubes sharing only a vertex are one contractible set.
        assert_eq!(
            euler_characteristic(&mask([2, 2, 2], |p| p == [0, 0, 0] || p == [1, 1, 1])),
            1
        );
        // Square ring: one loop.
        let ring = mask([3, 3, 1], |p| p != [1, 1, 0]);
        assert_eq!(euler_characteristic(&ring), 0);
        assert_eq!(cycle_count(&ring), 1);
        // Hollow cube: sphere, chi = 2, one cavity.
        let shell = mask([3, 3, 3], |p| p != [1, 1, 1]);
        assert_eq!(euler_characteristic(&shell), 2);
        assert_eq!(count_background(&shell, Connectivity::Six), 2);
        assert_eq!(cycle_count(&shell), 0);
    }
}
