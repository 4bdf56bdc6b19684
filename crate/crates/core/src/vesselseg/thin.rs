//! Topology-preserving 3D thinning (Lee, Kashyap & Chu style border peeling).
//!
//! The 3x3x3 neighbourhood of a voxel is packed into a `u32` with bit
//! `(dx + 1) + 3 (dy + 1) + 9 (dz + 1)`; bit 13 is the voxel itself.

use std::sync::OnceLock;

use crate::volume::BinaryMask;

const CENTER: usize = 13;

/// Border directions in peeling order: up, down, north, south, east, west.
pub const BORDER_ORDER: [[isize; 3]; 6] = [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]];

#[inline]
fn bit(dx: isize, dy: isize, dz: isize) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

fn offset_of(b: usize) -> [isize; 3] {
    [(b % 3) as isize - 1, ((b / 3) % 3) as isize - 1, (b / 9) as isize - 1]
}

struct Tables {
    /// Eight times the Euler-characteristic change contributed by one
    /// octant when the centre is removed, indexed by the 7 neighbour bits of
    /// the octant in canonical order (pattern `px + 2 py + 4 pz`, bit `p - 1`).
    euler_lut: [i8; 128],
    /// For each octant sign pattern, the neighbourhood bit of canonical pattern `p`.
    octant_bits: [[usize; 7]; 8],
    adj26: [Vec<usize>; 27],
    adj6: [Vec<usize>; 27],
    n18: u32,
    n6: u32,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut euler_lut = [0i8; 128];
        for (cfg, slot) in euler_lut.iter_mut().enumerate() {
            let has = |p: usize| cfg & (1 << (p - 1)) != 0;
            let none = |ps: &[usize]| ps.iter().all(|&p| !has(p));
            let vertex = none(&[1, 2, 3, 4, 5, 6, 7]) as i8;
            let edges = none(&[2, 4, 6]) as i8 + none(&[1, 4, 5]) as i8 + none(&[1, 2, 3]) as i8;
            let faces = none(&[1]) as i8 + none(&[2]) as i8 + none(&[4]) as i8;
            *slot = 8 * vertex - 4 * edges + 2 * faces - 1;
        }

        let mut octant_bits = [[0usize; 7]; 8];
        for (o, bits) in octant_bits.iter_mut().enumerate() {
            let s = [
                if o & 1 != 0 { 1 } else { -1 },
                if o & 2 != 0 { 1 } else { -1 },
                if o & 4 != 0 { 1 } else { -1 },
            ];
            for p in 1..8usize {
                let px = (p & 1) as isize;
                let py = ((p >> 1) & 1) as isize;
                let pz = ((p >> 2) & 1) as isize;
                bits[p - 1] = bit(px * s[0], py * s[1], pz * s[2]);
            }
        }

        let adj = |max_manhattan: isize| -> [Vec<usize>; 27] {
            std::array::from_fn(|a| {
                let oa = offset_of(a);
                (0..27)
                    .filter(|&b| {
                        let ob = offset_of(b);
                        let d: Vec<isize> = (0..3).map(|i| (oa[i] - ob[i]).abs()).collect();
                        let m: isize = d.iter().sum();
                        b != a && d.iter().all(|&x| x <= 1) && m <= max_manhattan
                    })
                    .collect()
            })
        };

        let mut n18 = 0u32;
        let mut n6 = 0u32;
        for b in 0..27 {
            let m: isize = offset_of(b).iter().map(|x| x.abs()).sum();
            if (1..=2).contains(&m) {
                n18 |= 1 << b;
            }
            if m == 1 {
                n6 |= 1 << b;
            }
        }

        Tables {
            euler_lut,
            octant_bits,
            adj26: adj(3),
            adj6: adj(1),
            n18,
            n6,
        }
    })
}

/// True iff removing the centre leaves the Euler characteristic of the
/// neighbourhood unchanged.
pub(crate) fn is_euler_invariant(nbhd: u32) -> bool {
    let t = tables();
    let mut total = 0i32;
    for bits in &t.octant_bits {
        let mut cfg = 0usize;
        for (p, &b) in bits.iter().enumerate() {
            if nbhd & (1 << b) != 0 {
                cfg |= 1 << p;
            }
        }
        total += t.euler_lut[cfg] as i32;
    }
    total == 0
}

/// Number of components of `set` (a bitmask over the 27 positions) under
/// the given adjacency, counting only components that meet `seed_mask`.
fn components(set: u32, adj: &[Vec<usize>; 27], seed_mask: u32) -> u32 {
    let mut remaining = set;
    let mut count = 0;
    while remaining & seed_mask != 0 {
        let start = (remaining & seed_mask).trailing_zeros() as usize;
        let mut stack = vec![start];
        remaining &= !(1 << start);
        while let Some(a) = stack.pop() {
            for &b in &adj[a] {
                if remaining & (1 << b) != 0 {
                    remaining &= !(1 << b);
                    stack.push(b);
                }
            }
        }
        count += 1;
    }
    count
}

/// Simple-point test: the 26-neighbour foreground forms exactly one
/// 26-component, and the 18-neighbour background touching a face neighbour
/// forms exactly one 6-component.
pub(crate) fn is_simple(nbhd: u32) -> bool {
    let t = tables();
    let fg = nbhd & !(1 << CENTER) & ((1 << 27) - 1);
    if components(fg, &t.adj26, fg) != 1 {
        return false;
    }
    let bg = !nbhd & t.n18;
    components(bg, &t.adj6, t.n6) == 1
}

fn neighbourhood(data: &[u8], dims: [usize; 3], idx: usize) -> u32 {
    let [nx, ny, nz] = dims;
    let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
    let mut out = 0u32;
    for dz in -1isize..=1 {
        let z = k as isize + dz;
        if z < 0 || z >= nz as isize {
            continue;
        }
        for dy in -1isize..=1 {
            let y = j as isize + dy;
            if y < 0 || y >= ny as isize {
                continue;
            }
            let row = nx * (y as usize + ny * z as usize);
            for dx in -1isize..=1 {
                let x = i as isize + dx;
                if x < 0 || x >= nx as isize {
                    continue;
                }
                if data[row + x as usize] != 0 {
                    out |= 1 << bit(dx, dy, dz);
                }
            }
        }
    }
    out
}

#[inline]
fn neighbour_count(nbhd: u32) -> u32 {
    (nbhd & !(1 << CENTER)).count_ones()
}

/// Thins `mask` to a one-voxel-wide skeleton.
///
/// Each pass visits the six border directions in [`BORDER_ORDER`]. A
/// foreground voxel whose neighbour in the current direction is background
/// (outside the grid counts as background) is a candidate if it has at
/// least two foreground neighbours, is Euler invariant, and is simple.
/// Candidates are then deleted one at a time, re-checking the simple-point
/// and end-point conditions against the current state. Passes repeat until
/// nothing is deleted. The result is always a subset of `mask`.
pub fn thin3d(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    let dims = out.dims();
    let mut foreground: Vec<usize> = out.indices().collect();
    let mut candidates = Vec::new();
    loop {
        let mut deleted_in_pass = 0usize;
        for dir in BORDER_ORDER {
            let dir_bit = bit(dir[0], dir[1], dir[2]);
            let data = out.data();
            candidates.clear();
            for &idx in &foreground {
                let nbhd = neighbourhood(data, dims, idx);
                if nbhd & (1 << dir_bit) != 0 {
                    continue;
                }
                if neighbour_count(nbhd) < 2 {
                    continue;
                }
                if is_euler_invariant(nbhd) && is_simple(nbhd) {
                    candidates.push(idx);
                }
            }
            let data = out.data_mut();
            for &idx in &candidates {
                let nbhd = neighbourhood(data, dims, idx);
                if neighbour_count(nbhd) >= 2 && is_simple(nbhd) {
                    data[idx] = 0;
                    deleted_in_pass += 1;
                }
            }
            if !candidates.is_empty() {
                let data = out.data();
                foreground.retain(|&idx| data[idx] != 0);
            }
        }
        if deleted_in_pass == 0 {
            break;
        }
    }
    out
}
