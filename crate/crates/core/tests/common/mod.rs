//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use perfmap_core::eikonal::SpeedField;
use perfmap_core::vesselseg::SeedSet;
use perfmap_core::{BinaryMask, GridGeometry, ScalarVolume};

/// Local eikonal update by enumerating every non-empty subset of axes with
/// a known neighbour, solving the quadratic on that subset, and keeping the
/// smallest root that is consistent (not below any used neighbour, not
/// above any unused one).
pub fn subset_update(upwind: [f64; 3], h: [f64; 3], slowness: f64) -> f64 {
    let mut best = f64::INFINITY;
    for subset in 1u8..8 {
        let used: Vec<usize> = (0..3).filter(|a| subset & (1 << a) != 0).collect();
        if used.iter().any(|&a| !upwind[a].is_finite()) {
            continue;
        }
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, -slowness * slowness);
        for &a in &used {
            let w = 1.0 / (h[a] * h[a]);
            qa += w;
            qb += -2.0 * upwind[a] * w;
            qc += upwind[a] * upwind[a] * w;
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        let tol = 1e-12 * t.abs().max(1.0);
        let consistent_used = used.iter().all(|&a| t >= upwind[a] - tol);
        let consistent_unused = (0..3).filter(|a| !used.contains(a)).all(|a| t <= upwind[a] + tol);
        if consistent_used && consistent_unused {
            best = best.min(t);
        }
    }
    best
}

/// Gauss-Seidel fast sweeping over the 8 axis-direction orderings of the
/// same first-order 6-neighbour discretization, until no value changes by
/// more than `tol`.
pub fn fast_sweeping(speed: &SpeedField, seeds: &SeedSet, tol: f64) -> Vec<f64> {
    let g = speed.geometry();
    let [nx, ny, nz] = g.dims;
    let slowness: Vec<f64> = speed.volume().data().iter().map(|&f| 1.0 / f as f64).collect();
    let mut t = vec![f64::INFINITY; g.len()];
    let mut fixed = vec![false; g.len()];
    for idx in seeds.indices() {
        t[idx] = 0.0;
        fixed[idx] = true;
    }
    let range = |n: usize, fwd: bool| -> Vec<usize> {
        if fwd {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        }
    };
    loop {
        let mut change = 0.0f64;
        for order in 0..8u8 {
            for &k in &range(nz, order & 4 == 0) {
                for &j in &range(ny, order & 2 == 0) {
                    for &i in &range(nx, order & 1 == 0) {
                        let idx = g.index(i, j, k);
                        if fixed[idx] {
                            continue;
                        }
                        let p = [i, j, k];
                        let mut up = [f64::INFINITY; 3];
                        for (a, u) in up.iter_mut().enumerate() {
                            let mut lo = p;
                            let mut hi = p;
                            if p[a] > 0 {
                                lo[a] -= 1;
                                *u = u.min(t[g.index(lo[0], lo[1], lo[2])]);
                            }
                            if p[a] + 1 < g.dims[a] {
                                hi[a] += 1;
                                *u = u.min(t[g.index(hi[0], hi[1], hi[2])]);
                            }
                        }
                        let cand = subset_update(up, g.spacing, slowness[idx]);
                        if cand < t[idx] {
                            let d = if t[idx].is_finite() {
                                t[idx] - cand
                            } else {
                                f64::INFINITY
                            };
                            change = change.max(d);
                            t[idx] = cand;
                        }
                    }
                }
            }
        }
        if change <= tol {
            return t;
        }
    }
}

/// One explicit Perona-Malik step transcribed with explicit neighbour
/// lookups and zero flux at the border.
pub fn dense_diffusion_step(vol: &ScalarVolume, dt: f64, kappa: f64) -> Vec<f64> {
    let g = vol.geometry();
    let at = |p: [isize; 3]| -> Option<f64> {
        (0..3)
            .all(|a| p[a] >= 0 && (p[a] as usize) < g.dims[a])
            .then(|| vol.get(p[0] as usize, p[1] as usize, p[2] as usize) as f64)
    };
    let cond = |d: f64, s: f64| (-(d.abs() / s / kappa).powi(2)).exp();
    (0..g.len())
        .map(|idx| {
            let p = g.coords(idx).map(|c| c as isize);
            let c = at(p).unwrap();
            let mut sum = 0.0;
            for a in 0..3 {
                let s = g.spacing[a];
                for dir in [-1isize, 1] {
                    let mut q = p;
                    q[a] += dir;
                    if let Some(n) = at(q) {
                        sum += cond(n - c, s) * (n - c) / (s * s);
                    }
                }
            }
            c + dt * sum
        })
        .collect()
}

/// Mean 1-based rank of each element over every permutation that sorts
/// the input (exhaustive; n <= 8).
pub fn enumerated_ranks(values: &[f64]) -> Vec<f64> {
    fn go(k: usize, perm: &mut [usize], v: &[f64], sum: &mut [f64], count: &mut u64) {
        if k == perm.len() {
            if perm.windows(2).all(|w| v[w[0]] <= v[w[1]]) {
                for (pos, &i) in perm.iter().enumerate() {
                    sum[i] += (pos + 1) as f64;
                }
                *count += 1;
            }
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            go(k + 1, perm, v, sum, count);
            perm.swap(k, i);
        }
    }
    let mut perm: Vec<usize> = (0..values.len()).collect();
    let mut sum = vec![0.0; values.len()];
    let mut count = 0;
    go(0, &mut perm, values, &mut sum, &mut count);
    sum.iter().map(|s| s / count as f64).collect()
}

/// Pearson correlation of two rank vectors, computed directly.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn mask(dims: [usize; 3], f: impl Fn(i64, i64, i64) -> bool) -> BinaryMask {
    BinaryMask::from_fn(GridGeometry::unit(dims), |[i, j, k]| f(i as i64, j as i64, k as i64))
}

/// Named shapes for the thinning suite, all within 32^3.
pub fn thinning_suite() -> Vec<(&'static str, BinaryMask, i64)> {
    let in_box = |v: i64, lo: i64, hi: i64| (lo..hi).contains(&v);
    vec![
        (
            "bar",
            mask([12, 12, 28], |i, j, k| {
                in_box(i, 3, 8) && in_box(j, 3, 8) && in_box(k, 4, 24)
            }),
            0,
        ),
        (
            "L-shape",
            mask([28, 12, 28], |i, j, k| {
                (in_box(i, 3, 7) && in_box(j, 4, 8) && in_box(k, 3, 24))
                    || (in_box(i, 3, 24) && in_box(j, 4, 8) && in_box(k, 3, 7))
            }),
            0,
        ),
        (
            "loop",
            mask([28, 28, 9], |i, j, k| {
                let outer = in_box(i, 4, 24) && in_box(j, 4, 24);
                let inner = in_box(i, 8, 20) && in_box(j, 8, 20);
                outer && !inner && in_box(k, 3, 6)
            }),
            1,
        ),
        (
            "two tubes",
            mask([24, 24, 30], |i, j, k| {
                let r2 = |ci: i64, cj: i64| (i - ci).pow(2) + (j - cj).pow(2);
                in_box(k, 3, 27) && (r2(7, 7) <= 5 || r2(16, 15) <= 5)
            }),
            0,
        ),
    ]
}
