//! Multi-source fast marching with first-order Godunov upwind updates on
//! the 6-neighbourhood.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{check_inputs, ArrivalMap, SpeedField};
use crate::error::Result;
use crate::vesselseg::SeedSet;

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Far,
    Trial,
    Accepted,
}

/// Heap entry ordered so the smallest time pops first, ties going to the
/// lexicographically smallest `(i, j, k)`.
#[derive(Clone, Copy, Debug)]
struct Trial {
    time: f64,
    /// Rank of `(i, j, k)` in lexicographic order.
    lex: usize,
    idx: usize,
}

impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Trial {}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trial {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.lex.cmp(&self.lex))
    }
}

/// Largest root of `sum_a ((T - a_a) / h_a)^2 = slowness^2` over the upwind
/// axes, dropping axes whose neighbour value is not below the root.
///
/// `upwind[a]` is the smaller known neighbour value along axis `a`, or
/// `+inf` if neither neighbour is known.
pub fn godunov_update(upwind: [f64; 3], spacing: [f64; 3], slowness: f64) -> f64 {
    let mut axes: [(f64, f64); 3] = [
        (upwind[0], spacing[0]),
        (upwind[1], spacing[1]),
        (upwind[2], spacing[2]),
    ];
    axes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let known = axes.iter().take_while(|a| a.0.is_finite()).count();
    if known == 0 {
        return f64::INFINITY;
    }
    let rhs = slowness * slowness;
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    let mut t = f64::INFINITY;
    for m in 0..known {
        let (a, h) = axes[m];
        let w = 1.0 / (h * h);
        sa += w;
        sb += a * w;
        sc += a * a * w;
        // sa T^2 - 2 sb T + (sc - rhs) = 0
        let disc = (sb * sb - sa * (sc - rhs)).max(0.0);
        t = (sb + disc.sqrt()) / sa;
        if m + 1 == known || t <= axes[m + 1].0 {
            break;
        }
    }
    t
}

/// Solves the eikonal equation from `seeds` (time 0) with speed `speed`.
///
/// Voxels are accepted in non-decreasing time order; ties are broken by
/// lexicographic `(i, j, k)` so the output is deterministic. With a positive speed
/// floor every voxel of the grid is reached.
pub fn fast_march(speed: &SpeedField, seeds: &SeedSet) -> Result<ArrivalMap> {
    check_inputs(speed, seeds)?;
    let geo = speed.geometry();
    let [nx, ny, nz] = geo.dims;
    let n = geo.len();
    let spacing = geo.spacing;
    let slowness: Vec<f64> = speed.volume().data().iter().map(|&f| 1.0 / f as f64).collect();

    let mut times = vec![f64::INFINITY; n];
    let mut state = vec![State::Far; n];
    let mut heap = BinaryHeap::new();
    let lex = |idx: usize| (idx % nx) * ny * nz + ((idx / nx) % ny) * nz + idx / (nx * ny);
    for idx in seeds.indices() {
        times[idx] = 0.0;
        state[idx] = State::Trial;
        heap.push(Trial {
            time: 0.0,
            lex: lex(idx),
            idx,
        });
    }

    let strides = [1usize, nx, nx * ny];
    let extent = [nx, ny, nz];
    let mut last = 0.0f64;
    while let Some(Trial { time, idx, .. }) = heap.pop() {
        if state[idx] == State::Accepted || time > times[idx] {
            continue;
        }
        state[idx] = State::Accepted;
        debug_assert!(
            time >= last - 1e-12 * last.max(1.0),
            "acceptance order violated: {time} after {last}"
        );
        last = time;

        let pos = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        for a in 0..3 {
            for forward in [false, true] {
                let nb = if forward {
                    if pos[a] + 1 >= extent[a] {
                        continue;
                    }
                    idx + strides[a]
                } else {
                    if pos[a] == 0 {
                        continue;
                    }
                    idx - strides[a]
                };
                if state[nb] == State::Accepted {
                    continue;
                }
                let npos = [nb % nx, (nb / nx) % ny, nb / (nx * ny)];
                let mut upwind = [f64::INFINITY; 3];
                for (b, up) in upwind.iter_mut().enumerate() {
                    if npos[b] > 0 {
                        let m = nb - strides[b];
                        if state[m] == State::Accepted {
                            *up = up.min(times[m]);
                        }
                    }
                    if npos[b] + 1 < extent[b] {
                        let p = nb + strides[b];
                        if state[p] == State::Accepted {
                            *up = up.min(times[p]);
                        }
                    }
                }
                let candidate = godunov_update(upwind, spacing, slowness[nb]);
                if candidate < times[nb] {
                    times[nb] = candidate;
                    state[nb] = State::Trial;
                    heap.push(Trial {
                        time: candidate,
                        lex: lex(nb),
                        idx: nb,
                    });
                }
            }
        }
    }
    Ok(ArrivalMap::new(geo.clone(), times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{dijkstra_oracle, SpeedField};
    use crate::labeling::Connectivity;
    use crate::volume::{GridGeometry, ScalarVolume};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(dims: [usize; 3], spacing: [f64; 3]) -> SpeedField {
        let g = GridGeometry::with_spacing(dims, spacing).unwrap();
        SpeedField::new(ScalarVolume::filled(g, 1.0), 1e-3).unwrap()
    }

    fn random_speed(dims: [usize; 3], seed: u64) -> SpeedField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridGeometry::unit(dims);
        let data = (0..g.len()).map(|_| rng.random_range(0.05f32..=1.0)).collect();
        SpeedField::new(ScalarVolume::new(g, data).unwrap(), 1e-3).unwrap()
    }

    fn max_residual(map: &ArrivalMap, speed: &SpeedField, seeds: &SeedSet) -> f64 {
        let g = map.geometry();
        let seed_idx: Vec<usize> = seeds.indices().collect();
        let mut worst = 0.0f64;
        for idx in 0..g.len() {
            if seed_idx.contains(&idx) {
                continue;
            }
            let p = g.coords(idx);
            let mut up = [f64::INFINITY; 3];
            for (a, u) in up.iter_mut().enumerate() {
                for d in [-1isize, 1] {
                    let mut delta = [0isize; 3];
                    delta[a] = d;
                    if let Some(n) = g.offset(p, delta) {
                        *u = u.min(map.times()[n]);
                    }
                }
            }
            let t = godunov_update(up, g.spacing, 1.0 / speed.volume().data()[idx] as f64);
            worst = worst.max((t - map.times()[idx]).abs());
        }
        worst
    }

    #[test]
    fn godunov_cases() {
        assert_eq!(godunov_update([0.0, f64::INFINITY, f64::INFINITY], [1.0; 3], 1.0), 1.0);
        // Two equal neighbours at 1: 2 (T - 1)^2 = 1.
        let t = godunov_update([1.0, 1.0, f64::INFINITY], [1.0; 3], 1.0);
        assert!((t - (1.0 + 0.5f64.sqrt())).abs() < 1e-15);
        // Far second neighbour is dropped.
        assert_eq!(godunov_update([0.0, 5.0, f64::INFINITY], [1.0; 3], 1.0), 1.0);
        assert_eq!(godunov_update([f64::INFINITY; 3], [1.0; 3], 1.0), f64::INFINITY);
        // Spacing scales the one-sided step.
        assert_eq!(
            godunov_update([f64::INFINITY, 2.0, f64::INFINITY], [1.0, 0.5, 1.0], 4.0),
            4.0
        );
    }

    #[test]
    fn seeds_are_zero_and_all_reached() {
        let speed = random_speed([8, 8, 8], 1);
        let seeds = SeedSet::new(speed.geometry().clone(), vec![[0, 0, 0], [7, 3, 2]]).unwrap();
        let t = fast_march(&speed, &seeds).unwrap();
        for idx in seeds.indices() {
            assert_eq!(t.times()[idx], 0.0);
        }
        assert_eq!(t.reached().count(), 512);
        assert!(t.times().iter().all(|&x| x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn axis_exact_on_uniform_speed() {
        let speed = uniform([21, 21, 21], [1.0; 3]);
        let seeds = SeedSet::new(speed.geometry().clone(), vec![[10, 10, 10]]).unwrap();
        let t = fast_march(&speed, &seeds).unwrap();
        for d in 0..=10usize {
            assert!((t.get(10 + d, 10, 10) - d as f64).abs() < 1e-12);
            assert!((t.get(10, 10 - d, 10) - d as f64).abs() < 1e-12);
            assert!((t.get(10, 10, 10 + d) - d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn anisotropic_spacing_axis_distances() {
        let speed = uniform([9, 9, 9], [0.5, 1.0, 2.0]);
        let seeds = SeedSet::new(speed.geometry().clone(), vec![[4, 4, 4]]).unwrap();
        let t = fast_march(&speed, &seeds).unwrap();
        assert!((t.get(8, 4, 4) - 2.0).abs() < 1e-12);
        assert!((t.get(4, 8, 4) - 4.0).abs() < 1e-12);
        assert!((t.get(4, 4, 8) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_with_local_update() {
        let speed = random_speed([10, 9, 8], 5);
        let seeds = SeedSet::new(speed.geometry().clone(), vec![[1, 1, 1], [8, 7, 6]]).unwrap();
        let t = fast_march(&speed, &seeds).unwrap();
        assert!(max_residual(&t, &speed, &seeds) <= 1e-9);
    }

    #[test]
    fn below_six_connected_dijkstra() {
        let speed = uniform([12, 12, 12], [1.0; 3]);
        let seeds = SeedSet::new(speed.geometry().clone(), vec![[3, 4, 5]]).unwrap();
        let t = fast_march(&speed, &seeds).unwrap();
        let d = dijkstra_oracle(&speed, &seeds, Connectivity::Six).unwrap();
        for (a, b) in t.times().iter().zip(d.times()) {
            assert!(*a <= b + 1e-9);
        }
    }

    #[test]
    fn input_errors() {
        let speed = uniform([4, 4, 4], [1.0; 3]);
        let empty = SeedSet::new(speed.geometry().clone(), vec![]).unwrap();
        assert!(fast_march(&speed, &empty).is_err());
        let other = SeedSet::new(GridGeometry::unit([4, 4, 5]), vec![[0, 0, 0]]).unwrap();
        assert!(fast_march(&speed, &other).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_a_seed_never_increases_time(seed in 0u64..1000, extra in prop::array::uniform3(0usize..7)) {
            let speed = random_speed([7, 7, 7], seed);
            let g = speed.geometry().clone();
            let one = SeedSet::new(g.clone(), vec![[3, 3, 3]]).unwrap();
            let two = SeedSet::new(g, vec![[3, 3, 3], extra]).unwrap();
            let a = fast_march(&speed, &one).unwrap();
            let b = fast_march(&speed, &two).unwrap();
            for (x, y) in a.times().iter().zip(b.times()) {
                prop_assert!(*y <= *x + 1e-12);
            }
        }

        #[test]
        fn raising_speed_never_increases_time(seed in 0u64..1000, boost in 1.0f32..3.0) {
            let speed = random_speed([7, 7, 7], seed);
            let g = speed.geometry().clone();
            let faster = SpeedField::new(
                speed.volume().map(|v| (v * boost).min(1.0)).unwrap(),
                1e-3,
            ).unwrap();
            let seeds = SeedSet::new(g, vec![[0, 6, 2]]).unwrap();
            let a = fast_march(&speed, &seeds).unwrap();
            let b = fast_march(&faster, &seeds).unwrap();
            for (x, y) in a.times().iter().zip(b.times()) {
                prop_assert!(*y <= *x + 1e-9);
            }
        }
    }
}
