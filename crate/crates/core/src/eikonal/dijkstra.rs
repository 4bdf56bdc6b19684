//! Graph shortest paths on the voxel lattice, used as a reference for the
//! continuous solver.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{check_inputs, ArrivalMap, SpeedField};
use crate::error::{Error, Result};
use crate::labeling::Connectivity;
use crate::vesselseg::SeedSet;

/// Largest grid the oracle accepts (64^3 voxels).
pub const MAX_ORACLE_VOXELS: usize = 64 * 64 * 64;

/// How the slowness of an edge's endpoints is turned into a traversal cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeCost {
    /// `length * (1/F(u) + 1/F(v)) / 2`.
    Trapezoid,
    /// `length / F(v)`, the slowness of the voxel being entered. This is the
    /// cost a single-neighbour fast-marching update charges.
    Target,
}

/// Dijkstra arrival times with trapezoidal edge costs.
pub fn dijkstra_oracle(speed: &SpeedField, seeds: &SeedSet, conn: Connectivity) -> Result<ArrivalMap> {
    dijkstra_with(speed, seeds, conn, EdgeCost::Trapezoid)
}

pub fn dijkstra_with(speed: &SpeedField, seeds: &SeedSet, conn: Connectivity, cost: EdgeCost) -> Result<ArrivalMap> {
    check_inputs(speed, seeds)?;
    let geo = speed.geometry();
    if geo.len() > MAX_ORACLE_VOXELS {
        return Err(Error::Parameter(format!(
            "oracle grid {:?} exceeds 64^3 voxels",
            geo.dims
        )));
    }
    let slowness: Vec<f64> = speed.volume().data().iter().map(|&f| 1.0 / f as f64).collect();
    let steps: Vec<([isize; 3], f64)> = conn
        .offsets()
        .into_iter()
        .map(|d| {
            let len = (0..3)
                .map(|a| (d[a] as f64 * geo.spacing[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            (d, len)
        })
        .collect();

    let mut times = vec![f64::INFINITY; geo.len()];
    let mut done = vec![false; geo.len()];
    let mut heap = BinaryHeap::new();
    for idx in seeds.indices() {
        times[idx] = 0.0;
        heap.push(Reverse((OrdF64(0.0), idx)));
    }
    while let Some(Reverse((OrdF64(t), u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        let pos = geo.coords(u);
        for (d, len) in &steps {
            let Some(v) = geo.offset(pos, *d) else { continue };
            if done[v] {
                continue;
            }
            let w = match cost {
                EdgeCost::Trapezoid => len * 0.5 * (slowness[u] + slowness[v]),
                EdgeCost::Target => len * slowness[v],
            };
            let cand = t + w;
            if cand < times[v] {
                times[v] = cand;
                heap.push(Reverse((OrdF64(cand), v)));
            }
        }
    }
    Ok(ArrivalMap::new(geo.clone(), times))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
