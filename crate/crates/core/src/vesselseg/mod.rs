//! Vessel mask, centerline skeleton and seed selection.

mod thin;

pub use thin::{thin3d, BORDER_ORDER};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{check_compatible, percentile, BinaryMask, GridGeometry, ScalarVolume};

/// Default vessel threshold on the enhanced subtraction image.
pub const DEFAULT_THRESHOLD: f64 = 0.2;
/// Default seed quantile.
pub const DEFAULT_SEED_QUANTILE: f64 = 0.75;

/// `mask(x) = 1` iff `vsp(x) > threshold`, compared at the volume's `f32`
/// precision so a stored `0.2` is not above a threshold of `0.2`.
pub fn binarize(vsp: &ScalarVolume, threshold: f64) -> BinaryMask {
    let t = threshold as f32;
    let data = vsp.data().iter().map(|&v| (v > t) as u8).collect();
    BinaryMask::new(vsp.geometry().clone(), data).expect("0/1 data of matching length")
}

/// Which voxels form the distribution the seed quantile is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedPopulation {
    /// Enhanced intensities at skeleton voxels only.
    #[default]
    Skeleton,
    /// Enhanced intensities over the whole volume.
    Volume,
}

impl std::str::FromStr for SeedPopulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skeleton" => Ok(SeedPopulation::Skeleton),
            "volume" => Ok(SeedPopulation::Volume),
            other => Err(Error::Parameter(format!(
                "seed population must be `skeleton` or `volume`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SeedPopulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeedPopulation::Skeleton => "skeleton",
            SeedPopulation::Volume => "volume",
        })
    }
}

/// Zero-time sources for fast marching: in-grid voxel indices, unique and
/// sorted lexicographically by `(i, j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSet {
    voxels: Vec<[usize; 3]>,
    geometry: GridGeometry,
}

impl SeedSet {
    /// Sorts and deduplicates; fails if any voxel lies outside the grid.
    pub fn new(geometry: GridGeometry, mut voxels: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(v) = voxels.iter().find(|v| !geometry.contains(**v)) {
            return Err(Error::Parameter(format!("seed {v:?} outside grid {:?}", geometry.dims)));
        }
        voxels.sort_unstable();
        voxels.dedup();
        Ok(SeedSet { voxels, geometry })
    }

    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.voxels.iter().map(|&[i, j, k]| self.geometry.index(i, j, k))
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_indices(self.geometry.clone(), self.indices())
    }

    /// `# dims=nx,ny,nz`, then an `i,j,k` header, then one row per seed.
    pub fn to_csv(&self) -> String {
        let [nx, ny, nz] = self.geometry.dims;
        let mut out = format!("# dims={nx},{ny},{nz}\ni,j,k\n");
        for [i, j, k] in &self.voxels {
            writeln!(out, "{i},{j},{k}").unwrap();
        }
        out
    }

    /// Parses [`SeedSet::to_csv`] output; the recorded dims must match `geometry`.
    pub fn from_csv(text: &str, geometry: GridGeometry) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let dims_line = lines.next().ok_or_else(|| Error::Table("seed file is empty".into()))?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("# dims=")
            .ok_or_else(|| Error::Table(format!("expected `# dims=...`, got `{dims_line}`")))?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Table(format!("bad dims line `{dims_line}`: {e}")))?;
        if dims != geometry.dims {
            return Err(Error::Geometry {
                field: "dims",
                a: format!("{dims:?}"),
                b: format!("{:?}", geometry.dims),
            });
        }
        match lines.next() {
            Some("i,j,k") => {}
            other => {
                return Err(Error::Table(format!("expected `i,j,k` header, got {other:?}")));
            }
        }
        let mut voxels = Vec::new();
        for (n, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Table(format!("seed row {}: `{line}`", n + 1)));
            }
            let mut v = [0usize; 3];
            for a in 0..3 {
                v[a] = parts[a]
                    .parse()
                    .map_err(|e| Error::Table(format!("seed row {}: {e}", n + 1)))?;
            }
            voxels.push(v);
        }
        SeedSet::new(geometry, voxels)
    }
}

/// Seeds are the skeleton voxels whose enhanced value is strictly greater
/// than the `q`-quantile of `population`.
pub fn extract_seeds(skel: &BinaryMask, vsp: &ScalarVolume, q: f64, population: SeedPopulation) -> Result<SeedSet> {
    check_compatible(skel.geometry(), vsp.geometry())?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("seed quantile {q} outside [0, 1]")));
    }
    let on_skeleton: Vec<usize> = skel.indices().collect();
    if on_skeleton.is_empty() {
        return Err(Error::Empty("skeleton has no foreground voxels".into()));
    }
    let values: Vec<f64> = match population {
        SeedPopulation::Skeleton => on_skeleton.iter().map(|&idx| vsp.data()[idx] as f64).collect(),
        SeedPopulation::Volume => vsp.data().iter().map(|&v| v as f64).collect(),
    };
    let threshold = percentile(&values, q)?;
    let geo = skel.geometry();
    let voxels: Vec<[usize; 3]> = on_skeleton
        .into_iter()
        .filter(|&idx| vsp.data()[idx] as f64 > threshold)
        .map(|idx| geo.coords(idx))
        .collect();
    if voxels.is_empty() {
        return Err(Error::Empty(format!(
            "no skeleton voxel exceeds the {q} quantile ({threshold}); try a lower quantile"
        )));
    }
    SeedSet::new(geo.clone(), voxels)
}
