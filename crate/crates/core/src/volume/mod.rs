//! Volumetric data model shared by every stage.
//!
//! Voxels are stored flat in x-fastest order: `idx = i + nx * (j + ny * k)`.

mod edt;
mod nifti;
mod smooth;

pub use edt::distance_transform;
pub use nifti::{load_nifti, read_nifti, save_nifti, write_nifti};
pub use smooth::{fwhm_to_sigma, gaussian_kernel, gaussian_smooth, smooth_sigma};

use crate::error::{Error, Result};

pub type Affine = [[f64; 4]; 4];

/// Spacing tolerance (mm) for grid compatibility.
pub const SPACING_TOL: f64 = 1e-4;
/// Affine entry tolerance for grid compatibility.
pub const AFFINE_TOL: f64 = 1e-3;

pub fn diagonal_affine(spacing: [f64; 3]) -> Affine {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Shape, voxel size and voxel-to-world transform of a volume.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGeometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub affine: Affine,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Affine) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Parameter(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Parameter(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("affine has non-finite entries".into()));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Parameter(format!("dims {dims:?} overflow")))?;
        Ok(GridGeometry { dims, spacing, affine })
    }

    /// Grid with a diagonal affine built from `spacing`.
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, diagonal_affine(spacing))
    }

    /// Unit-spaced grid. Panics on a zero dimension.
    pub fn unit(dims: [usize; 3]) -> Self {
        Self::with_spacing(dims, [1.0; 3]).expect("dims must be >= 1")
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of the voxel offset by `delta`, or `None` outside the grid.
    #[inline]
    pub fn offset(&self, at: [usize; 3], delta: [isize; 3]) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let v = at[a] as isize + delta[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            c[a] = v as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    pub fn contains(&self, ijk: [usize; 3]) -> bool {
        (0..3).all(|a| ijk[a] < self.dims[a])
    }

    pub fn check_compatible(&self, other: &GridGeometry) -> Result<()> {
        check_compatible(self, other)
    }
}

/// Succeeds iff both grids have equal dims, spacing within [`SPACING_TOL`]
/// and affine entries within [`AFFINE_TOL`]. The error names the first
/// differing field.
pub fn check_compatible(a: &GridGeometry, b: &GridGeometry) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::Geometry {
            field: "dims",
            a: format!("{:?}", a.dims),
            b: format!("{:?}", b.dims),
        });
    }
    if (0..3).any(|i| (a.spacing[i] - b.spacing[i]).abs() > SPACING_TOL) {
        return Err(Error::Geometry {
            field: "spacing",
            a: format!("{:?}", a.spacing),
            b: format!("{:?}", b.spacing),
        });
    }
    for r in 0..4 {
        for c in 0..4 {
            if (a.affine[r][c] - b.affine[r][c]).abs() > AFFINE_TOL {
                return Err(Error::Geometry {
                    field: "affine",
                    a: format!("[{r}][{c}]={}", a.affine[r][c]),
                    b: format!("[{r}][{c}]={}", b.affine[r][c]),
                });
            }
        }
    }
    Ok(())
}

/// 3D grid of finite `f32` intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    geometry: GridGeometry,
    data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(geometry: GridGeometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Data(format!(
                "expected {} voxels for dims {:?}, got {}",
                geometry.len(),
                geometry.dims,
                data.len()
            )));
        }
        let bad = data.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(Error::Data(format!("{bad} voxel(s) are NaN or infinite")));
        }
        Ok(ScalarVolume { geometry, data })
    }

    pub fn filled(geometry: GridGeometry, value: f32) -> Self {
        assert!(value.is_finite());
        let n = geometry.len();
        ScalarVolume {
            geometry,
            data: vec![value; n],
        }
    }

    pub fn from_fn(geometry: GridGeometry, mut f: impl FnMut([usize; 3]) -> f32) -> Result<Self> {
        let data = (0..geometry.len()).map(|idx| f(geometry.coords(idx))).collect();
        Self::new(geometry, data)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Same geometry, new data. Fails on length mismatch or non-finite values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.geometry.clone(), data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Volume of exact 0/1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    geometry: GridGeometry,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(geometry: GridGeometry, data: Vec<u8>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Data(format!(
                "expected {} voxels for dims {:?}, got {}",
                geometry.len(),
                geometry.dims,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Data(format!("mask value {v} is not 0 or 1")));
        }
        Ok(BinaryMask { geometry, data })
    }

    pub fn empty(geometry: GridGeometry) -> Self {
        let n = geometry.len();
        BinaryMask {
            geometry,
            data: vec![0; n],
        }
    }

    pub fn from_fn(geometry: GridGeometry, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let data = (0..geometry.len()).map(|idx| f(geometry.coords(idx)) as u8).collect();
        BinaryMask { geometry, data }
    }

    pub fn from_indices(geometry: GridGeometry, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::empty(geometry);
        for idx in indices {
            mask.data[idx] = 1;
        }
        mask
    }

    /// Converts a volume to a mask, treating every nonzero voxel as foreground.
    pub fn from_volume(vol: &ScalarVolume) -> Self {
        BinaryMask {
            geometry: vol.geometry().clone(),
            data: vol.data().iter().map(|&v| (v != 0.0) as u8).collect(),
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn is_set(&self, idx: usize) -> bool {
        self.data[idx] != 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geometry.index(i, j, k)] != 0
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.data[idx] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i)
    }

    /// True iff every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn to_volume(&self) -> ScalarVolume {
        ScalarVolume {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Linear-interpolation percentile on `(n - 1)` spacing; `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("quantile {q} outside [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("percentile input contains non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, q))
}

/// As [`percentile`], for input already sorted ascending and validated.
pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
