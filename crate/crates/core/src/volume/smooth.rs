//! Separable Gaussian smoothing.

use super::ScalarVolume;
use crate::error::{Error, Result};
use crate::par;

/// `sigma = fwhm / sqrt(8 ln 2)`.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
}

/// Sampled Gaussian truncated at `ceil(4 sigma)` and normalized to sum 1.
/// Index `radius` is the center tap.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(0.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric reflection (`x[-1] = x[0]`, `x[n] = x[n-1]`),
/// repeated for offsets longer than the line.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Smooths with an isotropic Gaussian of the given FWHM in voxels.
pub fn gaussian_smooth(vol: &ScalarVolume, fwhm_voxels: f64) -> Result<ScalarVolume> {
    if !(fwhm_voxels > 0.0) || !fwhm_voxels.is_finite() {
        return Err(Error::Parameter(format!(
            "smoothing FWHM must be > 0, got {fwhm_voxels}"
        )));
    }
    let s = fwhm_to_sigma(fwhm_voxels);
    smooth_sigma(vol, [s; 3])
}

/// Smooths with per-axis standard deviations given in voxels.
pub fn smooth_sigma(vol: &ScalarVolume, sigma_voxels: [f64; 3]) -> Result<ScalarVolume> {
    if sigma_voxels.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Parameter(format!(
            "smoothing sigma must be > 0, got {sigma_voxels:?}"
        )));
    }
    let dims = vol.dims();
    let mut cur: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    for (axis, &sigma) in sigma_voxels.iter().enumerate() {
        cur = convolve_axis(&cur, dims, axis, &gaussian_kernel(sigma));
    }
    vol.with_data(cur.into_iter().map(|v| v as f32).collect())
}

fn convolve_axis(src: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let [nx, ny, _] = dims;
    let n = dims[axis];
    let radius = (kernel.len() / 2) as isize;
    let stride = [1, nx, nx * ny][axis];
    let mut out = vec![0.0; src.len()];
    // One x-row of output per chunk; each row reads only from `src`.
    par::chunks_mut(&mut out, nx, |row, dst| {
        let base = row * nx;
        let (j, k) = (row % ny, row / ny);
        let pos = [0, j, k][axis];
        for (i, d) in dst.iter_mut().enumerate() {
            let p = if axis == 0 { i } else { pos };
            let line_start = base + i - p * stride;
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let q = reflect(p as isize + t as isize - radius, n);
                acc += w * src[line_start + q * stride];
            }
            *d = acc;
        }
    });
    out
}
