//! Perona-Malik gradient anisotropic diffusion (explicit flux form).
//!
//! Each iteration computes, for every voxel and axis, the flux through the
//! two faces shared with its axis neighbours,
//!
//! ```text
//! I += dt * sum_a [ g(|d+ I| / s_a) d+ I - g(|d- I| / s_a) d- I ] / s_a^2
//! g(x) = exp(-(x / kappa)^2)
//! ```
//!
//! where `d+`/`d-` are forward/backward differences. Fluxes through the
//! volume boundary are zero, so the global sum is conserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::volume::ScalarVolume;

/// Explicit-scheme stability limit `1 / 2^(D + 1)` for `D = 3`, at unit spacing.
pub const MAX_TIME_STEP: f64 = 0.0625;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub iterations: usize,
    pub time_step: f64,
    pub conductance: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            iterations: 5,
            time_step: 0.0625,
            conductance: 1.0,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Parameter("diffusion iterations must be >= 1".into()));
        }
        if !(self.time_step > 0.0) || self.time_step > MAX_TIME_STEP {
            return Err(Error::Parameter(format!(
                "diffusion time step {} outside (0, {MAX_TIME_STEP}]",
                self.time_step
            )));
        }
        if !(self.conductance > 0.0) || !self.conductance.is_finite() {
            return Err(Error::Parameter(format!(
                "conductance must be > 0, got {}",
                self.conductance
            )));
        }
        Ok(())
    }

    /// Also requires `time_step <= min_spacing^2 / 16`, which keeps every
    /// update a convex combination of neighbouring values.
    pub fn validate_for_spacing(&self, spacing: [f64; 3]) -> Result<()> {
        self.validate()?;
        let min_s = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        let limit = MAX_TIME_STEP * min_s * min_s;
        if self.time_step > limit {
            return Err(Error::Parameter(format!(
                "diffusion time step {} unstable for spacing {spacing:?} (limit {limit})",
                self.time_step
            )));
        }
        Ok(())
    }
}

#[inline]
fn conductance(grad: f64, kappa: f64) -> f64 {
    let r = grad / kappa;
    (-r * r).exp()
}

/// Runs `params.iterations` explicit diffusion steps and returns the result.
pub fn perona_malik(vol: &ScalarVolume, params: &DiffusionParams) -> Result<ScalarVolume> {
    let geo = vol.geometry();
    params.validate_for_spacing(geo.spacing)?;

    let [nx, ny, nz] = geo.dims;
    let strides = [1usize, nx, nx * ny];
    let extent = [nx, ny, nz];
    let inv_s2 = geo.spacing.map(|s| 1.0 / (s * s));
    let inv_s = geo.spacing.map(|s| 1.0 / s);
    let dt = params.time_step;
    let kappa = params.conductance;

    let mut cur: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..params.iterations {
        let src = &cur;
        par::chunks_mut(&mut next, nx, |row, dst| {
            let j = row % ny;
            let k = row / ny;
            let base = row * nx;
            for (i, out) in dst.iter_mut().enumerate() {
                let idx = base + i;
                let c = src[idx];
                let pos = [i, j, k];
                let mut update = 0.0;
                for a in 0..3 {
                    let mut flux = 0.0;
                    if pos[a] + 1 < extent[a] {
                        let d = src[idx + strides[a]] - c;
                        flux += conductance(d.abs() * inv_s[a], kappa) * d;
                    }
                    if pos[a] > 0 {
                        let d = c - src[idx - strides[a]];
                        flux -= conductance(d.abs() * inv_s[a], kappa) * d;
                    }
                    update += flux * inv_s2[a];
                }
                *out = c + dt * update;
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    vol.with_data(cur.into_iter().map(|v| v as f32).collect())
}
