//! Browser-independent state behind the demo page.

use perfmap_core::diffusion::{perona_malik, DiffusionParams};
use perfmap_core::eikonal::fast_march;
use perfmap_core::eval::{compare_maps, DEFAULT_FWHM};
use perfmap_core::phantom::{default_root, generate_phantom, PhantomBundle, PhantomSpec};
use perfmap_core::pipeline::{compute, PipelineConfig, Stages};
use perfmap_core::render::{hstack, orthogonal_montage, robust_range, slice, Plane, Rgba};
use perfmap_core::vesselseg::SeedSet;
use perfmap_core::{Error, Result};

/// Smallest and largest phantom edge the page offers.
pub const MIN_SIZE: usize = 32;
pub const MAX_SIZE: usize = 96;

/// Summary of the latest pipeline run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunStats {
    pub seeds: usize,
    pub vessel_voxels: usize,
    pub rho_raw: f64,
    pub rho_smoothed: f64,
}

pub struct Session {
    bundle: PhantomBundle,
    stages: Stages,
    stats: RunStats,
}

impl Session {
    /// Generates a cubic phantom and runs the pipeline with defaults.
    pub fn new(size: usize, seed: u64, noise_percent: f64) -> Result<Self> {
        if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
            return Err(Error::Parameter(format!(
                "size must be in {MIN_SIZE}..={MAX_SIZE}, got {size}"
            )));
        }
        let dims = [size; 3];
        let scale = size as f64 / 96.0;
        let base = PhantomSpec::default();
        let lo = ((base.branch_length_range.0 as f64 * scale).round() as usize).max(6);
        let hi = ((base.branch_length_range.1 as f64 * scale).round() as usize).max(lo + 2);
        let spec = PhantomSpec {
            dims,
            root: default_root(dims),
            branch_length_range: (lo, hi),
            noise_sigma: noise_percent / 100.0 * base.contrast_intensity,
            rng_seed: seed,
            ..base
        };
        let bundle = generate_phantom(&spec)?;
        let (stages, stats) = run(&bundle, &PipelineConfig::default())?;
        Ok(Session { bundle, stages, stats })
    }

    /// Re-runs the pipeline on the current phantom.
    pub fn rerun(&mut self, threshold: f64, quantile: f64, iterations: usize, conductance: f64) -> Result<RunStats> {
        let cfg = PipelineConfig {
            threshold,
            seed_quantile: quantile,
            diffusion: DiffusionParams {
                iterations,
                conductance,
                ..DiffusionParams::default()
            },
            ..PipelineConfig::default()
        };
        let (stages, stats) = run(&self.bundle, &cfg)?;
        self.stages = stages;
        self.stats = stats;
        Ok(stats)
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn size(&self) -> usize {
        self.bundle.ct.dims()[0]
    }

    /// Orthogonal montage of the current perfusion map.
    pub fn ppm_image(&self) -> Rgba {
        orthogonal_montage(&self.stages.arrival.to_volume(), None)
    }

    /// Orthogonal montage of the ground-truth arrival times.
    pub fn truth_image(&self) -> Rgba {
        orthogonal_montage(&self.bundle.true_arrival, None)
    }

    /// Axial mid-slices of the subtraction image before and after diffusion
    /// with the given parameters, on a shared `[0, 1]` scale, plus the
    /// vessel mask that `threshold` would produce.
    pub fn diffusion_image(&self, iterations: usize, conductance: f64, threshold: f64) -> Result<Rgba> {
        let params = DiffusionParams {
            iterations,
            conductance,
            ..DiffusionParams::default()
        };
        let dsa = self.stages.dsa.volume();
        let vsp = perona_malik(dsa, &params)?;
        let mask = perfmap_core::vesselseg::binarize(&vsp, threshold).to_volume();
        Ok(hstack(
            &[
                slice(dsa, Plane::Axial, (0.0, 1.0)),
                slice(&vsp, Plane::Axial, (0.0, 1.0)),
                slice(&mask, Plane::Axial, (0.0, 1.0)),
            ],
            2,
        ))
    }

    /// Arrival times from a single seed at `(i, j)` on the axial mid-slice,
    /// through the current speed field; returned as that axial slice.
    pub fn march_from(&self, i: usize, j: usize) -> Result<Rgba> {
        let g = self.stages.speed.geometry().clone();
        let k = g.dims[2] / 2;
        let seeds = SeedSet::new(g, vec![[i, j, k]])?;
        let t = fast_march(&self.stages.speed, &seeds)?.to_volume();
        Ok(slice(&t, Plane::Axial, robust_range(&t)))
    }
}

fn run(bundle: &PhantomBundle, cfg: &PipelineConfig) -> Result<(Stages, RunStats)> {
    let (stages, _) = compute(&bundle.ct, &bundle.cta, cfg)?;
    let report = compare_maps(&stages.arrival.to_volume(), &bundle.true_arrival, None, DEFAULT_FWHM)?;
    let stats = RunStats {
        seeds: stages.seeds.len(),
        vessel_voxels: stages.mask.count(),
        rho_raw: report.rho_raw,
        rho_smoothed: report.rho_smoothed,
    };
    Ok((stages, stats))
}
