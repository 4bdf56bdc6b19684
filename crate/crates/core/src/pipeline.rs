//! End-to-end perfusion-map synthesis with a reproducibility manifest.
//!
//! Stages run in order: subtraction, diffusion, threshold, thinning, seed
//! selection, speed, fast marching. [`compute`] works in memory;
//! [`run_pipeline`] reads the two inputs from disk, writes the map (and
//! optionally every intermediate) and records a JSON-lines manifest with
//! all parameters, per-stage wall time and SHA-256 checksums of the outputs.

use std::fs;
use std::path::{Path, PathBuf};
use web_time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::diffusion::{perona_malik, DiffusionParams};
use crate::dsa::{subtract_normalize, DsaVolume};
use crate::eikonal::{build_speed, fast_march, ArrivalMap, SpeedField, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_FWHM;
use crate::kv;
use crate::vesselseg::{
    binarize, extract_seeds, thin3d, SeedPopulation, SeedSet, DEFAULT_SEED_QUANTILE, DEFAULT_THRESHOLD,
};
use crate::volume::{check_compatible, load_nifti, write_nifti, BinaryMask, ScalarVolume};

/// Every tunable of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Vessels are enhanced-subtraction voxels strictly above this value.
    pub threshold: f64,
    /// Seeds are skeleton voxels strictly above this quantile.
    pub seed_quantile: f64,
    pub seed_population: SeedPopulation,
    pub diffusion: DiffusionParams,
    /// Lower bound on the front speed.
    pub epsilon: f64,
    /// Smoothing width (FWHM, voxels) used when comparing maps.
    pub fwhm: f64,
    pub out_dir: PathBuf,
    pub keep_intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: DEFAULT_THRESHOLD,
            seed_quantile: DEFAULT_SEED_QUANTILE,
            seed_population: SeedPopulation::default(),
            diffusion: DiffusionParams::default(),
            epsilon: DEFAULT_EPSILON,
            fwhm: DEFAULT_FWHM,
            out_dir: PathBuf::from("."),
            keep_intermediates: false,
        }
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "threshold",
        "seed_quantile",
        "seed_population",
        "diffusion_iterations",
        "diffusion_time_step",
        "diffusion_conductance",
        "epsilon",
        "fwhm",
        "out_dir",
        "keep_intermediates",
    ];

    /// Checks every parameter against the preconditions of the stage that
    /// consumes it.
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Parameter(format!(
                "threshold must be finite, got {}",
                self.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.seed_quantile) {
            return Err(Error::Parameter(format!(
                "seed quantile {} outside [0, 1]",
                self.seed_quantile
            )));
        }
        self.diffusion.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Parameter(format!(
                "speed floor must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::Parameter(format!("fwhm must be > 0, got {}", self.fwhm)));
        }
        Ok(())
    }

    /// Applies `key=value` overrides from config-file text.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (k, v) in kv::parse_pairs(text)? {
            match k.as_str() {
                "threshold" => self.threshold = kv::value(&k, &v)?,
                "seed_quantile" => self.seed_quantile = kv::value(&k, &v)?,
                "seed_population" => self.seed_population = v.parse()?,
                "diffusion_iterations" => self.diffusion.iterations = kv::value(&k, &v)?,
                "diffusion_time_step" => self.diffusion.time_step = kv::value(&k, &v)?,
                "diffusion_conductance" => self.diffusion.conductance = kv::value(&k, &v)?,
                "epsilon" => self.epsilon = kv::value(&k, &v)?,
                "fwhm" => self.fwhm = kv::value(&k, &v)?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                "keep_intermediates" => self.keep_intermediates = kv::value(&k, &v)?,
                _ => return Err(kv::unknown(&k)),
            }
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Round-trips through [`PipelineConfig::from_kv`] for paths without
    /// whitespace.
    pub fn to_kv(&self) -> String {
        format!(
            "threshold={}\nseed_quantile={}\nseed_population={}\ndiffusion_iterations={}\n\
             diffusion_time_step={}\ndiffusion_conductance={}\nepsilon={}\nfwhm={}\nout_dir={}\n\
             keep_intermediates={}\n",
            self.threshold,
            self.seed_quantile,
            self.seed_population,
            self.diffusion.iterations,
            self.diffusion.time_step,
            self.diffusion.conductance,
            self.epsilon,
            self.fwhm,
            self.out_dir.display(),
            self.keep_intermediates
        )
    }
}

/// Every intermediate of a run.
#[derive(Clone, Debug)]
pub struct Stages {
    pub dsa: DsaVolume,
    pub vsp: ScalarVolume,
    pub mask: BinaryMask,
    pub skeleton: BinaryMask,
    pub seeds: SeedSet,
    pub speed: SpeedField,
    pub arrival: ArrivalMap,
}

/// Wall time of one stage in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub wall_ms: f64,
}

fn timed<T>(stage: &'static str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        stage,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    });
    Ok(out)
}

/// Runs every stage in memory.
pub fn compute(ct: &ScalarVolume, cta: &ScalarVolume, cfg: &PipelineConfig) -> Result<(Stages, Vec<StageTiming>)> {
    cfg.validate()?;
    check_compatible(cta.geometry(), ct.geometry())?;
    cfg.diffusion.validate_for_spacing(ct.geometry().spacing)?;
    let mut t = Vec::new();
    let dsa = timed("dsa", &mut t, || subtract_normalize(cta, ct))?;
    let vsp = timed("diffusion", &mut t, || perona_malik(dsa.volume(), &cfg.diffusion))?;
    let mask = timed("binarize", &mut t, || Ok(binarize(&vsp, cfg.threshold)))?;
    let skeleton = timed("thin", &mut t, || Ok(thin3d(&mask)))?;
    let seeds = timed("seeds", &mut t, || {
        extract_seeds(&skeleton, &vsp, cfg.seed_quantile, cfg.seed_population)
    })?;
    let speed = timed("speed", &mut t, || build_speed(&dsa, cfg.epsilon))?;
    let arrival = timed("fastmarch", &mut t, || fast_march(&speed, &seeds))?;
    Ok((
        Stages {
            dsa,
            vsp,
            mask,
            skeleton,
            seeds,
            speed,
            arrival,
        },
        t,
    ))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files written by [`run_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub ppm: PathBuf,
    pub manifest: PathBuf,
    /// `(file name, sha256)` for every written output except the manifest.
    pub checksums: Vec<(String, String)>,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const PPM_NAME: &str = "ppm.nii.gz";

fn gzip(bytes: &[u8]) -> Vec<u8> {
    use flate2::write::GzEncoder;
    use std::io::Write;
    let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
    checksums: Vec<(String, String)>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        self.checksums.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    fn volume(&mut self, name: &str, vol: &ScalarVolume) -> Result<PathBuf> {
        self.write(name, &gzip(&write_nifti(vol)))
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Loads the inputs, runs every stage and writes results to
/// `cfg.out_dir`. On failure, files written by this call are removed unless
/// `keep_intermediates` is set.
pub fn run_pipeline(ct_path: &Path, cta_path: &Path, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let ct = load_nifti(ct_path).map_err(|e| e.in_stage("load"))?;
    let cta = load_nifti(cta_path).map_err(|e| e.in_stage("load"))?;
    check_compatible(cta.geometry(), ct.geometry())?;
    cfg.diffusion.validate_for_spacing(ct.geometry().spacing)?;

    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writer {
        dir,
        written: Vec::new(),
        checksums: Vec::new(),
    };
    let result = (|| {
        let (stages, mut timings) = compute(&ct, &cta, cfg)?;
        let ppm = timed("write", &mut timings, || {
            if cfg.keep_intermediates {
                w.volume("dsa.nii.gz", stages.dsa.volume())?;
                w.volume("vsp.nii.gz", &stages.vsp)?;
                w.volume("mask.nii.gz", &stages.mask.to_volume())?;
                w.volume("skel.nii.gz", &stages.skeleton.to_volume())?;
                w.write("seeds.csv", stages.seeds.to_csv().as_bytes())?;
            }
            w.volume(PPM_NAME, &stages.arrival.to_volume())
        })?;

        let mut lines = vec![json!({
            "record": "config",
            "ct": ct_path,
            "cta": cta_path,
            "params": cfg,
            "config_kv": cfg.to_kv(),
            "dims": ct.geometry().dims,
            "spacing": ct.geometry().spacing,
        })];
        lines.extend(
            timings
                .iter()
                .map(|t| json!({"record": "stage", "stage": t.stage, "wall_ms": t.wall_ms})),
        );
        lines.push(json!({
            "record": "summary",
            "seeds": stages.seeds.len(),
            "vessel_voxels": stages.mask.count(),
            "skeleton_voxels": stages.skeleton.count(),
        }));
        lines.extend(
            w.checksums
                .iter()
                .map(|(name, sum)| json!({"record": "output", "file": name, "sha256": sum})),
        );
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        let manifest = w.dir.join(MANIFEST_NAME);
        fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
        w.written.push(manifest.clone());
        Ok(PipelineOutput {
            ppm,
            manifest,
            checksums: w.checksums.clone(),
        })
    })();
    if result.is_err() && !cfg.keep_intermediates {
        w.remove_all();
    }
    result
}
