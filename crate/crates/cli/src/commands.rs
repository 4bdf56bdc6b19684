use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use perfmap_core::diffusion::{perona_malik, DiffusionParams};
use perfmap_core::dsa::subtract_normalize;
use perfmap_core::eikonal::{fast_march, SpeedField, DEFAULT_EPSILON};
use perfmap_core::eval::{compare_maps, ComparisonReport, DEFAULT_FWHM};
use perfmap_core::glm::{run_glm, CohortTable, DesignMatrix, GlmOptions, DEFAULT_COLUMNS};
use perfmap_core::phantom::{generate_phantom, PhantomSpec};
use perfmap_core::pipeline::{run_pipeline, PipelineConfig};
use perfmap_core::render::{orthogonal_montage, Rgba};
use perfmap_core::vesselseg::{binarize, extract_seeds, thin3d, SeedSet, DEFAULT_SEED_QUANTILE, DEFAULT_THRESHOLD};
use perfmap_core::volume::{gaussian_smooth, load_nifti, save_nifti};
use perfmap_core::{BinaryMask, Error, ScalarVolume};
use rayon::prelude::*;
use serde_json::json;

use crate::{Command, DiffusionArgs, GlmArgs, PipelineArgs};

/// 2 for invalid input or parameters anywhere in the error chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let invalid = err
        .chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(Error::is_validation);
    if invalid {
        2
    } else {
        1
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::Parameter(msg.into()).into()
}

fn load(path: &Path) -> Result<ScalarVolume> {
    load_nifti(path).with_context(|| format!("reading {}", path.display()))
}

fn save(vol: &ScalarVolume, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_nifti(vol, path).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_png(img: &Rgba, path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgba);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&img.pixels)?;
    writer.finish()?;
    Ok(())
}

/// Reads `key=value` text from a file if `arg` names one, else uses `arg` itself.
fn kv_text(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if !arg.contains('=') && path.is_file() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    } else {
        Ok(arg.to_string())
    }
}

impl DiffusionArgs {
    fn apply(&self, params: &mut DiffusionParams) {
        if let Some(n) = self.iterations {
            params.iterations = n;
        }
        if let Some(dt) = self.time_step {
            params.time_step = dt;
        }
        if let Some(k) = self.conductance {
            params.conductance = k;
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Dsa { ct, cta, out } => {
            let dsa = subtract_normalize(&load(&cta)?, &load(&ct)?)?;
            save(dsa.volume(), &out)
        }
        Command::Enhance { input, out, diffusion } => {
            let mut params = DiffusionParams::default();
            diffusion.apply(&mut params);
            let vol = load(&input)?;
            params.validate_for_spacing(vol.geometry().spacing)?;
            save(&perona_malik(&vol, &params)?, &out)
        }
        Command::Segment { input, out, threshold } => {
            let threshold = threshold.unwrap_or(DEFAULT_THRESHOLD);
            if !threshold.is_finite() {
                return Err(invalid(format!("threshold must be finite, got {threshold}")));
            }
            save(&binarize(&load(&input)?, threshold).to_volume(), &out)
        }
        Command::Skeletonize { input, out } => {
            let mask = BinaryMask::from_volume(&load(&input)?);
            save(&thin3d(&mask).to_volume(), &out)
        }
        Command::Seeds {
            skeleton,
            vsp,
            out,
            quantile,
            population,
        } => {
            let skel = BinaryMask::from_volume(&load(&skeleton)?);
            let vsp = load(&vsp)?;
            let seeds = extract_seeds(
                &skel,
                &vsp,
                quantile.unwrap_or(DEFAULT_SEED_QUANTILE),
                population.unwrap_or_default(),
            )?;
            write_text(&out, &seeds.to_csv())?;
            eprintln!("{} seeds", seeds.len());
            Ok(())
        }
        Command::Fastmarch {
            speed,
            seeds,
            out,
            epsilon,
        } => fastmarch(&speed, &seeds, &out, epsilon.unwrap_or(DEFAULT_EPSILON)),
        Command::Pipeline(args) => pipeline(args),
        Command::Compare {
            ppm,
            reference,
            mask,
            fwhm,
            no_smooth,
            out,
            png_dir,
        } => {
            let fwhm = if no_smooth { 0.0 } else { fwhm.unwrap_or(DEFAULT_FWHM) };
            compare(
                &ppm,
                &reference,
                mask.as_deref(),
                fwhm,
                out.as_deref(),
                png_dir.as_deref(),
            )
        }
        Command::Glm(args) => glm(args),
        Command::Phantom { spec, out_dir } => {
            let spec = match spec {
                Some(s) => PhantomSpec::from_kv(&kv_text(&s)?)?,
                None => PhantomSpec::default(),
            };
            let bundle = generate_phantom(&spec)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            bundle.save(&out_dir)?;
            write_text(&out_dir.join("phantom_spec.txt"), &spec.to_kv())
        }
        Command::Render { input, out, min, max } => {
            let vol = load(&input)?;
            let range = match (min, max) {
                (Some(lo), Some(hi)) if hi > lo => Some((lo, hi)),
                (Some(lo), Some(hi)) => return Err(invalid(format!("--max {hi} must exceed --min {lo}"))),
                _ => None,
            };
            write_png(&orthogonal_montage(&vol, range), &out)
        }
    }
}

fn fastmarch(speed: &Path, seeds: &Path, out: &Path, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!("epsilon must be in (0, 1], got {epsilon}")));
    }
    let potential = load(speed)?;
    if let Some(v) = potential.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Data(format!("speed potential value {v} outside [0, 1]")).into());
    }
    let floor = epsilon as f32;
    let field = SpeedField::new(potential.map(|v| v.max(floor))?, epsilon)?;
    let text = fs::read_to_string(seeds).with_context(|| format!("reading {}", seeds.display()))?;
    let seeds = SeedSet::from_csv(&text, field.geometry().clone())?;
    save(&fast_march(&field, &seeds)?.to_volume(), out)
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_kv(&text)?;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = args.seed_quantile {
        cfg.seed_quantile = v;
    }
    if let Some(v) = args.seed_population {
        cfg.seed_population = v;
    }
    args.diffusion.apply(&mut cfg.diffusion);
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.fwhm {
        cfg.fwhm = v;
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    cfg.keep_intermediates |= args.keep_intermediates;
    cfg.validate()?;
    Ok(cfg)
}

struct Subject {
    id: String,
    ct: PathBuf,
    cta: PathBuf,
}

fn read_batch(path: &Path) -> Result<Vec<Subject>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Table(format!("batch file lacks a `{name}` column")))
    };
    let (id, ct, cta) = (col("subject_id")?, col("ct")?, col("cta")?);
    let mut subjects: Vec<Subject> = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Table(format!("batch row {}: {e}", n + 1)))?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let subject = Subject {
            id: field(id),
            ct: base.join(field(ct)),
            cta: base.join(field(cta)),
        };
        let safe = !subject.id.is_empty()
            && subject
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            && subject.id != "."
            && subject.id != "..";
        if !safe {
            return Err(Error::Table(format!("batch row {}: unusable subject_id `{}`", n + 1, subject.id)).into());
        }
        if subjects.iter().any(|s| s.id == subject.id) {
            return Err(Error::Table(format!("duplicate subject_id `{}`", subject.id)).into());
        }
        subjects.push(subject);
    }
    if subjects.is_empty() {
        return Err(Error::Table("batch file lists no subjects".into()).into());
    }
    Ok(subjects)
}

fn pipeline(args: PipelineArgs) -> Result<()> {
    let cfg = pipeline_config(&args)?;
    if args.jobs == Some(0) {
        return Err(invalid("--jobs must be at least 1"));
    }
    let Some(batch) = &args.batch else {
        let (ct, cta) = (args.ct.as_deref().unwrap(), args.cta.as_deref().unwrap());
        let out = run_pipeline(ct, cta, &cfg)?;
        println!("{}", out.ppm.display());
        return Ok(());
    };

    let subjects = read_batch(batch)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker pool")?;
    let results: Vec<Result<PathBuf, Error>> = pool.install(|| {
        subjects
            .par_iter()
            .map(|s| {
                let sub = PipelineConfig {
                    out_dir: cfg.out_dir.join(&s.id),
                    ..cfg.clone()
                };
                run_pipeline(&s.ct, &s.cta, &sub).map(|o| o.ppm)
            })
            .collect()
    });

    let mut first_error = None;
    for (s, r) in subjects.iter().zip(results) {
        match r {
            Ok(ppm) => println!("{}\tok\t{}", s.id, ppm.display()),
            Err(e) => {
                println!("{}\tfailed\t{e}", s.id);
                first_error.get_or_insert((s.id.clone(), e));
            }
        }
    }
    match first_error {
        None => Ok(()),
        Some((id, e)) => Err(anyhow::Error::new(e).context(format!("subject `{id}` failed"))),
    }
}

fn compare(
    ppm: &Path,
    reference: &Path,
    mask: Option<&Path>,
    fwhm: f64,
    out: Option<&Path>,
    png_dir: Option<&Path>,
) -> Result<()> {
    if !(fwhm >= 0.0 && fwhm.is_finite()) {
        return Err(invalid(format!("fwhm must be finite and non-negative, got {fwhm}")));
    }
    let ppm = load(ppm)?;
    let reference = load(reference)?;
    let mask = mask.map(|p| load(p).map(|v| BinaryMask::from_volume(&v))).transpose()?;
    let report = compare_maps(&ppm, &reference, mask.as_ref(), fwhm)?;
    let csv = format!("{}\n{}\n", ComparisonReport::CSV_HEADER, report.to_csv_row());
    match out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(dir) = png_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, vol) in [("ppm", &ppm), ("reference", &reference)] {
            let shown = if fwhm > 0.0 {
                gaussian_smooth(vol, fwhm)?
            } else {
                vol.clone()
            };
            write_png(&orthogonal_montage(&shown, None), &dir.join(format!("{name}.png")))?;
        }
    }
    Ok(())
}

fn glm(args: GlmArgs) -> Result<()> {
    let table = CohortTable::load(&args.cohort)?;
    let design = match &args.contrast {
        Some(c) => DesignMatrix::from_cohort_with_contrast(&table, c)?,
        None => DesignMatrix::from_cohort(&table)?,
    };
    let opts = GlmOptions {
        n_perm: args.n_perm,
        alpha: args.alpha,
        min_extent: args.extent,
        two_sided: args.two_sided,
        rng_seed: args.seed,
    };
    opts.validate()?;
    if let Some(f) = args.smooth_fwhm {
        if !(f > 0.0 && f.is_finite()) {
            return Err(invalid(format!("--smooth-fwhm must be positive, got {f}")));
        }
    }

    let mut volumes = table.load_volumes()?;
    if let Some(f) = args.smooth_fwhm {
        volumes = volumes
            .par_iter()
            .map(|v| gaussian_smooth(v, f))
            .collect::<Result<_, _>>()?;
    }
    let res = run_glm(&volumes, &design, &opts)?;

    let dir = &args.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, beta) in DEFAULT_COLUMNS.iter().zip(&res.beta) {
        save(beta, &dir.join(format!("beta_{name}.nii.gz")))?;
    }
    save(&res.t_map, &dir.join("t_map.nii.gz"))?;
    save(&res.significant_mask.to_volume(), &dir.join("significant_mask.nii.gz"))?;
    write_text(&dir.join("clusters.csv"), &res.clusters_csv())?;
    let report = json!({
        "subjects": table.len(),
        "columns": DEFAULT_COLUMNS,
        "contrast": design.contrast(),
        "input_maps": match args.smooth_fwhm {
            Some(f) => json!({"smoothed": true, "fwhm_voxels": f}),
            None => json!({"smoothed": false}),
        },
        "n_perm": opts.n_perm,
        "alpha": opts.alpha,
        "min_extent": opts.min_extent,
        "two_sided": opts.two_sided,
        "rng_seed": opts.rng_seed,
        "fwe_threshold": res.fwe_threshold,
        "clusters": res.clusters.len(),
        "significant_voxels": res.significant_mask.count(),
    });
    write_text(&dir.join("glm_report.json"), &format!("{report:#}\n"))?;
    println!(
        "FWE threshold {:.4}; {} cluster(s), {} voxel(s)",
        res.fwe_threshold,
        res.clusters.len(),
        res.significant_mask.count()
    );
    Ok(())
}
