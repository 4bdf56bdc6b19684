//! `perfmap`: command-line front end for the perfusion-map pipeline.
//!
//! Exit status is 0 on success, 2 when the inputs or parameters are
//! invalid, and 1 for any other failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perfmap_core::vesselseg::SeedPopulation;

#[derive(Parser)]
#[command(
    name = "perfmap",
    version,
    about = "Predicted perfusion maps from CT and CT-angiography"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subtract CT from CTA, clamp at zero and normalize to [0, 1].
    Dsa {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        cta: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Edge-preserving Perona-Malik diffusion.
    Enhance {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        diffusion: DiffusionArgs,
    },
    /// Threshold an enhanced volume into a vessel mask.
    Segment {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Voxels strictly above this value are vessel [default: 0.2, the
        /// standard VTrails vesselness threshold]
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Thin a vessel mask to a one-voxel-wide centerline.
    Skeletonize {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Pick fast-marching sources on the skeleton.
    Seeds {
        #[arg(long)]
        skeleton: PathBuf,
        /// Enhanced volume whose values rank the skeleton voxels.
        #[arg(long)]
        vsp: PathBuf,
        /// Output CSV of seed voxels.
        #[arg(long, short)]
        out: PathBuf,
        /// Seeds are skeleton voxels strictly above this quantile [default:
        /// 0.75, the VTrails 75th-percentile seed rule]
        #[arg(long)]
        quantile: Option<f64>,
        /// Value population the quantile is taken over [default: skeleton]
        #[arg(long)]
        population: Option<SeedPopulation>,
    },
    /// Solve the eikonal equation from a seed set.
    Fastmarch {
        /// Speed potential in [0, 1], usually the output of `dsa`.
        #[arg(long)]
        speed: PathBuf,
        /// Seed CSV as written by `seeds`.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Lower bound on the front speed so that tissue is reached
        /// [default: 0.001]
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run every stage from CT/CTA to perfusion map, with a manifest.
    Pipeline(PipelineArgs),
    /// Rank-correlate a perfusion map with a reference map.
    Compare {
        #[arg(long)]
        ppm: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Restrict the correlation to nonzero voxels of this volume.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Gaussian smoothing FWHM in voxels [default: 10, the comparison
        /// kernel size of 10 voxels read as FWHM]
        #[arg(long, conflicts_with = "no_smooth")]
        fwhm: Option<f64>,
        /// Report raw correlation only.
        #[arg(long)]
        no_smooth: bool,
        /// Report CSV (header plus one row); printed to stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write orthogonal-slice PNGs of both smoothed maps into this directory.
        #[arg(long)]
        png_dir: Option<PathBuf>,
    },
    /// Voxelwise regression of perfusion maps on a clinical score.
    Glm(GlmArgs),
    /// Generate a synthetic CT/CTA pair with known ground truth.
    Phantom {
        /// `key=value` pairs, inline or as a file path.
        #[arg(long)]
        spec: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Orthogonal mid-slice PNG with a diverging colormap.
    Render {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Colormap lower bound [default: 2nd percentile]
        #[arg(long, requires = "max")]
        min: Option<f32>,
        /// Colormap upper bound [default: 98th percentile]
        #[arg(long, requires = "min")]
        max: Option<f32>,
    },
}

#[derive(Args, Clone, Default)]
struct DiffusionArgs {
    /// Diffusion iterations [default: 5]
    #[arg(long)]
    iterations: Option<usize>,
    /// Explicit time step; at most 0.0625 for 3-D stability [default: 0.0625]
    #[arg(long)]
    time_step: Option<f64>,
    /// Edge-stopping conductance kappa [default: 1.0]
    #[arg(long)]
    conductance: Option<f64>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Non-contrast CT volume.
    #[arg(long, required_unless_present = "batch", requires = "cta")]
    ct: Option<PathBuf>,
    /// CT-angiography volume on the same grid.
    #[arg(long, required_unless_present = "batch", requires = "ct")]
    cta: Option<PathBuf>,
    /// CSV with columns subject_id,ct,cta; each subject is written to
    /// <out-dir>/<subject_id>.
    #[arg(long, conflicts_with_all = ["ct", "cta"])]
    batch: Option<PathBuf>,
    /// Worker threads for batch mode [default: all cores]
    #[arg(long)]
    jobs: Option<usize>,
    /// `key=value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vessel threshold [default: 0.2, the standard VTrails vesselness threshold]
    #[arg(long)]
    threshold: Option<f64>,
    /// Seed quantile [default: 0.75, the VTrails 75th-percentile seed rule]
    #[arg(long)]
    seed_quantile: Option<f64>,
    /// Seed quantile population [default: skeleton]
    #[arg(long)]
    seed_population: Option<SeedPopulation>,
    #[command(flatten)]
    diffusion: DiffusionArgs,
    /// Front speed floor [default: 0.001]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comparison smoothing FWHM in voxels, recorded in the manifest
    /// [default: 10, the comparison kernel size of 10 voxels read as FWHM]
    #[arg(long)]
    fwhm: Option<f64>,
    /// Output directory [default: current directory]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write dsa/vsp/mask/skel volumes and seeds.csv, and keep partial
    /// outputs on failure.
    #[arg(long)]
    keep_intermediates: bool,
}

#[derive(Args)]
struct GlmArgs {
    /// CSV with columns subject_id,ppm_path,score,age,gender.
    #[arg(long)]
    cohort: PathBuf,
    /// Contrast over (intercept, score, age, gender) [default: 0,1,0,0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    contrast: Option<Vec<f64>>,
    /// Permutations for the family-wise error threshold
    #[arg(long, default_value_t = perfmap_core::glm::DEFAULT_N_PERM)]
    n_perm: usize,
    /// Family-wise error rate
    #[arg(long, default_value_t = perfmap_core::glm::DEFAULT_ALPHA)]
    alpha: f64,
    /// Minimum cluster size in voxels
    #[arg(long, default_value_t = perfmap_core::glm::DEFAULT_MIN_EXTENT)]
    extent: usize,
    /// Permutation RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test |t| instead of positive t.
    #[arg(long)]
    two_sided: bool,
    /// Smooth each input map with this FWHM (voxels) before fitting; inputs
    /// are used as given when omitted.
    #[arg(long)]
    smooth_fwhm: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
