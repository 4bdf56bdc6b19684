//! Voxelwise general linear model with permutation-based family-wise error
//! control and cluster-extent filtering.
//!
//! The model regresses each voxel's value across subjects on a design matrix
//! (by default intercept, deficit score, age and gender) and tests one
//! contrast. The FWE threshold is the `1 - alpha` quantile of the maximum
//! statistic over permutations of the nuisance-model residuals
//! (Freedman-Lane).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{label, Connectivity};
use crate::par;
use crate::volume::{check_compatible, load_nifti, percentile, BinaryMask, GridGeometry, ScalarVolume};

pub const DEFAULT_N_PERM: usize = 1000;
pub const MIN_N_PERM: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MIN_EXTENT: usize = 100;

/// Column names of the default design.
pub const DEFAULT_COLUMNS: [&str; 4] = ["intercept", "score", "age", "gender"];

/// One subject of a cohort table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub subject_id: String,
    pub ppm_path: PathBuf,
    pub score: f64,
    pub age: f64,
    pub gender: u8,
}

/// Subjects with their perfusion map and covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortTable {
    rows: Vec<CohortRow>,
}

impl CohortTable {
    pub fn new(rows: Vec<CohortRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.subject_id.as_str()) {
                return Err(Error::Table(format!("duplicate subject_id `{}`", r.subject_id)));
            }
            if !(r.score.is_finite() && r.score >= 0.0) {
                return Err(Error::Table(format!(
                    "subject `{}`: score must be finite and >= 0, got {}",
                    r.subject_id, r.score
                )));
            }
            if !r.age.is_finite() {
                return Err(Error::Table(format!("subject `{}`: age is not finite", r.subject_id)));
            }
            if r.gender > 1 {
                return Err(Error::Table(format!(
                    "subject `{}`: gender must be 0 or 1, got {}",
                    r.subject_id, r.gender
                )));
            }
        }
        let p = DEFAULT_COLUMNS.len();
        if rows.len() < p + 2 {
            return Err(Error::Table(format!(
                "cohort needs at least {} subjects, got {}",
                p + 2,
                rows.len()
            )));
        }
        Ok(CohortTable { rows })
    }

    /// Parses CSV with columns `subject_id,ppm_path,score,age,gender`.
    /// Relative `ppm_path`s are resolved against `base_dir`.
    pub fn from_csv(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (n, rec) in reader.deserialize::<CohortRow>().enumerate() {
            let mut row = rec.map_err(|e| Error::Table(format!("cohort row {}: {e}", n + 1)))?;
            if let Some(base) = base_dir {
                if row.ppm_path.is_relative() {
                    row.ppm_path = base.join(&row.ppm_path);
                }
            }
            rows.push(row);
        }
        CohortTable::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CohortTable::from_csv(&text, path.parent())
    }

    pub fn rows(&self) -> &[CohortRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Loads every subject's map and checks they share one grid.
    pub fn load_volumes(&self) -> Result<Vec<ScalarVolume>> {
        let vols = self
            .rows
            .iter()
            .map(|r| load_nifti(&r.ppm_path))
            .collect::<Result<Vec<_>>>()?;
        for v in &vols[1..] {
            check_compatible(vols[0].geometry(), v.geometry())?;
        }
        Ok(vols)
    }
}

/// An `n x p` design matrix with a contrast vector, plus the cached
/// quantities every voxel fit reuses.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    contrast: DVector<f64>,
    /// `(X^T X)^-1`.
    xtx_inv: DMatrix<f64>,
    /// `(X^T X)^-1 X^T`, so that `beta = pinv * y`.
    pinv: DMatrix<f64>,
    /// `c^T (X^T X)^-1 c`.
    c_var: f64,
}

impl DesignMatrix {
    /// `rows` are subjects. The first column must be all ones and the matrix
    /// must have full column rank; `contrast` has one entry per column.
    pub fn new(rows: &[Vec<f64>], contrast: &[f64]) -> Result<Self> {
        let n = rows.len();
        let p = contrast.len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::Parameter(format!(
                "design rows and contrast must all have {p} > 0 entries"
            )));
        }
        if n < p + 2 {
            return Err(Error::Parameter(format!(
                "design needs at least {} rows for {p} columns, got {n}",
                p + 2
            )));
        }
        if rows.iter().flatten().chain(contrast).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("design or contrast has non-finite entries".into()));
        }
        if rows.iter().any(|r| r[0] != 1.0) {
            return Err(Error::Parameter(
                "first design column must be the intercept (all ones)".into(),
            ));
        }
        if contrast.iter().all(|&c| c == 0.0) {
            return Err(Error::Parameter("contrast is all zeros".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let sv = x.singular_values();
        let smax = sv.max();
        if sv.min() <= smax * 1e-10 {
            return Err(Error::Parameter("design matrix is rank deficient".into()));
        }
        let xtx_inv = (x.transpose() * &x)
            .try_inverse()
            .ok_or_else(|| Error::Parameter("design matrix is rank deficient".into()))?;
        let pinv = &xtx_inv * x.transpose();
        let contrast = DVector::from_column_slice(contrast);
        let c_var = (contrast.transpose() * &xtx_inv * &contrast)[(0, 0)];
        Ok(DesignMatrix {
            x,
            contrast,
            xtx_inv,
            pinv,
            c_var,
        })
    }

    /// Columns `[1, score, age, gender]` with contrast `[0, 1, 0, 0]`.
    pub fn from_cohort(table: &CohortTable) -> Result<Self> {
        DesignMatrix::from_cohort_with_contrast(table, &[0.0, 1.0, 0.0, 0.0])
    }

    pub fn from_cohort_with_contrast(table: &CohortTable, contrast: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = table
            .rows()
            .iter()
            .map(|r| vec![1.0, r.score, r.age, r.gender as f64])
            .collect();
        DesignMatrix::new(&rows, contrast)
    }

    pub fn n_subjects(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.x.ncols()
    }

    pub fn contrast(&self) -> &[f64] {
        self.contrast.as_slice()
    }

    fn t_stat(&self, num: f64, rss: f64) -> f64 {
        let dof = (self.n_subjects() - self.n_columns()) as f64;
        let se2 = rss.max(0.0) / dof * self.c_var;
        if se2 > 0.0 {
            num / se2.sqrt()
        } else if num == 0.0 {
            0.0
        } else {
            num.signum() * f64::from(f32::MAX)
        }
    }

    /// `beta` and the contrast `t` for one voxel's values across subjects.
    pub fn fit(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let yv = DVector::from_column_slice(y);
        let beta = &self.pinv * &yv;
        let resid = &yv - &self.x * &beta;
        let rss = resid.norm_squared();
        let num = self.contrast.dot(&beta);
        (beta.as_slice().to_vec(), self.t_stat(num, rss))
    }

    /// Basis of the nuisance space: `X N` where the columns of `N` span the
    /// null space of the contrast.
    fn nuisance(&self) -> DMatrix<f64> {
        let p = self.n_columns();
        let c = &self.contrast;
        let proj = DMatrix::identity(p, p) - c * c.transpose() / c.norm_squared();
        // The projector has rank p - 1; its leading left-singular vectors
        // span the contrast's null space.
        let svd = proj.svd(true, false);
        let u = svd.u.expect("requested U");
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let basis = DMatrix::from_fn(p, p - 1, |i, j| u[(i, order[j])]);
        &self.x * basis
    }
}

fn gather(volumes: &[ScalarVolume], voxel: usize, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(volumes) {
        *o = v.data()[voxel] as f64;
    }
}

fn check_volumes(volumes: &[ScalarVolume], design: &DesignMatrix) -> Result<GridGeometry> {
    let first = volumes
        .first()
        .ok_or_else(|| Error::Empty("no subject volumes".into()))?;
    if volumes.len() != design.n_subjects() {
        return Err(Error::Parameter(format!(
            "{} volumes for a design with {} rows",
            volumes.len(),
            design.n_subjects()
        )));
    }
    for v in &volumes[1..] {
        check_compatible(first.geometry(), v.geometry())?;
    }
    Ok(first.geometry().clone())
}

const VOXEL_BLOCK: usize = 4096;

/// Ordinary least squares at every voxel. Returns one `beta` volume per
/// design column and the contrast `t` map.
pub fn fit_voxelwise(volumes: &[ScalarVolume], design: &DesignMatrix) -> Result<(Vec<ScalarVolume>, ScalarVolume)> {
    let geo = check_volumes(volumes, design)?;
    let nvox = geo.len();
    let p = design.n_columns();
    let blocks = par::map_range(nvox.div_ceil(VOXEL_BLOCK), |b| {
        let lo = b * VOXEL_BLOCK;
        let hi = (lo + VOXEL_BLOCK).min(nvox);
        let mut y = vec![0.0; volumes.len()];
        let mut out = Vec::with_capacity(hi - lo);
        for v in lo..hi {
            gather(volumes, v, &mut y);
            out.push(design.fit(&y));
        }
        out
    });
    let mut betas = vec![Vec::with_capacity(nvox); p];
    let mut t = Vec::with_capacity(nvox);
    for (beta, tv) in blocks.into_iter().flatten() {
        for (col, b) in betas.iter_mut().zip(beta) {
            col.push(b as f32);
        }
        t.push(tv as f32);
    }
    let betas = betas
        .into_iter()
        .map(|d| ScalarVolume::new(geo.clone(), d))
        .collect::<Result<Vec<_>>>()?;
    Ok((betas, ScalarVolume::new(geo, t)?))
}

/// Options for [`permutation_fwe`] and [`run_glm`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlmOptions {
    pub n_perm: usize,
    pub alpha: f64,
    pub min_extent: usize,
    /// Test `|t|` instead of positive `t`.
    pub two_sided: bool,
    pub rng_seed: u64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            n_perm: DEFAULT_N_PERM,
            alpha: DEFAULT_ALPHA,
            min_extent: DEFAULT_MIN_EXTENT,
            two_sided: false,
            rng_seed: 0,
        }
    }
}

impl GlmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_perm < MIN_N_PERM {
            return Err(Error::Parameter(format!(
                "at least {MIN_N_PERM} permutations are required, got {}",
                self.n_perm
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.min_extent == 0 {
            return Err(Error::Parameter("cluster extent must be >= 1".into()));
        }
        Ok(())
    }
}

/// FWE threshold and the null distribution it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationResult {
    pub threshold: f64,
    /// Maximum statistic per permutation; the first entry is the
    /// unpermuted data.
    pub max_stats: Vec<f64>,
}

/// Freedman-Lane permutation test of the design's contrast.
///
/// Each voxel is regressed on the nuisance columns; the residuals are
/// permuted, added back to the nuisance fit and the full model refitted.
/// The statistic is `t` (or `|t|` when `two_sided`); its maximum over
/// voxels is recorded per permutation and the threshold is the
/// `1 - alpha` quantile of those maxima. Permutation 0 is the identity.
pub fn permutation_fwe(
    volumes: &[ScalarVolume],
    design: &DesignMatrix,
    opts: &GlmOptions,
) -> Result<PermutationResult> {
    opts.validate()?;
    let geo = check_volumes(volumes, design)?;
    let n = design.n_subjects();
    let p = design.n_columns();
    let nvox = geo.len();

    // Residuals of every voxel after the nuisance fit, voxel-major.
    let z = design.nuisance();
    let hz = &z
        * (z.transpose() * &z)
            .try_inverse()
            .ok_or_else(|| Error::Parameter("nuisance design is rank deficient".into()))?
        * z.transpose();
    let rz_blocks = par::map_range(nvox.div_ceil(VOXEL_BLOCK), |b| {
        let lo = b * VOXEL_BLOCK;
        let hi = (lo + VOXEL_BLOCK).min(nvox);
        let mut y = vec![0.0; n];
        let mut out = Vec::with_capacity((hi - lo) * n);
        for v in lo..hi {
            gather(volumes, v, &mut y);
            let yv = DVector::from_column_slice(&y);
            let r = &yv - &hz * &yv;
            out.extend_from_slice(r.as_slice());
        }
        out
    });
    let rz: Vec<f64> = rz_blocks.into_iter().flatten().collect();
    let rz_norm: Vec<f64> = rz.chunks_exact(n).map(|r| r.iter().map(|x| x * x).sum()).collect();

    // For permuted residuals r*, with u = X^T r* and G = (X^T X)^-1:
    //   c^T beta = c^T G u,   RSS = |r*|^2 - u^T G u,
    // because the nuisance fit lies in the span of X.
    let g = &design.xtx_inv;
    let cg = g * &design.contrast;
    let xt = design.x.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(opts.n_perm);
    perms.push((0..n).collect());
    for _ in 1..opts.n_perm {
        let mut pi: Vec<usize> = (0..n).collect();
        pi.shuffle(&mut rng);
        perms.push(pi);
    }

    let max_stats = par::map_range(perms.len(), |k| {
        let pi = &perms[k];
        let mut best = f64::NEG_INFINITY;
        let mut u = DVector::zeros(p);
        for (r, &norm) in rz.chunks_exact(n).zip(&rz_norm) {
            for a in 0..p {
                let mut s = 0.0;
                for i in 0..n {
                    s += xt[(a, i)] * r[pi[i]];
                }
                u[a] = s;
            }
            let num = cg.dot(&u);
            let rss = norm - (g * &u).dot(&u);
            let t = design.t_stat(num, rss);
            let stat = if opts.two_sided { t.abs() } else { t };
            best = best.max(stat);
        }
        best
    });
    let threshold = percentile(&max_stats, 1.0 - opts.alpha)?;
    Ok(PermutationResult { threshold, max_stats })
}

/// A connected suprathreshold region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cluster {
    pub size: usize,
    pub peak_t: f64,
    pub peak_index: [usize; 3],
}

/// 26-connected components of `{t >= threshold}` with at least
/// `min_extent` voxels, sorted by peak value (highest first), and the
/// union of their voxels.
pub fn cluster_extent(t_map: &ScalarVolume, threshold: f64, min_extent: usize) -> Result<(Vec<Cluster>, BinaryMask)> {
    if min_extent == 0 {
        return Err(Error::Parameter("cluster extent must be >= 1".into()));
    }
    let geo = t_map.geometry();
    let supra: Vec<bool> = t_map.data().iter().map(|&t| t as f64 >= threshold).collect();
    let comps = label(geo.dims, &supra, Connectivity::TwentySix);
    let mut peaks: Vec<Option<(f32, usize)>> = vec![None; comps.count()];
    for (idx, &l) in comps.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let t = t_map.data()[idx];
        let slot = &mut peaks[(l - 1) as usize];
        if slot.is_none_or(|(best, _)| t > best) {
            *slot = Some((t, idx));
        }
    }
    let keep: Vec<bool> = comps.sizes.iter().map(|&s| s >= min_extent).collect();
    let mut clusters: Vec<Cluster> = peaks
        .iter()
        .zip(&comps.sizes)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((peak, &size), _)| {
            let (t, idx) = peak.expect("non-empty component");
            Cluster {
                size,
                peak_t: t as f64,
                peak_index: geo.coords(idx),
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.peak_t.total_cmp(&a.peak_t).then(a.peak_index.cmp(&b.peak_index)));
    let mask = BinaryMask::from_indices(
        geo.clone(),
        comps
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0 && keep[(l - 1) as usize])
            .map(|(i, _)| i),
    );
    Ok((clusters, mask))
}

/// Everything a voxelwise analysis produces.
#[derive(Clone, Debug)]
pub struct GlmResult {
    pub beta: Vec<ScalarVolume>,
    pub t_map: ScalarVolume,
    pub fwe_threshold: f64,
    pub max_stats: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub significant_mask: BinaryMask,
    pub two_sided: bool,
}

impl GlmResult {
    pub const CLUSTER_CSV_HEADER: &'static str = "cluster,size,peak_t,peak_i,peak_j,peak_k";

    pub fn clusters_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CLUSTER_CSV_HEADER);
        for (n, c) in self.clusters.iter().enumerate() {
            let [i, j, k] = c.peak_index;
            out.push_str(&format!("{},{},{},{i},{j},{k}\n", n + 1, c.size, c.peak_t));
        }
        out
    }
}

/// Fit, permutation threshold and cluster filtering in one call.
pub fn run_glm(volumes: &[ScalarVolume], design: &DesignMatrix, opts: &GlmOptions) -> Result<GlmResult> {
    opts.validate()?;
    let (beta, t_map) = fit_voxelwise(volumes, design)?;
    let perm = permutation_fwe(volumes, design, opts)?;
    let stat_map = if opts.two_sided {
        t_map.map(f32::abs)?
    } else {
        t_map.clone()
    };
    let (clusters, significant_mask) = cluster_extent(&stat_map, perm.threshold, opts.min_extent)?;
    Ok(GlmResult {
        beta,
        t_map,
        fwe_threshold: perm.threshold,
        max_stats: perm.max_stats,
        clusters,
        significant_mask,
        two_sided: opts.two_sided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn covariates(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                vec![
                    1.0,
                    rng.random_range(0..5) as f64,
                    rng.random_range(40.0..90.0),
                    (i % 2) as f64,
                ]
            })
            .collect()
    }

    fn contrast() -> [f64; 4] {
        [0.0, 1.0, 0.0, 0.0]
    }

    fn volumes_from(dims: [usize; 3], n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Vec<ScalarVolume> {
        let g = GridGeometry::unit(dims);
        (0..n)
            .map(|s| ScalarVolume::new(g.clone(), (0..g.len()).map(|v| f(s, v) as f32).collect()).unwrap())
            .collect()
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = covariates(12, &mut rng);
        let d = DesignMatrix::new(&rows, &contrast()).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[1] + 3.0).collect();
        let (beta, _) = d.fit(&y);
        assert!((beta[0] - 3.0).abs() < 1e-9 && (beta[1] - 2.0).abs() < 1e-9);
        assert!(beta[2].abs() < 1e-9 && beta[3].abs() < 1e-9);
    }

    /// Normal equations solved by Gaussian elimination with partial pivoting.
    fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = rows[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (r, &yi) in rows.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += r[i] * r[j];
                }
                a[i][p] += r[i] * yi;
            }
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for row in 0..p {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=p {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = covariates(20, &mut rng);
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d = DesignMatrix::new(&rows, &contrast()).unwrap();
        let (beta, _) = d.fit(&y);
        for (b, o) in beta.iter().zip(normal_equations(&rows, &y)) {
            assert!((b - o).abs() < 1e-10, "{b} vs {o}");
        }
    }

    #[test]
    fn rejects_bad_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = covariates(10, &mut rng);
        for r in &mut rows {
            r[3] = 2.0 * r[1];
        }
        assert!(matches!(
            DesignMatrix::new(&rows, &contrast()),
            Err(Error::Parameter(_))
        ));
        let rows = covariates(5, &mut rng);
        assert!(DesignMatrix::new(&rows, &contrast()).is_err());
        let mut rows = covariates(10, &mut rng);
        rows[0][0] = 0.5;
        assert!(DesignMatrix::new(&rows, &contrast()).is_err());
        let rows = covariates(10, &mut rng);
        assert!(DesignMatrix::new(&rows, &[0.0; 4]).is_err());
    }

    #[test]
    fn null_t_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = covariates(50, &mut rng);
        let d = DesignMatrix::new(&rows, &contrast()).unwrap();
        let trials = 10_000;
        let mut exceed = 0;
        let mut y = vec![0.0; 50];
        for _ in 0..trials {
            for v in &mut y {
                *v = StandardNormal.sample(&mut rng);
            }
            if d.fit(&y).1.abs() > 2.013 {
                exceed += 1;
            }
        }
        let rate = exceed as f64 / trials as f64;
        assert!((rate - 0.05).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn shift_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = covariates(25, &mut rng);
        let y: Vec<f64> = rows.iter().map(|r| 0.3 * r[1] + rng.random_range(-1.0..1.0)).collect();
        let (b0, t0) = DesignMatrix::new(&rows, &contrast()).unwrap().fit(&y);
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1] + 7.0, r[2], r[3]]).collect();
        let (b1, t1) = DesignMatrix::new(&shifted, &contrast()).unwrap().fit(&y);
        assert!((b0[1] - b1[1]).abs() < 1e-8 && (t0 - t1).abs() < 1e-8);
        assert!((b0[0] - b1[0]).abs() > 1e-3);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1] * 4.0, r[2], r[3]]).collect();
        let (b2, t2) = DesignMatrix::new(&scaled, &contrast()).unwrap().fit(&y);
        assert!((b0[1] / 4.0 - b2[1]).abs() < 1e-8 && (t0 - t2).abs() < 1e-8);
    }

    #[test]
    fn voxelwise_matches_single_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = covariates(15, &mut rng);
        let d = DesignMatrix::new(&rows, &contrast()).unwrap();
        let vols = volumes_from([5, 4, 3], 15, |_, _| rng.random_range(0.0..10.0));
        let (betas, t) = fit_voxelwise(&vols, &d).unwrap();
        assert_eq!(betas.len(), 4);
        for v in 0..60 {
            let y: Vec<f64> = vols.iter().map(|s| s.data()[v] as f64).collect();
            let (b, tv) = d.fit(&y);
            assert_eq!(betas[1].data()[v], b[1] as f32);
            assert_eq!(t.data()[v], tv as f32);
        }
    }

    #[test]
    fn identity_permutation_reproduces_observed_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = covariates(16, &mut rng);
        let d = DesignMatrix::new(&rows, &contrast()).unwrap();
        let vols = volumes_from([4, 4, 4], 16, |s, v| {
            rows[s][1] * (v % 3) as f64 + rng.random_range(0.0..1.0)
        });
        let (_, t) = fit_voxelwise(&vols, &d).unwrap();
        let opts = GlmOptions {
            n_perm: 100,
            rng_seed: 9,
            ..Default::default()
        };
        let res = permutation_fwe(&vols, &d, &opts).unwrap();
        let observed = t.data().iter().copied().fold(f32::MIN, f32::max) as f64;
        assert!((res.max_stats[0] - observed).abs() < 1e-4 * observed.abs().max(1.0));
        assert_eq!(res, permutation_fwe(&vols, &d, &opts).unwrap());
        let all = GlmOptions {
            alpha: 1.0,
            ..opts.clone()
        };
        let min = res.max_stats.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(permutation_fwe(&vols, &d, &all).unwrap().threshold, min);
        let few = GlmOptions { n_perm: 99, ..opts };
        assert!(permutation_fwe(&vols, &d, &few).is_err());
    }

    #[test]
    fn cluster_examples() {
        let g = GridGeometry::unit([20, 20, 20]);
        let empty = ScalarVolume::filled(g.clone(), 0.0);
        let (c, m) = cluster_extent(&empty, 1.0, 100).unwrap();
        assert!(c.is_empty() && m.count() == 0);

        // 150-voxel slab (6x5x5) and 99-voxel slab (11x9x1), far apart.
        let t = ScalarVolume::from_fn(g.clone(), |[i, j, k]| {
            if i < 6 && j < 5 && k < 5 {
                3.0 + (i + j + k) as f32 * 0.01
            } else if (8..19).contains(&i) && (10..19).contains(&j) && k == 15 {
                9.0
            } else {
                0.0
            }
        })
        .unwrap();
        let (c, m) = cluster_extent(&t, 2.0, 100).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size, 150);
        assert_eq!(c[0].peak_index, [5, 4, 4]);
        assert_eq!(m.count(), 150);
        let (c, m) = cluster_extent(&t, 2.0, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].size, 99, "sorted by peak");
        let supra = BinaryMask::from_fn(g, |[i, j, k]| t.get(i, j, k) >= 2.0);
        assert_eq!(m, supra);
        assert!(cluster_extent(&t, 2.0, 0).is_err());
    }

    #[test]
    fn cohort_csv() {
        let text = "subject_id,ppm_path,score,age,gender\n\
                    a,a.nii,1,50,0\nb,/abs/b.nii,0,61,1\nc,c.nii,2,70,0\n\
                    d,d.nii,3,44,1\ne,e.nii,0,58,0\nf,f.nii,4,66,1\n";
        let t = CohortTable::from_csv(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.rows()[0].ppm_path, PathBuf::from("/data/a.nii"));
        assert_eq!(t.rows()[1].ppm_path, PathBuf::from("/abs/b.nii"));
        assert_eq!(DesignMatrix::from_cohort(&t).unwrap().n_columns(), 4);
        let dup = text.replace("b,/abs", "a,/abs");
        assert!(matches!(CohortTable::from_csv(&dup, None), Err(Error::Table(_))));
        let bad_gender = text.replace("44,1", "44,2");
        assert!(CohortTable::from_csv(&bad_gender, None).is_err());
        let negative = text.replace("c,c.nii,2", "c,c.nii,-2");
        assert!(CohortTable::from_csv(&negative, None).is_err());
        let missing = text.replace(",66,1", ",,1");
        assert!(CohortTable::from_csv(&missing, None).is_err());
        let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(CohortTable::from_csv(&short, None).is_err());
    }
}
