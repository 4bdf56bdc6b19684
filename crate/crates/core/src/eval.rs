//! Agreement between a perfusion map and a reference map: Spearman rank
//! correlation on raw and Gaussian-smoothed volumes.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::volume::{check_compatible, gaussian_smooth, BinaryMask, ScalarVolume};

/// Default smoothing kernel width, in voxels (full width at half maximum).
pub const DEFAULT_FWHM: f64 = 10.0;

/// Result of [`compare_maps`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rho_raw: f64,
    pub rho_smoothed: f64,
    /// Two-sided p-value of `rho_smoothed`.
    pub p_value: f64,
    pub n_voxels: usize,
    pub fwhm_used: f64,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "rho_raw,rho_smoothed,p_value,n_voxels,fwhm_used";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.rho_raw, self.rho_smoothed, self.p_value, self.n_voxels, self.fwhm_used
        )
    }
}

/// 1-based ranks with ties replaced by the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let mean = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    // One square root: on rank vectors the sums are exact, so identical or
    // reversed rankings give exactly +-1.
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation `rho` over `n` pairs via
/// `t = rho * sqrt((n - 2) / (1 - rho^2))` on `n - 2` degrees of freedom.
pub fn t_approx_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t)).clamp(0.0, 1.0)
}

/// Spearman's rank correlation and its two-sided p-value.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "correlation inputs differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::Parameter(format!(
            "correlation needs at least 3 pairs, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Data("correlation inputs contain NaN or infinity".into()));
    }
    let rho = pearson(&average_ranks(a), &average_ranks(b))
        .ok_or_else(|| Error::Degenerate("correlation undefined: an input has constant ranks".into()))?;
    Ok((rho, t_approx_p(rho, a.len())))
}

/// Spearman correlation over paired scalars.
pub fn correlate_scalar(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    spearman(&x, &y)
}

fn masked_values(vol: &ScalarVolume, mask: Option<&BinaryMask>) -> Vec<f64> {
    match mask {
        Some(m) => m.indices().map(|i| vol.data()[i] as f64).collect(),
        None => vol.data().iter().map(|&v| v as f64).collect(),
    }
}

/// Correlates `ppm` with `reference` over the voxels of `mask` (the whole
/// grid when `None`), both raw and after smoothing each volume with a
/// Gaussian of `fwhm_voxels`. With `fwhm_voxels == 0` no smoothing is done
/// and the smoothed figures repeat the raw ones.
pub fn compare_maps(
    ppm: &ScalarVolume,
    reference: &ScalarVolume,
    mask: Option<&BinaryMask>,
    fwhm_voxels: f64,
) -> Result<ComparisonReport> {
    check_compatible(ppm.geometry(), reference.geometry())?;
    if let Some(m) = mask {
        check_compatible(ppm.geometry(), m.geometry())?;
        if m.count() == 0 {
            return Err(Error::Empty("comparison mask has no voxels".into()));
        }
    }
    if !(fwhm_voxels >= 0.0 && fwhm_voxels.is_finite()) {
        return Err(Error::Parameter(format!(
            "smoothing width must be finite and >= 0, got {fwhm_voxels}"
        )));
    }
    let a = masked_values(ppm, mask);
    let b = masked_values(reference, mask);
    let (rho_raw, p_raw) = spearman(&a, &b)?;
    let (rho_smoothed, p_value) = if fwhm_voxels > 0.0 {
        let sa = gaussian_smooth(ppm, fwhm_voxels)?;
        let sb = gaussian_smooth(reference, fwhm_voxels)?;
        spearman(&masked_values(&sa, mask), &masked_values(&sb, mask))?
    } else {
        (rho_raw, p_raw)
    };
    Ok(ComparisonReport {
        rho_raw,
        rho_smoothed,
        p_value,
        n_voxels: a.len(),
        fwhm_used: fwhm_voxels,
    })
}
