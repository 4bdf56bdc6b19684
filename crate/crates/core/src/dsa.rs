//! Digitally subtracted angiogram: CTA minus CT, clamped at zero and scaled
//! so the brightest voxel is exactly 1.

use crate::error::{Error, Result};
use crate::volume::{check_compatible, ScalarVolume};

/// A volume with values in `[0, 1]` whose maximum is exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DsaVolume(ScalarVolume);

impl DsaVolume {
    pub fn volume(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_volume(self) -> ScalarVolume {
        self.0
    }

    /// Wraps a volume already normalized to `[0, 1]` with maximum 1.
    pub fn from_normalized(vol: ScalarVolume) -> Result<Self> {
        let (lo, hi) = vol.min_max();
        if lo < 0.0 || hi != 1.0 {
            return Err(Error::Data(format!(
                "subtraction volume must span [0, 1] with max 1, got [{lo}, {hi}]"
            )));
        }
        Ok(DsaVolume(vol))
    }
}

impl AsRef<ScalarVolume> for DsaVolume {
    fn as_ref(&self) -> &ScalarVolume {
        &self.0
    }
}

/// `max(cta - ct, 0)` divided by its global maximum.
pub fn subtract_normalize(cta: &ScalarVolume, ct: &ScalarVolume) -> Result<DsaVolume> {
    check_compatible(cta.geometry(), ct.geometry())?;
    let diff: Vec<f64> = cta
        .data()
        .iter()
        .zip(ct.data())
        .map(|(&a, &b)| (a as f64 - b as f64).max(0.0))
        .collect();
    let max = diff.iter().cloned().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Err(Error::Degenerate("CTA never exceeds CT; nothing to subtract".into()));
    }
    let data = diff
        .iter()
        .map(|&d| if d == max { 1.0 } else { (d / max) as f32 })
        .collect();
    Ok(DsaVolume(cta.with_data(data)?))
}
