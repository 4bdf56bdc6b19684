//! Arrival-time computation: `|grad T| = 1 / F` with `T = 0` at the seeds.

mod dijkstra;
mod fmm;

pub use dijkstra::{dijkstra_oracle, dijkstra_with, EdgeCost, MAX_ORACLE_VOXELS};
pub use fmm::{fast_march, godunov_update};

use crate::dsa::DsaVolume;
use crate::error::{Error, Result};
use crate::vesselseg::SeedSet;
use crate::volume::{check_compatible, BinaryMask, GridGeometry, ScalarVolume};

/// Default lower bound on speed so the front also crosses tissue.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Front speed, every value in `[epsilon, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedField {
    volume: ScalarVolume,
    epsilon: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "speed floor must lie in (0, 1), got {epsilon}"
        )))
    }
}

impl SpeedField {
    /// Validates an existing speed volume against `[epsilon, 1]`.
    pub fn new(volume: ScalarVolume, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let floor = epsilon as f32;
        if let Some(v) = volume.data().iter().find(|&&v| v < floor || v > 1.0) {
            return Err(Error::Data(format!("speed value {v} outside [{epsilon}, 1]")));
        }
        Ok(SpeedField { volume, epsilon })
    }

    pub fn volume(&self) -> &ScalarVolume {
        &self.volume
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.volume.geometry()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `F(x) = max(dsa(x), epsilon)`.
pub fn build_speed(dsa: &DsaVolume, epsilon: f64) -> Result<SpeedField> {
    check_epsilon(epsilon)?;
    let floor = epsilon as f32;
    let volume = dsa.volume().map(|v| v.max(floor).min(1.0))?;
    SpeedField::new(volume, epsilon)
}

/// Arrival times; `+inf` where the front never arrived.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalMap {
    times: Vec<f64>,
    geometry: GridGeometry,
}

impl ArrivalMap {
    pub(crate) fn new(geometry: GridGeometry, times: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), geometry.len());
        ArrivalMap { times, geometry }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.times[self.geometry.index(i, j, k)]
    }

    /// Voxels with a finite arrival time.
    pub fn reached(&self) -> BinaryMask {
        BinaryMask::from_indices(
            self.geometry.clone(),
            self.times
                .iter()
                .enumerate()
                .filter(|(_, t)| t.is_finite())
                .map(|(i, _)| i),
        )
    }

    /// The perfusion map as `f32`; unreached voxels become `f32::MAX`.
    pub fn to_volume(&self) -> ScalarVolume {
        let data = self
            .times
            .iter()
            .map(|&t| if t.is_finite() { t as f32 } else { f32::MAX })
            .collect();
        ScalarVolume::new(self.geometry.clone(), data).expect("finite arrival data")
    }
}

fn check_inputs(speed: &SpeedField, seeds: &SeedSet) -> Result<()> {
    check_compatible(speed.geometry(), seeds.geometry())?;
    if seeds.is_empty() {
        return Err(Error::Empty("seed set is empty".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_floor() {
        let g = GridGeometry::unit([3, 1, 1]);
        let dsa = DsaVolume::from_normalized(ScalarVolume::new(g, vec![0.0, 1.0, 0.5]).unwrap()).unwrap();
        let f = build_speed(&dsa, DEFAULT_EPSILON).unwrap();
        assert_eq!(f.volume().data(), &[1e-3, 1.0, 0.5]);
        let f = build_speed(&dsa, 0.6).unwrap();
        assert_eq!(f.volume().data(), &[0.6, 1.0, 0.6]);
        for bad in [0.0, 1.0, -0.1, 2.0] {
            assert!(matches!(build_speed(&dsa, bad), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn speed_field_validation() {
        let g = GridGeometry::unit([2, 1, 1]);
        assert!(SpeedField::new(ScalarVolume::new(g.clone(), vec![0.5, 1.5]).unwrap(), 0.1).is_err());
        assert!(SpeedField::new(ScalarVolume::new(g.clone(), vec![0.05, 1.0]).unwrap(), 0.1).is_err());
        assert!(SpeedField::new(ScalarVolume::new(g, vec![0.1, 1.0]).unwrap(), 0.1).is_ok());
    }
}
