//! Predicted perfusion maps from co-registered CT and CT-angiography.
//!
//! The pipeline subtracts CT from CTA and normalizes the result ([`dsa`]),
//! smooths it with edge-preserving Perona-Malik diffusion ([`diffusion`]),
//! thresholds and thins the vessels to a centerline skeleton and picks the
//! brightest skeleton voxels as sources ([`vesselseg`]), and finally solves
//! the eikonal equation from those sources with the subtraction image as
//! speed ([`eikonal`]). The arrival-time volume is the perfusion map.
//!
//! [`eval`] and [`glm`] hold the two validation procedures: rank correlation
//! against a reference map, and voxelwise regression against symptom scores
//! with permutation-based family-wise error control. [`phantom`] generates
//! synthetic CT/CTA pairs with known ground truth.

pub mod diffusion;
pub mod dsa;
pub mod eikonal;
pub mod error;
pub mod eval;
pub mod glm;
pub mod labeling;
pub mod phantom;
pub mod pipeline;
pub mod render;
pub mod vesselseg;
pub mod volume;

mod kv;
mod par;

pub use error::{Error, Result};
pub use volume::{BinaryMask, GridGeometry, ScalarVolume};
