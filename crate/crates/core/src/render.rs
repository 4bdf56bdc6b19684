//! Orthogonal mid-slice renders with a diverging blue-white-red colormap.

use crate::volume::{percentile, ScalarVolume};

/// An 8-bit RGBA image, rows top to bottom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgba {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Rgba {
    fn new(width: usize, height: usize) -> Self {
        Rgba {
            width,
            height,
            pixels: vec![0; width * height * 4],
        }
    }

    fn put(&mut self, x: usize, y: usize, c: [u8; 4]) {
        let o = 4 * (y * self.width + x);
        self.pixels[o..o + 4].copy_from_slice(&c);
    }

    fn blit(&mut self, src: &Rgba, x0: usize) {
        for y in 0..src.height {
            let s = 4 * y * src.width;
            let d = 4 * (y * self.width + x0);
            self.pixels[d..d + 4 * src.width].copy_from_slice(&src.pixels[s..s + 4 * src.width]);
        }
    }
}

/// Which plane a slice lies in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    /// Constant `k`; x to the right, y up.
    Axial,
    /// Constant `j`; x to the right, z up.
    Coronal,
    /// Constant `i`; y to the right, z up.
    Sagittal,
}

const LOW: [f64; 3] = [59.0, 76.0, 192.0];
const MID: [f64; 3] = [221.0, 221.0, 221.0];
const HIGH: [f64; 3] = [180.0, 4.0, 38.0];

/// Maps `t` in `[0, 1]` (clamped) to blue, through light grey at 0.5, to red.
pub fn diverging(t: f64) -> [u8; 4] {
    let t = if t.is_nan() { 0.5 } else { t.clamp(0.0, 1.0) };
    let (a, b, u) = if t < 0.5 {
        (LOW, MID, t * 2.0)
    } else {
        (MID, HIGH, t * 2.0 - 1.0)
    };
    let c = |i: usize| (a[i] + (b[i] - a[i]) * u).round() as u8;
    [c(0), c(1), c(2), 255]
}

/// Display window covering the 2nd to 98th percentile of the finite,
/// non-sentinel voxel values. Falls back to `(v, v + 1)` for constant data.
pub fn robust_range(vol: &ScalarVolume) -> (f32, f32) {
    let values: Vec<f64> = vol
        .data()
        .iter()
        .filter(|v| v.is_finite() && **v < f32::MAX)
        .map(|&v| v as f64)
        .collect();
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let lo = percentile(&values, 0.02).unwrap_or(0.0) as f32;
    let hi = percentile(&values, 0.98).unwrap_or(1.0) as f32;
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// Renders the slice through the volume centre in `plane`, mapping `range`
/// onto the colormap.
pub fn slice(vol: &ScalarVolume, plane: Plane, range: (f32, f32)) -> Rgba {
    let [nx, ny, nz] = vol.dims();
    let (w, h) = match plane {
        Plane::Axial => (nx, ny),
        Plane::Coronal => (nx, nz),
        Plane::Sagittal => (ny, nz),
    };
    let (lo, hi) = range;
    let span = (hi - lo).max(f32::MIN_POSITIVE) as f64;
    let mut img = Rgba::new(w, h);
    for row in 0..h {
        // Flip so that +y / +z points up.
        let v = h - 1 - row;
        for u in 0..w {
            let value = match plane {
                Plane::Axial => vol.get(u, v, nz / 2),
                Plane::Coronal => vol.get(u, ny / 2, v),
                Plane::Sagittal => vol.get(nx / 2, u, v),
            };
            img.put(u, row, diverging((value - lo) as f64 / span));
        }
    }
    img
}

/// Places images left to right, top-aligned, separated by `gap` transparent
/// pixels.
pub fn hstack(parts: &[Rgba], gap: usize) -> Rgba {
    let width = parts.iter().map(|p| p.width).sum::<usize>() + gap * parts.len().saturating_sub(1);
    let height = parts.iter().map(|p| p.height).max().unwrap_or(0);
    let mut out = Rgba::new(width, height);
    let mut x = 0;
    for p in parts {
        out.blit(p, x);
        x += p.width + gap;
    }
    out
}

/// Axial, coronal and sagittal mid-slices side by side with a 2-pixel gap,
/// using [`robust_range`] unless `range` is given.
pub fn orthogonal_montage(vol: &ScalarVolume, range: Option<(f32, f32)>) -> Rgba {
    let range = range.unwrap_or_else(|| robust_range(vol));
    hstack(
        &[Plane::Axial, Plane::Coronal, Plane::Sagittal].map(|p| slice(vol, p, range)),
        2,
    )
}
