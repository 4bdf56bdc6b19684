//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! The page drives three operations on a synthetic phantom: re-running the
//! pipeline with different thresholds, exploring Perona-Malik parameters on
//! one slice, and marching a front from a clicked voxel. Images cross the
//! boundary as flat RGBA byte arrays.

pub mod demo;

use wasm_bindgen::prelude::*;

use demo::Session;

fn js(e: perfmap_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// An RGBA image for `ImageData`.
#[wasm_bindgen]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[wasm_bindgen]
impl Image {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Copies the pixels out as a `Uint8Array`.
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }
}

impl From<perfmap_core::render::Rgba> for Image {
    fn from(img: perfmap_core::render::Rgba) -> Self {
        Image {
            width: img.width,
            height: img.height,
            pixels: img.pixels,
        }
    }
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Generates a `size`³ phantom (noise in percent of the vessel contrast)
    /// and runs the pipeline with default parameters.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, seed: u64, noise_percent: f64) -> Result<Demo, JsError> {
        Ok(Demo {
            session: Session::new(size, seed, noise_percent).map_err(js)?,
        })
    }

    pub fn rerun(&mut self, threshold: f64, quantile: f64, iterations: usize, conductance: f64) -> Result<(), JsError> {
        self.session
            .rerun(threshold, quantile, iterations, conductance)
            .map_err(js)?;
        Ok(())
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.session.size()
    }

    #[wasm_bindgen(getter)]
    pub fn seeds(&self) -> usize {
        self.session.stats().seeds
    }

    #[wasm_bindgen(getter)]
    pub fn vessel_voxels(&self) -> usize {
        self.session.stats().vessel_voxels
    }

    #[wasm_bindgen(getter)]
    pub fn rho_raw(&self) -> f64 {
        self.session.stats().rho_raw
    }

    #[wasm_bindgen(getter)]
    pub fn rho_smoothed(&self) -> f64 {
        self.session.stats().rho_smoothed
    }

    pub fn ppm_image(&self) -> Image {
        self.session.ppm_image().into()
    }

    pub fn truth_image(&self) -> Image {
        self.session.truth_image().into()
    }

    pub fn diffusion_image(&self, iterations: usize, conductance: f64, threshold: f64) -> Result<Image, JsError> {
        Ok(self
            .session
            .diffusion_image(iterations, conductance, threshold)
            .map_err(js)?
            .into())
    }

    pub fn march_from(&self, i: usize, j: usize) -> Result<Image, JsError> {
        Ok(self.session.march_from(i, j).map_err(js)?.into())
    }
}
