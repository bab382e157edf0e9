//! WebAssembly bindings behind the static demo page in `www/`.
//!
//! A [`Scene`] holds one synthetic clean image and a noisy copy. The page can
//! run a single hand-configured filter on the noisy copy, or build a filtered
//! basis and fit a composition model that needs no filter parameters at all.

use compfilter::basis::{self, presets};
use compfilter::metrics;
use compfilter::trainer::{self, Sample, TrainingConfig};
use compfilter::{filters, noise, synth, FilterConfig, Image};
use wasm_bindgen::prelude::*;

/// Training images synthesized next to the scene when fitting a model.
const EXTRA_TRAINING_IMAGES: u64 = 3;

/// An RGBA buffer ready for `ImageData`, plus how close it is to the clean image.
#[wasm_bindgen(getter_with_clone)]
pub struct Rendered {
    pub rgba: Vec<u8>,
    pub psnr: f64,
    pub ssim: f64,
    /// Human-readable extra information for the page.
    pub detail: String,
}

#[wasm_bindgen]
pub struct Scene {
    width: usize,
    height: usize,
    seed: u64,
    sigma: f64,
    clean: Image,
    noisy: Image,
}

fn to_rgba(img: &Image) -> Vec<u8> {
    let n = img.width() * img.height();
    let mut out = Vec::with_capacity(n * 4);
    for i in 0..n {
        let px: [u8; 3] = if img.channels() == 1 {
            [compfilter::pnm::quantize(img.data()[i]); 3]
        } else {
            [0, 1, 2].map(|c| compfilter::pnm::quantize(img.data()[c * n + i]))
        };
        out.extend_from_slice(&px);
        out.push(255);
    }
    out
}

#[wasm_bindgen]
impl Scene {
    /// A seeded colour scene with Gaussian noise of `sigma` (0-255 scale).
    #[wasm_bindgen(constructor)]
    pub fn new(width: usize, height: usize, seed: u64, sigma: f64) -> Result<Scene, String> {
        if width < 11 || height < 11 || width > 1024 || height > 1024 {
            return Err(format!("scene size {width}x{height} must be within 11..=1024"));
        }
        let clean = synth::natural(width, height, 3, seed);
        let noisy = noise::add_gaussian_noise(&clean, sigma, seed ^ 0x9e37).map_err(|e| e.to_string())?;
        Ok(Scene {
            width,
            height,
            seed,
            sigma,
            clean,
            noisy,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn clean(&self) -> Rendered {
        self.render(&self.clean, String::new())
    }

    pub fn noisy(&self) -> Rendered {
        self.render(&self.noisy, format!("Gaussian noise, sigma {}", self.sigma))
    }

    /// Runs one filter given as a config string such as `median:3x5`.
    pub fn filter(&self, config: &str) -> Result<Rendered, String> {
        let cfg: FilterConfig = config.trim().parse().map_err(|e: compfilter::Error| e.to_string())?;
        let out = filters::apply(&self.noisy, &cfg).map_err(|e| e.to_string())?;
        Ok(self.render(&out, cfg.to_string()))
    }

    /// Fits a composition model over the basis named by `preset` on the scene
    /// and a few more synthetic images, then applies it to the noisy scene.
    pub fn compose(&self, preset: &str, epochs: usize) -> Result<Rendered, String> {
        let configs = basis::load_configs(preset).map_err(|e| e.to_string())?;
        let mut samples = vec![Sample::new("scene", self.noisy.clone(), self.clean.clone())];
        for k in 1..=EXTRA_TRAINING_IMAGES {
            let seed = self.seed.wrapping_add(1000 * k);
            let clean = synth::natural(self.width, self.height, 3, seed);
            let noisy = noise::add_gaussian_noise(&clean, self.sigma, seed ^ 0x9e37).map_err(|e| e.to_string())?;
            samples.push(Sample::new(format!("extra{k}"), noisy, clean));
        }
        let cfg = TrainingConfig {
            epochs: epochs.clamp(1, 250),
            ..TrainingConfig::default()
        };
        let prepared = trainer::prepare(&samples, &configs, None).map_err(|e| e.to_string())?;
        let outcome = trainer::train_prepared(&prepared, &[], &configs, &cfg).map_err(|e| e.to_string())?;
        let scene = &prepared[0];
        let out = outcome
            .model
            .forward(&scene.basis, &scene.residuals)
            .map_err(|e| e.to_string())?
            .export(outcome.model.output);
        let planes = trainer::basis_plane_psnr(&prepared[..1]).map_err(|e| e.to_string())?;
        let (best_i, best) =
            planes.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, p)| if *p > acc.1 { (i, *p) } else { acc },
            );
        let detail = format!(
            "{} basis planes, {} epochs; best single plane {:.2} dB ({})",
            configs.len(),
            cfg.epochs,
            best,
            configs[best_i]
        );
        Ok(self.render(&out, detail))
    }

    fn render(&self, img: &Image, detail: String) -> Rendered {
        Rendered {
            rgba: to_rgba(img),
            psnr: metrics::psnr(img, &self.clean, 1.0).unwrap_or(f64::NAN),
            ssim: metrics::ssim(img, &self.clean).unwrap_or(f64::NAN),
            detail,
        }
    }
}

/// Preset basis names accepted by [`Scene::compose`].
#[wasm_bindgen]
pub fn preset_names() -> Vec<String> {
    presets::NAMES.iter().map(|s| s.to_string()).collect()
}
