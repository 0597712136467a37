//! Capture simulation: Lambertian rendering under configured lights, sensor
//! noise, quantization, per-image misalignment, and NCC re-alignment.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::CaptureMode;
use crate::rng;
use crate::surface::SurfacePatch;
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Gray-level ceiling of the simulated 16-bit sensor.
pub const GRAY_MAX: f64 = 65535.0;

/// Alignment rejects an image whose best NCC falls below this: image sets
/// that cannot be brought into registration (mismatched content, extreme
/// noise, near-constant frames).
pub const ALIGN_MIN_NCC: f64 = 0.2;

/// Illumination rig: unit directions from the surface toward each light.
#[derive(Debug, Clone, PartialEq)]
pub struct LightConfig {
    pub directions: Vec<[f64; 3]>,
    pub intensity: f64,
    pub mode: CaptureMode,
    /// Maximum per-image translation in pixels (0 in scanner mode).
    pub max_shift: usize,
    /// Specular lobe weight; 0 disables the term (the default — the core
    /// experiments model fully diffuse paper).
    pub specular_weight: f64,
    /// Specular lobe exponent.
    pub specular_exponent: f64,
}

impl LightConfig {
    /// The four-orientation flatbed rig: azimuths 0/90/180/270 degrees at a
    /// common 45-degree elevation, no inter-image shift.
    pub fn scanner(intensity: f64) -> Self {
        let e = core::f64::consts::FRAC_1_SQRT_2;
        LightConfig {
            directions: vec![[e, 0.0, e], [0.0, e, e], [-e, 0.0, e], [0.0, -e, e]],
            intensity,
            mode: CaptureMode::Scanner,
            max_shift: 0,
            specular_weight: 0.0,
            specular_exponent: 8.0,
        }
    }

    /// A hand-held rig: k >= 3 lights spaced uniformly in azimuth on a
    /// 45-degree cone, plus one zenith light when k >= 5. Images carry
    /// integer-pixel misalignment up to `max_shift`.
    pub fn mobile(k: usize, intensity: f64, max_shift: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidParam("mobile mode requires at least 3 lights"));
        }
        let e = core::f64::consts::FRAC_1_SQRT_2;
        let cone = if k >= 5 { k - 1 } else { k };
        let mut directions = Vec::with_capacity(k);
        for i in 0..cone {
            let az = 2.0 * core::f64::consts::PI * i as f64 / cone as f64;
            directions.push([az.cos() * e, az.sin() * e, e]);
        }
        if k >= 5 {
            directions.push([0.0, 0.0, 1.0]);
        }
        Ok(LightConfig {
            directions,
            intensity,
            mode: CaptureMode::Mobile,
            max_shift,
            specular_weight: 0.0,
            specular_exponent: 8.0,
        })
    }

    pub fn count(&self) -> usize {
        self.directions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions.len() < 3 {
            return Err(Error::InvalidParam("at least 3 light directions required"));
        }
        if self.mode == CaptureMode::Scanner && self.directions.len() != 4 {
            return Err(Error::InvalidParam("scanner mode uses exactly 4 lights"));
        }
        for d in &self.directions {
            let norm2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if (norm2 - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParam("light direction is not unit length"));
            }
            if d[2] <= 0.0 {
                return Err(Error::InvalidParam("light must sit above the surface"));
            }
        }
        if !(self.intensity > 0.0) {
            return Err(Error::InvalidParam("intensity must be positive"));
        }
        Ok(())
    }
}

/// A set of k grayscale captures of one surface plus rig metadata.
///
/// `misalignment[i]` is the translation baked into image i: pixel (x, y) of
/// image i shows surface point (x + dx, y + dy). Entries must be zero before
/// the capture is handed to the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSet {
    pub width: usize,
    pub height: usize,
    pub images: Vec<Vec<u16>>,
    pub lights: LightConfig,
    pub misalignment: Vec<[i32; 2]>,
    pub noise_sigma: f64,
}

impl CaptureSet {
    pub fn new(
        width: usize,
        height: usize,
        images: Vec<Vec<u16>>,
        lights: LightConfig,
        misalignment: Vec<[i32; 2]>,
        noise_sigma: f64,
    ) -> Result<Self> {
        lights.validate()?;
        if images.len() != lights.count() || misalignment.len() != images.len() {
            return Err(Error::LengthMismatch {
                left: images.len(),
                right: lights.count(),
            });
        }
        if images.iter().any(|img| img.len() != width * height) {
            return Err(Error::InvalidParam("capture images must share dimensions"));
        }
        let limit = lights.max_shift as i32;
        for m in &misalignment {
            if m[0].abs() > limit || m[1].abs() > limit {
                return Err(Error::InvalidParam("misalignment exceeds max_shift"));
            }
        }
        Ok(CaptureSet {
            width,
            height,
            images,
            lights,
            misalignment,
            noise_sigma,
        })
    }

    /// True when no image carries unresolved misalignment.
    pub fn is_aligned(&self) -> bool {
        self.misalignment.iter().all(|m| m[0] == 0 && m[1] == 0)
    }
}

/// Result of re-aligning a capture set to its first image.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Captures with translations removed and misalignment metadata cleared.
    pub capture: CaptureSet,
    /// Recovered offset per image (the shift applied to undo it).
    pub offsets: Vec<[i32; 2]>,
    /// Best NCC per image against the reference.
    pub ncc: Vec<f64>,
}

/// Renders the capture set for a surface: per pixel and light,
/// `intensity * albedo * max(0, n.l)` plus an optional specular lobe, then
/// additive Gaussian sensor noise and 16-bit quantization. Mobile rigs apply
/// a random integer translation per image (the first image is the reference
/// and stays in place).
pub fn render(
    patch: &SurfacePatch,
    lights: &LightConfig,
    noise_sigma: f64,
    seed: u64,
) -> Result<CaptureSet> {
    lights.validate()?;
    if noise_sigma < 0.0 {
        return Err(Error::InvalidParam("noise_sigma must be non-negative"));
    }
    let (w, h) = (patch.width(), patch.height());
    let mut stream = rng::stream(rng::derive(seed, "render", &[]));

    let k = lights.count();
    let mut misalignment = vec![[0i32; 2]; k];
    if lights.mode == CaptureMode::Mobile && lights.max_shift > 0 {
        let s = lights.max_shift as i32;
        for m in misalignment.iter_mut().skip(1) {
            m[0] = stream.gen_range(-s..=s);
            m[1] = stream.gen_range(-s..=s);
        }
    }

    let normals = patch.normals();
    let albedo = patch.albedo();
    let mut images = Vec::with_capacity(k);
    for (i, l) in lights.directions.iter().enumerate() {
        let [dx, dy] = misalignment[i];
        let mut img = Vec::with_capacity(w * h);
        for y in 0..h {
            let sy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
            for x in 0..w {
                let sx = (x as i32 + dx).clamp(0, w as i32 - 1) as usize;
                let idx = sy * w + sx;
                let n = normals[idx];
                let ndotl = (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
                let mut v = lights.intensity * albedo[idx] * ndotl;
                if lights.specular_weight > 0.0 {
                    // Mirror direction of l about n, viewed from straight up.
                    let rz = 2.0 * ndotl * n[2] - l[2];
                    v += lights.intensity
                        * lights.specular_weight
                        * rz.max(0.0).powf(lights.specular_exponent);
                }
                if noise_sigma > 0.0 {
                    let e: f64 = stream.sample(StandardNormal);
                    v += noise_sigma * e;
                }
                img.push(v.round().clamp(0.0, GRAY_MAX) as u16);
            }
        }
        images.push(img);
    }
    CaptureSet::new(w, h, images, lights.clone(), misalignment, noise_sigma)
}

/// Aligns every image to the first by exhaustive integer search over
/// +-max_shift, maximizing zero-normalized cross-correlation on the central
/// crop. Fails with [`Error::AlignmentFailed`] when the best NCC of any image
/// falls below [`ALIGN_MIN_NCC`]. A rig with `max_shift == 0` registers its
/// images by construction, so the capture passes through untouched.
pub fn align(capture: &CaptureSet) -> Result<Alignment> {
    let (w, h) = (capture.width, capture.height);
    let m = capture.lights.max_shift as i32;
    if m == 0 {
        // CaptureSet::new has already enforced zero per-image shifts.
        return Ok(Alignment {
            capture: capture.clone(),
            offsets: vec![[0i32; 2]; capture.images.len()],
            ncc: vec![1.0; capture.images.len()],
        });
    }
    let margin = m as usize;
    if w <= 2 * margin + 4 || h <= 2 * margin + 4 {
        return Err(Error::InvalidParam("max_shift too large for image size"));
    }

    let reference = &capture.images[0];
    let crop_w = w - 2 * margin;
    let crop_h = h - 2 * margin;
    let crop_n = (crop_w * crop_h) as f64;

    let mut ref_crop = Vec::with_capacity(crop_w * crop_h);
    for y in 0..crop_h {
        for x in 0..crop_w {
            ref_crop.push(reference[(y + margin) * w + x + margin] as f64);
        }
    }
    let ref_mean = ref_crop.iter().sum::<f64>() / crop_n;
    let ref_ss: f64 = ref_crop.iter().map(|v| (v - ref_mean) * (v - ref_mean)).sum();

    let mut offsets = vec![[0i32; 2]; capture.images.len()];
    let mut nccs = vec![1.0f64; capture.images.len()];
    let mut aligned_images = Vec::with_capacity(capture.images.len());
    aligned_images.push(reference.clone());

    for (i, img) in capture.images.iter().enumerate().skip(1) {
        let mut best = (f64::NEG_INFINITY, [0i32; 2]);
        for sy in -m..=m {
            for sx in -m..=m {
                let mut sum = 0.0;
                let mut ss = 0.0;
                let mut cross = 0.0;
                for y in 0..crop_h {
                    let iy = (y + margin) as i32 + sy;
                    let row = (iy as usize) * w;
                    for x in 0..crop_w {
                        let ix = (x + margin) as i32 + sx;
                        let v = img[row + ix as usize] as f64;
                        let r = ref_crop[y * crop_w + x] - ref_mean;
                        sum += v;
                        ss += v * v;
                        cross += v * r;
                    }
                }
                let var = ss - sum * sum / crop_n;
                let ncc = if var <= 0.0 || ref_ss <= 0.0 {
                    0.0
                } else {
                    cross / (var.sqrt() * ref_ss.sqrt())
                };
                if ncc > best.0 {
                    best = (ncc, [sx, sy]);
                }
            }
        }
        if best.0 < ALIGN_MIN_NCC {
            return Err(Error::AlignmentFailed { image: i, best_ncc: best.0 });
        }
        offsets[i] = best.1;
        nccs[i] = best.0;
        // Undo the shift over the full frame, clamping at the borders.
        let [sx, sy] = best.1;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let iy = (y as i32 + sy).clamp(0, h as i32 - 1) as usize;
            for x in 0..w {
                let ix = (x as i32 + sx).clamp(0, w as i32 - 1) as usize;
                out.push(img[iy * w + ix]);
            }
        }
        aligned_images.push(out);
    }

    let capture = CaptureSet::new(
        w,
        h,
        aligned_images,
        capture.lights.clone(),
        vec![[0i32; 2]; capture.images.len()],
        capture.noise_sigma,
    )?;
    Ok(Alignment { capture, offsets, ncc: nccs })
}
