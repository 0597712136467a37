//! Feature extraction: per-pixel least-squares normal recovery from an
//! aligned capture set under the diffuse model.

use alloc::vec;
use alloc::vec::Vec;

use crate::map::NormMap;
use crate::optics::{align, CaptureSet, GRAY_MAX};
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Per-pixel estimate below this vector norm is treated as unreliable.
const MIN_SIGNAL: f64 = 1e-9;

/// Recovers the norm map of an aligned capture set.
///
/// Per pixel this solves `min_b sum_k (I_k - l_k . b)^2` where
/// `b = intensity * albedo * n`, then emits the projected components of
/// `n = b / |b|`. Equations whose sample is clipped (0 or full scale) are
/// dropped; if fewer than 3 remain, or the solution is degenerate or points
/// into the surface, the pixel is set to (0, 0) and flagged.
pub fn estimate_norm_map(capture: &CaptureSet) -> Result<NormMap> {
    estimate_norm_map_with_flags(capture).map(|(map, _)| map)
}

/// Like [`estimate_norm_map`], also returning the per-pixel fallback flags.
pub fn estimate_norm_map_with_flags(capture: &CaptureSet) -> Result<(NormMap, Vec<bool>)> {
    if !capture.is_aligned() {
        return Err(Error::NotAligned);
    }
    let lights = &capture.lights;
    lights.validate()?;
    let k = lights.count();
    let dirs = &lights.directions;

    let full = NormalEquations::new(dirs, (1usize << k) - 1).ok_or(Error::RankDeficientLights)?;
    // Lazily built solvers for partially clipped pixels, keyed by the bitmask
    // of usable equations.
    let mut masked: Vec<Option<Option<NormalEquations>>> = vec![None; 1 << k];

    let n = capture.width * capture.height;
    let mut nx = vec![0.0; n];
    let mut ny = vec![0.0; n];
    let mut flags = vec![false; n];
    let mut samples = vec![0.0f64; k];

    for i in 0..n {
        let mut mask = 0usize;
        for (j, img) in capture.images.iter().enumerate() {
            let v = img[i] as f64;
            samples[j] = v;
            if v > 0.0 && v < GRAY_MAX {
                mask |= 1 << j;
            }
        }
        let solver = if mask == (1 << k) - 1 {
            Some(&full)
        } else if (mask.count_ones() as usize) >= 3 {
            masked[mask]
                .get_or_insert_with(|| NormalEquations::new(dirs, mask))
                .as_ref()
        } else {
            None
        };
        let b = solver.and_then(|s| s.solve(&samples));
        match b {
            Some(b) => {
                let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                if norm < MIN_SIGNAL || b[2] <= 0.0 {
                    flags[i] = true;
                } else {
                    nx[i] = b[0] / norm;
                    ny[i] = b[1] / norm;
                }
            }
            None => flags[i] = true,
        }
    }
    let map = NormMap::new(capture.width, capture.height, nx, ny)?;
    Ok((map, flags))
}

/// The full feature extractor: align, then estimate. Propagates alignment
/// failures (the crumpling signal).
pub fn extract_feature(capture: &CaptureSet) -> Result<NormMap> {
    let aligned = align(capture)?;
    estimate_norm_map(&aligned.capture)
}

/// Precomputed least-squares solve for one subset of light equations.
#[derive(Clone)]
struct NormalEquations {
    /// Row j of the pseudo-inverse maps the k samples to b[j]; unused
    /// equations carry zero weight.
    pinv: Vec<[f64; 3]>,
}

impl NormalEquations {
    fn new(dirs: &[[f64; 3]], mask: usize) -> Option<Self> {
        let mut ata = [[0.0f64; 3]; 3];
        for (j, d) in dirs.iter().enumerate() {
            if mask & (1 << j) == 0 {
                continue;
            }
            for r in 0..3 {
                for c in 0..3 {
                    ata[r][c] += d[r] * d[c];
                }
            }
        }
        let inv = invert3(&ata)?;
        let mut pinv = Vec::with_capacity(dirs.len());
        for (j, d) in dirs.iter().enumerate() {
            let mut row = [0.0f64; 3];
            if mask & (1 << j) != 0 {
                for r in 0..3 {
                    row[r] = inv[r][0] * d[0] + inv[r][1] * d[1] + inv[r][2] * d[2];
                }
            }
            pinv.push(row);
        }
        Some(NormalEquations { pinv })
    }

    fn solve(&self, samples: &[f64]) -> Option<[f64; 3]> {
        let mut b = [0.0f64; 3];
        for (j, row) in self.pinv.iter().enumerate() {
            let v = samples[j];
            b[0] += row[0] * v;
            b[1] += row[1] * v;
            b[2] += row[2] * v;
        }
        Some(b)
    }
}

/// Inverse of a symmetric positive 3x3 matrix; None when rank deficient.
fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if det.abs() <= 1e-12 * scale * scale * scale || scale <= 0.0 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0f64; 3]; 3];
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::pearson;
    use crate::optics::{render, LightConfig};
    use crate::surface::{generate_patch, true_norm_map, SurfacePatch};
    use alloc::vec;

    #[test]
    fn noiseless_flat_patch_estimates_to_zero() {
        let patch = SurfacePatch::from_parts(
            24,
            24,
            vec![[0.0, 0.0, 1.0]; 576],
            vec![0.8; 576],
            2.0,
            0.08,
        )
        .unwrap();
        let cap = render(&patch, &LightConfig::scanner(40000.0), 0.0, 1).unwrap();
        let m = estimate_norm_map(&cap).unwrap();
        // Quantization bounds the error; the solve itself is exact.
        assert!(m.nx().iter().all(|v| v.abs() < 1e-4));
        assert!(m.ny().iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn noiseless_tilted_plane_recovers_constant_normal() {
        let n = [0.1, 0.0, (1.0f64 - 0.01).sqrt()];
        let patch = SurfacePatch::from_parts(24, 24, vec![n; 576], vec![0.7; 576], 2.0, 0.08)
            .unwrap();
        let cap = render(&patch, &LightConfig::scanner(40000.0), 0.0, 1).unwrap();
        let m = estimate_norm_map(&cap).unwrap();
        for i in 0..m.len() {
            assert!((m.nx()[i] - 0.1).abs() < 1e-4, "nx {}", m.nx()[i]);
            assert!(m.ny()[i].abs() < 1e-4);
        }
    }

    #[test]
    fn noiseless_random_patch_recovery_is_nearly_exact() {
        let patch = generate_patch(17, 64, 2.0, 0.08).unwrap();
        let truth = true_norm_map(&patch);
        let cap = render(&patch, &LightConfig::scanner(48000.0), 0.0, 1).unwrap();
        let m = estimate_norm_map(&cap).unwrap();
        let rx = pearson(m.nx(), truth.nx()).unwrap();
        let ry = pearson(m.ny(), truth.ny()).unwrap();
        assert!(rx > 0.999, "corr_x {rx}");
        assert!(ry > 0.999, "corr_y {ry}");
    }

    #[test]
    fn square_system_with_three_lights_solves_exactly() {
        let patch = generate_patch(23, 64, 2.0, 0.08).unwrap();
        let truth = true_norm_map(&patch);
        let lights = LightConfig::mobile(3, 48000.0, 0).unwrap();
        let cap = render(&patch, &lights, 0.0, 1).unwrap();
        let m = estimate_norm_map(&cap).unwrap();
        let rx = pearson(m.nx(), truth.nx()).unwrap();
        assert!(rx > 0.999, "corr_x {rx}");
    }

    #[test]
    fn unaligned_capture_is_rejected() {
        let patch = generate_patch(3, 48, 2.0, 0.08).unwrap();
        let lights = LightConfig::mobile(4, 48000.0, 4).unwrap();
        let cap = render(&patch, &lights, 200.0, 5).unwrap();
        assert!(!cap.is_aligned());
        assert_eq!(estimate_norm_map(&cap), Err(Error::NotAligned));
        // The composed extractor aligns first and succeeds.
        let truth = true_norm_map(&patch);
        let m = extract_feature(&cap).unwrap();
        let rx = pearson(m.nx(), truth.nx()).unwrap();
        assert!(rx > 0.9, "corr_x {rx}");
    }

    #[test]
    fn coplanar_lights_are_rank_deficient() {
        let e = core::f64::consts::FRAC_1_SQRT_2;
        let patch = generate_patch(4, 32, 2.0, 0.08).unwrap();
        let lights = LightConfig {
            directions: vec![[e, 0.0, e], [e, 0.0, e], [e, 0.0, e]],
            intensity: 40000.0,
            mode: crate::config::CaptureMode::Mobile,
            max_shift: 0,
            specular_weight: 0.0,
            specular_exponent: 8.0,
        };
        let cap = render(&patch, &lights, 0.0, 1).unwrap();
        assert_eq!(estimate_norm_map(&cap), Err(Error::RankDeficientLights));
    }

    #[test]
    fn intensity_scaling_leaves_directions_unchanged() {
        let patch = generate_patch(29, 48, 2.0, 0.08).unwrap();
        let a = render(&patch, &LightConfig::scanner(40000.0), 0.0, 1).unwrap();
        let b = render(&patch, &LightConfig::scanner(56000.0), 0.0, 1).unwrap();
        let ma = estimate_norm_map(&a).unwrap();
        let mb = estimate_norm_map(&b).unwrap();
        for i in 0..ma.len() {
            // Quantization at two scales bounds the difference.
            assert!((ma.nx()[i] - mb.nx()[i]).abs() < 2e-4);
        }
    }

    #[test]
    fn noise_degrades_estimates_monotonically() {
        let patch = generate_patch(31, 64, 2.0, 0.08).unwrap();
        let truth = true_norm_map(&patch);
        let mut last = 1.1;
        for (i, sigma) in [0.0, 50.0, 200.0, 800.0].into_iter().enumerate() {
            let cap = render(&patch, &LightConfig::scanner(48000.0), sigma, 40 + i as u64)
                .unwrap();
            let m = estimate_norm_map(&cap).unwrap();
            let r = pearson(m.nx(), truth.nx()).unwrap();
            assert!(r < last, "sigma {sigma}: corr {r} not below {last}");
            last = r;
        }
    }

    #[test]
    fn residual_is_quantization_bounded_for_noiseless_renders() {
        let patch = generate_patch(37, 32, 2.0, 0.08).unwrap();
        let lights = LightConfig::scanner(48000.0);
        let cap = render(&patch, &lights, 0.0, 1).unwrap();
        let m = estimate_norm_map(&cap).unwrap();
        // Reconstruct per-pixel intensities from the estimated direction and
        // a fitted scale; residual must stay within the quantization step.
        let truth = patch.normals();
        for i in (0..m.len()).step_by(71) {
            let n = truth[i];
            let scale = 48000.0 * patch.albedo()[i];
            for (j, l) in lights.directions.iter().enumerate() {
                let model = scale * (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
                let sample = cap.images[j][i] as f64;
                assert!((model - sample).abs() <= 0.5 + 1e-9);
            }
        }
    }
}
