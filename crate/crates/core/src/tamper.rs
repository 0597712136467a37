//! Physical denial-of-service attacks on a surface, applied to the ground
//! truth before an honest re-capture.
//!
//! Attacks damage the surface; the sensor and estimator stay unchanged. Area
//! attacks (scratch, sticker patch, ink scribble) modify only the covered
//! pixels and track achieved coverage to within one percent of the request.
//! Crumpling is global: a smooth displacement warp plus crease disturbances,
//! with ironing modeled as recovering 70% of the warp amplitude.
//!
//! The absolute correlations these attacks produce depend on the synthetic
//! calibration; only orderings and monotone trends are meaningful, which is
//! also how the reference measurements on real paper should be read.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{CaptureMode, RunConfig};
use crate::estimator::extract_feature;
use crate::map::score;
use crate::optics::{render, LightConfig};
use crate::rng;
use crate::surface::SurfacePatch;
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Gouged fibers are rougher than intact surface by this factor.
const GOUGE_ROUGHNESS_FACTOR: f64 = 5.0;
/// Scratches expose slightly lighter fiber material.
const GOUGE_ALBEDO_FACTOR: f64 = 0.85;
/// Stickers are smooth and dark; estimation inside is noise-dominated.
const STICKER_ALBEDO: f64 = 0.06;
/// Slope jitter of the (nominally flat) sticker surface.
const STICKER_JITTER: f64 = 0.005;
/// Reflectance of dried ink under the grayscale sensor.
const INK_ALBEDO: f64 = 0.3;
/// Slope spread of the dried ink film that replaces the fiber relief.
const INK_RELIEF_STD: f64 = 0.5;
/// Correlation length of the ink film relief, pixels.
const INK_RELIEF_SCALE: f64 = 1.5;
/// Crumple displacement before ironing, pixels.
const CRUMPLE_AMPLITUDE: f64 = 20.0;
/// Fraction of the warp surviving the iron.
const IRONING_RESIDUAL: f64 = 0.3;
/// Correlation length of the crumple warp field, pixels.
const CRUMPLE_WARP_SCALE: f64 = 12.0;
/// Crease band half-width for folds, pixels.
const FOLD_BAND: f64 = 3.0;
/// Peak slope disturbance across a fold crease.
const FOLD_SLOPE: f64 = 0.5;

/// The attack taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttackKind {
    Scratch,
    Patch,
    Scribble,
    CrumpleRandom,
    CrumpleFold,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Scratch => "scratch",
            AttackKind::Patch => "patch",
            AttackKind::Scribble => "scribble",
            AttackKind::CrumpleRandom => "crumple_random",
            AttackKind::CrumpleFold => "crumple_fold",
        }
    }

    /// Area attacks take a coverage strength; crumpling is global.
    pub fn uses_strength(&self) -> bool {
        matches!(self, AttackKind::Scratch | AttackKind::Patch | AttackKind::Scribble)
    }

    fn index(&self) -> u64 {
        match self {
            AttackKind::Scratch => 0,
            AttackKind::Patch => 1,
            AttackKind::Scribble => 2,
            AttackKind::CrumpleRandom => 3,
            AttackKind::CrumpleFold => 4,
        }
    }
}

/// One attack instance: what, how hard, and the seed of its geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Fraction of surface area to damage; ignored by crumple kinds.
    pub strength: f64,
    pub seed: u64,
}

/// An attacked surface plus the coverage actually achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedAttack {
    pub surface: SurfacePatch,
    pub spec: AttackSpec,
    /// Damaged area fraction; 1.0 for the global crumple kinds.
    pub achieved_coverage: f64,
}

/// Damages a copy of the surface according to the spec.
pub fn apply_attack(patch: &SurfacePatch, spec: &AttackSpec) -> Result<AppliedAttack> {
    if spec.kind.uses_strength() && !(spec.strength > 0.0 && spec.strength < 1.0) {
        return Err(Error::InvalidStrength(spec.strength));
    }
    let mut stream = rng::stream(rng::derive(spec.seed, "tamper", &[spec.kind.index()]));
    let mut surface = patch.clone();
    let coverage = match spec.kind {
        AttackKind::Scratch => scratch(&mut surface, spec.strength, &mut stream),
        AttackKind::Patch => sticker_patch(&mut surface, spec.strength, &mut stream),
        AttackKind::Scribble => scribble(&mut surface, spec.strength, &mut stream),
        AttackKind::CrumpleRandom => {
            crumple_random(&mut surface, &mut stream);
            1.0
        }
        AttackKind::CrumpleFold => {
            crumple_fold(&mut surface, &mut stream);
            1.0
        }
    };
    Ok(AppliedAttack {
        surface,
        spec: *spec,
        achieved_coverage: coverage,
    })
}

/// One row of a degradation table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strength: f64,
    pub mean_corr_x: f64,
    pub std_corr_x: f64,
    pub mean_corr_y: f64,
    pub std_corr_y: f64,
    /// Trials that completed the pipeline.
    pub completed: usize,
    /// Trials that failed in-pipeline (alignment loss and the like).
    pub failures: usize,
}

/// Enrolls the clean surface, then for every strength and trial applies a
/// fresh attack, re-captures, extracts, and scores against the template.
/// A strength of exactly 0 is the no-attack baseline row. Pipeline failures
/// (e.g. [`Error::AlignmentFailed`]) are counted per trial, not propagated.
pub fn degradation_sweep(
    patch: &SurfacePatch,
    kind: AttackKind,
    strengths: &[f64],
    trials: usize,
    cfg: &RunConfig,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be positive"));
    }
    let enroll_lights = LightConfig::scanner(cfg.intensity);
    let enroll_cap = render(patch, &enroll_lights, 0.0, rng::derive(cfg.seed, "sweep-enroll", &[]))?;
    let template = extract_feature(&enroll_cap)?;

    let query_lights = match cfg.mode {
        CaptureMode::Scanner => LightConfig::scanner(cfg.intensity),
        CaptureMode::Mobile => LightConfig::mobile(cfg.capture_count, cfg.intensity, cfg.max_shift)?,
    };

    let mut rows = Vec::with_capacity(strengths.len());
    for &strength in strengths {
        let mut xs = Vec::with_capacity(trials);
        let mut ys = Vec::with_capacity(trials);
        let mut failures = 0usize;
        for trial in 0..trials {
            let trial_seed = rng::derive(
                cfg.seed,
                "sweep",
                &[kind.index(), (strength * 10_000.0) as u64, trial as u64],
            );
            let attacked;
            let surface = if strength == 0.0 {
                patch
            } else {
                attacked = apply_attack(
                    patch,
                    &AttackSpec { kind, strength, seed: trial_seed },
                )?;
                &attacked.surface
            };
            let cap = render(
                surface,
                &query_lights,
                cfg.noise_sigma,
                rng::derive(trial_seed, "recapture", &[]),
            )?;
            match extract_feature(&cap).and_then(|m| score(&m, &template)) {
                Ok(s) => {
                    xs.push(s.corr_x);
                    ys.push(s.corr_y);
                }
                Err(Error::AlignmentFailed { .. }) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        let (mx, sx) = mean_std(&xs);
        let (my, sy) = mean_std(&ys);
        rows.push(SweepRow {
            strength,
            mean_corr_x: mx,
            std_corr_x: sx,
            mean_corr_y: my,
            std_corr_y: sy,
            completed: xs.len(),
            failures,
        });
    }
    Ok(rows)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Bit mask of damaged pixels with running coverage count.
struct DamageMask {
    w: usize,
    h: usize,
    hit: Vec<bool>,
    covered: usize,
}

impl DamageMask {
    fn new(w: usize, h: usize) -> Self {
        DamageMask { w, h, hit: vec![false; w * h], covered: 0 }
    }

    fn coverage(&self) -> f64 {
        self.covered as f64 / (self.w * self.h) as f64
    }

    fn stamp_disk(&mut self, cx: f64, cy: f64, r: f64) {
        let x0 = ((cx - r).floor().max(0.0)) as usize;
        let x1 = ((cx + r).ceil().min(self.w as f64 - 1.0)) as usize;
        let y0 = ((cy - r).floor().max(0.0)) as usize;
        let y1 = ((cy + r).ceil().min(self.h as f64 - 1.0)) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    let i = y * self.w + x;
                    if !self.hit[i] {
                        self.hit[i] = true;
                        self.covered += 1;
                    }
                }
            }
        }
    }

    fn stamp_rect(&mut self, x0: usize, y0: usize, rw: usize, rh: usize) {
        for y in y0..(y0 + rh).min(self.h) {
            for x in x0..(x0 + rw).min(self.w) {
                let i = y * self.w + x;
                if !self.hit[i] {
                    self.hit[i] = true;
                    self.covered += 1;
                }
            }
        }
    }
}

/// Walks a bounded-turning stroke, stamping disks of the given radius. The
/// length cap keeps the final stroke from overshooting the coverage target.
fn walk_stroke<R: Rng>(
    mask: &mut DamageMask,
    rng: &mut R,
    radius: f64,
    max_len: usize,
    turn_std: f64,
) {
    let mut x = rng.gen_range(0.0..mask.w as f64);
    let mut y = rng.gen_range(0.0..mask.h as f64);
    let mut heading = rng.gen_range(0.0..core::f64::consts::TAU);
    for _ in 0..max_len {
        mask.stamp_disk(x, y, radius);
        let turn: f64 = rng.sample(StandardNormal);
        heading += turn * turn_std;
        x += heading.cos();
        y += heading.sin();
        if x < 0.0 || y < 0.0 || x >= mask.w as f64 || y >= mask.h as f64 {
            // Re-enter from a fresh point rather than hugging the border.
            x = x.clamp(0.0, mask.w as f64 - 1.0);
            y = y.clamp(0.0, mask.h as f64 - 1.0);
            heading += core::f64::consts::FRAC_PI_2 + turn.abs();
        }
    }
}

/// Grows stroke coverage until it reaches `target` within tolerance.
fn stroke_coverage<R: Rng>(
    mask: &mut DamageMask,
    rng: &mut R,
    target: f64,
    radius_range: (f64, f64),
    stroke_len: (usize, usize),
    turn_std: f64,
) {
    let n = (mask.w * mask.h) as f64;
    let mut guard = 0;
    while mask.coverage() < target - 0.004 && guard < 100_000 {
        guard += 1;
        let radius = rng.gen_range(radius_range.0..=radius_range.1);
        let remaining_px = (target - mask.coverage()) * n;
        // A stroke of length L covers about 2 r L fresh pixels.
        let len_cap = (remaining_px / (2.0 * radius)).ceil().max(4.0) as usize;
        let len = rng.gen_range(stroke_len.0..=stroke_len.1).min(len_cap);
        walk_stroke(mask, rng, radius, len, turn_std);
    }
}

fn slope_fields(patch: &SurfacePatch) -> (Vec<f64>, Vec<f64>) {
    let mut p = Vec::with_capacity(patch.normals.len());
    let mut q = Vec::with_capacity(patch.normals.len());
    for n in &patch.normals {
        p.push(-n[0] / n[2]);
        q.push(-n[1] / n[2]);
    }
    (p, q)
}

fn set_normal_from_slopes(patch: &mut SurfacePatch, i: usize, p: f64, q: f64) {
    let norm = (1.0 + p * p + q * q).sqrt();
    patch.normals[i] = [-p / norm, -q / norm, 1.0 / norm];
}

fn scratch<R: Rng>(patch: &mut SurfacePatch, strength: f64, rng: &mut R) -> f64 {
    let mut mask = DamageMask::new(patch.width, patch.height);
    stroke_coverage(&mut mask, rng, strength, (1.0, 2.0), (30, 80), 0.2);
    let gouge_std = GOUGE_ROUGHNESS_FACTOR * patch.roughness;
    for i in 0..mask.hit.len() {
        if mask.hit[i] {
            let gp: f64 = rng.sample::<f64, _>(StandardNormal) * gouge_std;
            let gq: f64 = rng.sample::<f64, _>(StandardNormal) * gouge_std;
            set_normal_from_slopes(patch, i, gp, gq);
            patch.albedo[i] = (patch.albedo[i] * GOUGE_ALBEDO_FACTOR).max(0.01);
        }
    }
    mask.coverage()
}

fn sticker_patch<R: Rng>(patch: &mut SurfacePatch, strength: f64, rng: &mut R) -> f64 {
    let mut mask = DamageMask::new(patch.width, patch.height);
    let (w, h) = (patch.width, patch.height);
    let n = (w * h) as f64;
    let mut guard = 0;
    while mask.coverage() < strength - 0.004 && guard < 10_000 {
        guard += 1;
        let remaining = strength - mask.coverage();
        let area_frac = remaining.min(rng.gen_range(0.02..0.08)).max(0.002);
        let area_px = area_frac * n;
        let aspect = rng.gen_range(0.4..2.5);
        let rw = ((area_px * aspect).sqrt().round().max(1.0) as usize).min(w);
        let rh = ((area_px / rw as f64).round().max(1.0) as usize).min(h);
        let x0 = rng.gen_range(0..=(w - rw));
        let y0 = rng.gen_range(0..=(h - rh));
        mask.stamp_rect(x0, y0, rw, rh);
    }
    for i in 0..mask.hit.len() {
        if mask.hit[i] {
            let jp: f64 = rng.sample::<f64, _>(StandardNormal) * STICKER_JITTER;
            let jq: f64 = rng.sample::<f64, _>(StandardNormal) * STICKER_JITTER;
            set_normal_from_slopes(patch, i, jp, jq);
            patch.albedo[i] = STICKER_ALBEDO;
        }
    }
    mask.coverage()
}

fn scribble<R: Rng>(patch: &mut SurfacePatch, strength: f64, rng: &mut R) -> f64 {
    let mut mask = DamageMask::new(patch.width, patch.height);
    stroke_coverage(&mut mask, rng, strength, (1.5, 2.5), (60, 150), 0.08);
    // Wet ink buries the fiber relief; the dried film carries its own
    // meniscus topography, smooth but steep. Covered pixels read back as
    // confident structure that shares nothing with the template, which is
    // why scribbling beats a flat sticker of the same area.
    let film_p = noise_field(rng, patch.width, patch.height, INK_RELIEF_SCALE);
    let film_q = noise_field(rng, patch.width, patch.height, INK_RELIEF_SCALE);
    for i in 0..mask.hit.len() {
        if mask.hit[i] {
            set_normal_from_slopes(
                patch,
                i,
                INK_RELIEF_STD * film_p[i],
                INK_RELIEF_STD * film_q[i],
            );
            patch.albedo[i] = INK_ALBEDO;
        }
    }
    mask.coverage()
}

/// Smooth unit-std field used by the crumple warp; local, small-kernel blur
/// of white noise with wrap-around.
fn noise_field<R: Rng>(rng: &mut R, w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let mut f: Vec<f64> = (0..w * h).map(|_| rng.sample(StandardNormal)).collect();
    let blurred = blurred(&f, w, h, sigma);
    f.copy_from_slice(&blurred);
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let std = (f.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n)
        .sqrt()
        .max(1e-300);
    for v in f.iter_mut() {
        *v = (*v - mean) / std;
    }
    f
}

fn blurred(f: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        kernel.push((-d * d * inv).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    let mut tmp = vec![0.0; f.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = (x + w + k - radius) % w;
                acc += kv * f[y * w + xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; f.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yi = (y + h + k - radius) % h;
                acc += kv * tmp[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Applies the post-iron residual warp: samples slopes and albedo at
/// displaced positions (bilinear, clamped) and adds low-frequency crease
/// noise to the slopes.
fn crumple_random<R: Rng>(patch: &mut SurfacePatch, rng: &mut R) {
    let (w, h) = (patch.width, patch.height);
    let amplitude = CRUMPLE_AMPLITUDE * IRONING_RESIDUAL;
    let dx = noise_field(rng, w, h, CRUMPLE_WARP_SCALE);
    let dy = noise_field(rng, w, h, CRUMPLE_WARP_SCALE);
    let crease_p = noise_field(rng, w, h, 8.0);
    let crease_q = noise_field(rng, w, h, 8.0);
    let crease_scale = 0.5 * patch.roughness;
    warp_and_disturb(patch, &dx, &dy, amplitude, |i, p, q| {
        (p + crease_scale * crease_p[i], q + crease_scale * crease_q[i])
    });
}

/// Two creases (one per axis) through a random interior point with a tent
/// slope profile across each band, then the residual warp.
fn crumple_fold<R: Rng>(patch: &mut SurfacePatch, rng: &mut R) {
    let (w, h) = (patch.width, patch.height);
    let cx = rng.gen_range(0.25 * w as f64..0.75 * w as f64);
    let cy = rng.gen_range(0.25 * h as f64..0.75 * h as f64);
    let tilt_v = rng.gen_range(-0.17..0.17f64);
    let tilt_h = rng.gen_range(-0.17..0.17f64);
    let band_noise = patch.roughness * 1.5;

    let (mut p, mut q) = slope_fields(patch);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            // Signed distance to the near-vertical crease x = cx + tilt*(y-cy).
            let dv = x as f64 - (cx + tilt_v * (y as f64 - cy));
            if dv.abs() < FOLD_BAND {
                let t = 1.0 - dv.abs() / FOLD_BAND;
                p[i] += FOLD_SLOPE * t * dv.signum();
                let e: f64 = rng.sample(StandardNormal);
                q[i] += band_noise * t * e;
            }
            let dh = y as f64 - (cy + tilt_h * (x as f64 - cx));
            if dh.abs() < FOLD_BAND {
                let t = 1.0 - dh.abs() / FOLD_BAND;
                q[i] += FOLD_SLOPE * t * dh.signum();
                let e: f64 = rng.sample(StandardNormal);
                p[i] += band_noise * t * e;
            }
        }
    }
    for i in 0..p.len() {
        set_normal_from_slopes(patch, i, p[i], q[i]);
    }

    let amplitude = CRUMPLE_AMPLITUDE * IRONING_RESIDUAL;
    let dx = noise_field(rng, w, h, CRUMPLE_WARP_SCALE);
    let dy = noise_field(rng, w, h, CRUMPLE_WARP_SCALE);
    warp_and_disturb(patch, &dx, &dy, amplitude, |_, p, q| (p, q));
}

/// Rebuilds the surface by sampling it at displaced positions and passing
/// slopes through `disturb`.
fn warp_and_disturb<F>(patch: &mut SurfacePatch, dx: &[f64], dy: &[f64], amplitude: f64, disturb: F)
where
    F: Fn(usize, f64, f64) -> (f64, f64),
{
    let (w, h) = (patch.width, patch.height);
    let (p, q) = slope_fields(patch);
    let albedo = patch.albedo.clone();
    let sample = |f: &[f64], x: f64, y: f64| -> f64 {
        let x = x.clamp(0.0, w as f64 - 1.0);
        let y = y.clamp(0.0, h as f64 - 1.0);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = f[y0 * w + x0] * (1.0 - fx) + f[y0 * w + x1] * fx;
        let b = f[y1 * w + x0] * (1.0 - fx) + f[y1 * w + x1] * fx;
        a * (1.0 - fy) + b * fy
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = x as f64 + amplitude * dx[i];
            let sy = y as f64 + amplitude * dy[i];
            let (np, nq) = disturb(i, sample(&p, sx, sy), sample(&q, sx, sy));
            set_normal_from_slopes(patch, i, np, nq);
            patch.albedo[i] = sample(&albedo, sx, sy).clamp(0.01, 1.0);
        }
    }
}

/// Uniformly samples `count` distinct pixel indices (exposed for tests).
#[allow(dead_code)]
pub(crate) fn pick_indices<R: Rng>(rng: &mut R, n: usize, count: usize) -> Vec<usize> {
    sample_indices(rng, n, count.min(n)).into_vec()
}
