//! Run-wide configuration shared by the pipeline stages.

use crate::{Error, Result};

/// Capture rig, named after its physical counterpart.
///
/// Scanner rigs image with exactly four lights at fixed azimuths and no
/// misalignment between exposures; mobile rigs use k >= 3 lights on a cone
/// and suffer integer-pixel misalignment between shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CaptureMode {
    Scanner,
    Mobile,
}

impl CaptureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaptureMode::Scanner => "scanner",
            CaptureMode::Mobile => "mobile",
        }
    }
}

/// Parameters of one simulated run.
///
/// `threshold` is the acceptance threshold tau on the minimum of the two
/// per-component correlations. `noise_sigma` is the query-side sensor noise in
/// gray levels out of 65535; enrollment captures are rendered at the scanner's
/// effective noise floor of zero (flatbed scans are far cleaner than the
/// hand-held queries they are compared against).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from this.
    pub seed: u64,
    /// Side length of the square patch in pixels.
    pub patch_size: usize,
    /// Acceptance threshold tau on min(corr_x, corr_y).
    pub threshold: f64,
    /// Number of capture images k.
    pub capture_count: usize,
    /// Query-side sensor noise std in gray levels.
    pub noise_sigma: f64,
    /// Capture rig for query-side captures.
    pub mode: CaptureMode,
    /// Std of surface slopes (dimensionless).
    pub roughness: f64,
    /// Gaussian correlation length of the slope field in pixels.
    pub correlation_length: f64,
    /// Light intensity in gray levels (pre-albedo, pre-shading).
    pub intensity: f64,
    /// Maximum per-image translation in mobile mode, pixels.
    pub max_shift: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            patch_size: 200,
            threshold: 0.3,
            capture_count: 4,
            noise_sigma: 1000.0,
            mode: CaptureMode::Scanner,
            roughness: 0.08,
            correlation_length: 2.0,
            intensity: 48_000.0,
            max_shift: 8,
        }
    }
}

impl RunConfig {
    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParam("threshold must lie in (0, 1)"));
        }
        match self.mode {
            CaptureMode::Scanner => {
                if self.capture_count != 4 {
                    return Err(Error::InvalidParam("scanner mode requires exactly 4 captures"));
                }
            }
            CaptureMode::Mobile => {
                if self.capture_count < 3 {
                    return Err(Error::InvalidParam("mobile mode requires at least 3 captures"));
                }
            }
        }
        if self.patch_size < 16 {
            return Err(Error::InvalidParam("patch_size must be at least 16"));
        }
        if !(self.roughness > 0.0 && self.roughness <= 0.5) {
            return Err(Error::InvalidParam("roughness must lie in (0, 0.5]"));
        }
        if self.correlation_length < 1.0 {
            return Err(Error::InvalidParam("correlation_length must be >= 1 pixel"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParam("noise_sigma must be non-negative"));
        }
        if self.intensity <= 0.0 {
            return Err(Error::InvalidParam("intensity must be positive"));
        }
        Ok(())
    }
}
