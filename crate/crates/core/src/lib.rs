//! Simulation and attack toolkit for paper-surface authentication built on
//! projected-normal maps.
//!
//! The crate models the full authentication loop end to end:
//!
//! 1. [`surface`] synthesizes ground-truth paper microstructure (the
//!    unclonable physical object).
//! 2. [`optics`] renders grayscale captures of a surface under configured
//!    illumination and aligns capture sets.
//! 3. [`estimator`] recovers a [`NormMap`] from an aligned capture set by
//!    per-pixel photometric least squares.
//! 4. [`auth`] stores templates and decides accept/reject with the
//!    min-component Pearson rule, leaking the similarity score to callers.
//! 5. [`tamper`] applies physical denial-of-service attacks (scratch, sticker
//!    patch, ink scribble, crumple) to a surface before re-capture.
//! 6. [`latent`] fits a PCA codec on adversary holdout maps; [`optim`]
//!    provides derivative-free minimizers; [`forge`] drives hill-climbing and
//!    black-box forgery attacks against the score oracle.
//! 7. [`collision`] and [`histogram`] provide the quantitative reports
//!    (collision probability in log10 space, matched/unmatched separation).
//!
//! The crate is `no_std`-compatible (requires `alloc`); all IO, file formats,
//! and the CLI live in the companion `papergrain-cli` crate. Everything is
//! deterministic: identical seeds yield bit-identical surfaces, captures, and
//! attack traces.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod auth;
pub mod collision;
pub mod config;
pub mod error;
pub mod estimator;
pub mod forge;
pub mod histogram;
pub mod latent;
pub(crate) mod linalg;
pub mod map;
pub mod optics;
pub mod optim;
pub mod rng;
pub mod surface;
pub mod tamper;

pub use auth::{QueryLogEntry, TemplateRecord, TemplateStore, VerifyOutcome};
pub use collision::{
    collision_log10_probability, collision_monte_carlo, CollisionQuery, MonteCarloEstimate,
};
pub use config::{CaptureMode, RunConfig};
pub use error::Error;
pub use estimator::{estimate_norm_map, extract_feature};
pub use forge::{
    baseline_greedy, blackbox_attack, latent_greedy, random_map_like, success_rate_table,
    AttackGrid, AttackMethod, AttackTrace, GreedyParams, ScoreOracle, SuccessRow,
};
pub use histogram::{histogram_report, HistogramReport};
pub use latent::{CodecPair, CodecScope, Component, LatentCodec};
pub use map::{pearson, score, NormMap, SimilarityScore};
pub use optics::{align, render, Alignment, CaptureSet, LightConfig};
pub use optim::{conjugate_gradient, nelder_mead, powell, OptimOptions, OptimResult};
pub use surface::{generate_patch, true_norm_map, PaperStock, SurfacePatch};
pub use tamper::{
    apply_attack, degradation_sweep, AppliedAttack, AttackKind, AttackSpec, SweepRow,
};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
