//! Digital forgery against a score-leaking verifier.
//!
//! The attacker never touches paper: they submit candidate maps to an
//! oracle (typically [`crate::TemplateStore::verify`]) that leaks the full
//! per-component similarity score, and they climb it. Acceptance needs both
//! components at the threshold, so every driver runs two phases: climb
//! `corr_x` with the y field frozen, overshooting the threshold slightly
//! for headroom, then climb the verifier's min-component score over the y
//! field with the won x frozen. The second phase uses the full acceptance
//! quantity because disk projection couples the fields: moving y can shift
//! x values wherever a pixel leaves the unit disk. Evaluation counts are
//! the security metric; each oracle call, including probes inside line
//! searches and finite-difference gradients, is one query.
//!
//! Strategies, in decreasing query cost: pixel-space greedy (no prior),
//! latent-space greedy (population prior), and classical optimizers in the
//! latent space (Nelder-Mead, Powell, conjugate gradient).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::latent::{CodecPair, Component};
use crate::map::{NormMap, SimilarityScore};
use crate::optim::{self, OptimOptions};
use crate::rng;
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Score oracle: the only window the attacker has on the target.
pub type ScoreOracle<'a> = dyn FnMut(&NormMap) -> Result<SimilarityScore> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttackMethod {
    /// Pixel-space random-subset hill climbing.
    Baseline,
    /// Latent-coordinate random-subset hill climbing.
    LatentGreedy,
    NelderMead,
    Powell,
    ConjugateGradient,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 5] = [
        AttackMethod::Baseline,
        AttackMethod::LatentGreedy,
        AttackMethod::NelderMead,
        AttackMethod::Powell,
        AttackMethod::ConjugateGradient,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackMethod::Baseline => "baseline",
            AttackMethod::LatentGreedy => "latent",
            AttackMethod::NelderMead => "nm",
            AttackMethod::Powell => "powell",
            AttackMethod::ConjugateGradient => "cg",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "baseline" => Ok(AttackMethod::Baseline),
            "latent" => Ok(AttackMethod::LatentGreedy),
            "nm" => Ok(AttackMethod::NelderMead),
            "powell" => Ok(AttackMethod::Powell),
            "cg" => Ok(AttackMethod::ConjugateGradient),
            _ => Err(Error::InvalidParam("unknown attack method")),
        }
    }

    fn index(&self) -> u64 {
        match self {
            AttackMethod::Baseline => 0,
            AttackMethod::LatentGreedy => 1,
            AttackMethod::NelderMead => 2,
            AttackMethod::Powell => 3,
            AttackMethod::ConjugateGradient => 4,
        }
    }
}

/// Knobs for the greedy drivers. `delta` is the half-width of the uniform
/// perturbation in feature units; latent coordinates live on the same scale
/// because the codec basis is orthonormal. The fixed step is what makes
/// greedy scale-blind next to the optimizers, whose probes stretch with the
/// per-axis spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyParams {
    pub delta: f64,
    /// Fraction of coordinates perturbed per step (at least one).
    pub subset_fraction: f64,
    pub max_iters: usize,
}

impl GreedyParams {
    /// Pixel-space defaults: delta is twice the nominal surface roughness
    /// (slope std 0.08), perturbing 2% of the pixels per step.
    pub fn baseline_default() -> Self {
        GreedyParams { delta: 0.16, subset_fraction: 0.02, max_iters: usize::MAX }
    }

    /// Latent-space defaults for direct callers; [`blackbox_attack`]
    /// replaces `delta` with twice the holdout's measured per-dim std.
    pub fn latent_default() -> Self {
        GreedyParams { delta: 0.16, subset_fraction: 0.02, max_iters: usize::MAX }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParam("delta must be positive"));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::InvalidParam("subset_fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for GreedyParams {
    fn default() -> Self {
        GreedyParams::baseline_default()
    }
}

/// Full record of one forgery attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub target_id: String,
    pub method: AttackMethod,
    /// Outer iterations across both phases.
    pub iterations: usize,
    /// Oracle queries spent; equals the verifier log growth.
    pub function_evals: usize,
    /// Best metric so far after each query: `corr_x` during the x phase,
    /// then the verifier's min-component score during the y phase.
    pub rho_trajectory: Vec<f64>,
    /// Index in `rho_trajectory` where the y phase begins.
    pub phase_split: usize,
    /// Both components reached the threshold.
    pub success: bool,
    /// Final candidate; on success the verifier accepts it bit-exactly.
    pub forged: NormMap,
    pub budget: usize,
}

struct PhaseOutcome {
    coords: Vec<f64>,
    evals: usize,
    iterations: usize,
    trajectory: Vec<f64>,
    /// Full score at the best point this phase evaluated; for the y phase
    /// it decides success.
    best_score: Option<SimilarityScore>,
}

/// Quantity a phase climbs. The x phase tracks `corr_x` alone (the y field
/// is still a placeholder); the y phase tracks the verifier's acceptance
/// score, so a candidate that regresses the won x component through the
/// disk projection is never kept.
fn phase_metric(score: SimilarityScore, comp: Component) -> f64 {
    match comp {
        Component::X => score.corr_x,
        Component::Y => score.min_component(),
    }
}

/// Extra headroom the x phase aims for beyond the threshold, so that the
/// coupling losses during the y phase cannot drag `corr_x` back under it.
const X_PHASE_MARGIN: f64 = 0.02;

fn x_phase_target(tau: f64) -> f64 {
    (tau + X_PHASE_MARGIN).min(0.5 * (tau + 1.0))
}

fn check_attack_setup(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParam("threshold must be in (0, 1)"));
    }
    Ok(())
}

/// Greedy accept-if-not-worse climb of one phase metric over a coordinate
/// vector, hooked to maps through `make_map`. Stops once the metric
/// reaches `goal`.
fn greedy_phase(
    oracle: &mut ScoreOracle,
    make_map: &dyn Fn(&[f64]) -> Result<NormMap>,
    comp: Component,
    start: Vec<f64>,
    deltas: &[f64],
    subset: usize,
    max_iters: usize,
    goal: f64,
    budget: usize,
    stream: &mut rng::Stream,
) -> Result<PhaseOutcome> {
    let mut trajectory = Vec::new();
    let mut evals = 0usize;
    let mut iterations = 0usize;
    let mut current = start;
    if budget == 0 {
        return Ok(PhaseOutcome {
            coords: current,
            evals,
            iterations,
            trajectory,
            best_score: None,
        });
    }
    let first = (*oracle)(&make_map(&current)?)?;
    evals += 1;
    let mut rho = phase_metric(first, comp);
    let mut best_score = first;
    trajectory.push(rho);

    while rho < goal && evals < budget && iterations < max_iters {
        iterations += 1;
        let picks = sample_indices(stream, current.len(), subset.min(current.len()));
        let mut candidate = current.clone();
        for i in picks.iter() {
            let d = deltas[i];
            candidate[i] += stream.gen_range(-d..=d);
        }
        let s = (*oracle)(&make_map(&candidate)?)?;
        evals += 1;
        let r = phase_metric(s, comp);
        if r >= rho {
            rho = r;
            best_score = s;
            current = candidate;
        }
        trajectory.push(rho);
    }
    Ok(PhaseOutcome {
        coords: current,
        evals,
        iterations,
        trajectory,
        best_score: Some(best_score),
    })
}

/// Pixel-space hill climbing from an explicit starting map. No population
/// prior: the attacker perturbs raw feature values of random pixel subsets.
pub fn baseline_greedy(
    oracle: &mut ScoreOracle,
    target_id: &str,
    start: &NormMap,
    params: &GreedyParams,
    tau: f64,
    budget: usize,
    seed: u64,
) -> Result<AttackTrace> {
    check_attack_setup(tau)?;
    params.validate()?;
    let (w, h) = start.dims();
    let d = w * h;
    let subset = ((params.subset_fraction * d as f64).ceil() as usize).max(1);
    let deltas = vec![params.delta; d];

    let mut stream = rng::stream(rng::derive(seed, "greedy-x", &[]));
    let ny0 = start.ny().to_vec();
    let make_x = |v: &[f64]| NormMap::new_projected(w, h, v.to_vec(), ny0.clone());
    let x_phase = greedy_phase(
        oracle,
        &make_x,
        Component::X,
        start.nx().to_vec(),
        &deltas,
        subset,
        params.max_iters,
        x_phase_target(tau),
        budget,
        &mut stream,
    )?;

    let mut stream = rng::stream(rng::derive(seed, "greedy-y", &[]));
    let nx_won = x_phase.coords.clone();
    let make_y = |v: &[f64]| NormMap::new_projected(w, h, nx_won.clone(), v.to_vec());
    let y_phase = greedy_phase(
        oracle,
        &make_y,
        Component::Y,
        start.ny().to_vec(),
        &deltas,
        subset,
        params.max_iters,
        tau,
        budget.saturating_sub(x_phase.evals),
        &mut stream,
    )?;

    let forged =
        NormMap::new_projected(w, h, x_phase.coords.clone(), y_phase.coords.clone())?;
    Ok(assemble_trace(target_id, AttackMethod::Baseline, x_phase, y_phase, forged, tau, budget))
}

fn assemble_trace(
    target_id: &str,
    method: AttackMethod,
    x_phase: PhaseOutcome,
    y_phase: PhaseOutcome,
    forged: NormMap,
    tau: f64,
    budget: usize,
) -> AttackTrace {
    // The forged map is exactly the y phase's best point, so its score
    // decides acceptance; the x phase's own threshold win is preliminary.
    let success = y_phase
        .best_score
        .map(|s| s.min_component() >= tau)
        .unwrap_or(false);
    let phase_split = x_phase.trajectory.len();
    let mut trajectory = x_phase.trajectory;
    trajectory.extend_from_slice(&y_phase.trajectory);
    AttackTrace {
        target_id: String::from(target_id),
        method,
        iterations: x_phase.iterations + y_phase.iterations,
        function_evals: x_phase.evals + y_phase.evals,
        rho_trajectory: trajectory,
        phase_split,
        success,
        forged,
        budget,
    }
}

/// Latent-space hill climbing: the same greedy rule over codec coordinates,
/// starting from the holdout mean (zero vector) unless `start` is given.
pub fn latent_greedy(
    oracle: &mut ScoreOracle,
    target_id: &str,
    codecs: &CodecPair,
    start: Option<(&[f64], &[f64])>,
    params: &GreedyParams,
    tau: f64,
    budget: usize,
    seed: u64,
) -> Result<AttackTrace> {
    check_attack_setup(tau)?;
    params.validate()?;
    let (zx0, zy0) = initial_latents(codecs, start)?;
    let deltas_x = vec![params.delta; zx0.len()];
    let deltas_y = vec![params.delta; zy0.len()];
    let subset_x = ((params.subset_fraction * zx0.len() as f64).ceil() as usize).max(1);
    let subset_y = ((params.subset_fraction * zy0.len() as f64).ceil() as usize).max(1);

    let mut stream = rng::stream(rng::derive(seed, "greedy-x", &[]));
    let zy_frozen = zy0.clone();
    let make_x = |z: &[f64]| codecs.decode_map(z, &zy_frozen);
    let x_phase = greedy_phase(
        oracle,
        &make_x,
        Component::X,
        zx0,
        &deltas_x,
        subset_x,
        params.max_iters,
        x_phase_target(tau),
        budget,
        &mut stream,
    )?;

    let mut stream = rng::stream(rng::derive(seed, "greedy-y", &[]));
    let zx_won = x_phase.coords.clone();
    let make_y = |z: &[f64]| codecs.decode_map(&zx_won, z);
    let y_phase = greedy_phase(
        oracle,
        &make_y,
        Component::Y,
        zy0,
        &deltas_y,
        subset_y,
        params.max_iters,
        tau,
        budget.saturating_sub(x_phase.evals),
        &mut stream,
    )?;

    let forged = codecs.decode_map(&x_phase.coords, &y_phase.coords)?;
    Ok(assemble_trace(target_id, AttackMethod::LatentGreedy, x_phase, y_phase, forged, tau, budget))
}

fn initial_latents(
    codecs: &CodecPair,
    start: Option<(&[f64], &[f64])>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match start {
        None => Ok((vec![0.0; codecs.x.m()], vec![0.0; codecs.y.m()])),
        Some((zx, zy)) => {
            if zx.len() != codecs.x.m() {
                return Err(Error::LengthMismatch { left: zx.len(), right: codecs.x.m() });
            }
            if zy.len() != codecs.y.m() {
                return Err(Error::LengthMismatch { left: zy.len(), right: codecs.y.m() });
            }
            Ok((zx.to_vec(), zy.to_vec()))
        }
    }
}

/// One optimizer phase over latent coordinates of `comp`.
fn optimizer_phase(
    oracle: &mut ScoreOracle,
    codecs: &CodecPair,
    comp: Component,
    frozen: &[f64],
    start: Vec<f64>,
    method: AttackMethod,
    tau: f64,
    budget: usize,
) -> Result<PhaseOutcome> {
    let codec = match comp {
        Component::X => &codecs.x,
        Component::Y => &codecs.y,
    };
    let steps: Vec<f64> = codec
        .explained_variance()
        .iter()
        .map(|v| v.sqrt().max(1e-9))
        .collect();
    let goal = match comp {
        Component::X => x_phase_target(tau),
        Component::Y => tau,
    };
    let opts = OptimOptions {
        budget,
        target: Some(-goal),
        xtol: 1e-6,
        ftol: 1e-10,
        max_iters: usize::MAX,
    };

    let mut oracle_err: Option<Error> = None;
    // Mirrors the evaluator's best-point tracking to retain the full score
    // (both components) at the eventual best point.
    let mut best_component = f64::NEG_INFINITY;
    let mut best_score: Option<SimilarityScore> = None;
    let mut objective = |z: &[f64]| -> f64 {
        if oracle_err.is_some() {
            return f64::INFINITY;
        }
        let mapped = match comp {
            Component::X => codecs.decode_map(z, frozen),
            Component::Y => codecs.decode_map(frozen, z),
        };
        match mapped.and_then(|m| (*oracle)(&m)) {
            Ok(s) => {
                let c = phase_metric(s, comp);
                if c > best_component || best_score.is_none() {
                    best_component = c;
                    best_score = Some(s);
                }
                -c
            }
            Err(e) => {
                oracle_err = Some(e);
                f64::INFINITY
            }
        }
    };

    let res = match method {
        AttackMethod::NelderMead => optim::nelder_mead(&mut objective, &start, &steps, &opts)?,
        AttackMethod::Powell => optim::powell(&mut objective, &start, &steps, &opts)?,
        AttackMethod::ConjugateGradient => {
            let fd: Vec<f64> = steps.iter().map(|s| s * 1e-3).collect();
            optim::conjugate_gradient(&mut objective, &start, &fd, &opts)?
        }
        _ => return Err(Error::InvalidParam("optimizer phase needs nm, powell, or cg")),
    };
    if let Some(e) = oracle_err {
        return Err(e);
    }
    let coords = if res.x.is_empty() { start } else { res.x };
    Ok(PhaseOutcome {
        coords,
        evals: res.function_evals,
        iterations: res.iterations,
        trajectory: res.history.iter().map(|f| -f).collect(),
        best_score,
    })
}

/// Latent-space forgery with a classical optimizer, or either greedy driver
/// when `method` selects one (the pixel driver synthesizes its start from
/// the codec's marginal spread). One entry point for the whole taxonomy.
pub fn blackbox_attack(
    oracle: &mut ScoreOracle,
    target_id: &str,
    codecs: &CodecPair,
    start: Option<(&[f64], &[f64])>,
    method: AttackMethod,
    tau: f64,
    budget: usize,
    seed: u64,
) -> Result<AttackTrace> {
    check_attack_setup(tau)?;
    match method {
        AttackMethod::Baseline => {
            let (w, h) = codecs.dims();
            let d = (w * h) as f64;
            let std_x = (codecs.x.total_variance() / d).sqrt();
            let std_y = (codecs.y.total_variance() / d).sqrt();
            let m0 = random_map_like(w, h, std_x, std_y, rng::derive(seed, "init", &[]))?;
            baseline_greedy(
                oracle,
                target_id,
                &m0,
                &GreedyParams::baseline_default(),
                tau,
                budget,
                seed,
            )
        }
        AttackMethod::LatentGreedy => {
            let (w, h) = codecs.dims();
            let d = (w * h) as f64;
            let per_dim_std =
                ((codecs.x.total_variance() + codecs.y.total_variance()) / (2.0 * d)).sqrt();
            let params = GreedyParams {
                delta: 2.0 * per_dim_std,
                ..GreedyParams::latent_default()
            };
            latent_greedy(oracle, target_id, codecs, start, &params, tau, budget, seed)
        }
        _ => {
            let (zx0, zy0) = initial_latents(codecs, start)?;
            let x_phase = optimizer_phase(
                oracle,
                codecs,
                Component::X,
                &zy0,
                zx0,
                method,
                tau,
                budget,
            )?;
            let y_phase = optimizer_phase(
                oracle,
                codecs,
                Component::Y,
                &x_phase.coords,
                zy0,
                method,
                tau,
                budget.saturating_sub(x_phase.evals),
            )?;
            let forged = codecs.decode_map(&x_phase.coords, &y_phase.coords)?;
            Ok(assemble_trace(target_id, method, x_phase, y_phase, forged, tau, budget))
        }
    }
}

/// A map with iid Gaussian component fields, projected into the disk.
pub fn random_map_like(
    width: usize,
    height: usize,
    std_x: f64,
    std_y: f64,
    seed: u64,
) -> Result<NormMap> {
    if !(std_x >= 0.0 && std_y >= 0.0) {
        return Err(Error::InvalidParam("field spreads must be non-negative"));
    }
    let mut stream = rng::stream(rng::derive(seed, "random-map", &[]));
    let n = width * height;
    let nx: Vec<f64> = (0..n)
        .map(|_| stream.sample::<f64, _>(StandardNormal) * std_x)
        .collect();
    let ny: Vec<f64> = (0..n)
        .map(|_| stream.sample::<f64, _>(StandardNormal) * std_y)
        .collect();
    NormMap::new_projected(width, height, nx, ny)
}

/// Aggregate row of an attack grid: success statistics for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessRow {
    pub method: AttackMethod,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Median oracle queries over successful attacks only.
    pub median_evals: Option<f64>,
}

/// Grid parameters for [`success_rate_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttackGrid {
    pub methods: Vec<AttackMethod>,
    /// Attempts per method per enrolled target.
    pub trials: usize,
    pub budget: usize,
    pub seed: u64,
}

/// Runs every requested method against every enrolled template and tallies
/// success rates and median query counts. Returns the rows (method order
/// preserved) plus every individual trace for replay or export.
pub fn success_rate_table(
    store: &mut crate::auth::TemplateStore,
    codecs: &CodecPair,
    grid: &AttackGrid,
) -> Result<(Vec<SuccessRow>, Vec<AttackTrace>)> {
    if grid.trials == 0 {
        return Err(Error::InvalidParam("trials must be positive"));
    }
    if grid.methods.is_empty() {
        return Err(Error::InvalidParam("no attack methods selected"));
    }
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let ids = store.ids();
    let tau = store.threshold();
    let mut rows = Vec::with_capacity(grid.methods.len());
    let mut traces = Vec::new();
    let mut ts = 0u64;
    for method in &grid.methods {
        let mut evals_of_successes = Vec::new();
        let mut successes = 0usize;
        for (t_idx, id) in ids.iter().enumerate() {
            for trial in 0..grid.trials {
                let attack_seed = rng::derive(
                    grid.seed,
                    "attack",
                    &[method.index(), t_idx as u64, trial as u64],
                );
                let mut oracle = |m: &NormMap| -> Result<SimilarityScore> {
                    ts += 1;
                    store.verify(m, Some(id.as_str()), ts).map(|o| o.score)
                };
                let trace = blackbox_attack(
                    &mut oracle,
                    id,
                    codecs,
                    None,
                    *method,
                    tau,
                    grid.budget,
                    attack_seed,
                )?;
                if trace.success {
                    successes += 1;
                    evals_of_successes.push(trace.function_evals);
                }
                traces.push(trace);
            }
        }
        let total = ids.len() * grid.trials;
        rows.push(SuccessRow {
            method: *method,
            trials: total,
            successes,
            success_rate: successes as f64 / total as f64,
            median_evals: median(&mut evals_of_successes),
        });
    }
    Ok((rows, traces))
}

fn median(values: &mut Vec<usize>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::TemplateStore;
    use crate::config::CaptureMode;
    use crate::surface::{generate_patch, true_norm_map, PaperStock};

    fn stock_maps(seed: u64, size: usize, count: usize) -> Vec<NormMap> {
        let stock = PaperStock::new(seed, size, 2.0, 0.08, 0.6, 6).unwrap();
        (0..count)
            .map(|i| true_norm_map(&stock.sheet(i as u64)))
            .collect()
    }

    fn small_store(target: &NormMap, tau: f64) -> TemplateStore {
        let mut store = TemplateStore::new(tau).unwrap();
        store
            .enroll("t0", target.clone(), CaptureMode::Scanner, 0)
            .unwrap();
        store
    }

    fn store_oracle<'a>(
        store: &'a mut TemplateStore,
    ) -> impl FnMut(&NormMap) -> crate::Result<SimilarityScore> + 'a {
        let mut ts = 0u64;
        move |m: &NormMap| {
            ts += 1;
            store.verify(m, Some("t0"), ts).map(|o| o.score)
        }
    }

    #[test]
    fn zero_budget_yields_empty_failed_trace() {
        let maps = stock_maps(50, 16, 4);
        let codecs = CodecPair::fit(&maps[..3], 0.99).unwrap();
        let mut store = small_store(&maps[3], 0.3);
        let mut oracle = store_oracle(&mut store);
        for method in AttackMethod::ALL {
            let trace =
                blackbox_attack(&mut oracle, "t0", &codecs, None, method, 0.3, 0, 7).unwrap();
            assert_eq!(trace.function_evals, 0, "{method:?}");
            assert!(trace.rho_trajectory.is_empty());
            assert!(!trace.success);
            assert_eq!(trace.phase_split, 0);
        }
        drop(oracle);
        assert_eq!(store.query_log().len(), 0);
    }

    #[test]
    fn trajectory_is_monotone_and_counts_match_query_log() {
        let maps = stock_maps(51, 16, 6);
        let codecs = CodecPair::fit(&maps[..5], 0.99).unwrap();
        let mut store = small_store(&maps[5], 0.95);
        for method in AttackMethod::ALL {
            let before = store.query_log().len();
            let mut oracle = store_oracle(&mut store);
            let trace =
                blackbox_attack(&mut oracle, "t0", &codecs, None, method, 0.95, 400, 11).unwrap();
            drop(oracle);
            let grew = store.query_log().len() - before;
            assert_eq!(trace.function_evals, grew, "{method:?}");
            assert_eq!(trace.rho_trajectory.len(), trace.function_evals, "{method:?}");
            for w in trace.rho_trajectory[..trace.phase_split].windows(2) {
                assert!(w[1] >= w[0], "{method:?} x phase decreased");
            }
            for w in trace.rho_trajectory[trace.phase_split..].windows(2) {
                assert!(w[1] >= w[0], "{method:?} y phase decreased");
            }
            assert!(trace.function_evals <= 400);
        }
    }

    #[test]
    fn baseline_greedy_reaches_threshold_on_small_maps() {
        let target = true_norm_map(&generate_patch(60, 16, 2.0, 0.08).unwrap());
        let mut store = small_store(&target, 0.3);
        let mut oracle = store_oracle(&mut store);
        let start = random_map_like(16, 16, 0.08, 0.08, 3).unwrap();
        let trace = baseline_greedy(
            &mut oracle,
            "t0",
            &start,
            &GreedyParams::baseline_default(),
            0.3,
            40_000,
            5,
        )
        .unwrap();
        assert!(trace.success, "stalled at {:?}", trace.rho_trajectory.last());
        drop(oracle);
        let outcome = store.verify(&trace.forged, Some("t0"), 999_999).unwrap();
        assert!(outcome.accepted);
        assert!(outcome.score.min_component() >= 0.3);
    }

    #[test]
    fn latent_greedy_and_optimizers_forge_with_population_prior() {
        let maps = stock_maps(52, 20, 13);
        let codecs = CodecPair::fit(&maps[..12], 0.99).unwrap();
        for method in [
            AttackMethod::LatentGreedy,
            AttackMethod::NelderMead,
            AttackMethod::Powell,
            AttackMethod::ConjugateGradient,
        ] {
            let mut store = small_store(&maps[12], 0.3);
            let mut oracle = store_oracle(&mut store);
            let trace =
                blackbox_attack(&mut oracle, "t0", &codecs, None, method, 0.3, 20_000, 13)
                    .unwrap();
            drop(oracle);
            assert!(
                trace.success,
                "{method:?} stalled at {:?}",
                trace.rho_trajectory.last()
            );
            let outcome = store.verify(&trace.forged, Some("t0"), 1_000_000).unwrap();
            assert!(outcome.accepted, "{method:?} replay rejected");
        }
    }

    #[test]
    fn attacks_are_deterministic_in_the_seed() {
        let maps = stock_maps(53, 16, 5);
        let codecs = CodecPair::fit(&maps[..4], 0.99).unwrap();
        let run = |seed: u64| {
            let mut store = small_store(&maps[4], 0.4);
            let mut oracle = store_oracle(&mut store);
            blackbox_attack(
                &mut oracle,
                "t0",
                &codecs,
                None,
                AttackMethod::LatentGreedy,
                0.4,
                500,
                seed,
            )
            .unwrap()
        };
        let a = run(21);
        let b = run(21);
        let c = run(22);
        assert_eq!(a, b);
        assert_ne!(a.rho_trajectory, c.rho_trajectory);
    }

    #[test]
    fn phase_split_marks_both_phases() {
        let maps = stock_maps(54, 16, 12);
        let codecs = CodecPair::fit(&maps[..11], 0.99).unwrap();
        let mut store = small_store(&maps[11], 0.25);
        let mut oracle = store_oracle(&mut store);
        let trace = blackbox_attack(
            &mut oracle,
            "t0",
            &codecs,
            None,
            AttackMethod::Powell,
            0.25,
            10_000,
            3,
        )
        .unwrap();
        assert!(trace.phase_split > 0);
        assert!(trace.phase_split < trace.rho_trajectory.len());
        assert!(trace.success);
    }

    #[test]
    fn success_rate_table_orders_methods_and_replays() {
        let maps = stock_maps(55, 16, 12);
        let codecs = CodecPair::fit(&maps[..10], 0.99).unwrap();
        let mut store = TemplateStore::new(0.3).unwrap();
        store.enroll("a", maps[10].clone(), CaptureMode::Scanner, 0).unwrap();
        store.enroll("b", maps[11].clone(), CaptureMode::Scanner, 1).unwrap();
        let grid = AttackGrid {
            methods: vec![AttackMethod::Powell, AttackMethod::LatentGreedy],
            trials: 1,
            budget: 20_000,
            seed: 9,
        };
        let (rows, traces) = success_rate_table(&mut store, &codecs, &grid).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(traces.len(), 4);
        for row in &rows {
            assert_eq!(row.trials, 2);
            assert!(row.success_rate > 0.0, "{:?}", row.method);
        }
        let log_len: usize = traces.iter().map(|t| t.function_evals).sum();
        assert_eq!(store.query_log().len(), log_len);
        for trace in &traces {
            if trace.success {
                let out = store
                    .verify(&trace.forged, Some(&trace.target_id), u64::MAX)
                    .unwrap();
                assert!(out.accepted);
            }
        }
    }

    #[test]
    fn invalid_setups_are_rejected() {
        let maps = stock_maps(56, 16, 3);
        let codecs = CodecPair::fit(&maps[..2], 0.99).unwrap();
        let mut oracle = |_: &NormMap| -> crate::Result<SimilarityScore> {
            Ok(SimilarityScore { corr_x: 0.0, corr_y: 0.0 })
        };
        assert!(blackbox_attack(
            &mut oracle,
            "t0",
            &codecs,
            None,
            AttackMethod::Powell,
            1.5,
            10,
            0
        )
        .is_err());
        let bad = GreedyParams { delta: 0.0, ..GreedyParams::default() };
        let m0 = random_map_like(16, 16, 0.08, 0.08, 1).unwrap();
        assert!(baseline_greedy(&mut oracle, "t0", &m0, &bad, 0.3, 10, 0).is_err());
        let wrong_start = vec![0.0; codecs.x.m() + 1];
        assert!(blackbox_attack(
            &mut oracle,
            "t0",
            &codecs,
            Some((&wrong_start, &vec![0.0; codecs.y.m()])),
            AttackMethod::NelderMead,
            0.3,
            10,
            0
        )
        .is_err());
    }

    #[test]
    fn oracle_errors_propagate() {
        let maps = stock_maps(57, 16, 3);
        let codecs = CodecPair::fit(&maps[..2], 0.99).unwrap();
        let mut oracle =
            |_: &NormMap| -> crate::Result<SimilarityScore> { Err(Error::UnknownId(String::from("zz"))) };
        for method in AttackMethod::ALL {
            let got = blackbox_attack(&mut oracle, "zz", &codecs, None, method, 0.3, 50, 1);
            assert!(matches!(got, Err(Error::UnknownId(_))), "{method:?}");
        }
    }
}
