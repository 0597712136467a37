//! Derivative-free and finite-difference minimizers over closures.
//!
//! All three optimizers share one accounting contract: every objective
//! evaluation, including probes inside line searches and finite-difference
//! gradients, increments the evaluation count, appends the best value seen
//! so far to the history, and is checked against the early-stop target.
//! Running out of budget is a normal return (`converged = false`), not an
//! error, because attack drivers treat exhausted budgets as failed attempts.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

const GOLDEN: f64 = 1.618_033_988_749_895;
/// Interior section ratio, 2 - golden.
const GOLDEN_SECTION: f64 = 0.381_966_011_250_105;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    /// Hard cap on objective evaluations.
    pub budget: usize,
    /// Stop as soon as an evaluation is at or below this value.
    pub target: Option<f64>,
    /// Coordinate tolerance (relative scale).
    pub xtol: f64,
    /// Objective tolerance (relative scale).
    pub ftol: f64,
    /// Cap on outer iterations.
    pub max_iters: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            budget: 100_000,
            target: None,
            xtol: 1e-8,
            ftol: 1e-12,
            max_iters: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    /// Best point evaluated.
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub f: f64,
    pub iterations: usize,
    pub function_evals: usize,
    /// Tolerances met before budget ran out.
    pub converged: bool,
    /// An evaluation reached the early-stop target.
    pub reached_target: bool,
    /// Best objective seen after each evaluation, length `function_evals`.
    pub history: Vec<f64>,
}

/// Why an optimizer unwound before meeting its tolerances.
enum Stop {
    Target,
    Budget,
}

type Step<T> = core::result::Result<T, Stop>;

/// Budgeted objective wrapper; owns best-so-far tracking and history.
struct Evaluator<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    budget: usize,
    target: Option<f64>,
    count: usize,
    best_x: Vec<f64>,
    best_f: f64,
    history: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(f: &'a mut dyn FnMut(&[f64]) -> f64, budget: usize, target: Option<f64>) -> Self {
        Evaluator {
            f,
            budget,
            target,
            count: 0,
            best_x: Vec::new(),
            best_f: f64::INFINITY,
            history: Vec::new(),
        }
    }

    fn call(&mut self, x: &[f64]) -> Step<f64> {
        if self.count >= self.budget {
            return Err(Stop::Budget);
        }
        let v = (self.f)(x);
        self.count += 1;
        if v < self.best_f || self.best_x.is_empty() {
            self.best_f = v;
            self.best_x = x.to_vec();
        }
        self.history.push(self.best_f);
        if let Some(t) = self.target {
            if v <= t {
                return Err(Stop::Target);
            }
        }
        Ok(v)
    }

    fn finish(self, iterations: usize, outcome: Step<bool>) -> OptimResult {
        let (converged, reached_target) = match outcome {
            Ok(c) => (c, false),
            Err(Stop::Target) => (false, true),
            Err(Stop::Budget) => (false, false),
        };
        OptimResult {
            x: self.best_x,
            f: self.best_f,
            iterations,
            function_evals: self.count,
            converged,
            reached_target,
            history: self.history,
        }
    }
}

fn check_setup(x0: &[f64], steps: &[f64]) -> Result<()> {
    if x0.is_empty() {
        return Err(Error::InvalidParam("optimizer needs at least one dimension"));
    }
    if steps.len() != x0.len() {
        return Err(Error::LengthMismatch { left: steps.len(), right: x0.len() });
    }
    if steps.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParam("step scales must be positive and finite"));
    }
    Ok(())
}

/// Nelder-Mead downhill simplex with standard 1 / 2 / 0.5 / 0.5
/// coefficients. The initial simplex offsets vertex `i+1` by `steps[i]`
/// along axis `i`. One deterministic re-seeded restart is attempted when
/// the simplex collapses without meeting tolerances; a second collapse is
/// [`Error::DegenerateSimplex`].
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    opts: &OptimOptions,
) -> Result<OptimResult> {
    check_setup(x0, steps)?;
    let mut ev = Evaluator::new(f, opts.budget, opts.target);
    let mut iterations = 0usize;
    let mut restarted = false;
    let outcome = loop {
        match nm_run(&mut ev, x0, steps, opts, &mut iterations, restarted) {
            Ok(NmExit::Converged) => break Ok(true),
            Ok(NmExit::IterCap) => break Ok(false),
            Ok(NmExit::Degenerate) => {
                if restarted {
                    return Err(Error::DegenerateSimplex);
                }
                restarted = true;
            }
            Err(stop) => break Err(stop),
        }
    };
    Ok(ev.finish(iterations, outcome))
}

enum NmExit {
    Converged,
    IterCap,
    Degenerate,
}

fn nm_run(
    ev: &mut Evaluator,
    x0: &[f64],
    steps: &[f64],
    opts: &OptimOptions,
    iterations: &mut usize,
    restarted: bool,
) -> Step<NmExit> {
    let n = x0.len();
    let start: Vec<f64> = if restarted { ev.best_x.clone() } else { x0.to_vec() };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    values.push(ev.call(&start)?);
    for i in 0..n {
        let mut v = start.clone();
        // Restart jitter: shrink and deterministically skew the offsets so
        // the fresh simplex is not collinear with the collapsed one.
        let scale = if restarted { 0.25 + 0.05 * ((i % 7) as f64) } else { 1.0 };
        v[i] += steps[i] * scale;
        simplex.push(v);
        values.push(ev.call(simplex.last().unwrap())?);
    }

    loop {
        if *iterations >= opts.max_iters {
            return Ok(NmExit::IterCap);
        }
        *iterations += 1;

        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(core::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_best = values[best];
        let f_worst = values[worst];
        let f_spread = f_worst - f_best;
        let mut x_spread = 0.0f64;
        let mut x_scale = 1.0f64;
        for v in &simplex {
            for k in 0..n {
                x_spread = x_spread.max((v[k] - simplex[best][k]).abs());
                x_scale = x_scale.max(v[k].abs());
            }
        }
        if f_spread <= opts.ftol * (f_best.abs() + f_worst.abs() + 1e-300) || x_spread <= opts.xtol * x_scale {
            return Ok(NmExit::Converged);
        }
        // Collapsed in space but still far apart in value: stuck.
        if x_spread <= 1e-14 * x_scale {
            return Ok(NmExit::Degenerate);
        }

        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for k in 0..n {
                centroid[k] += simplex[i][k];
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let point_at = |coef: f64, from: &[f64]| -> Vec<f64> {
            (0..n).map(|k| centroid[k] + coef * (from[k] - centroid[k])).collect()
        };

        let reflected = point_at(-1.0, &simplex[worst]);
        let f_reflected = ev.call(&reflected)?;

        if f_reflected < values[best] {
            let expanded = point_at(-2.0, &simplex[worst]);
            let f_expanded = ev.call(&expanded)?;
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }
        let contracted = if f_reflected < values[worst] {
            point_at(-0.5, &simplex[worst])
        } else {
            point_at(0.5, &simplex[worst])
        };
        let f_contracted = ev.call(&contracted)?;
        if f_contracted < values[worst].min(f_reflected) {
            simplex[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }
        // Shrink toward the best vertex.
        let anchor = simplex[best].clone();
        for i in 0..=n {
            if i == best {
                continue;
            }
            for k in 0..n {
                simplex[i][k] = anchor[k] + 0.5 * (simplex[i][k] - anchor[k]);
            }
            values[i] = ev.call(&simplex[i])?;
        }
    }
}

/// Powell's conjugate-direction method. Line minimizations use golden
/// expansion bracketing plus golden-section refinement; the direction of
/// largest single-pass decrease is replaced by the net displacement when
/// Powell's replacement test favors it. Initial directions are the scaled
/// coordinate axes in the given order.
pub fn powell(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    opts: &OptimOptions,
) -> Result<OptimResult> {
    check_setup(x0, steps)?;
    let n = x0.len();
    let mut ev = Evaluator::new(f, opts.budget, opts.target);
    let mut iterations = 0usize;

    let outcome = (|| -> Step<bool> {
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut d = vec![0.0; n];
                d[i] = steps[i];
                d
            })
            .collect();
        let mut x = x0.to_vec();
        let mut fx = ev.call(&x)?;

        loop {
            if iterations >= opts.max_iters {
                return Ok(false);
            }
            iterations += 1;
            let x_start = x.clone();
            let f_start = fx;
            let mut biggest_drop = 0.0;
            let mut biggest_idx = 0usize;

            for (i, dir) in dirs.iter().enumerate() {
                let f_before = fx;
                let (t, f_after) = line_minimum(&mut ev, &x, dir, fx, opts.xtol)?;
                apply_step(&mut x, dir, t);
                fx = f_after;
                if f_before - f_after > biggest_drop {
                    biggest_drop = f_before - f_after;
                    biggest_idx = i;
                }
            }

            if 2.0 * (f_start - fx) <= opts.ftol * (f_start.abs() + fx.abs() + 1e-300) {
                return Ok(true);
            }

            let displacement: Vec<f64> = x.iter().zip(x_start.iter()).map(|(a, b)| a - b).collect();
            if displacement.iter().all(|&d| d == 0.0) {
                continue;
            }
            let extrapolated: Vec<f64> =
                x.iter().zip(x_start.iter()).map(|(a, b)| 2.0 * a - b).collect();
            let f_extra = ev.call(&extrapolated)?;
            if f_extra < f_start {
                let term = 2.0 * (f_start - 2.0 * fx + f_extra)
                    * (f_start - fx - biggest_drop).powi(2)
                    - biggest_drop * (f_start - f_extra).powi(2);
                if term < 0.0 {
                    let (t, f_after) = line_minimum(&mut ev, &x, &displacement, fx, opts.xtol)?;
                    apply_step(&mut x, &displacement, t);
                    fx = f_after;
                    dirs.remove(biggest_idx);
                    dirs.push(displacement);
                }
            }
        }
    })();
    Ok(ev.finish(iterations, outcome))
}

fn apply_step(x: &mut [f64], dir: &[f64], t: f64) {
    for (xi, di) in x.iter_mut().zip(dir.iter()) {
        *xi += t * di;
    }
}

/// Minimizes g(t) = f(x + t dir) given g(0) = f0. Returns (t*, g(t*)).
/// Brackets by golden expansion from [0, 1], then golden-section until the
/// bracket is below tolerance in t-units.
fn line_minimum(
    ev: &mut Evaluator,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    xtol: f64,
) -> Step<(f64, f64)> {
    let probe = |ev: &mut Evaluator, t: f64| -> Step<f64> {
        let p: Vec<f64> = x.iter().zip(dir.iter()).map(|(xi, di)| xi + t * di).collect();
        ev.call(&p)
    };

    // Establish a downhill direction in t.
    let mut a = 0.0f64;
    let mut b = 1.0f64;
    let mut fb = probe(ev, b)?;
    if fb > f0 {
        b = -1.0;
        fb = probe(ev, b)?;
        if fb > f0 {
            // Minimum already bracketed between -1 and 1.
            return golden_section(ev, &probe, -1.0, 0.0, 1.0, f0, xtol);
        }
    }
    // March downhill until the objective turns up.
    let mut c = b + GOLDEN * (b - a);
    let mut fc = probe(ev, c)?;
    let mut expansions = 0;
    while fc < fb {
        a = b;
        b = c;
        fb = fc;
        c = b + GOLDEN * (b - a);
        fc = probe(ev, c)?;
        expansions += 1;
        if expansions > 80 {
            // Unbounded descent direction; settle for the best point found.
            return Ok((b, fb));
        }
    }
    golden_section(ev, &probe, a, b, c, fb, xtol)
}

/// Golden-section refinement of a bracket a < b < c (or reversed) with
/// g(b) below both ends.
fn golden_section(
    ev: &mut Evaluator,
    probe: &dyn Fn(&mut Evaluator, f64) -> Step<f64>,
    a: f64,
    b: f64,
    c: f64,
    fb: f64,
    xtol: f64,
) -> Step<(f64, f64)> {
    let mut lo = a.min(c);
    let mut hi = a.max(c);
    let mut mid = b;
    let mut f_mid = fb;
    let tol = xtol.max(1e-12);
    let mut guard = 0;
    while hi - lo > tol * (1.0 + mid.abs()) && guard < 200 {
        guard += 1;
        let trial = if hi - mid > mid - lo {
            mid + GOLDEN_SECTION * (hi - mid)
        } else {
            mid - GOLDEN_SECTION * (mid - lo)
        };
        let f_trial = probe(ev, trial)?;
        if f_trial < f_mid {
            if trial > mid {
                lo = mid;
            } else {
                hi = mid;
            }
            mid = trial;
            f_mid = f_trial;
        } else if trial > mid {
            hi = trial;
        } else {
            lo = trial;
        }
    }
    Ok((mid, f_mid))
}

/// Polak-Ribiere conjugate gradient with nonnegative beta, central finite
/// differences (per-axis half-steps `fd_steps`), Armijo backtracking, and a
/// steepest-descent restart every `n` iterations or on a failed search.
pub fn conjugate_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    fd_steps: &[f64],
    opts: &OptimOptions,
) -> Result<OptimResult> {
    check_setup(x0, fd_steps)?;
    let n = x0.len();
    let mut ev = Evaluator::new(f, opts.budget, opts.target);
    let mut iterations = 0usize;

    let outcome = (|| -> Step<bool> {
        let gradient = |ev: &mut Evaluator, x: &[f64]| -> Step<Vec<f64>> {
            let mut g = Vec::with_capacity(n);
            let mut xp = x.to_vec();
            for k in 0..n {
                let h = fd_steps[k];
                xp[k] = x[k] + h;
                let fp = ev.call(&xp)?;
                xp[k] = x[k] - h;
                let fm = ev.call(&xp)?;
                xp[k] = x[k];
                g.push((fp - fm) / (2.0 * h));
            }
            Ok(g)
        };

        let mut x = x0.to_vec();
        let mut fx = ev.call(&x)?;
        let mut g = gradient(&mut ev, &x)?;
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut t_hint = 1.0f64;
        let mut stall = 0usize;

        loop {
            if iterations >= opts.max_iters {
                return Ok(false);
            }
            iterations += 1;

            let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if g_norm <= 1e-12 {
                return Ok(true);
            }
            let mut slope: f64 = g.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                // Not a descent direction; fall back to steepest descent.
                d = g.iter().map(|v| -v).collect();
                slope = -g_norm * g_norm;
            }

            // Armijo backtracking from twice the last accepted step.
            let mut t = (t_hint * 2.0).clamp(1e-12, 1e6);
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
                let ft = ev.call(&trial)?;
                if ft <= fx + 1e-4 * t * slope {
                    accepted = Some((trial, ft, t));
                    break;
                }
                t *= 0.5;
            }
            let Some((x_new, f_new, t_used)) = accepted else {
                // No admissible step along any descent direction: converged
                // to finite-difference resolution.
                return Ok(true);
            };
            t_hint = t_used;

            let improvement = fx - f_new;
            x = x_new;
            fx = f_new;
            if improvement <= opts.ftol * (fx.abs() + 1e-300) {
                stall += 1;
                if stall >= 2 {
                    return Ok(true);
                }
            } else {
                stall = 0;
            }

            let g_new = gradient(&mut ev, &x)?;
            let beta = if iterations % n == 0 {
                0.0
            } else {
                let num: f64 = g_new.iter().zip(g.iter()).map(|(gn, go)| gn * (gn - go)).sum();
                let den: f64 = g.iter().map(|v| v * v).sum();
                (num / den.max(1e-300)).max(0.0)
            };
            for k in 0..n {
                d[k] = -g_new[k] + beta * d[k];
            }
            g = g_new;
        }
    })();
    Ok(ev.finish(iterations, outcome))
}
