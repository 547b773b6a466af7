//! Path simulation, excursion decomposition, and the Monte Carlo estimators
//! for excursion durations, occupation counts, embedded-chain moments,
//! renewal rates, and long-run occupation frequencies.
//!
//! Excursions are the path segments between successive visits to the
//! reference line; their start heights form the embedded chain. All
//! estimators fan trials out across workers with one RNG stream per trial
//! and merge results in trial order, so reports are identical for any
//! worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{LineSet, Model, State};
use crate::rng::trial_stream;

/// Hard cap on a single excursion's length; hitting it means the reference
/// line is effectively unreachable from the start state.
const EXCURSION_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("path visits the reference line {visits} time(s); need at least 2")]
    NoReturn { visits: usize },
    #[error("trials must be >= 1")]
    ZeroTrials,
    #[error("steps must be >= 1")]
    ZeroSteps,
    #[error("excursion exceeded {cap} steps without returning to the reference line")]
    ExcursionOverflow { cap: u64 },
}

/// A simulated trajectory, including its seed for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub states: Vec<State>,
    pub seed: u64,
    pub model_id: String,
}

/// One excursion between returns to the reference line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcursionRecord {
    /// Height at the opening visit to the reference line.
    pub start_x: u64,
    /// Height at the closing visit.
    pub end_x: u64,
    /// Steps between the two visits (>= 1).
    pub duration: u64,
    /// Max height deviation from `start_x` over the whole excursion.
    pub max_dev: u64,
    /// Per-line time counts over the half-open excursion window.
    pub occupation: Vec<u64>,
}

/// Excursion decomposition of a path, with the discarded incomplete tail.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub excursions: Vec<ExcursionRecord>,
    /// Steps after the last return to the reference line.
    pub trailing_discarded: u64,
}

/// Sample mean with a 95% normal-approximation confidence halfwidth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub variance: f64,
    pub count: u64,
    pub ci_halfwidth: f64,
}

impl MomentEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "estimate needs at least one sample");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            variance,
            count: values.len() as u64,
            ci_halfwidth: 1.96 * (variance / n).sqrt(),
        }
    }

    /// Whether `target` lies inside the 95% interval.
    pub fn ci_covers(&self, target: f64) -> bool {
        (self.mean - target).abs() <= self.ci_halfwidth
    }
}

/// One step of the chain.
pub fn step(model: &dyn Model, state: State, rng: &mut impl Rng) -> State {
    model.row(state.x, state.line).sample(rng.gen::<f64>())
}

/// Simulate `steps` transitions from `initial` by inverse-CDF sampling.
/// The result is a pure function of `(model, initial, steps, seed)`.
pub fn run_path(
    model: &dyn Model,
    initial: State,
    steps: u64,
    seed: u64,
) -> Result<PathSample, SimulateError> {
    if steps == 0 {
        return Err(SimulateError::ZeroSteps);
    }
    let mut rng = trial_stream(seed, 0);
    let mut states = Vec::with_capacity(steps as usize + 1);
    let mut current = initial;
    states.push(current);
    for _ in 0..steps {
        current = step(model, current, &mut rng);
        states.push(current);
    }
    Ok(PathSample {
        states,
        seed,
        model_id: model.describe(),
    })
}

/// Cut a path into excursions between successive visits to the reference
/// line of `lines`. The segment after the last visit is discarded and its
/// length reported.
pub fn decompose_excursions(
    states: &[State],
    lines: &LineSet,
) -> Result<Decomposition, SimulateError> {
    let reference = lines.reference();
    let visits: Vec<usize> = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.line == reference)
        .map(|(m, _)| m)
        .collect();
    if visits.len() < 2 {
        return Err(SimulateError::NoReturn {
            visits: visits.len(),
        });
    }
    let mut excursions = Vec::with_capacity(visits.len() - 1);
    for w in visits.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let start_x = states[t0].x;
        let mut occupation = vec![0u64; lines.len()];
        let mut max_dev = 0u64;
        for (m, s) in states[t0..=t1].iter().enumerate() {
            if m < t1 - t0 {
                occupation[s.line] += 1;
            }
            max_dev = max_dev.max(s.x.abs_diff(start_x));
        }
        excursions.push(ExcursionRecord {
            start_x,
            end_x: states[t1].x,
            duration: (t1 - t0) as u64,
            max_dev,
            occupation,
        });
    }
    Ok(Decomposition {
        excursions,
        trailing_discarded: (states.len() - 1 - visits[visits.len() - 1]) as u64,
    })
}

/// Heights at successive returns: the start heights of the excursions.
pub fn embedded_chain(excursions: &[ExcursionRecord]) -> Vec<u64> {
    excursions.iter().map(|e| e.start_x).collect()
}

/// Everything measured over a single excursion from a reference-line state.
struct ExcursionSample {
    duration: u64,
    end_x: u64,
    max_dev: u64,
    occupation: Vec<u64>,
    hit_zero: bool,
    /// Sum of exact per-step mean displacements mu1(X_k, eta_k): an
    /// unbiased estimate of the embedded drift with the martingale noise
    /// removed.
    cond_m1: f64,
    /// Sum of mu2(X_k, eta_k) + 2 (X_k - start) mu1(X_k, eta_k): unbiased
    /// for the embedded second moment.
    cond_m2: f64,
}

/// One excursion from `start` (which must lie on the reference line).
fn simulate_excursion(
    model: &dyn Model,
    start: State,
    rng: &mut impl Rng,
) -> Result<ExcursionSample, SimulateError> {
    let reference = model.lines().reference();
    debug_assert_eq!(start.line, reference);
    let mut occupation = vec![0u64; model.lines().len()];
    let mut current = start;
    let mut max_dev = 0u64;
    let mut hit_zero = start.x == 0;
    let mut cond_m1 = 0.0;
    let mut cond_m2 = 0.0;
    let mut duration = 0u64;
    loop {
        if duration >= EXCURSION_CAP {
            return Err(SimulateError::ExcursionOverflow { cap: EXCURSION_CAP });
        }
        occupation[current.line] += 1;
        let row = model.row(current.x, current.line);
        let mu1 = row.displacement_moment(current.x, 1);
        let mu2 = row.displacement_moment(current.x, 2);
        cond_m1 += mu1;
        cond_m2 += mu2 + 2.0 * (current.x as f64 - start.x as f64) * mu1;
        current = row.sample(rng.gen::<f64>());
        duration += 1;
        max_dev = max_dev.max(current.x.abs_diff(start.x));
        hit_zero |= current.x == 0;
        if current.line == reference {
            break;
        }
    }
    Ok(ExcursionSample {
        duration,
        end_x: current.x,
        max_dev,
        occupation,
        hit_zero,
        cond_m1,
        cond_m2,
    })
}

fn parallel_excursions(
    model: &dyn Model,
    start: State,
    trials: u64,
    seed: u64,
) -> Result<Vec<ExcursionSample>, SimulateError> {
    if trials == 0 {
        return Err(SimulateError::ZeroTrials);
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(seed, t);
            simulate_excursion(model, start, &mut rng)
        })
        .collect()
}

/// Per-excursion occupation estimate with the count of trials that touched
/// the boundary x = 0 (those are flagged, not dropped).
#[derive(Debug, Clone, Serialize)]
pub struct OccupationRatio {
    pub estimate: MomentEstimate,
    pub boundary_hits: u64,
}

/// Mean occupation of `line` per excursion started at `(x0, reference)`,
/// over independent excursions. For large `x0` this estimates the ratio
/// pi(line) / pi(reference).
pub fn estimate_occupation_ratio(
    model: &dyn Model,
    x0: u64,
    line: usize,
    trials: u64,
    seed: u64,
) -> Result<OccupationRatio, SimulateError> {
    let start = State::new(x0, model.lines().reference());
    let samples = parallel_excursions(model, start, trials, seed)?;
    let values: Vec<f64> = samples.iter().map(|s| s.occupation[line] as f64).collect();
    Ok(OccupationRatio {
        estimate: MomentEstimate::from_samples(&values),
        boundary_hits: samples.iter().filter(|s| s.hit_zero).count() as u64,
    })
}

/// Embedded one-step moment estimates from excursions started at
/// `(x, reference)`.
///
/// `m1` and `m2` are the plain Monte Carlo mean and mean-square of the
/// embedded displacement `Y_1 - Y_0`. `m1_conditional` and
/// `m2_conditional` average the summed exact per-step conditional moments
/// along each excursion; optional stopping makes them unbiased for the
/// same limits with far smaller variance (the per-step martingale noise
/// never enters).
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedMoments {
    pub m1: MomentEstimate,
    pub m2: MomentEstimate,
    pub m1_conditional: MomentEstimate,
    pub m2_conditional: MomentEstimate,
    pub boundary_hits: u64,
}

pub fn estimate_embedded_moments(
    model: &dyn Model,
    x: u64,
    trials: u64,
    seed: u64,
) -> Result<EmbeddedMoments, SimulateError> {
    let start = State::new(x, model.lines().reference());
    let samples = parallel_excursions(model, start, trials, seed)?;
    let delta: Vec<f64> = samples
        .iter()
        .map(|s| s.end_x as f64 - x as f64)
        .collect();
    let delta_sq: Vec<f64> = delta.iter().map(|d| d * d).collect();
    let cond1: Vec<f64> = samples.iter().map(|s| s.cond_m1).collect();
    let cond2: Vec<f64> = samples.iter().map(|s| s.cond_m2).collect();
    Ok(EmbeddedMoments {
        m1: MomentEstimate::from_samples(&delta),
        m2: MomentEstimate::from_samples(&delta_sq),
        m1_conditional: MomentEstimate::from_samples(&cond1),
        m2_conditional: MomentEstimate::from_samples(&cond2),
        boundary_hits: samples.iter().filter(|s| s.hit_zero).count() as u64,
    })
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Empirical survival function of excursion durations from `(x, reference)`
/// with a least-squares line through the log-survival values.
#[derive(Debug, Clone, Serialize)]
pub struct TauTailProfile {
    /// `(r, P[duration > r])` for `r = 0..=r_max`.
    pub survival: Vec<(u64, f64)>,
    /// Slope of the fitted log-survival line over the reliable range
    /// (survival >= 50 / trials); NaN when fewer than 2 points qualify.
    pub log_slope: f64,
    pub r_squared: f64,
}

pub fn tau_tail_profile(
    model: &dyn Model,
    x: u64,
    trials: u64,
    r_max: u64,
    seed: u64,
) -> Result<TauTailProfile, SimulateError> {
    let start = State::new(x, model.lines().reference());
    let samples = parallel_excursions(model, start, trials, seed)?;
    let mut exceed = vec![0u64; r_max as usize + 1];
    for s in &samples {
        for (r, count) in exceed.iter_mut().enumerate() {
            if s.duration > r as u64 {
                *count += 1;
            } else {
                break;
            }
        }
    }
    let survival: Vec<(u64, f64)> = exceed
        .iter()
        .enumerate()
        .map(|(r, &count)| (r as u64, count as f64 / trials as f64))
        .collect();
    let floor = 50.0 / trials as f64;
    let pts: Vec<(f64, f64)> = survival
        .iter()
        .filter(|&&(_, s)| s >= floor && s > 0.0)
        .map(|&(r, s)| (r as f64, s.ln()))
        .collect();
    let (log_slope, r_squared) = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(TauTailProfile {
        survival,
        log_slope,
        r_squared,
    })
}

/// Empirical tail of the per-excursion maximum deviation on a grid of
/// thresholds, with a log-log slope over the reliable range.
#[derive(Debug, Clone, Serialize)]
pub struct MaxDevProfile {
    /// `(d, P[max deviation >= d])` over the requested grid.
    pub tail: Vec<(u64, f64)>,
    /// Log-log least-squares slope; NaN when fewer than 2 points qualify.
    pub loglog_slope: f64,
}

pub fn max_deviation_profile(
    model: &dyn Model,
    x: u64,
    trials: u64,
    d_grid: &[u64],
    seed: u64,
) -> Result<MaxDevProfile, SimulateError> {
    let start = State::new(x, model.lines().reference());
    let samples = parallel_excursions(model, start, trials, seed)?;
    let tail: Vec<(u64, f64)> = d_grid
        .iter()
        .map(|&d| {
            let count = samples.iter().filter(|s| s.max_dev >= d).count();
            (d, count as f64 / trials as f64)
        })
        .collect();
    let floor = 50.0 / trials as f64;
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|&&(d, p)| d >= 1 && p >= floor)
        .map(|&(d, p)| ((d as f64).ln(), p.ln()))
        .collect();
    let loglog_slope = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys).0
    } else {
        f64::NAN
    };
    Ok(MaxDevProfile { tail, loglog_slope })
}

/// Mean of `N(n) / n` over independent paths, where `N(n)` counts returns
/// to the reference line by time `n`.
pub fn renewal_rate(
    model: &dyn Model,
    initial: State,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<MomentEstimate, SimulateError> {
    if n == 0 {
        return Err(SimulateError::ZeroSteps);
    }
    if trials == 0 {
        return Err(SimulateError::ZeroTrials);
    }
    let reference = model.lines().reference();
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(seed, t);
            let mut current = initial;
            let mut visits = u64::from(current.line == reference);
            for _ in 0..n {
                current = step(model, current, &mut rng);
                visits += u64::from(current.line == reference);
            }
            visits.saturating_sub(1) as f64 / n as f64
        })
        .collect();
    Ok(MomentEstimate::from_samples(&values))
}

/// Time-average visit frequency of each height in `x_set` over paths of
/// length `n`, one estimate per height with CIs across trials.
pub fn occupation_measure(
    model: &dyn Model,
    initial: State,
    n: u64,
    x_set: &[u64],
    trials: u64,
    seed: u64,
) -> Result<Vec<(u64, MomentEstimate)>, SimulateError> {
    if n == 0 {
        return Err(SimulateError::ZeroSteps);
    }
    if trials == 0 {
        return Err(SimulateError::ZeroTrials);
    }
    if x_set.is_empty() {
        return Ok(Vec::new());
    }
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(seed, t);
            let mut counts = vec![0u64; x_set.len()];
            let mut current = initial;
            for _ in 0..n {
                // Time average over k = 0..n-1 (the state before each step).
                for (slot, &x) in x_set.iter().enumerate() {
                    if current.x == x {
                        counts[slot] += 1;
                    }
                }
                current = step(model, current, &mut rng);
            }
            counts.iter().map(|&c| c as f64 / n as f64).collect()
        })
        .collect();
    Ok(x_set
        .iter()
        .enumerate()
        .map(|(slot, &x)| {
            let values: Vec<f64> = per_trial.iter().map(|v| v[slot]).collect();
            (x, MomentEstimate::from_samples(&values))
        })
        .collect())
}
