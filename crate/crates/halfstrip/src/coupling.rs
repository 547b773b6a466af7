//! Maximal coupling of the line coordinate with the limit line chain: the
//! triple chain `(X_n, eta_n, eta*_n)` in which `eta*` moves by the limit
//! matrix `q` and stays glued to `eta` for as long as possible.
//!
//! While coupled, the pair of next lines is drawn from the maximal joint
//! law (diagonal mass `min(q_x(i,j), q(i,j))`), so the per-step decoupling
//! probability equals the total-variation distance between `q_x(i, .)` and
//! `q(i, .)`. Once broken, the two coordinates evolve independently and
//! never re-couple.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Model, ModulationMatrix, State, ROW_SUM_TOL};
use crate::rng::trial_stream;

/// Row differences below this are treated as an exact match (diagonal
/// coupling, no 0/0 in the off-diagonal denominator).
const TV_EPS: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("probability row sums to {sum}, expected 1 within {ROW_SUM_TOL}")]
    RowNotNormalized { sum: f64 },
    #[error("probability {p} outside [0, 1]")]
    ProbabilityOutOfRange { p: f64 },
    #[error("rows have different lengths: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("coupled state must have line == star_line")]
    InconsistentCoupledState,
    #[error("model declares no limit matrix; supply q explicitly")]
    NoDeclaredLimit,
    #[error("trials must be >= 1")]
    ZeroTrials,
}

/// State of the triple chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoupledState {
    pub x: u64,
    pub line: usize,
    pub star_line: usize,
    /// True while every step so far has kept `line == star_line`.
    pub coupled: bool,
}

impl CoupledState {
    /// Freshly coupled start at `(x, line, line)`.
    pub fn start(x: u64, line: usize) -> Self {
        Self {
            x,
            line,
            star_line: line,
            coupled: true,
        }
    }

    pub fn new(
        x: u64,
        line: usize,
        star_line: usize,
        coupled: bool,
    ) -> Result<Self, CouplingError> {
        if coupled && line != star_line {
            return Err(CouplingError::InconsistentCoupledState);
        }
        Ok(Self {
            x,
            line,
            star_line,
            coupled,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointEntry {
    pub line: usize,
    pub star_line: usize,
    pub p: f64,
}

/// Maximal joint law of the next `(line, star_line)` pair given the two
/// marginal rows.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingJointRow {
    entries: Vec<JointEntry>,
    decoupling_mass: f64,
}

impl CouplingJointRow {
    pub fn entries(&self) -> &[JointEntry] {
        &self.entries
    }

    /// Probability the next pair differs; equals the total-variation
    /// distance `0.5 sum_j |q_x(i,j) - q(i,j)|` by construction.
    pub fn decoupling_mass(&self) -> f64 {
        self.decoupling_mass
    }

    pub fn sample(&self, u: f64) -> (usize, usize) {
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.p;
            if u < acc {
                return (e.line, e.star_line);
            }
        }
        let last = self.entries.last().expect("joint row is non-empty");
        (last.line, last.star_line)
    }

    /// Marginal over the star coordinate (recovers `q_x(i, .)`).
    pub fn line_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for e in &self.entries {
            out[e.line] += e.p;
        }
        out
    }

    /// Marginal over the line coordinate (recovers `q(i, .)`).
    pub fn star_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for e in &self.entries {
            out[e.star_line] += e.p;
        }
        out
    }
}

fn check_prob_row(row: &[f64]) -> Result<(), CouplingError> {
    let mut sum = 0.0;
    for &p in row {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(CouplingError::ProbabilityOutOfRange { p });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(CouplingError::RowNotNormalized { sum });
    }
    Ok(())
}

/// The maximal coupling of two probability rows: diagonal mass
/// `min(q_x(i,j), q(i,j))`, off-diagonal mass
/// `(q_x(i,j) - q(i,j))^+ (q(i,k) - q_x(i,k))^+ / tv`.
pub fn coupling_joint_row(
    q_x_row: &[f64],
    q_row: &[f64],
) -> Result<CouplingJointRow, CouplingError> {
    if q_x_row.len() != q_row.len() {
        return Err(CouplingError::DimensionMismatch {
            a: q_x_row.len(),
            b: q_row.len(),
        });
    }
    check_prob_row(q_x_row)?;
    check_prob_row(q_row)?;

    let tv: f64 = 0.5
        * q_x_row
            .iter()
            .zip(q_row)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();

    let mut entries = Vec::new();
    if tv < TV_EPS {
        for (j, &p) in q_x_row.iter().enumerate() {
            if p > 0.0 {
                entries.push(JointEntry {
                    line: j,
                    star_line: j,
                    p,
                });
            }
        }
        return Ok(CouplingJointRow {
            entries,
            decoupling_mass: 0.0,
        });
    }

    for (j, (&px, &p)) in q_x_row.iter().zip(q_row).enumerate() {
        let diag = px.min(p);
        if diag > 0.0 {
            entries.push(JointEntry {
                line: j,
                star_line: j,
                p: diag,
            });
        }
    }
    for (j, (&pxj, &pj)) in q_x_row.iter().zip(q_row).enumerate() {
        let excess = (pxj - pj).max(0.0);
        if excess <= 0.0 {
            continue;
        }
        for (k, (&pxk, &pk)) in q_x_row.iter().zip(q_row).enumerate() {
            if j == k {
                continue;
            }
            let deficit = (pk - pxk).max(0.0);
            if deficit <= 0.0 {
                continue;
            }
            entries.push(JointEntry {
                line: j,
                star_line: k,
                p: excess * deficit / tv,
            });
        }
    }
    Ok(CouplingJointRow {
        entries,
        decoupling_mass: tv,
    })
}

/// The triple chain over a model and a limit matrix.
pub struct CoupledChain<'a> {
    model: &'a dyn Model,
    q: ModulationMatrix,
}

impl<'a> CoupledChain<'a> {
    pub fn new(model: &'a dyn Model, q: ModulationMatrix) -> Result<Self, CouplingError> {
        if q.dim() != model.lines().len() {
            return Err(CouplingError::DimensionMismatch {
                a: q.dim(),
                b: model.lines().len(),
            });
        }
        Ok(Self { model, q })
    }

    /// Use the model's declared limit matrix.
    pub fn from_declared(model: &'a dyn Model) -> Result<Self, CouplingError> {
        let q = model
            .declared_params()
            .map(|p| p.limit_q.clone())
            .ok_or(CouplingError::NoDeclaredLimit)?;
        Self::new(model, q)
    }

    pub fn limit_q(&self) -> &ModulationMatrix {
        &self.q
    }

    /// Analytic per-step decoupling bound at height `x`:
    /// `0.5 max_i sum_j |q_x(i,j) - q(i,j)|`.
    pub fn decoupling_bound(&self, x: u64) -> f64 {
        let n = self.model.lines().len();
        (0..n)
            .map(|i| {
                let row = self.model.row(x, i).line_marginals(n);
                0.5 * row
                    .iter()
                    .zip(self.q.row(i))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// One transition of the triple chain. The `(x, line)` marginal follows
    /// the model kernel and the `star_line` marginal follows `q`, coupled
    /// or not.
    pub fn step(&self, state: CoupledState, rng: &mut impl Rng) -> CoupledState {
        let n = self.model.lines().len();
        if state.coupled {
            let row = self.model.row(state.x, state.line);
            let q_x_row = row.line_marginals(n);
            let joint = coupling_joint_row(&q_x_row, self.q.row(state.line))
                .expect("model and limit rows are valid probability rows");
            let (next_line, next_star) = joint.sample(rng.gen::<f64>());
            // X' from the kernel conditioned on the chosen line:
            // p(x, i, y, j) / q_x(i, j).
            let mass = q_x_row[next_line];
            let target = rng.gen::<f64>() * mass;
            let mut acc = 0.0;
            let mut next_x = None;
            for e in row.entries() {
                if e.line != next_line {
                    continue;
                }
                acc += e.p;
                if target < acc {
                    next_x = Some(e.x);
                    break;
                }
                next_x = Some(e.x);
            }
            CoupledState {
                x: next_x.expect("chosen line has positive row mass"),
                line: next_line,
                star_line: next_star,
                coupled: next_line == next_star,
            }
        } else {
            let next = crate::simulate::step(self.model, State::new(state.x, state.line), rng);
            let star_row = self.q.row(state.star_line);
            let u = rng.gen::<f64>();
            let mut acc = 0.0;
            let mut next_star = star_row.len() - 1;
            for (k, &p) in star_row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next_star = k;
                    break;
                }
            }
            CoupledState {
                x: next.x,
                line: next.line,
                star_line: next_star,
                coupled: false,
            }
        }
    }

    /// Empirical probability that the coupling started at
    /// `(x0, reference, reference)` survives `n` steps, for each
    /// `n = 0..=horizon`.
    pub fn survival(
        &self,
        x0: u64,
        horizon: u64,
        trials: u64,
        seed: u64,
    ) -> Result<Vec<(u64, f64)>, CouplingError> {
        if trials == 0 {
            return Err(CouplingError::ZeroTrials);
        }
        let reference = self.model.lines().reference();
        // First decoupling step per trial (horizon + 1 when it never broke).
        let first_break: Vec<u64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_stream(seed, t);
                let mut state = CoupledState::start(x0, reference);
                for step_index in 1..=horizon {
                    state = self.step(state, &mut rng);
                    if !state.coupled {
                        return step_index;
                    }
                }
                horizon + 1
            })
            .collect();
        Ok((0..=horizon)
            .map(|n| {
                let alive = first_break.iter().filter(|&&t| t > n).count();
                (n, alive as f64 / trials as f64)
            })
            .collect())
    }
}

/// Survival table using the model's declared limit matrix.
pub fn coupling_survival(
    model: &dyn Model,
    x0: u64,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<Vec<(u64, f64)>, CouplingError> {
    CoupledChain::from_declared(model)?.survival(x0, horizon, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        correlated_walk_model, homogeneous_strip_model, IncrementTable, LineSet, TransitionEntry,
    };
    use rand::{Rng as _, SeedableRng};

    #[test]
    fn joint_row_worked_example() {
        let j = coupling_joint_row(&[0.6, 0.4], &[0.5, 0.5]).unwrap();
        let get = |line, star| {
            j.entries()
                .iter()
                .find(|e| e.line == line && e.star_line == star)
                .map(|e| e.p)
                .unwrap_or(0.0)
        };
        assert!((get(0, 0) - 0.5).abs() < 1e-15);
        assert!((get(1, 1) - 0.4).abs() < 1e-15);
        assert!((get(0, 1) - 0.1).abs() < 1e-15);
        assert_eq!(get(1, 0), 0.0);
        assert!((j.decoupling_mass() - 0.1).abs() < 1e-15);
        // Marginals reproduce the two rows.
        let lm = j.line_marginal(2);
        assert!((lm[0] - 0.6).abs() < 1e-15 && (lm[1] - 0.4).abs() < 1e-15);
        let sm = j.star_marginal(2);
        assert!((sm[0] - 0.5).abs() < 1e-15 && (sm[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_give_diagonal_coupling() {
        let j = coupling_joint_row(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(j.decoupling_mass(), 0.0);
        assert!(j.entries().iter().all(|e| e.line == e.star_line));
        let total: f64 = j.entries().iter().map(|e| e.p).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joint_row_rejects_bad_rows() {
        assert!(matches!(
            coupling_joint_row(&[0.6, 0.3], &[0.5, 0.5]),
            Err(CouplingError::RowNotNormalized { .. })
        ));
        assert!(matches!(
            coupling_joint_row(&[0.5, 0.5], &[1.0]),
            Err(CouplingError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            coupling_joint_row(&[-0.1, 1.1], &[0.5, 0.5]),
            Err(CouplingError::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn fuzzed_marginals_and_tv_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..500 {
            let n = rng.gen_range(2..=10);
            let mut make_row = || {
                let mut row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                row
            };
            let qx = make_row();
            let q = make_row();
            let j = coupling_joint_row(&qx, &q).unwrap();
            let lm = j.line_marginal(n);
            let sm = j.star_marginal(n);
            for i in 0..n {
                assert!((lm[i] - qx[i]).abs() < 1e-12, "trial {trial}");
                assert!((sm[i] - q[i]).abs() < 1e-12, "trial {trial}");
            }
            let tv: f64 =
                0.5 * qx.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
            assert_eq!(j.decoupling_mass(), tv);
            let off: f64 = j
                .entries()
                .iter()
                .filter(|e| e.line != e.star_line)
                .map(|e| e.p)
                .sum();
            assert!((off - tv).abs() < 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn walk_per_step_decoupling_probability() {
        // 0.5 sum_j |q_x(i,j) - 1/2| at x = 10, c = 0.5 is 0.025 per line.
        let walk = correlated_walk_model(0.5, None);
        let chain = CoupledChain::from_declared(&walk).unwrap();
        assert!((chain.decoupling_bound(10) - 0.025).abs() < 1e-15);
        let row = walk.row(10, 0).line_marginals(2);
        let j = coupling_joint_row(&row, chain.limit_q().row(0)).unwrap();
        assert!((j.decoupling_mass() - 0.025).abs() < 1e-15);
    }

    fn flat_two_line_model() -> crate::model::HomogeneousStripModel {
        // q_x = q for every x >= 1.
        let lines = LineSet::numbered(2).unwrap();
        let mut entries = Vec::new();
        for z in [-1i64, 1] {
            for from in 0..2 {
                for to in 0..2 {
                    entries.push((z, from, to, 0.25));
                }
            }
        }
        let table = IncrementTable::new(2, 1, entries).unwrap();
        let mut boundary = Vec::new();
        for line in 0..2 {
            boundary.push(((0, line), vec![TransitionEntry { x: 1, line, p: 1.0 }]));
        }
        homogeneous_strip_model(lines, table, boundary).unwrap()
    }

    #[test]
    fn matched_rows_never_decouple() {
        let m = flat_two_line_model();
        let chain = CoupledChain::from_declared(&m).unwrap();
        let table = chain.survival(50, 20, 500, 3).unwrap();
        for &(_, s) in &table {
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn survival_is_monotone_and_improves_with_height() {
        let walk = correlated_walk_model(0.5, None);
        let chain = CoupledChain::from_declared(&walk).unwrap();
        let mut at_fixed_n = Vec::new();
        for &x0 in &[10u64, 100, 1000] {
            let table = chain.survival(x0, 30, 3000, 9).unwrap();
            for w in table.windows(2) {
                assert!(w[1].1 <= w[0].1);
            }
            at_fixed_n.push(table[30].1);
        }
        assert!(
            at_fixed_n[0] < at_fixed_n[1] && at_fixed_n[1] < at_fixed_n[2],
            "survival at n=30: {at_fixed_n:?}"
        );
    }

    #[test]
    fn log_horizon_survival_beats_union_bound() {
        // Over a horizon of A log(x0) steps the walk stays above x0/2, so
        // survival is at least 1 - horizon * bound(x0/2) up to sampling
        // noise.
        let walk = correlated_walk_model(0.5, None);
        let chain = CoupledChain::from_declared(&walk).unwrap();
        let x0 = 10_000u64;
        let horizon = (2.0 * (x0 as f64).ln()).ceil() as u64;
        let bound = chain.decoupling_bound(x0 / 2);
        assert!((bound - 0.5 / x0 as f64).abs() < 1e-12);
        let trials = 10_000u64;
        let table = chain.survival(x0, horizon, trials, 15).unwrap();
        let at_horizon = table[horizon as usize].1;
        let floor = 1.0 - horizon as f64 * bound;
        assert!(
            at_horizon >= floor - 0.002,
            "survival {at_horizon} under union bound {floor}"
        );
    }

    #[test]
    fn decoupled_star_line_follows_limit_matrix() {
        // After a forced break the star coordinate is a plain q-chain.
        let walk = correlated_walk_model(0.5, None);
        let chain = CoupledChain::from_declared(&walk).unwrap();
        let mut rng = trial_stream(77, 0);
        let mut state = CoupledState::new(1000, 0, 1, false).unwrap();
        let steps = 100_000u64;
        let mut star_zero = 0u64;
        for _ in 0..steps {
            state = chain.step(state, &mut rng);
            assert!(!state.coupled);
            star_zero += u64::from(state.star_line == 0);
        }
        // q is uniform: frequency of line 0 within 4 SE of 1/2.
        let freq = star_zero as f64 / steps as f64;
        let se = 0.5 / (steps as f64).sqrt();
        assert!((freq - 0.5).abs() < 4.0 * se, "freq {freq}");
    }

    #[test]
    fn coupled_state_invariant_enforced() {
        assert!(CoupledState::new(3, 0, 1, true).is_err());
        assert!(CoupledState::new(3, 0, 1, false).is_ok());
    }
}
