//! Limit matrix extraction, irreducibility/aperiodicity checks, and the
//! stationary distribution of the limit line chain.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::extrapolate::{extrapolate, top_half_spread};
use crate::model::{q_at, Model, ModulationMatrix};

/// Entries of `q` below this are treated as structural zeros for the
/// irreducibility / periodicity graph.
const EDGE_EPS: f64 = 1e-15;

/// Residual threshold for the fixed-vector check.
const RESIDUAL_TOL: f64 = 1e-10;

/// Extrapolation spread beyond which the limit is declared non-convergent.
const SPREAD_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("height grid needs at least 2 increasing positive entries")]
    BadGrid,
    #[error("q_x does not converge on the grid (spread {spread:.3e} > {SPREAD_TOL:.0e})")]
    NonConvergent { spread: f64 },
    #[error("limit matrix is not irreducible")]
    NotIrreducible,
    #[error("stationary solve failed: rank deficiency beyond the one-dimensional null space")]
    SingularSystem,
}

/// A probability vector on the line set with `pi q = pi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StationaryDistribution {
    pi: Vec<f64>,
}

impl StationaryDistribution {
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn get(&self, line: usize) -> f64 {
        self.pi[line]
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `sum_i weights[i] * pi[i]`.
    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.pi.iter().zip(weights).map(|(p, w)| p * w).sum()
    }
}

/// How a limit matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LimitSource {
    /// Taken from the model's declared parameters.
    Declared,
    /// Entrywise power-law extrapolation over the grid.
    Extrapolated,
    /// Last grid value (no usable power-law fit; see the spread).
    LastValue,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitMatrix {
    pub q: ModulationMatrix,
    /// Achieved entrywise spread: max fit residual over the top half of the
    /// grid (0 for declared limits).
    pub spread: f64,
    pub source: LimitSource,
}

fn check_grid(grid: &[u64]) -> Result<(), StationaryError> {
    if grid.len() < 2 || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StationaryError::BadGrid);
    }
    Ok(())
}

/// Limit of `q_x` as `x` grows: declared when the model knows it, otherwise
/// extrapolated from `q_at` over the grid.
pub fn limit_matrix(model: &dyn Model, grid: &[u64]) -> Result<LimitMatrix, StationaryError> {
    check_grid(grid)?;
    if let Some(params) = model.declared_params() {
        return Ok(LimitMatrix {
            q: params.limit_q.clone(),
            spread: 0.0,
            source: LimitSource::Declared,
        });
    }
    limit_matrix_numeric(model, grid)
}

/// Entrywise extrapolation of `q_at` over the grid, ignoring any declared
/// parameters.
pub fn limit_matrix_numeric(
    model: &dyn Model,
    grid: &[u64],
) -> Result<LimitMatrix, StationaryError> {
    check_grid(grid)?;
    let n = model.lines().len();
    let samples: Vec<ModulationMatrix> = grid.iter().map(|&x| q_at(model, x)).collect();

    let mut rows = vec![vec![0.0; n]; n];
    let mut spread = 0.0_f64;
    let mut any_fallback = false;
    for i in 0..n {
        for j in 0..n {
            let series: Vec<f64> = samples.iter().map(|m| m.get(i, j)).collect();
            if top_half_spread(&series) == 0.0 {
                rows[i][j] = series[series.len() - 1];
                continue;
            }
            let fit = extrapolate(grid, &series);
            rows[i][j] = fit.limit.clamp(0.0, 1.0);
            spread = spread.max(fit.residual);
            any_fallback |= fit.fallback;
        }
    }
    for row in &mut rows {
        let sum: f64 = row.iter().sum();
        spread = spread.max((sum - 1.0).abs());
        if sum > 0.0 {
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
    if spread > SPREAD_TOL {
        return Err(StationaryError::NonConvergent { spread });
    }
    let q = ModulationMatrix::new(rows).map_err(|_| StationaryError::NonConvergent { spread })?;
    Ok(LimitMatrix {
        q,
        spread,
        source: if any_fallback {
            LimitSource::LastValue
        } else {
            LimitSource::Extrapolated
        },
    })
}

fn adjacency(q: &ModulationMatrix) -> Vec<Vec<usize>> {
    let n = q.dim();
    (0..n)
        .map(|i| (0..n).filter(|&j| q.get(i, j) > EDGE_EPS).collect())
        .collect()
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Strong connectivity of the `q(i, j) > 0` digraph.
pub fn is_irreducible(q: &ModulationMatrix) -> bool {
    let adj = adjacency(q);
    let n = adj.len();
    let mut radj = vec![Vec::new(); n];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            radj[v].push(u);
        }
    }
    reachable(&adj, 0).iter().all(|&b| b) && reachable(&radj, 0).iter().all(|&b| b)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of the strongly connected component containing `start`,
/// restricted to nodes of that component. Returns 0 if the component
/// contains no cycle (a transient singleton).
fn component_period(adj: &[Vec<usize>], in_comp: &[bool], start: usize) -> u64 {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[start] = 0;
    queue.push_back(start);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if in_comp[v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0u64;
    for u in 0..n {
        if !in_comp[u] || dist[u] == usize::MAX {
            continue;
        }
        for &v in &adj[u] {
            if in_comp[v] && dist[v] != usize::MAX {
                let diff = dist[u] as i64 + 1 - dist[v] as i64;
                g = gcd(g, diff.unsigned_abs());
            }
        }
    }
    g
}

/// Aperiodicity: every cyclic strongly connected component of the
/// `q(i, j) > 0` digraph has cycle-length gcd 1.
pub fn is_aperiodic(q: &ModulationMatrix) -> bool {
    let adj = adjacency(q);
    let n = adj.len();
    let mut assigned = vec![false; n];
    for start in 0..n {
        if assigned[start] {
            continue;
        }
        let fwd = reachable(&adj, start);
        let mut radj = vec![Vec::new(); n];
        for (u, outs) in adj.iter().enumerate() {
            for &v in outs {
                radj[v].push(u);
            }
        }
        let bwd = reachable(&radj, start);
        let in_comp: Vec<bool> = (0..n).map(|i| fwd[i] && bwd[i]).collect();
        for (i, &inc) in in_comp.iter().enumerate() {
            if inc {
                assigned[i] = true;
            }
        }
        let period = component_period(&adj, &in_comp, start);
        if period > 1 {
            return false;
        }
    }
    true
}

/// The unique probability left-fixed-vector of an irreducible `q`, via a
/// dense solve of `(q^T - I)` with the normalization row substituted in.
pub fn stationary_distribution(
    q: &ModulationMatrix,
) -> Result<StationaryDistribution, StationaryError> {
    if !is_irreducible(q) {
        return Err(StationaryError::NotIrreducible);
    }
    let n = q.dim();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = q.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    // The rows of q^T - I sum to zero, so dropping one keeps the row space;
    // the normalization row restores full rank.
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let solution = m.lu().solve(&b).ok_or(StationaryError::SingularSystem)?;

    let mut pi: Vec<f64> = solution.iter().cloned().collect();
    let sum: f64 = pi.iter().sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(StationaryError::SingularSystem);
    }
    for p in &mut pi {
        *p /= sum;
    }
    if pi.iter().any(|&p| p <= 0.0) {
        return Err(StationaryError::SingularSystem);
    }
    // pi q = pi residual.
    for j in 0..n {
        let balance: f64 = (0..n).map(|i| pi[i] * q.get(i, j)).sum();
        if (balance - pi[j]).abs() > RESIDUAL_TOL {
            return Err(StationaryError::SingularSystem);
        }
    }
    Ok(StationaryDistribution { pi })
}
