//! State space, transition-kernel abstraction, and drift parameter records
//! for Markov chains on the half-strip `Z+ x S`.
//!
//! A chain lives on pairs `(x, line)` with `x` a non-negative integer and
//! `line` an index into a finite [`LineSet`]. A model is anything that can
//! produce a valid [`TransitionRow`] for every state; the built-in families
//! live in [`builtin`].

mod builtin;

pub use builtin::{
    correlated_walk_model, homogeneous_strip_model, modulated_queue_model, tabular_model,
    CorrectionFn, CorrelatedWalkModel, HomogeneousStripModel, IncrementTable, ModulatedQueueModel,
    TabularModel,
};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Absolute tolerance for probability-row normalization checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line set must be non-empty")]
    EmptyLineSet,
    #[error("duplicate line label {0:?}")]
    DuplicateLabel(String),
    #[error("reference line index {index} out of range for {len} lines")]
    BadReferenceLine { index: usize, len: usize },
    #[error("row probabilities sum to {sum}, expected 1 within {ROW_SUM_TOL}")]
    RowNotNormalized { sum: f64 },
    #[error("probability {p} outside [0, 1]")]
    ProbabilityOutOfRange { p: f64 },
    #[error("duplicate transition target (x = {x}, line = {line})")]
    DuplicateTarget { x: u64, line: usize },
    #[error("empty transition row")]
    EmptyRow,
    #[error("matrix must be square over the line set, got {rows} rows of width {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix row {row} sums to {sum}, expected 1 within {ROW_SUM_TOL}")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("drift constant c[{line}] = {c} must be < 1/2")]
    DriftTooLarge { line: usize, c: f64 },
    #[error("increment z = {z} below the lower bound -x0 = {bound}")]
    SupportBelowBound { z: i64, bound: i64 },
    #[error("increment table row for line {line} sums to {sum}, expected 1")]
    IncrementsNotNormalized { line: usize, sum: f64 },
    #[error("missing boundary row for state (x = {x}, line = {line})")]
    MissingBoundaryRow { x: u64, line: usize },
    #[error("line index {line} out of range for {len} lines")]
    BadLineIndex { line: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Lamperti drift parameters need at least one s2 entry > 0")]
    AllVariancesZero,
}

/// The finite label set S with a distinguished reference line used to cut
/// excursions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSet {
    labels: Vec<String>,
    reference: usize,
}

impl LineSet {
    pub fn new(labels: Vec<String>, reference: usize) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyLineSet);
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.clone()) {
                return Err(ModelError::DuplicateLabel(label.clone()));
            }
        }
        if reference >= labels.len() {
            return Err(ModelError::BadReferenceLine {
                index: reference,
                len: labels.len(),
            });
        }
        Ok(Self { labels, reference })
    }

    /// Line set `0..n` with line 0 as reference.
    pub fn numbered(n: usize) -> Result<Self, ModelError> {
        Self::new((0..n).map(|i| i.to_string()).collect(), 0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of the distinguished line "0".
    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn label(&self, line: usize) -> &str {
        &self.labels[line]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A point of the half-strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub x: u64,
    pub line: usize,
}

impl State {
    pub fn new(x: u64, line: usize) -> Self {
        Self { x, line }
    }
}

/// One target of a transition row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub x: u64,
    pub line: usize,
    pub p: f64,
}

/// The one-step law from a fixed state: finitely many targets, probabilities
/// summing to 1 within [`ROW_SUM_TOL`]. Entries are kept sorted by
/// `(x, line)` so that inverse-CDF sampling is reproducible regardless of
/// construction order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    entries: Vec<TransitionEntry>,
}

impl TransitionRow {
    pub fn new(mut entries: Vec<TransitionEntry>) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptyRow);
        }
        entries.sort_by_key(|e| (e.x, e.line));
        let mut sum = 0.0;
        for pair in entries.windows(2) {
            if pair[0].x == pair[1].x && pair[0].line == pair[1].line {
                return Err(ModelError::DuplicateTarget {
                    x: pair[0].x,
                    line: pair[0].line,
                });
            }
        }
        for e in &entries {
            if !(0.0..=1.0).contains(&e.p) || !e.p.is_finite() {
                return Err(ModelError::ProbabilityOutOfRange { p: e.p });
            }
            sum += e.p;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ModelError::RowNotNormalized { sum });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TransitionEntry] {
        &self.entries
    }

    /// Total probability mass (1 within tolerance; exposed for diagnostics).
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.p).sum()
    }

    /// Inverse-CDF sample given a uniform draw in `[0, 1)`.
    pub fn sample(&self, u: f64) -> State {
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.p;
            if u < acc {
                return State::new(e.x, e.line);
            }
        }
        // Guard against accumulated rounding at u ~ 1.
        let last = self.entries.last().expect("row is non-empty");
        State::new(last.x, last.line)
    }

    /// Exact k-th displacement moment `sum (y - x)^k p` of the row viewed
    /// from origin `x`.
    pub fn displacement_moment(&self, from_x: u64, k: u32) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let dz = e.x as i64 - from_x as i64;
                (dz as f64).powi(k as i32) * e.p
            })
            .sum()
    }

    /// Marginal over target lines: `q_x(i, j) = sum_y p(x, i, y, j)` for this
    /// row's fixed `(x, i)`.
    pub fn line_marginals(&self, n_lines: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_lines];
        for e in &self.entries {
            out[e.line] += e.p;
        }
        out
    }
}

/// A row-stochastic `|S| x |S|` matrix; used both for `q_x` at a fixed
/// height and for the limit matrix `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ModulationMatrix {
    rows: Vec<Vec<f64>>,
}

impl ModulationMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = rows.len();
        if n == 0 {
            return Err(ModelError::EmptyLineSet);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return Err(ModelError::ProbabilityOutOfRange { p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::RowNotStochastic { row: i, sum });
            }
        }
        Ok(Self { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Entrywise `(a + b) / 2`.
    pub fn average(a: &Self, b: &Self) -> Result<Self, ModelError> {
        if a.dim() != b.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: a.dim(),
                got: b.dim(),
            });
        }
        let rows = a
            .rows
            .iter()
            .zip(&b.rows)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| 0.5 * (x + y)).collect())
            .collect();
        Self::new(rows)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for ModulationMatrix {
    type Error = ModelError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        Self::new(rows)
    }
}

impl From<ModulationMatrix> for Vec<Vec<f64>> {
    fn from(m: ModulationMatrix) -> Self {
        m.rows
    }
}

/// Which asymptotic drift regime a parameter record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftMode {
    /// Per-line drift tends to a constant `d_i`.
    ConstantDrift,
    /// Per-line drift decays as `c_i / x` with second moment tending to
    /// `s_i^2`.
    Lamperti,
}

/// Per-line drift constants plus the limit matrix: everything the
/// classification and weak-limit formulas consume.
///
/// `sharp` asserts that the convergence rates behind the boundary case hold
/// (a power-law rate for both the line marginals and the moment errors). It
/// is a caller assertion, never inferred numerically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftParams {
    pub mode: DriftMode,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub s2: Vec<f64>,
    pub limit_q: ModulationMatrix,
    pub sharp: bool,
}

impl DriftParams {
    pub fn constant(
        d: Vec<f64>,
        limit_q: ModulationMatrix,
        sharp: bool,
    ) -> Result<Self, ModelError> {
        let n = limit_q.dim();
        if d.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: d.len(),
            });
        }
        Ok(Self {
            mode: DriftMode::ConstantDrift,
            d,
            c: vec![0.0; n],
            s2: vec![0.0; n],
            limit_q,
            sharp,
        })
    }

    pub fn lamperti(
        c: Vec<f64>,
        s2: Vec<f64>,
        limit_q: ModulationMatrix,
        sharp: bool,
    ) -> Result<Self, ModelError> {
        let n = limit_q.dim();
        if c.len() != n || s2.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: c.len().max(s2.len()),
            });
        }
        if !s2.iter().any(|&v| v > 0.0) {
            return Err(ModelError::AllVariancesZero);
        }
        Ok(Self {
            mode: DriftMode::Lamperti,
            d: vec![0.0; n],
            c,
            s2,
            limit_q,
            sharp,
        })
    }

    pub fn dim(&self) -> usize {
        self.limit_q.dim()
    }
}

/// A transition kernel on the half-strip. Implementations are immutable and
/// safe to share across workers; `row` is pure.
pub trait Model: Send + Sync {
    fn lines(&self) -> &LineSet;

    /// The one-step law from `(x, line)`.
    fn row(&self, x: u64, line: usize) -> TransitionRow;

    /// Analytic drift parameters, for models that know them.
    fn declared_params(&self) -> Option<&DriftParams> {
        None
    }

    /// Whether probability clamping is active at height `x` (only the
    /// correlated walk at `x < |c|` sets this).
    fn clamps_at(&self, _x: u64) -> bool {
        false
    }

    /// Short human-readable identifier embedded in reports.
    fn describe(&self) -> String {
        "model".to_string()
    }
}

/// Line-transition marginals at height `x`: `q_x(i, j) = sum_y p(x, i, y, j)`.
pub fn q_at(model: &dyn Model, x: u64) -> ModulationMatrix {
    let n = model.lines().len();
    let rows = (0..n)
        .map(|i| model.row(x, i).line_marginals(n))
        .collect();
    ModulationMatrix::new(rows).expect("model rows are normalized")
}

/// On-demand communication check for user-supplied kernels: every state
/// with height at most `x_cap` that is reachable from `(0, reference)`
/// (through states under the cap) can also reach `(0, reference)` back.
/// Built-in families are communicating by construction.
pub fn check_communicating(model: &dyn Model, x_cap: u64) -> bool {
    let origin = State::new(0, model.lines().reference());
    let forward = reach_under_cap(model, origin, x_cap, false);
    let backward = reach_under_cap(model, origin, x_cap, true);
    forward.iter().all(|s| backward.contains(s))
}

fn reach_under_cap(
    model: &dyn Model,
    origin: State,
    x_cap: u64,
    reversed: bool,
) -> HashSet<State> {
    // Forward: BFS along transitions. Reversed: BFS along incoming edges,
    // found by scanning all rows under the cap once.
    let mut seen = HashSet::new();
    let mut queue = vec![origin];
    seen.insert(origin);
    if !reversed {
        while let Some(s) = queue.pop() {
            for e in model.row(s.x, s.line).entries() {
                let next = State::new(e.x, e.line);
                if e.p > 0.0 && next.x <= x_cap && seen.insert(next) {
                    queue.push(next);
                }
            }
        }
        return seen;
    }
    let mut incoming: std::collections::HashMap<State, Vec<State>> =
        std::collections::HashMap::new();
    for x in 0..=x_cap {
        for line in 0..model.lines().len() {
            let from = State::new(x, line);
            for e in model.row(x, line).entries() {
                if e.p > 0.0 && e.x <= x_cap {
                    incoming.entry(State::new(e.x, e.line)).or_default().push(from);
                }
            }
        }
    }
    while let Some(s) = queue.pop() {
        if let Some(sources) = incoming.get(&s) {
            for &src in sources {
                if seen.insert(src) {
                    queue.push(src);
                }
            }
        }
    }
    seen
}
