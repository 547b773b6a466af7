//! The built-in kernel families: the modulated queue, the correlated walk
//! on `Z+ x {+1, -1}`, eventually-homogeneous kernels, and user tables.

use std::collections::HashMap;
use std::sync::Arc;

use super::{
    DriftParams, LineSet, Model, ModelError, ModulationMatrix, TransitionEntry, TransitionRow,
    ROW_SUM_TOL,
};

/// Optional per-height correction added to a line-transition probability:
/// `(x, from, to) -> delta`.
pub type CorrectionFn = Arc<dyn Fn(u64, usize, usize) -> f64 + Send + Sync>;

/// Single-server queue at critical load whose service rate is perturbed by
/// `c_i / x` and whose internal state moves by matrix `a` on arrivals and
/// `b` on departures.
///
/// From `(x, i)` with `x >= 1` the chain moves to `(x+1, j)` with
/// probability `a_ij / (2 (1 - c_i/x))` and to `(x-1, j)` with probability
/// `b_ij (1 - 2 c_i/x) / (2 (1 - c_i/x))`; from `(0, i)` it moves to
/// `(1, j)` with probability `a_ij`.
pub struct ModulatedQueueModel {
    lines: LineSet,
    a: ModulationMatrix,
    b: ModulationMatrix,
    c: Vec<f64>,
    params: DriftParams,
}

impl ModulatedQueueModel {
    /// Requires `c_i < 1/2` per line (the up-step factor stays a
    /// probability for every `x >= 1`; arbitrarily negative `c_i` keeps all
    /// rows valid and is accepted).
    pub fn new(
        lines: LineSet,
        a: ModulationMatrix,
        b: ModulationMatrix,
        c: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = lines.len();
        for (name, m) in [("a", &a), ("b", &b)] {
            if m.dim() != n {
                let _ = name;
                return Err(ModelError::DimensionMismatch {
                    expected: n,
                    got: m.dim(),
                });
            }
        }
        if c.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: c.len(),
            });
        }
        for (i, &ci) in c.iter().enumerate() {
            if !ci.is_finite() || ci >= 0.5 {
                return Err(ModelError::DriftTooLarge { line: i, c: ci });
            }
        }
        let limit_q = ModulationMatrix::average(&a, &b)?;
        let params = DriftParams::lamperti(c.clone(), vec![1.0; n], limit_q, true)?;
        Ok(Self {
            lines,
            a,
            b,
            c,
            params,
        })
    }

    pub fn arrival_matrix(&self) -> &ModulationMatrix {
        &self.a
    }

    pub fn departure_matrix(&self) -> &ModulationMatrix {
        &self.b
    }

    pub fn drift_constants(&self) -> &[f64] {
        &self.c
    }
}

impl Model for ModulatedQueueModel {
    fn lines(&self) -> &LineSet {
        &self.lines
    }

    fn row(&self, x: u64, line: usize) -> TransitionRow {
        let n = self.lines.len();
        let mut entries = Vec::with_capacity(2 * n);
        if x == 0 {
            for j in 0..n {
                let p = self.a.get(line, j);
                if p > 0.0 {
                    entries.push(TransitionEntry { x: 1, line: j, p });
                }
            }
        } else {
            let xf = x as f64;
            let ci = self.c[line];
            let denom = 2.0 * (1.0 - ci / xf);
            let up = 1.0 / denom;
            let down = (1.0 - 2.0 * ci / xf) / denom;
            for j in 0..n {
                let pa = self.a.get(line, j) * up;
                if pa > 0.0 {
                    entries.push(TransitionEntry {
                        x: x + 1,
                        line: j,
                        p: pa,
                    });
                }
                let pb = self.b.get(line, j) * down;
                if pb > 0.0 {
                    entries.push(TransitionEntry {
                        x: x - 1,
                        line: j,
                        p: pb,
                    });
                }
            }
        }
        TransitionRow::new(entries).expect("queue rows are normalized by construction")
    }

    fn declared_params(&self) -> Option<&DriftParams> {
        Some(&self.params)
    }

    fn describe(&self) -> String {
        format!("modulated_queue(|S|={})", self.lines.len())
    }
}

/// See [`ModulatedQueueModel::new`].
pub fn modulated_queue_model(
    a: ModulationMatrix,
    b: ModulationMatrix,
    c: Vec<f64>,
) -> Result<ModulatedQueueModel, ModelError> {
    let lines = LineSet::numbered(a.dim())?;
    ModulatedQueueModel::new(lines, a, b, c)
}

/// Correlated (persistent) walk on `Z+ x {+1, -1}`: the line is the last
/// step direction, and persistence decays like `c / (2x)`.
///
/// Nonzero transitions for `x >= 1` are `(x, i) -> (x + j, j)` with
/// probability `1/2 + i c / (2x)` for `j = i` and the complement for
/// `j = -i`; at `x = 0` the walk steps to `(1, +1)` or `(1, -1)` with
/// probability `1/2` each. Lines are ordered `+1, -1` and the reference
/// line is `+1`.
pub struct CorrelatedWalkModel {
    lines: LineSet,
    c: f64,
    correction: Option<CorrectionFn>,
    params: DriftParams,
}

impl CorrelatedWalkModel {
    pub fn new(c: f64) -> Self {
        let lines = LineSet::new(vec!["+1".to_string(), "-1".to_string()], 0)
            .expect("fixed two-line set is valid");
        let limit_q = ModulationMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .expect("constant half matrix is stochastic");
        let params = DriftParams::lamperti(vec![c, c], vec![1.0, 1.0], limit_q, true)
            .expect("walk parameters are valid");
        Self {
            lines,
            c,
            correction: None,
            params,
        }
    }

    /// Attach a per-height correction to the line-transition probabilities.
    /// The corrected row is clamped to `[0, 1]` and renormalized.
    pub fn with_correction(mut self, correction: CorrectionFn) -> Self {
        self.correction = Some(correction);
        self
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn line_value(line: usize) -> f64 {
        if line == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Raw (unclamped) `q_x(i, .)` for `x >= 1`, ordered `[same, flip]`.
    fn raw_q(&self, x: u64, line: usize) -> [f64; 2] {
        let iv = Self::line_value(line);
        let base = iv * self.c / (2.0 * x as f64);
        let other = 1 - line;
        let mut same = 0.5 + base;
        let mut flip = 0.5 - base;
        if let Some(corr) = &self.correction {
            same += corr(x, line, line);
            flip += corr(x, line, other);
        }
        [same, flip]
    }
}

impl Model for CorrelatedWalkModel {
    fn lines(&self) -> &LineSet {
        &self.lines
    }

    fn row(&self, x: u64, line: usize) -> TransitionRow {
        if x == 0 {
            return TransitionRow::new(vec![
                TransitionEntry { x: 1, line: 0, p: 0.5 },
                TransitionEntry { x: 1, line: 1, p: 0.5 },
            ])
            .expect("boundary row is valid");
        }
        let [same, flip] = self.raw_q(x, line);
        let same = same.clamp(0.0, 1.0);
        let flip = flip.clamp(0.0, 1.0);
        let total = same + flip;
        let (same, flip) = (same / total, flip / total);
        let other = 1 - line;
        // Target height x + j where j is the value of the target line.
        let entry = |to: usize, p: f64| TransitionEntry {
            x: (x as i64 + Self::line_value(to) as i64) as u64,
            line: to,
            p,
        };
        TransitionRow::new(vec![entry(line, same), entry(other, flip)])
            .expect("walk rows are normalized by construction")
    }

    fn declared_params(&self) -> Option<&DriftParams> {
        Some(&self.params)
    }

    fn clamps_at(&self, x: u64) -> bool {
        if x == 0 {
            return false;
        }
        (0..2).any(|i| {
            let [same, flip] = self.raw_q(x, i);
            !(0.0..=1.0).contains(&same) || !(0.0..=1.0).contains(&flip)
        })
    }

    fn describe(&self) -> String {
        format!("correlated_walk(c={})", self.c)
    }
}

/// See [`CorrelatedWalkModel::new`].
pub fn correlated_walk_model(c: f64, correction: Option<CorrectionFn>) -> CorrelatedWalkModel {
    let model = CorrelatedWalkModel::new(c);
    match correction {
        Some(f) => model.with_correction(f),
        None => model,
    }
}

/// Increment law `r(z, i, j)` for the homogeneous regime `x >= x0`, with
/// increments bounded below by `-x0`.
#[derive(Debug, Clone)]
pub struct IncrementTable {
    n_lines: usize,
    x0: u64,
    /// (z, from, to, p) with unique (z, from, to) keys.
    entries: Vec<(i64, usize, usize, f64)>,
}

impl IncrementTable {
    pub fn new(
        n_lines: usize,
        x0: u64,
        entries: Vec<(i64, usize, usize, f64)>,
    ) -> Result<Self, ModelError> {
        if n_lines == 0 {
            return Err(ModelError::EmptyLineSet);
        }
        let mut sums = vec![0.0; n_lines];
        for &(z, from, to, p) in &entries {
            if from >= n_lines || to >= n_lines {
                return Err(ModelError::BadLineIndex {
                    line: from.max(to),
                    len: n_lines,
                });
            }
            if z < -(x0 as i64) {
                return Err(ModelError::SupportBelowBound {
                    z,
                    bound: -(x0 as i64),
                });
            }
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(ModelError::ProbabilityOutOfRange { p });
            }
            sums[from] += p;
        }
        for (i, &sum) in sums.iter().enumerate() {
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::IncrementsNotNormalized { line: i, sum });
            }
        }
        Ok(Self {
            n_lines,
            x0,
            entries,
        })
    }

    pub fn x0(&self) -> u64 {
        self.x0
    }

    /// `q(i, j) = sum_z r(z, i, j)`.
    fn limit_q(&self) -> ModulationMatrix {
        let mut rows = vec![vec![0.0; self.n_lines]; self.n_lines];
        for &(_, from, to, p) in &self.entries {
            rows[from][to] += p;
        }
        ModulationMatrix::new(rows).expect("normalized increment table")
    }

    /// Exact k-th displacement moment per line.
    fn moment(&self, k: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.n_lines];
        for &(z, from, _, p) in &self.entries {
            out[from] += (z as f64).powi(k as i32) * p;
        }
        out
    }
}

/// Kernel equal to increment shifts `p(x, i, y, j) = r(y - x, i, j)` for
/// `x >= x0`, with explicit boundary rows below.
pub struct HomogeneousStripModel {
    lines: LineSet,
    table: IncrementTable,
    boundary: HashMap<(u64, usize), TransitionRow>,
    params: DriftParams,
}

impl HomogeneousStripModel {
    pub fn new(
        lines: LineSet,
        table: IncrementTable,
        boundary: HashMap<(u64, usize), TransitionRow>,
    ) -> Result<Self, ModelError> {
        if table.n_lines != lines.len() {
            return Err(ModelError::DimensionMismatch {
                expected: lines.len(),
                got: table.n_lines,
            });
        }
        for x in 0..table.x0 {
            for line in 0..lines.len() {
                if !boundary.contains_key(&(x, line)) {
                    return Err(ModelError::MissingBoundaryRow { x, line });
                }
            }
        }
        let limit_q = table.limit_q();
        let params = DriftParams::constant(table.moment(1), limit_q, true)?;
        Ok(Self {
            lines,
            table,
            boundary,
            params,
        })
    }

    /// Exact second displacement moments per line (constant for `x >= x0`).
    pub fn second_moments(&self) -> Vec<f64> {
        self.table.moment(2)
    }

    pub fn x0(&self) -> u64 {
        self.table.x0
    }
}

impl Model for HomogeneousStripModel {
    fn lines(&self) -> &LineSet {
        &self.lines
    }

    fn row(&self, x: u64, line: usize) -> TransitionRow {
        if x < self.table.x0 {
            return self.boundary[&(x, line)].clone();
        }
        let entries = self
            .table
            .entries
            .iter()
            .filter(|&&(_, from, _, _)| from == line)
            .map(|&(z, _, to, p)| TransitionEntry {
                x: (x as i64 + z) as u64,
                line: to,
                p,
            })
            .collect();
        TransitionRow::new(entries).expect("increment rows are normalized by construction")
    }

    fn declared_params(&self) -> Option<&DriftParams> {
        Some(&self.params)
    }

    fn describe(&self) -> String {
        format!("homogeneous_strip(x0={})", self.table.x0)
    }
}

/// See [`HomogeneousStripModel::new`]. Boundary rows are raw entry lists and
/// are validated here.
pub fn homogeneous_strip_model(
    lines: LineSet,
    table: IncrementTable,
    boundary: Vec<((u64, usize), Vec<TransitionEntry>)>,
) -> Result<HomogeneousStripModel, ModelError> {
    let mut rows = HashMap::new();
    for ((x, line), entries) in boundary {
        rows.insert((x, line), TransitionRow::new(entries)?);
    }
    HomogeneousStripModel::new(lines, table, rows)
}

/// Kernel that consults an explicit row table first and falls back to an
/// eventually-homogeneous tail.
pub struct TabularModel {
    overrides: HashMap<(u64, usize), TransitionRow>,
    tail: HomogeneousStripModel,
}

impl Model for TabularModel {
    fn lines(&self) -> &LineSet {
        self.tail.lines()
    }

    fn row(&self, x: u64, line: usize) -> TransitionRow {
        match self.overrides.get(&(x, line)) {
            Some(row) => row.clone(),
            None => self.tail.row(x, line),
        }
    }

    fn describe(&self) -> String {
        format!("tabular(overrides={})", self.overrides.len())
    }
}

/// Build a tabular kernel from raw override rows (validated here) over a
/// homogeneous tail.
pub fn tabular_model(
    rows: Vec<((u64, usize), Vec<TransitionEntry>)>,
    tail: HomogeneousStripModel,
) -> Result<TabularModel, ModelError> {
    let mut overrides = HashMap::new();
    for ((x, line), entries) in rows {
        if line >= tail.lines().len() {
            return Err(ModelError::BadLineIndex {
                line,
                len: tail.lines().len(),
            });
        }
        overrides.insert((x, line), TransitionRow::new(entries)?);
    }
    Ok(TabularModel { overrides, tail })
}
