//! Recurrence classification from per-line drift constants weighted by the
//! stationary distribution of the limit line chain, plus numeric extraction
//! of those constants from kernels that do not declare them.
//!
//! Constant-drift regime: the sign of `D = sum_i d_i pi(i)` decides
//! transient vs positive-recurrent (the zero case is outside the criterion
//! and reported as inconclusive). Critical regime: with `A = sum_i 2 c_i
//! pi(i)` and `B = sum_i s_i^2 pi(i)`, `A - B > 0` is transient,
//! `A + B < 0` positive-recurrent, `|A| < B` null-recurrent, and the
//! boundary `|A| = B` is null-recurrent only under the sharp-rate
//! assumptions (`sharp = true`).

use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::extrapolate::{extrapolate, top_half_spread};
use crate::model::{DriftMode, DriftParams, Model, ModulationMatrix};
use crate::stationary::{
    limit_matrix_numeric, stationary_distribution, StationaryDistribution, StationaryError,
};

/// Relative tolerance for sign decisions (scaled by `B` or `sum |d_i| pi(i)`).
pub const DECISION_TOL: f64 = 1e-12;

/// Drift-estimate spread beyond which estimation is declared non-convergent.
const ESTIMATE_SPREAD_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("dimension mismatch between drift constants and stationary distribution")]
    Dimension,
    #[error("Lamperti classification needs B = sum s_i^2 pi(i) > 0")]
    NonPositiveB,
    #[error("height grid needs at least 2 increasing positive entries")]
    BadGrid,
    #[error("probability clamping active at grid height {x}; enlarge the grid")]
    ClampingActive { x: u64 },
    #[error("drift estimate did not converge (top-half spread {spread:.3e})")]
    NonConvergent { spread: f64 },
    #[error(transparent)]
    Stationary(#[from] StationaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Transient,
    NullRecurrent,
    PositiveRecurrent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationResult {
    pub verdict: Verdict,
    /// The computed decision quantities, by name.
    pub decision_values: BTreeMap<String, f64>,
    /// Whether the decision sat on the boundary band `|A| = B` (within tol).
    pub boundary: bool,
    pub assumptions_used: Vec<String>,
}

fn decision_map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Constant-drift classification from `D = sum d_i pi(i)`.
pub fn classify_constant(
    d: &[f64],
    pi: &StationaryDistribution,
    tol: f64,
) -> Result<ClassificationResult, ClassifyError> {
    if d.len() != pi.len() {
        return Err(ClassifyError::Dimension);
    }
    let d_bar = pi.weighted_sum(d);
    let scale = pi.weighted_sum(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let eps = tol * scale;
    let verdict = if d_bar > eps {
        Verdict::Transient
    } else if d_bar < -eps {
        Verdict::PositiveRecurrent
    } else {
        // The criterion is silent at zero mean drift.
        Verdict::Inconclusive
    };
    Ok(ClassificationResult {
        verdict,
        decision_values: decision_map(&[("D_bar", d_bar)]),
        boundary: false,
        assumptions_used: vec!["B_p(p>1)".into(), "Q_inf".into(), "M_C".into()],
    })
}

/// Critical-regime classification from `A = sum 2 c_i pi(i)` and
/// `B = sum s_i^2 pi(i)`.
pub fn classify_lamperti(
    params: &DriftParams,
    pi: &StationaryDistribution,
    tol: f64,
) -> Result<ClassificationResult, ClassifyError> {
    if params.c.len() != pi.len() || params.s2.len() != pi.len() {
        return Err(ClassifyError::Dimension);
    }
    let a = 2.0 * pi.weighted_sum(&params.c);
    let b = pi.weighted_sum(&params.s2);
    if b <= 0.0 {
        return Err(ClassifyError::NonPositiveB);
    }
    let eps = tol * b;
    let mut assumptions = vec!["B_p(p>2)".into(), "Q_inf".into(), "M_L".into()];
    let on_boundary = (a.abs() - b).abs() <= eps;
    let verdict = if on_boundary {
        if params.sharp {
            assumptions.push("Q_inf_plus".into());
            assumptions.push("M_L_plus".into());
            Verdict::NullRecurrent
        } else {
            Verdict::Inconclusive
        }
    } else if a - b > eps {
        Verdict::Transient
    } else if a + b < -eps {
        Verdict::PositiveRecurrent
    } else {
        Verdict::NullRecurrent
    };
    Ok(ClassificationResult {
        verdict,
        decision_values: decision_map(&[("A", a), ("B", b)]),
        boundary: on_boundary,
        assumptions_used: assumptions,
    })
}

/// Drift parameters extracted numerically from exact row moments on a grid,
/// with the achieved extrapolation quality.
#[derive(Debug, Clone, Serialize)]
pub struct DriftEstimate {
    pub params: DriftParams,
    /// Max power-law fit residual over the top half of the grid.
    pub residual: f64,
    /// Max raw top-half spread of the fitted quantities.
    pub spread: f64,
}

fn check_grid(grid: &[u64]) -> Result<(), ClassifyError> {
    if grid.len() < 2 || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ClassifyError::BadGrid);
    }
    Ok(())
}

/// Compute exact displacement moments from rows at each grid height and
/// extrapolate the per-line drift constants. The `sharp` flag is never
/// inferred numerically and is always false on estimates.
pub fn estimate_drift_params(
    model: &dyn Model,
    grid: &[u64],
    mode: DriftMode,
) -> Result<DriftEstimate, ClassifyError> {
    check_grid(grid)?;
    if let Some(&x) = grid.iter().find(|&&x| model.clamps_at(x)) {
        return Err(ClassifyError::ClampingActive { x });
    }
    let n = model.lines().len();
    let mut d = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    let mut residual = 0.0_f64;
    let mut spread = 0.0_f64;

    let mut fit_series = |series: &[f64]| -> f64 {
        let raw = top_half_spread(series);
        spread = spread.max(raw);
        if raw == 0.0 {
            return series[series.len() - 1];
        }
        let fit = extrapolate(grid, series);
        residual = residual.max(fit.residual);
        fit.limit
    };

    for i in 0..n {
        let rows: Vec<_> = grid.iter().map(|&x| model.row(x, i)).collect();
        let mu1: Vec<f64> = rows
            .iter()
            .zip(grid)
            .map(|(row, &x)| row.displacement_moment(x, 1))
            .collect();
        let mu2: Vec<f64> = rows
            .iter()
            .zip(grid)
            .map(|(row, &x)| row.displacement_moment(x, 2))
            .collect();
        match mode {
            DriftMode::ConstantDrift => {
                d[i] = fit_series(&mu1);
                s2[i] = fit_series(&mu2);
            }
            DriftMode::Lamperti => {
                let x_mu1: Vec<f64> =
                    mu1.iter().zip(grid).map(|(m, &x)| m * x as f64).collect();
                c[i] = fit_series(&x_mu1);
                s2[i] = fit_series(&mu2);
            }
        }
    }
    if spread > ESTIMATE_SPREAD_TOL {
        return Err(ClassifyError::NonConvergent { spread });
    }

    let limit = limit_matrix_numeric(model, grid)?;
    residual = residual.max(limit.spread);
    let params = DriftParams {
        mode,
        d,
        c,
        s2,
        limit_q: limit.q,
        sharp: false,
    };
    Ok(DriftEstimate {
        params,
        residual,
        spread,
    })
}

/// Where the drift parameters of a [`ModelClassification`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamsSource {
    Declared,
    Estimated,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelClassification {
    pub result: ClassificationResult,
    pub pi: StationaryDistribution,
    pub q: ModulationMatrix,
    pub params: DriftParams,
    pub params_source: ParamsSource,
    /// Extrapolation fit residual, present when parameters were estimated.
    pub residual: Option<f64>,
}

/// Classify directly from a parameter record: solve for pi from the limit
/// matrix, then apply the decision rules for the record's mode.
pub fn classify_from_params(
    params: &DriftParams,
    tol: f64,
) -> Result<(ClassificationResult, StationaryDistribution), ClassifyError> {
    let pi = stationary_distribution(&params.limit_q)?;
    let result = match params.mode {
        DriftMode::ConstantDrift => classify_constant(&params.d, &pi, tol)?,
        DriftMode::Lamperti => classify_lamperti(params, &pi, tol)?,
    };
    Ok((result, pi))
}

/// Full pipeline: declared parameters when the model declares them for the
/// requested mode, numeric estimation otherwise, then limit matrix ->
/// stationary distribution -> decision rules.
pub fn classify_model(
    model: &dyn Model,
    mode: DriftMode,
    grid: &[u64],
) -> Result<ModelClassification, ClassifyError> {
    let declared = model
        .declared_params()
        .filter(|p| p.mode == mode)
        .cloned();
    let (params, source, residual) = match declared {
        Some(p) => (p, ParamsSource::Declared, None),
        None => {
            let est = estimate_drift_params(model, grid, mode)?;
            let residual = est.residual;
            (est.params, ParamsSource::Estimated, Some(residual))
        }
    };
    let (result, pi) = classify_from_params(&params, DECISION_TOL)?;
    Ok(ModelClassification {
        result,
        pi,
        q: params.limit_q.clone(),
        params,
        params_source: source,
        residual,
    })
}
