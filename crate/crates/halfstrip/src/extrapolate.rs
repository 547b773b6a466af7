//! Power-law extrapolation of slowly converging sequences sampled on an
//! increasing height grid: fit `v(x) ~ L + A x^(-beta)` from the last three
//! grid points and report the fit residual over the top half of the grid.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Fit {
    /// Extrapolated limit.
    pub limit: f64,
    /// Max absolute fit residual over the top half of the grid (falls back
    /// to the raw top-half spread when no fit was possible).
    pub residual: f64,
    /// True when the power-law fit could not be formed and the last grid
    /// value was used instead.
    pub fallback: bool,
}

/// Max - min over the top half of the grid (at least the last two points).
pub(crate) fn top_half_spread(values: &[f64]) -> f64 {
    let start = (values.len() / 2).min(values.len().saturating_sub(2));
    let tail = &values[start..];
    let max = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

pub(crate) fn extrapolate(xs: &[u64], values: &[f64]) -> Fit {
    assert_eq!(xs.len(), values.len());
    assert!(xs.len() >= 2, "extrapolation grid needs at least 2 points");
    let n = xs.len();
    let last = values[n - 1];
    let fallback = Fit {
        limit: last,
        residual: top_half_spread(values),
        fallback: true,
    };
    if n < 3 {
        return fallback;
    }

    let (x1, x2, x3) = (xs[n - 3] as f64, xs[n - 2] as f64, xs[n - 1] as f64);
    let (v1, v2, v3) = (values[n - 3], values[n - 2], values[n - 1]);
    let d1 = v1 - v2;
    let d2 = v2 - v3;
    // Differences at rounding level: the sequence has already converged.
    if d1.abs() < 1e-14 && d2.abs() < 1e-14 {
        return Fit {
            limit: last,
            residual: top_half_spread(values),
            fallback: false,
        };
    }
    if d2.abs() < 1e-300 {
        return fallback;
    }
    let ratio = d1 / d2;
    // A decaying power law needs successive differences of the same sign
    // shrinking in magnitude.
    if !ratio.is_finite() || ratio <= 1.0 {
        return fallback;
    }

    let f = |beta: f64| {
        let (a, b, c) = (x1.powf(-beta), x2.powf(-beta), x3.powf(-beta));
        (a - b) / (b - c)
    };
    // f is continuous and increasing in beta; bracket then bisect.
    let (mut lo, mut hi) = (1e-4, 64.0);
    if f(lo) > ratio || f(hi) < ratio {
        return fallback;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let amp = d2 / (x2.powf(-beta) - x3.powf(-beta));
    let limit = v3 - amp * x3.powf(-beta);

    let start = (n / 2).min(n - 2);
    let residual = (start..n)
        .map(|k| (values[k] - (limit + amp * (xs[k] as f64).powf(-beta))).abs())
        .fold(0.0, f64::max);
    Fit {
        limit,
        residual,
        fallback: false,
    }
}
