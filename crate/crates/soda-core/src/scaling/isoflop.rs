//! IsoFLOP curve fitting: per-budget quadratics in log model size (or log
//! token count), and the power laws fitted through the per-budget optima.

use crate::error::{Error, Result};
use crate::scaling::{AllocationLaws, PowerLawFit, RunRecord};

/// Which variable the quadratic is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    ModelSize,
    Tokens,
}

impl Axis {
    fn value(self, run: &RunRecord) -> f64 {
        match self {
            Axis::ModelSize => run.n_params,
            Axis::Tokens => run.d_tokens,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::ModelSize => "model size",
            Axis::Tokens => "tokens",
        }
    }
}

/// Least-squares fit of `L = a (ln x)^2 + b (ln x) + c` over one budget's
/// runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Loss-minimizing axis value, `exp(-b / 2a)`.
    pub argmin: f64,
    pub residual_rms: f64,
    /// Set when the argmin falls outside the fitted points' axis range.
    pub extrapolated: bool,
}

impl QuadraticFit {
    pub fn evaluate(&self, axis_value: f64) -> f64 {
        let x = axis_value.ln();
        self.a * x * x + self.b * x + self.c
    }
}

/// Relative compute spread tolerated within "one budget".
const BUDGET_BAND: f64 = 0.02;

/// Solves a 3x3 linear system by Gaussian elimination with partial
/// pivoting. Returns `None` for a (near-)singular system.
fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| {
            m[a][col]
                .abs()
                .partial_cmp(&m[b][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        let pivot_row = m[col];
        for row in m.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (a, b) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *a -= f * b;
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = m[row][3];
        for k in (row + 1)..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Fits the per-budget quadratic and locates its minimum.
///
/// The runs must share one compute budget (within 2% relative spread) and
/// offer at least three distinct axis values. A non-convex result
/// (`a <= 0`, including collinear points) is rejected; an argmin outside
/// the observed axis range is flagged, not rejected.
pub fn fit_isoflop(runs: &[RunRecord], axis: Axis) -> Result<QuadraticFit> {
    if runs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "quadratic fit needs at least 3 runs, got {}",
            runs.len()
        )));
    }
    let (c_min, c_max) = runs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r.compute), hi.max(r.compute))
    });
    if c_max / c_min - 1.0 > BUDGET_BAND {
        return Err(Error::Domain(format!(
            "runs span computes {c_min:e}..{c_max:e}; an IsoFLOP fit needs one budget \
             (within {:.0}%)",
            BUDGET_BAND * 100.0
        )));
    }

    let xs: Vec<f64> = runs.iter().map(|r| axis.value(r).ln()).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.loss).collect();
    let mut distinct = xs.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "quadratic fit needs 3 distinct {} values, got {}",
            axis.name(),
            distinct.len()
        )));
    }

    // Center the abscissa for conditioning, then un-center the coefficients.
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(&ys) {
        let u = x - mean;
        let u2 = u * u;
        s1 += u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        t0 += y;
        t1 += u * y;
        t2 += u2 * y;
    }
    let n = xs.len() as f64;
    let sol = solve3([[s4, s3, s2, t2], [s3, s2, s1, t1], [s2, s1, n, t0]]).ok_or_else(|| {
        Error::InsufficientData(format!(
            "degenerate {} design: normal equations are singular",
            axis.name()
        ))
    })?;
    let [a, b_c, c_c] = sol;
    let b = b_c - 2.0 * a * mean;
    let c = c_c - b_c * mean + a * mean * mean;

    if a <= 0.0 {
        return Err(Error::NonConvexFit { a });
    }
    let argmin = (-b / (2.0 * a)).exp();
    let extrapolated = {
        let lo = distinct.first().unwrap().exp();
        let hi = distinct.last().unwrap().exp();
        argmin < lo || argmin > hi
    };
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let pred = a * x * x + b * x + c;
            (y - pred) * (y - pred)
        })
        .sum();
    Ok(QuadraticFit {
        a,
        b,
        c,
        argmin,
        residual_rms: (ss_res / n).sqrt(),
        extrapolated,
    })
}

/// Ordinary least squares of `ln y` on `ln x`:
/// `y = coefficient * x^exponent`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(x, y) in points {
        if x <= 0.0 || y <= 0.0 || !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!(
                "power-law fit needs positive finite points, got ({x}, {y})"
            )));
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|&(x, _)| x.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|&(_, y)| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    if sxx < 1e-24 {
        return Err(Error::InsufficientData(
            "power-law fit needs at least 2 distinct abscissae".to_string(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let ss_tot: f64 = ly.iter().map(|&y| (y - my) * (y - my)).sum();
    let r2_log = if ss_tot < 1e-24 {
        1.0 // constant ordinate fitted exactly by slope 0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(PowerLawFit {
        coefficient: intercept.exp(),
        exponent: slope,
        r2_log,
    })
}

/// Per-budget optima located by the quadratic fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetOptimum {
    pub budget: f64,
    pub n_star: f64,
    pub d_star: f64,
    /// Either axis's argmin fell outside its observed range.
    pub extrapolated: bool,
}

/// Output of the full sweep analysis: per-budget optima plus the power laws
/// through them.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFit {
    pub optima: Vec<BudgetOptimum>,
    pub laws: AllocationLaws,
}

/// Runs the full IsoFLOP analysis over a multi-budget sweep: groups runs by
/// compute budget (2% band), fits the quadratic on each budget along both
/// axes, then fits `N*(C)` and `D*(C)` power laws through the optima.
pub fn isoflop_pipeline(runs: &[RunRecord]) -> Result<PipelineFit> {
    if runs.is_empty() {
        return Err(Error::InsufficientData(
            "IsoFLOP analysis needs runs from at least 2 budgets, got none".to_string(),
        ));
    }
    let mut sorted: Vec<&RunRecord> = runs.iter().collect();
    sorted.sort_by(|a, b| a.compute.partial_cmp(&b.compute).unwrap());
    let mut groups: Vec<Vec<RunRecord>> = Vec::new();
    for run in sorted {
        match groups.last_mut() {
            Some(g) if run.compute / g[0].compute - 1.0 <= BUDGET_BAND => g.push(*run),
            _ => groups.push(vec![*run]),
        }
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "IsoFLOP analysis needs runs from at least 2 budgets, got {}",
            groups.len()
        )));
    }

    let mut optima = Vec::with_capacity(groups.len());
    for group in &groups {
        let n_fit = fit_isoflop(group, Axis::ModelSize)?;
        let d_fit = fit_isoflop(group, Axis::Tokens)?;
        let budget = (group.iter().map(|r| r.compute.ln()).sum::<f64>() / group.len() as f64).exp();
        optima.push(BudgetOptimum {
            budget,
            n_star: n_fit.argmin,
            d_star: d_fit.argmin,
            extrapolated: n_fit.extrapolated || d_fit.extrapolated,
        });
    }
    let n_points: Vec<(f64, f64)> = optima.iter().map(|o| (o.budget, o.n_star)).collect();
    let d_points: Vec<(f64, f64)> = optima.iter().map(|o| (o.budget, o.d_star)).collect();
    Ok(PipelineFit {
        optima,
        laws: AllocationLaws::new(fit_power_law(&n_points)?, fit_power_law(&d_points)?),
    })
}
