//! Parametric loss-surface fit: `L(N, D) = E + A/N^α + B/D^β`.
//!
//! The fit minimizes a Huber loss (δ = 1e-3) on the residuals between
//! predicted and observed log-loss, which tolerates stray runs without
//! letting them dominate. The objective is optimized over
//! `θ = (ln A, ln B, ln E, α, β)` — positivity of A, B, E by construction —
//! from a fixed grid of starting points, each polished with Nelder–Mead;
//! the best final objective wins, ties broken by the earlier start.

use crate::error::{Error, Result};
use crate::scaling::simplex::{minimize, SimplexOptions, SimplexOutcome};
use crate::scaling::RunRecord;

/// Huber transition point on log-loss residuals.
const HUBER_DELTA: f64 = 1e-3;

/// Start grid, fixed as part of the fit definition.
const GRID_LN_A: [f64; 4] = [2.5, 7.5, 12.5, 17.5];
const GRID_LN_B: [f64; 4] = [2.5, 7.5, 12.5, 17.5];
const GRID_LN_E: [f64; 3] = [0.0, 0.75, 1.5];
const GRID_ALPHA: [f64; 4] = [0.2, 0.6, 1.0, 1.6];
const GRID_BETA: [f64; 4] = [0.2, 0.6, 1.0, 1.6];

/// How many grid starts (ranked by initial objective) get a local polish.
const POLISH_STARTS: usize = 32;

/// Fitted loss-surface parameters.
#[derive(Debug, Clone)]
pub struct ParametricFit {
    /// Irreducible loss floor `E`.
    pub e: f64,
    /// Model-size term scale `A`.
    pub a: f64,
    /// Model-size exponent `α`.
    pub alpha: f64,
    /// Data term scale `B`.
    pub b: f64,
    /// Data exponent `β`.
    pub beta: f64,
    /// Coefficient of determination on raw losses.
    pub r2_raw: f64,
    /// Coefficient of determination on log losses.
    pub r2_log: f64,
    /// Final mean Huber objective.
    pub objective: f64,
}

impl ParametricFit {
    /// Evaluates `E + A/N^α + B/D^β`.
    pub fn predict(&self, n_params: f64, d_tokens: f64) -> f64 {
        self.e + self.a / n_params.powf(self.alpha) + self.b / d_tokens.powf(self.beta)
    }

    /// Machine-readable `key = value` form (the "fit file").
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("e", self.e),
            ("a", self.a),
            ("alpha", self.alpha),
            ("b", self.b),
            ("beta", self.beta),
            ("r2_raw", self.r2_raw),
            ("r2_log", self.r2_log),
            ("huber_objective", self.objective),
        ] {
            if v.is_finite() {
                out.push_str(&format!("{k} = {v:.17e}\n"));
            }
        }
        out
    }

    /// Parses a fit file; the five surface parameters are required, the
    /// quality statistics optional.
    pub fn from_key_value(text: &str) -> Result<ParametricFit> {
        let mut fields = std::collections::BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                msg: format!("expected 'key = value', got '{raw}'"),
            })?;
            let value: f64 = v.trim().parse().map_err(|e| Error::Parse {
                line: i as u64 + 1,
                msg: format!("bad number '{}': {e}", v.trim()),
            })?;
            fields.insert(k.trim().to_string(), value);
        }
        let require = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Config(format!("fit file is missing '{k}'")))
        };
        let fit = ParametricFit {
            e: require("e")?,
            a: require("a")?,
            alpha: require("alpha")?,
            b: require("b")?,
            beta: require("beta")?,
            r2_raw: fields.get("r2_raw").copied().unwrap_or(f64::NAN),
            r2_log: fields.get("r2_log").copied().unwrap_or(f64::NAN),
            objective: fields.get("huber_objective").copied().unwrap_or(f64::NAN),
        };
        for (k, v) in [
            ("e", fit.e),
            ("a", fit.a),
            ("alpha", fit.alpha),
            ("b", fit.b),
            ("beta", fit.beta),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!(
                    "fit parameter '{k}' must be positive, got {v}"
                )));
            }
        }
        Ok(fit)
    }
}

/// Per-start outcome of the multi-start search.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    /// Index into the documented start grid.
    pub start_index: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn huber(r: f64) -> f64 {
    let a = r.abs();
    if a <= HUBER_DELTA {
        0.5 * r * r
    } else {
        HUBER_DELTA * (a - 0.5 * HUBER_DELTA)
    }
}

/// `ln(exp(a) + exp(b) + exp(c))`, stable for large magnitudes.
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if !m.is_finite() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Mean Huber objective over log-loss residuals for parameters
/// `theta = (ln A, ln B, ln E, alpha, beta)`.
fn objective(theta: &[f64], ln_n: &[f64], ln_d: &[f64], ln_l: &[f64]) -> f64 {
    let (ln_a, ln_b, ln_e, alpha, beta) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
    let mut total = 0.0;
    for i in 0..ln_n.len() {
        let pred = log_sum_exp3(ln_e, ln_a - alpha * ln_n[i], ln_b - beta * ln_d[i]);
        total += huber(pred - ln_l[i]);
    }
    total / ln_n.len() as f64
}

fn decade_span(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    (hi / lo).log10()
}

/// Fits the five-parameter loss surface to run records.
///
/// Requires at least 6 runs spanning more than one decade in both N and D
/// (anything tighter cannot separate the two power terms from the floor).
pub fn fit_parametric(runs: &[RunRecord]) -> Result<ParametricFit> {
    Ok(fit_parametric_detailed(runs)?.0)
}

/// As [`fit_parametric`], also returning per-start diagnostics for the
/// polished starts, in polish order.
pub fn fit_parametric_detailed(runs: &[RunRecord]) -> Result<(ParametricFit, Vec<FitDiagnostics>)> {
    if runs.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "parametric fit needs at least 6 runs, got {}",
            runs.len()
        )));
    }
    for axis in ["N", "D"] {
        let span = match axis {
            "N" => decade_span(runs.iter().map(|r| r.n_params)),
            _ => decade_span(runs.iter().map(|r| r.d_tokens)),
        };
        if span <= 1.0 {
            return Err(Error::InsufficientData(format!(
                "parametric fit needs runs spanning more than one decade in {axis}; \
                 got {span:.2} decades (exponent unidentifiable)"
            )));
        }
    }

    let ln_n: Vec<f64> = runs.iter().map(|r| r.n_params.ln()).collect();
    let ln_d: Vec<f64> = runs.iter().map(|r| r.d_tokens.ln()).collect();
    let ln_l: Vec<f64> = runs.iter().map(|r| r.loss.ln()).collect();
    let f = |theta: &[f64]| objective(theta, &ln_n, &ln_d, &ln_l);

    // Rank every grid start by its raw objective, then polish the best few.
    let mut starts: Vec<(usize, f64, [f64; 5])> = Vec::new();
    let mut index = 0;
    for &ln_a in &GRID_LN_A {
        for &ln_b in &GRID_LN_B {
            for &ln_e in &GRID_LN_E {
                for &alpha in &GRID_ALPHA {
                    for &beta in &GRID_BETA {
                        let theta = [ln_a, ln_b, ln_e, alpha, beta];
                        starts.push((index, f(&theta), theta));
                        index += 1;
                    }
                }
            }
        }
    }
    starts.sort_by(|x, y| {
        x.1.partial_cmp(&y.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.0.cmp(&y.0))
    });
    starts.truncate(POLISH_STARTS);

    let opts = SimplexOptions {
        max_iter: 1_500,
        f_tol: 1e-14,
        x_tol: 1e-9,
        initial_step: 0.10,
    };
    let mut diagnostics = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, SimplexOutcome)> = None;
    for &(start_index, initial, theta) in &starts {
        let out = minimize(f, &theta, &opts);
        diagnostics.push(FitDiagnostics {
            start_index,
            initial_objective: initial,
            final_objective: out.fx,
            iterations: out.iterations,
            converged: out.converged,
        });
        let better = match &best {
            None => out.fx.is_finite(),
            Some((_, b)) => out.fx.is_finite() && out.fx < b.fx,
        };
        if better {
            best = Some((start_index, out));
        }
    }
    let (_, candidate) = best.ok_or_else(|| Error::FitFailure {
        starts: starts.len(),
        best_objective: f64::NAN,
        reason: "no start produced a finite objective".to_string(),
    })?;

    // One tight restart from the winning point guards against a stalled
    // simplex; it never leaves a worse objective.
    let polished = minimize(
        f,
        &candidate.x,
        &SimplexOptions {
            max_iter: 800,
            f_tol: 1e-16,
            x_tol: 1e-11,
            initial_step: 0.01,
        },
    );
    let final_point = if polished.fx < candidate.fx {
        polished
    } else {
        candidate
    };

    let [ln_a, ln_b, ln_e, alpha, beta] = final_point.x[..] else {
        unreachable!("theta is five-dimensional");
    };
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::FitFailure {
            starts: diagnostics.len(),
            best_objective: final_point.fx,
            reason: format!(
                "best start converged to non-positive exponents (alpha={alpha}, beta={beta})"
            ),
        });
    }

    let mut fit = ParametricFit {
        e: ln_e.exp(),
        a: ln_a.exp(),
        alpha,
        b: ln_b.exp(),
        beta,
        r2_raw: f64::NAN,
        r2_log: f64::NAN,
        objective: final_point.fx,
    };
    let (mut ss_res_raw, mut ss_res_log) = (0.0, 0.0);
    let mean_raw = runs.iter().map(|r| r.loss).sum::<f64>() / runs.len() as f64;
    let mean_log = ln_l.iter().sum::<f64>() / ln_l.len() as f64;
    let (mut ss_tot_raw, mut ss_tot_log) = (0.0, 0.0);
    for (run, &ll) in runs.iter().zip(&ln_l) {
        let pred = fit.predict(run.n_params, run.d_tokens);
        ss_res_raw += (run.loss - pred) * (run.loss - pred);
        ss_tot_raw += (run.loss - mean_raw) * (run.loss - mean_raw);
        let lp = pred.ln();
        ss_res_log += (ll - lp) * (ll - lp);
        ss_tot_log += (ll - mean_log) * (ll - mean_log);
    }
    fit.r2_raw = if ss_tot_raw > 0.0 {
        1.0 - ss_res_raw / ss_tot_raw
    } else {
        1.0
    };
    fit.r2_log = if ss_tot_log > 0.0 {
        1.0 - ss_res_log / ss_tot_log
    } else {
        1.0
    };
    Ok((fit, diagnostics))
}
