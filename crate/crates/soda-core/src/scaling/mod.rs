//! Compute-allocation mathematics: FLOP accounting, IsoFLOP sweeps,
//! scaling-law fits and over-training analysis.
//!
//! Conventions used throughout: compute is `C = 6 N D` FLOPs for `N`
//! parameters trained on `D` tokens; natural logarithms internally; all
//! exponents are base-invariant.

mod isoflop;
mod parametric;
pub mod simplex;

pub mod io;

pub use isoflop::{
    fit_isoflop, fit_power_law, isoflop_pipeline, Axis, BudgetOptimum, PipelineFit, QuadraticFit,
};
pub use parametric::{fit_parametric, FitDiagnostics, ParametricFit};

use crate::error::{Error, Result};

/// One training run: size, data, compute and final validation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    /// Parameter count `N`.
    pub n_params: f64,
    /// Training tokens `D`.
    pub d_tokens: f64,
    /// Training FLOPs `C`; within 1% of `6 N D`.
    pub compute: f64,
    /// Validation loss in nats per token.
    pub loss: f64,
}

impl RunRecord {
    /// Builds a record, deriving compute as `6 N D` when not supplied and
    /// rejecting a supplied value more than 1% away from it.
    pub fn new(n_params: f64, d_tokens: f64, compute: Option<f64>, loss: f64) -> Result<RunRecord> {
        for (field, v) in [
            ("n_params", n_params),
            ("d_tokens", d_tokens),
            ("loss", loss),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!("{field} must be positive, got {v}")));
            }
        }
        let derived = flops(n_params, d_tokens)?;
        let compute = match compute {
            None => derived,
            Some(c) => {
                if !c.is_finite() || c <= 0.0 || (c / derived - 1.0).abs() > 0.01 {
                    return Err(Error::Validation {
                        line: None,
                        msg: format!("compute {c:e} is not within 1% of 6*N*D = {derived:e}"),
                    });
                }
                c
            }
        };
        Ok(RunRecord {
            n_params,
            d_tokens,
            compute,
            loss,
        })
    }
}

/// Training FLOPs under the `6 N D` convention.
pub fn flops(n_params: f64, d_tokens: f64) -> Result<f64> {
    if !n_params.is_finite() || n_params <= 0.0 || !d_tokens.is_finite() || d_tokens <= 0.0 {
        return Err(Error::Domain(format!(
            "flops needs positive N and D, got N={n_params}, D={d_tokens}"
        )));
    }
    Ok(6.0 * n_params * d_tokens)
}

/// Token counts that hold each model size to one compute budget:
/// `D_i = budget / (6 N_i)`.
pub fn plan_isoflop(budget: f64, model_sizes: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::Domain(format!(
            "budget must be positive, got {budget}"
        )));
    }
    model_sizes
        .iter()
        .map(|&n| {
            if !n.is_finite() || n <= 0.0 {
                return Err(Error::Domain(format!(
                    "model sizes must be positive, got {n}"
                )));
            }
            Ok((n, budget / (6.0 * n)))
        })
        .collect()
}

/// Compute-optimal scaling exponents implied by a parametric loss surface:
/// `N* ∝ C^(β/(α+β))` and `D* ∝ C^(α/(α+β))`.
///
/// The second exponent is computed as one minus the first so the pair sums
/// to exactly 1.
pub fn derived_exponents(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !alpha.is_finite() || alpha <= 0.0 || !beta.is_finite() || beta <= 0.0 {
        return Err(Error::Domain(format!(
            "exponents must be positive, got alpha={alpha}, beta={beta}"
        )));
    }
    let exp_n = beta / (alpha + beta);
    Ok((exp_n, 1.0 - exp_n))
}

/// One fitted power law `y = coefficient * C^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    /// Coefficient of determination in log-log space (1.0 for laws that are
    /// calibrated rather than fitted).
    pub r2_log: f64,
}

impl PowerLawFit {
    pub fn evaluate(&self, compute: f64) -> f64 {
        self.coefficient * compute.powf(self.exponent)
    }
}

/// The pair of allocation laws `N*(C) = a_N C^(b_N)`, `D*(C) = a_D C^(b_D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationLaws {
    pub n_law: PowerLawFit,
    pub d_law: PowerLawFit,
}

impl AllocationLaws {
    pub fn new(n_law: PowerLawFit, d_law: PowerLawFit) -> AllocationLaws {
        AllocationLaws { n_law, d_law }
    }

    /// Calibrates coefficients from published exponents plus one anchor
    /// point `(anchor_n, anchor_d)` taken to be compute-optimal: with
    /// `C_a = 6 * anchor_n * anchor_d`, `a_N = anchor_n / C_a^(b_N)` and
    /// `a_D = anchor_d / C_a^(b_D)`.
    pub fn from_anchor(
        exp_n: f64,
        exp_d: f64,
        anchor_n: f64,
        anchor_d: f64,
    ) -> Result<AllocationLaws> {
        if exp_n <= 0.0 || exp_d <= 0.0 {
            return Err(Error::Domain(format!(
                "exponents must be positive, got ({exp_n}, {exp_d})"
            )));
        }
        let c_anchor = flops(anchor_n, anchor_d)?;
        Ok(AllocationLaws {
            n_law: PowerLawFit {
                coefficient: anchor_n / c_anchor.powf(exp_n),
                exponent: exp_n,
                r2_log: 1.0,
            },
            d_law: PowerLawFit {
                coefficient: anchor_d / c_anchor.powf(exp_d),
                exponent: exp_d,
                r2_log: 1.0,
            },
        })
    }

    /// Closed-form laws implied by a parametric fit: minimizing
    /// `E + A/N^α + B/D^β` subject to `6 N D = C` gives, with
    /// `G = (α A / (β B))^(1/(α+β))`, `N*(C) = G (C/6)^(β/(α+β))` and
    /// `D*(C) = G⁻¹ (C/6)^(α/(α+β))`. These laws satisfy
    /// `6 N*(C) D*(C) = C` by construction.
    pub fn from_parametric(fit: &ParametricFit) -> Result<AllocationLaws> {
        let (exp_n, exp_d) = derived_exponents(fit.alpha, fit.beta)?;
        let g = (fit.alpha * fit.a / (fit.beta * fit.b)).powf(1.0 / (fit.alpha + fit.beta));
        Ok(AllocationLaws {
            n_law: PowerLawFit {
                coefficient: g * 6.0_f64.powf(-exp_n),
                exponent: exp_n,
                r2_log: 1.0,
            },
            d_law: PowerLawFit {
                coefficient: 6.0_f64.powf(-exp_d) / g,
                exponent: exp_d,
                r2_log: 1.0,
            },
        })
    }
}

/// Compute-optimal allocation at one budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub budget: f64,
    pub n_star: f64,
    pub d_star: f64,
    /// Tokens per parameter, `D*/N*`.
    pub ratio: f64,
    /// Relative deviation of `6 N* D*` from the requested budget.
    pub budget_deviation: f64,
    /// Set when the deviation exceeds 20%: the two laws are mutually
    /// inconsistent at this budget (expected far from their fit anchor).
    pub consistency_warning: bool,
}

/// Evaluates both allocation laws at a budget.
pub fn optimal_allocation(laws: &AllocationLaws, budget: f64) -> Result<Allocation> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::Domain(format!(
            "budget must be positive, got {budget}"
        )));
    }
    let n_star = laws.n_law.evaluate(budget);
    let d_star = laws.d_law.evaluate(budget);
    let implied = 6.0 * n_star * d_star;
    let budget_deviation = (implied / budget - 1.0).abs();
    Ok(Allocation {
        budget,
        n_star,
        d_star,
        ratio: d_star / n_star,
        budget_deviation,
        consistency_warning: budget_deviation > 0.20,
    })
}

/// How far a run over-trains its model size: `K = D / D*(N)` where
/// `D*(N) = a_D * C_opt(N)^(b_D)` and `C_opt(N) = (N / a_N)^(1/b_N)` is the
/// budget at which `N` would be compute-optimal.
pub fn overtraining_factor(laws: &AllocationLaws, n_params: f64, d_tokens: f64) -> Result<f64> {
    if n_params <= 0.0 || d_tokens <= 0.0 {
        return Err(Error::Domain(format!(
            "overtraining_factor needs positive N and D, got ({n_params}, {d_tokens})"
        )));
    }
    Ok(d_tokens / tokens_at_optimum(laws, n_params))
}

/// `D*(N)`: the token count that makes `N` compute-optimal.
fn tokens_at_optimum(laws: &AllocationLaws, n_params: f64) -> f64 {
    let c_opt = (n_params / laws.n_law.coefficient).powf(1.0 / laws.n_law.exponent);
    laws.d_law.evaluate(c_opt)
}

/// An over-trained allocation and its predicted loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvertrainedPoint {
    pub n_params: f64,
    pub d_tokens: f64,
    pub loss: f64,
}

/// Allocation under a fixed over-training factor: solves for the `N` with
/// `6 N D = budget` and `D = K * D*(N)`, then evaluates the parametric loss
/// there.
///
/// The solve is a bisection on `ln N` (the constraint gap is monotone in
/// `N`), run to 1e-6 relative tolerance. `K = 1` reproduces
/// [`optimal_allocation`] when the law exponents sum to 1, which holds for
/// laws derived from a parametric fit; anchored empirical exponent pairs
/// that do not sum to 1 agree only at their anchor budget.
pub fn loss_at_overtraining(
    fit: &ParametricFit,
    laws: &AllocationLaws,
    budget: f64,
    k: f64,
) -> Result<OvertrainedPoint> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::Domain(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if !k.is_finite() || k < 1.0 {
        return Err(Error::Domain(format!(
            "over-training factor must be at least 1, got {k}"
        )));
    }
    // gap(ln N) = ln(6 N K D*(N)) - ln budget, strictly increasing in ln N.
    let gap = |ln_n: f64| -> f64 {
        let n = ln_n.exp();
        (6.0 * n * k * tokens_at_optimum(laws, n)).ln() - budget.ln()
    };
    let (mut lo, mut hi) = (1.0_f64.ln(), 1e30_f64.ln());
    let (f_lo, f_hi) = (gap(lo), gap(hi));
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return Err(Error::Infeasible {
            lo: lo.exp(),
            hi: hi.exp(),
            f_lo,
            f_hi,
        });
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n = (0.5 * (lo + hi)).exp();
    let d = budget / (6.0 * n);
    Ok(OvertrainedPoint {
        n_params: n,
        d_tokens: d,
        loss: fit.predict(n, d),
    })
}

/// Evaluates `L(N, D) = E + A/N^α + B/D^β`.
pub fn predict_loss(fit: &ParametricFit, n_params: f64, d_tokens: f64) -> Result<f64> {
    if n_params <= 0.0 || d_tokens <= 0.0 {
        return Err(Error::Domain(format!(
            "predict_loss needs positive N and D, got ({n_params}, {d_tokens})"
        )));
    }
    Ok(fit.predict(n_params, d_tokens))
}
