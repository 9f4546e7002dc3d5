//! File formats for the scaling toolkit: run-record CSV in, fit reports and
//! plot-ready sweeps out.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scaling::{
    Allocation, AllocationLaws, BudgetOptimum, OvertrainedPoint, PowerLawFit, RunRecord,
};

/// Reads run records from CSV with header `n_params,d_tokens,compute,loss`.
///
/// The `compute` column may be absent or left empty per row; it is then
/// derived as `6 N D`. A supplied value more than 1% away from `6 N D` is
/// rejected with its line number.
pub fn read_runs_csv<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (n_col, d_col, l_col) = match (col("n_params"), col("d_tokens"), col("loss")) {
        (Some(n), Some(d), Some(l)) => (n, d, l),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "run CSV needs columns n_params, d_tokens, loss; got header '{}'",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            })
        }
    };
    let c_col = col("compute");

    let mut runs = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i as u64 + 2; // 1-based, after the header
        let record = record?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("missing {name} field"),
                })?
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad {name}: {e}"),
                })
        };
        let n = field(n_col, "n_params")?;
        let d = field(d_col, "d_tokens")?;
        let loss = field(l_col, "loss")?;
        let compute = match c_col {
            Some(idx) => {
                let raw = record.get(idx).unwrap_or("").trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse().map_err(|e| Error::Parse {
                        line,
                        msg: format!("bad compute: {e}"),
                    })?)
                }
            }
            None => None,
        };
        runs.push(
            RunRecord::new(n, d, compute, loss).map_err(|e| Error::Validation {
                line: Some(line),
                msg: e.to_string(),
            })?,
        );
    }
    Ok(runs)
}

/// Writes run records with the canonical header.
pub fn write_runs_csv<W: Write>(writer: W, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n_params", "d_tokens", "compute", "loss"])?;
    for run in runs {
        w.write_record([
            format!("{:.17e}", run.n_params),
            format!("{:.17e}", run.d_tokens),
            format!("{:.17e}", run.compute),
            format!("{:.17e}", run.loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes per-budget optima for plotting `N*`/`D*` against compute.
pub fn write_optima_csv<W: Write>(writer: W, optima: &[BudgetOptimum]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["budget", "n_star", "d_star", "extrapolated"])?;
    for o in optima {
        w.write_record([
            format!("{:.17e}", o.budget),
            format!("{:.17e}", o.n_star),
            format!("{:.17e}", o.d_star),
            o.extrapolated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a loss-versus-compute sweep at fixed over-training factors.
pub fn write_overtraining_sweep_csv<W: Write>(
    writer: W,
    rows: &[(f64, f64, OvertrainedPoint)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["budget", "k", "n_params", "d_tokens", "loss"])?;
    for (budget, k, p) in rows {
        w.write_record([
            format!("{budget:.17e}"),
            format!("{k}"),
            format!("{:.17e}", p.n_params),
            format!("{:.17e}", p.d_tokens),
            format!("{:.17e}", p.loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl AllocationLaws {
    /// Machine-readable `key = value` form of both laws.
    pub fn to_key_value(&self) -> String {
        format!(
            "n_coefficient = {:.17e}\nn_exponent = {:.17e}\nn_r2_log = {:.17e}\n\
             d_coefficient = {:.17e}\nd_exponent = {:.17e}\nd_r2_log = {:.17e}\n",
            self.n_law.coefficient,
            self.n_law.exponent,
            self.n_law.r2_log,
            self.d_law.coefficient,
            self.d_law.exponent,
            self.d_law.r2_log,
        )
    }

    pub fn from_key_value(text: &str) -> Result<AllocationLaws> {
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
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Config(format!("laws file is missing '{k}'")))
        };
        let laws = AllocationLaws {
            n_law: PowerLawFit {
                coefficient: get("n_coefficient")?,
                exponent: get("n_exponent")?,
                r2_log: fields.get("n_r2_log").copied().unwrap_or(f64::NAN),
            },
            d_law: PowerLawFit {
                coefficient: get("d_coefficient")?,
                exponent: get("d_exponent")?,
                r2_log: fields.get("d_r2_log").copied().unwrap_or(f64::NAN),
            },
        };
        for (name, law) in [("N", &laws.n_law), ("D", &laws.d_law)] {
            if law.coefficient <= 0.0 || !law.coefficient.is_finite() {
                return Err(Error::Config(format!(
                    "{name}-law coefficient must be positive, got {}",
                    law.coefficient
                )));
            }
        }
        Ok(laws)
    }
}

impl Allocation {
    /// One-line human report.
    pub fn summary(&self) -> String {
        let warning = if self.consistency_warning {
            format!(
                " [warning: implied compute deviates from the budget by {:.0}%]",
                self.budget_deviation * 100.0
            )
        } else {
            String::new()
        };
        format!(
            "budget {:.3e} FLOPs -> N* = {:.4e} params, D* = {:.4e} tokens, \
             {:.1} tokens/param{warning}",
            self.budget, self.n_star, self.d_star, self.ratio
        )
    }
}
