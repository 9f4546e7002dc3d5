//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the pipeline and fitting modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside the valid range for a named field.
    #[error("{field} out of range: {value} not in [0, {bound})")]
    OutOfRange {
        field: &'static str,
        value: u64,
        bound: u64,
    },

    /// Token id does not belong to the region the operation expects.
    #[error("token id {id} is outside the {region} region [{start}, {end})")]
    WrongRegion {
        id: u32,
        region: &'static str,
        start: u32,
        end: u32,
    },

    /// Numeric argument violated a domain precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration (layout, mixture spec, schedule spec, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A code matrix entry or manifest record failed validation.
    #[error("validation error{}: {msg}", match line { Some(l) => format!(" at line {l}"), None => String::new() })]
    Validation { line: Option<u64>, msg: String },

    /// Manifest line could not be decoded.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Too few observations for the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Quadratic fit came out flat or concave; no interior minimum exists.
    #[error("non-convex fit: leading coefficient a = {a} is not positive")]
    NonConvexFit { a: f64 },

    /// Every optimization start failed to produce a valid parameter set.
    #[error("parametric fit failed: {starts} starts tried, best objective {best_objective:.3e}, {reason}")]
    FitFailure {
        starts: usize,
        best_objective: f64,
        reason: String,
    },

    /// Root bracketing failed in a numeric solve.
    #[error("no root in bracket [{lo:.3e}, {hi:.3e}]: f(lo) = {f_lo:.3e}, f(hi) = {f_hi:.3e}")]
    Infeasible {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// The sampling schedule ran out of data before producing all events.
    #[error(
        "source '{source_name}' exhausted after {events_emitted} events: \
         {docs} documents, {epochs_completed} epochs completed, max_epochs = {max_epochs}"
    )]
    Exhausted {
        source_name: String,
        events_emitted: u64,
        docs: u64,
        epochs_completed: u32,
        max_epochs: u32,
    },

    /// An NLL variant mask matched no tokens.
    #[error("empty selection: no tokens match variant {variant} ({label})")]
    EmptySelection { variant: u8, label: &'static str },

    /// Rank correlation is undefined for a constant series.
    #[error("undefined correlation: series '{0}' is constant")]
    UndefinedCorrelation(&'static str),

    /// Binary shard stream is malformed.
    #[error("shard format error: {0}")]
    ShardFormat(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
