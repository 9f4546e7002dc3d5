//! Core library for the SODA toolkit: rendering discrete-codec audio and
//! transcripts into an interleaved token format with deterministic mixture
//! sampling and fixed-length packing, plus the compute-allocation
//! mathematics (IsoFLOP fitting, power-law and parametric scaling laws,
//! over-training analysis, schedule math, NLL/correlation analysis) that
//! turns desk-scale run records into training plans.
//!
//! Modules:
//! - [`vocab`]: the token id space (text / audio codebooks / specials).
//! - [`corpus`]: document manifests and token accounting.
//! - [`interleave`]: rendering and fixed-length sequence packing.
//! - [`shard`]: the binary sequence container.
//! - [`mixture`]: source weights and deterministic sampling schedules.
//! - [`scaling`]: FLOP accounting, scaling-law fits, over-training math.
//! - [`schedule`]: learning-rate and step accounting.
//! - [`analysis`]: NLL variants and correlation statistics.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod interleave;
pub mod mixture;
pub mod scaling;
pub mod schedule;
pub mod shard;
pub mod vocab;

pub use error::{Error, Result};

// The types that cross module boundaries most often, re-exported for
// downstream crates (CLI, benches) so call sites stay short.
pub use analysis::{
    loglinear_trend, spearman, variant_nll, DataFormat, MetricSeries, NllVariant, ScoredToken,
    TrendFit,
};
pub use corpus::{count_tokens, parse_manifest, Document, SourceStats, TokenCounts, Utterance};
pub use interleave::{
    render, rendered_len, unpack, DocSpan, PackSummary, PackedSequence, Packer, RenderFormat,
};
pub use mixture::{plan_mixture, sample_schedule, MixtureSpec, SampleEvent, SplitMix64};
pub use scaling::{
    derived_exponents, fit_isoflop, fit_parametric, fit_power_law, flops, isoflop_pipeline,
    loss_at_overtraining, optimal_allocation, overtraining_factor, plan_isoflop, predict_loss,
    Allocation, AllocationLaws, Axis, ParametricFit, PowerLawFit, QuadraticFit, RunRecord,
};
pub use schedule::{scaled_lr, train_steps, wsd_multiplier, OptimizerConfig, ScheduleSpec};
pub use shard::{read_shard, write_shard, ShardReader, ShardWriter};
pub use vocab::{SpecialToken, TokenRole, VocabLayout, FRAME_RATE_HZ};
