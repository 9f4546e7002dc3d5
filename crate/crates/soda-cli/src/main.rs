//! `soda`: batch command surface over the core library.
//!
//! Six subcommands cover the pipeline end to end: `tokenize` renders
//! manifests into packed shards, `mix` materializes sampling schedules,
//! `fit` runs the scaling-law fitters, `predict` evaluates a fit,
//! `schedule` does learning-rate and step accounting, and `correlate`
//! computes rank-correlation tables. Every command is deterministic given
//! identical inputs, flags and seeds; machine-readable outputs are
//! byte-identical across repeat runs. All errors exit with status 1.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use soda_core::analysis::{read_series_csv, write_correlation_csv, SeriesTable};
use soda_core::corpus::{count_tokens, parse_manifest, Document};
use soda_core::interleave::{render, Packer, RenderFormat};
use soda_core::mixture::{realized_shares, sample_schedule, write_schedule_csv, MixtureSpec};
use soda_core::scaling::io::{read_runs_csv, write_optima_csv};
use soda_core::scaling::{
    fit_parametric, fit_power_law, isoflop_pipeline, loss_at_overtraining, optimal_allocation,
    predict_loss, AllocationLaws, ParametricFit, PowerLawFit,
};
use soda_core::schedule::{scaled_lr, train_steps, wsd_multiplier, OptimizerConfig, ScheduleSpec};
use soda_core::shard::ShardWriter;
use soda_core::vocab::VocabLayout;
use soda_core::{loglinear_trend, spearman, Error};

#[derive(Parser)]
#[command(
    name = "soda",
    about = "Interleaved speech/text token pipelines and compute-allocation math",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a document manifest into a packed binary shard.
    Tokenize(TokenizeArgs),
    /// Materialize a deterministic sampling schedule from a mixture spec.
    Mix(MixArgs),
    /// Fit scaling laws to a CSV of training runs.
    Fit(FitArgs),
    /// Evaluate a parametric fit: point loss, or allocation at a budget.
    Predict(PredictArgs),
    /// Learning-rate and step accounting for a training configuration.
    Schedule(ScheduleArgs),
    /// Rank correlations between NLL columns and metric columns.
    Correlate(CorrelateArgs),
}

#[derive(clap::Args)]
struct TokenizeArgs {
    /// JSON-lines manifest of documents to render.
    manifest: PathBuf,
    /// Vocabulary layout file (`key = value`); defaults to the built-in
    /// layout when omitted.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Output shard path.
    #[arg(long)]
    out: PathBuf,
    /// Packed sequence length in tokens.
    #[arg(long)]
    seq_len: usize,
    /// Render format applied to every document.
    #[arg(long, default_value = "text-first")]
    format: String,
}

#[derive(clap::Args)]
struct MixArgs {
    /// Mixture spec file: `seed`, `max_epochs`, and `source.<name>` weights.
    spec: PathBuf,
    /// Document manifests; per-source document counts and token sizes are
    /// aggregated across all of them.
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// Synthetic per-source document counts, as `name=count`. Useful for
    /// planning a schedule without materialized corpora.
    #[arg(long = "docs")]
    docs: Vec<String>,
    /// Vocabulary layout for reading manifests; defaults to the built-in.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Number of events to schedule.
    #[arg(long)]
    total_events: u64,
    /// Overrides the seed recorded in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the schedule CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitMode {
    /// Per-budget quadratic minima, then power laws through the minima.
    Isoflop,
    /// Direct power laws through rows already holding per-budget optima.
    Powerlaw,
    /// Five-parameter loss surface via Huber multi-start.
    Parametric,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Runs CSV with header `n_params,d_tokens,compute,loss` (compute may
    /// be empty; it is derived as 6*N*D).
    runs: PathBuf,
    #[arg(long, value_enum)]
    mode: FitMode,
    /// Directory for machine-readable outputs (fit files, plot CSVs).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Parametric fit file (`key = value` with e, a, alpha, b, beta).
    #[arg(long)]
    fit: PathBuf,
    /// Model size for a point prediction (requires --d).
    #[arg(long, allow_negative_numbers = true)]
    n: Option<f64>,
    /// Token count for a point prediction (requires --n).
    #[arg(long, allow_negative_numbers = true)]
    d: Option<f64>,
    /// Compute budget in FLOPs for an allocation prediction.
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<f64>,
    /// Over-training factor applied to the budget allocation (D = K * D*).
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
}

#[derive(clap::Args)]
struct ScheduleArgs {
    /// Token budget for the run.
    #[arg(long)]
    tokens: u64,
    /// Sequences per optimizer step.
    #[arg(long)]
    batch: u64,
    /// Tokens per sequence.
    #[arg(long)]
    seq_len: u64,
    /// Model width (hidden dimension) for learning-rate scaling.
    #[arg(long)]
    width: u64,
    /// Optional path for the optimizer/schedule config dump.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CorrelateArgs {
    /// Series CSV: first column the model id, then `nll*` columns and
    /// metric columns.
    series: PathBuf,
    /// Restrict to one NLL column: an integer k selects column `nll_k`,
    /// anything else is taken as a literal column name.
    #[arg(long)]
    variant: Option<String>,
    /// Optional output path for the correlation matrix CSV (raw and
    /// absolute rows per NLL column).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tokenize(args) => cmd_tokenize(&args),
        Command::Mix(args) => cmd_mix(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Schedule(args) => cmd_schedule(&args),
        Command::Correlate(args) => cmd_correlate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Loads a layout file, or the built-in layout when no path is given.
fn load_layout(path: Option<&Path>) -> Result<VocabLayout> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading layout file {}", p.display()))?;
            Ok(VocabLayout::from_key_value(&text)?)
        }
        None => Ok(VocabLayout::default()),
    }
}

fn cmd_tokenize(args: &TokenizeArgs) -> Result<()> {
    let layout = load_layout(args.layout.as_deref())?;
    let format: RenderFormat = args
        .format
        .parse::<RenderFormat>()
        .map_err(anyhow::Error::from)?;
    let file = File::open(&args.manifest)
        .with_context(|| format!("opening manifest {}", args.manifest.display()))?;

    let mut packer = Packer::new(args.seq_len, &layout)?;
    let mut writer = ShardWriter::create(&args.out, args.seq_len, &layout)?;
    let mut documents = 0u64;
    for item in parse_manifest(BufReader::new(file), &layout) {
        let doc = item.with_context(|| format!("manifest {}", args.manifest.display()))?;
        let rendered = render(&doc, format, &layout);
        for seq in packer.append(&doc.doc_id, format, &rendered)? {
            writer.append(&seq)?;
        }
        documents += 1;
    }
    let (_, summary) = packer.finish();
    let sequences = writer.finish()?;

    if documents == 0 {
        eprintln!(
            "warning: manifest {} contains no documents; wrote an empty shard",
            args.manifest.display()
        );
    }
    println!(
        "tokenized {documents} documents ({format}) -> {} sequences of {} tokens \
         ({} tokens packed, {} held back as remainder)",
        sequences, args.seq_len, summary.tokens_packed, summary.remainder_tokens
    );
    println!("shard written to {}", args.out.display());
    Ok(())
}

/// Per-source sizes gathered for `mix`: document count plus, when manifests
/// are available, the interleaved token count of each document in manifest
/// order (the order that defines `doc_index`).
#[derive(Default)]
struct SourceCensus {
    doc_counts: BTreeMap<String, u64>,
    doc_tokens: BTreeMap<String, Vec<u64>>,
}

impl SourceCensus {
    fn add_document(&mut self, doc: &Document, layout: &VocabLayout) {
        let counts = count_tokens(doc, layout);
        *self.doc_counts.entry(doc.source.clone()).or_insert(0) += 1;
        self.doc_tokens
            .entry(doc.source.clone())
            .or_default()
            .push(counts.interleaved_tokens as u64);
    }

    fn add_synthetic(&mut self, name: &str, count: u64) -> Result<()> {
        if self.doc_counts.insert(name.to_string(), count).is_some() {
            bail!("source '{name}' given more than once");
        }
        Ok(())
    }
}

fn parse_docs_flag(raw: &str) -> Result<(String, u64)> {
    let (name, count) = raw
        .split_once('=')
        .with_context(|| format!("--docs expects name=count, got '{raw}'"))?;
    let count: u64 = count
        .trim()
        .parse()
        .with_context(|| format!("bad document count in --docs '{raw}'"))?;
    Ok((name.trim().to_string(), count))
}

fn cmd_mix(args: &MixArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading mixture spec {}", args.spec.display()))?;
    let mut spec = MixtureSpec::from_key_value(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }

    let layout = load_layout(args.layout.as_deref())?;
    let mut census = SourceCensus::default();
    for path in &args.manifests {
        let file =
            File::open(path).with_context(|| format!("opening manifest {}", path.display()))?;
        for item in parse_manifest(BufReader::new(file), &layout) {
            let doc = item.with_context(|| format!("manifest {}", path.display()))?;
            census.add_document(&doc, &layout);
        }
    }
    for raw in &args.docs {
        let (name, count) = parse_docs_flag(raw)?;
        census.add_synthetic(&name, count)?;
    }

    let events = sample_schedule(&spec, &census.doc_counts, args.total_events)?;
    let out = File::create(&args.out)
        .with_context(|| format!("creating schedule CSV {}", args.out.display()))?;
    write_schedule_csv(BufWriter::new(out), &events)?;

    // Event shares always; token shares when manifests supplied the
    // per-document sizes the events refer to.
    let shares = realized_shares(&events);
    let mut token_totals: BTreeMap<String, u64> = BTreeMap::new();
    let mut have_tokens = !census.doc_tokens.is_empty();
    for ev in &events {
        match census.doc_tokens.get(&ev.source) {
            Some(sizes) => {
                *token_totals.entry(ev.source.clone()).or_insert(0) += sizes[ev.doc_index as usize];
            }
            None => have_tokens = false,
        }
    }
    let token_sum: u64 = token_totals.values().sum();

    println!(
        "scheduled {} events over {} sources (seed {}, max {} epochs)",
        events.len(),
        spec.entries.len(),
        spec.seed,
        spec.max_epochs
    );
    for (name, weight) in &spec.entries {
        let share = shares.get(name).copied().unwrap_or(0.0);
        let mut line = format!(
            "  {name}: target {weight:.4}, realized events {share:.4} \
             ({:+.4})",
            share - weight
        );
        if have_tokens && token_sum > 0 {
            let tok = *token_totals.get(name).unwrap_or(&0) as f64 / token_sum as f64;
            line.push_str(&format!(", realized tokens {tok:.4}"));
        }
        println!("{line}");
    }
    println!("schedule written to {}", args.out.display());
    Ok(())
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_law(name: &str, law: &PowerLawFit) {
    println!(
        "  {name} = {:.4e} * C^{:.4}  (r2 in log space {:.6})",
        law.coefficient, law.exponent, law.r2_log
    );
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let file = File::open(&args.runs)
        .with_context(|| format!("opening runs CSV {}", args.runs.display()))?;
    let runs = read_runs_csv(BufReader::new(file))?;
    println!("loaded {} runs from {}", runs.len(), args.runs.display());
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating output directory {}", args.out_dir.display()))?;

    match args.mode {
        FitMode::Isoflop => {
            let fit = isoflop_pipeline(&runs)?;
            println!("per-budget minima:");
            for opt in &fit.optima {
                println!(
                    "  C = {:.3e}: N* = {:.4e}, D* = {:.4e}{}",
                    opt.budget,
                    opt.n_star,
                    opt.d_star,
                    if opt.extrapolated {
                        "  [extrapolated beyond the sampled sizes]"
                    } else {
                        ""
                    }
                );
            }
            println!("allocation laws through the minima:");
            print_law("N*", &fit.laws.n_law);
            print_law("D*", &fit.laws.d_law);

            let mut optima_csv = Vec::new();
            write_optima_csv(&mut optima_csv, &fit.optima)?;
            write_output(
                &args.out_dir.join("optima.csv"),
                &String::from_utf8(optima_csv)?,
            )?;
            write_output(&args.out_dir.join("laws.kv"), &fit.laws.to_key_value())?;
        }
        FitMode::Powerlaw => {
            let n_points: Vec<(f64, f64)> = runs.iter().map(|r| (r.compute, r.n_params)).collect();
            let d_points: Vec<(f64, f64)> = runs.iter().map(|r| (r.compute, r.d_tokens)).collect();
            let laws = AllocationLaws::new(fit_power_law(&n_points)?, fit_power_law(&d_points)?);
            println!("power laws through the given optima:");
            print_law("N*", &laws.n_law);
            print_law("D*", &laws.d_law);
            write_output(&args.out_dir.join("laws.kv"), &laws.to_key_value())?;
        }
        FitMode::Parametric => {
            let fit = fit_parametric(&runs)?;
            println!("parametric loss surface L(N, D) = E + A/N^alpha + B/D^beta:");
            println!("  E = {:.4}", fit.e);
            println!("  A = {:.4e}, alpha = {:.4}", fit.a, fit.alpha);
            println!("  B = {:.4e}, beta = {:.4}", fit.b, fit.beta);
            println!(
                "  r2 (raw) = {:.6}, r2 (log) = {:.6}, objective = {:.6e}",
                fit.r2_raw, fit.r2_log, fit.objective
            );
            write_output(&args.out_dir.join("fit.kv"), &fit.to_key_value())?;

            // Plot-ready loss-versus-compute curve at the budget-consistent
            // optimal allocation, spanning the observed compute range.
            let laws = AllocationLaws::from_parametric(&fit)?;
            let (lo, hi) = runs.iter().fold((f64::MAX, f64::MIN), |(lo, hi), r| {
                (lo.min(r.compute), hi.max(r.compute))
            });
            let mut curve = String::from("compute,n_star,d_star,loss\n");
            let points = 40;
            for i in 0..=points {
                let c = lo * (hi / lo).powf(i as f64 / points as f64);
                let alloc = optimal_allocation(&laws, c)?;
                let loss = predict_loss(&fit, alloc.n_star, alloc.d_star)?;
                curve.push_str(&format!(
                    "{c:.8e},{:.8e},{:.8e},{loss:.8}\n",
                    alloc.n_star, alloc.d_star
                ));
            }
            write_output(&args.out_dir.join("curve.csv"), &curve)?;
        }
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let text = fs::read_to_string(&args.fit)
        .with_context(|| format!("reading fit file {}", args.fit.display()))?;
    let fit = ParametricFit::from_key_value(&text)?;

    match (args.n, args.d, args.budget) {
        (Some(n), Some(d), None) => {
            let loss = predict_loss(&fit, n, d)?;
            println!("predicted loss at N = {n:.4e}, D = {d:.4e}: {loss:.4}");
        }
        (None, None, Some(budget)) => {
            let laws = AllocationLaws::from_parametric(&fit)?;
            match args.k {
                None => {
                    let alloc = optimal_allocation(&laws, budget)?;
                    let loss = predict_loss(&fit, alloc.n_star, alloc.d_star)?;
                    println!("{}", alloc.summary());
                    println!("predicted loss: {loss:.4}");
                }
                Some(k) => {
                    let point = loss_at_overtraining(&fit, &laws, budget, k)?;
                    println!(
                        "budget {budget:.3e} FLOPs at K = {k}: N = {:.4e} params, \
                         D = {:.4e} tokens",
                        point.n_params, point.d_tokens
                    );
                    println!("predicted loss: {:.4}", point.loss);
                }
            }
        }
        (None, Some(_), _) | (Some(_), None, _) => {
            bail!("point predictions need both --n and --d")
        }
        (None, None, None) => bail!("give either --n and --d, or --budget"),
        _ => bail!("--n/--d and --budget are mutually exclusive"),
    }
    Ok(())
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<()> {
    let lr = scaled_lr(args.batch, args.width)?;
    let steps = train_steps(args.tokens, args.batch, args.seq_len)?;
    let spec = ScheduleSpec::new(lr, steps)?;

    let warm_end = (spec.warmup_frac * steps as f64).ceil() as u64;
    let stable_end = ((1.0 - spec.decay_frac) * steps as f64).floor() as u64;
    println!(
        "peak learning rate {lr:.6} (batch {}, width {})",
        args.batch, args.width
    );
    println!(
        "{} tokens / ({} x {} per step) -> {steps} steps",
        args.tokens, args.batch, args.seq_len
    );
    println!(
        "warmup: steps 0..{warm_end} (fraction {:.2}), multiplier {:.1} at step 0",
        spec.warmup_frac,
        wsd_multiplier(0, &spec)?
    );
    println!(
        "stable: steps {warm_end}..={stable_end} (fraction {:.2}) at multiplier 1",
        spec.stable_frac
    );
    println!(
        "decay:  steps {}..={steps} (fraction {:.2}), multiplier {:.1} at step {steps}",
        stable_end + 1,
        spec.decay_frac,
        wsd_multiplier(steps, &spec)?
    );

    if let Some(out) = &args.out {
        let mut dump = OptimizerConfig::default().to_key_value();
        dump.push_str(&spec.to_key_value());
        write_output(out, &dump)?;
    }
    Ok(())
}

/// Columns of a series table split into NLL rows and metric columns.
fn split_columns(table: &SeriesTable) -> (Vec<&str>, Vec<&str>) {
    let mut nll = Vec::new();
    let mut metrics = Vec::new();
    for (name, _) in &table.columns {
        if name.starts_with("nll") {
            nll.push(name.as_str());
        } else {
            metrics.push(name.as_str());
        }
    }
    (nll, metrics)
}

fn cmd_correlate(args: &CorrelateArgs) -> Result<()> {
    let file = File::open(&args.series)
        .with_context(|| format!("opening series CSV {}", args.series.display()))?;
    let table = read_series_csv(BufReader::new(file))?;
    let (mut nll_cols, metric_cols) = split_columns(&table);
    if nll_cols.is_empty() {
        bail!("series CSV has no column starting with 'nll'");
    }
    if metric_cols.is_empty() {
        bail!("series CSV has no metric column");
    }

    if let Some(raw) = &args.variant {
        let wanted = match raw.parse::<u8>() {
            Ok(k) => format!("nll_{k}"),
            Err(_) => raw.clone(),
        };
        if !nll_cols.contains(&wanted.as_str()) {
            bail!(
                "no column '{wanted}' in the series CSV (NLL columns: {})",
                nll_cols.join(", ")
            );
        }
        nll_cols.retain(|c| *c == wanted);
    }

    let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for nll_name in &nll_cols {
        let nll = table.column(nll_name).expect("listed column");
        println!("{nll_name}:");
        let mut raw_cells = Vec::with_capacity(metric_cols.len());
        let mut abs_cells = Vec::with_capacity(metric_cols.len());
        for metric_name in &metric_cols {
            let metric = table.column(metric_name).expect("listed column");
            match spearman(nll, metric) {
                Ok(rho) => {
                    let points: Vec<(f64, f64)> =
                        nll.iter().copied().zip(metric.iter().copied()).collect();
                    let trend = loglinear_trend(&points)?;
                    println!(
                        "  {metric_name}: rho = {rho:+.4} (|rho| = {:.4}), trend \
                         {metric_name} ~ {:+.4} * nll {:+.4} (r2 = {:.4})",
                        rho.abs(),
                        trend.slope,
                        trend.intercept,
                        trend.r2
                    );
                    raw_cells.push(Some(rho));
                    abs_cells.push(Some(rho.abs()));
                }
                Err(Error::UndefinedCorrelation(which)) => {
                    println!("  {metric_name}: undefined (constant {which} series)");
                    raw_cells.push(None);
                    abs_cells.push(None);
                }
                Err(e) => return Err(e.into()),
            }
        }
        rows.push((nll_name.to_string(), raw_cells));
        rows.push((format!("{nll_name}_abs"), abs_cells));
    }

    if let Some(out) = &args.out {
        let metric_names: Vec<String> = metric_cols.iter().map(|s| s.to_string()).collect();
        let mut csv = Vec::new();
        write_correlation_csv(&mut csv, &metric_names, &rows)?;
        write_output(out, &String::from_utf8(csv)?)?;
    }
    Ok(())
}
