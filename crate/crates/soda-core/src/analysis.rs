//! Validation-NLL variants and the statistics relating NLL to downstream
//! metrics.
//!
//! A scored token is a `(role, data format, logprob)` triple produced by a
//! model evaluation. Six NLL variants select different token subsets; each
//! variant is a mask over roles and data formats. The stream is expected to
//! exclude each document's very first token (it has no conditional context),
//! which is a scoring-side convention rather than something this module can
//! check from the triples alone.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vocab::TokenRole;

/// What kind of validation stream a token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataFormat {
    AudioFirst,
    TextFirst,
    AudioOnly,
    TextOnly,
}

impl DataFormat {
    pub const ALL: [DataFormat; 4] = [
        DataFormat::AudioFirst,
        DataFormat::TextFirst,
        DataFormat::AudioOnly,
        DataFormat::TextOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DataFormat::AudioFirst => "audio-first",
            DataFormat::TextFirst => "text-first",
            DataFormat::AudioOnly => "audio-only",
            DataFormat::TextOnly => "text-only",
        }
    }

    /// Both interleaved (audio+text) stream kinds.
    pub fn is_interleaved(self) -> bool {
        matches!(self, DataFormat::AudioFirst | DataFormat::TextFirst)
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<DataFormat> {
        match s.replace('_', "-").as_str() {
            "audio-first" => Ok(DataFormat::AudioFirst),
            "text-first" => Ok(DataFormat::TextFirst),
            "audio-only" => Ok(DataFormat::AudioOnly),
            "text-only" => Ok(DataFormat::TextOnly),
            other => Err(Error::Config(format!("unknown data format '{other}'"))),
        }
    }
}

/// One model-scored token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredToken {
    pub role: TokenRole,
    pub data_format: DataFormat,
    /// Log-probability in nats; finite and at most 0.
    pub logprob: f64,
}

impl ScoredToken {
    pub fn validate(&self) -> Result<()> {
        if !self.logprob.is_finite() || self.logprob > 0.0 {
            return Err(Error::Validation {
                line: None,
                msg: format!("logprob must be finite and <= 0, got {}", self.logprob),
            });
        }
        Ok(())
    }
}

/// The six NLL selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NllVariant {
    /// 1: every token of the interleaved streams.
    AllInterleaved,
    /// 2: semantic + acoustic tokens of the interleaved streams.
    AudioInterleaved,
    /// 3: semantic tokens of the interleaved streams.
    SemanticInterleaved,
    /// 4: semantic + acoustic tokens of audio-only streams.
    AudioOnAudioOnly,
    /// 5: text tokens of the interleaved streams.
    TextInterleaved,
    /// 6: text tokens of text-only streams.
    TextOnTextOnly,
}

impl NllVariant {
    pub const ALL: [NllVariant; 6] = [
        NllVariant::AllInterleaved,
        NllVariant::AudioInterleaved,
        NllVariant::SemanticInterleaved,
        NllVariant::AudioOnAudioOnly,
        NllVariant::TextInterleaved,
        NllVariant::TextOnTextOnly,
    ];

    /// Conventional 1-based index.
    pub fn index(self) -> u8 {
        match self {
            NllVariant::AllInterleaved => 1,
            NllVariant::AudioInterleaved => 2,
            NllVariant::SemanticInterleaved => 3,
            NllVariant::AudioOnAudioOnly => 4,
            NllVariant::TextInterleaved => 5,
            NllVariant::TextOnTextOnly => 6,
        }
    }

    pub fn from_index(index: u8) -> Result<NllVariant> {
        NllVariant::ALL
            .into_iter()
            .find(|v| v.index() == index)
            .ok_or_else(|| Error::Config(format!("NLL variant index must be 1..=6, got {index}")))
    }

    pub fn label(self) -> &'static str {
        match self {
            NllVariant::AllInterleaved => "all tokens, interleaved data",
            NllVariant::AudioInterleaved => "audio tokens, interleaved data",
            NllVariant::SemanticInterleaved => "semantic tokens, interleaved data",
            NllVariant::AudioOnAudioOnly => "audio tokens, audio-only data",
            NllVariant::TextInterleaved => "text tokens, interleaved data",
            NllVariant::TextOnTextOnly => "text tokens, text-only data",
        }
    }

    /// Roles the variant selects. Special tokens count only toward the
    /// unrestricted variant 1.
    pub fn roles(self) -> &'static [TokenRole] {
        match self {
            NllVariant::AllInterleaved => &[
                TokenRole::Text,
                TokenRole::Semantic,
                TokenRole::Acoustic,
                TokenRole::Special,
            ],
            NllVariant::AudioInterleaved | NllVariant::AudioOnAudioOnly => {
                &[TokenRole::Semantic, TokenRole::Acoustic]
            }
            NllVariant::SemanticInterleaved => &[TokenRole::Semantic],
            NllVariant::TextInterleaved | NllVariant::TextOnTextOnly => &[TokenRole::Text],
        }
    }

    /// Data formats the variant selects.
    pub fn formats(self) -> &'static [DataFormat] {
        match self {
            NllVariant::AllInterleaved
            | NllVariant::AudioInterleaved
            | NllVariant::SemanticInterleaved
            | NllVariant::TextInterleaved => &[DataFormat::AudioFirst, DataFormat::TextFirst],
            NllVariant::AudioOnAudioOnly => &[DataFormat::AudioOnly],
            NllVariant::TextOnTextOnly => &[DataFormat::TextOnly],
        }
    }

    pub fn matches(self, token: &ScoredToken) -> bool {
        self.roles().contains(&token.role) && self.formats().contains(&token.data_format)
    }
}

/// Streaming mean-NLL reduction for one variant. Merging partial
/// accumulators is exact: only a count and a sum are kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllAccumulator {
    pub variant: NllVariant,
    count: u64,
    sum: f64,
}

impl NllAccumulator {
    pub fn new(variant: NllVariant) -> NllAccumulator {
        NllAccumulator {
            variant,
            count: 0,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, token: &ScoredToken) -> Result<()> {
        token.validate()?;
        if self.variant.matches(token) {
            self.count += 1;
            self.sum += -token.logprob;
        }
        Ok(())
    }

    /// Combines two partial reductions over disjoint chunks.
    pub fn merge(&mut self, other: &NllAccumulator) {
        debug_assert_eq!(self.variant, other.variant);
        self.count += other.count;
        self.sum += other.sum;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptySelection {
                variant: self.variant.index(),
                label: self.variant.label(),
            });
        }
        Ok(self.sum / self.count as f64)
    }
}

/// Mean negative log-probability (nats/token) over the variant's mask.
pub fn variant_nll(tokens: &[ScoredToken], variant: NllVariant) -> Result<f64> {
    let mut acc = NllAccumulator::new(variant);
    for t in tokens {
        acc.add(t)?;
    }
    acc.mean()
}

/// Average ranks (1-based), ties sharing their average position.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the mean of ranks i+1..=j+1.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(Error::UndefinedCorrelation("x"));
    }
    if syy <= 0.0 {
        return Err(Error::UndefinedCorrelation("y"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rank correlation needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    for (name, series) in [("x", x), ("y", y)] {
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "series '{name}' contains a non-finite value"
            )));
        }
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Ordinary least-squares line of metric on NLL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl TrendFit {
    pub fn predict(&self, nll: f64) -> f64 {
        self.slope * nll + self.intercept
    }

    /// Signed vertical distance of a (possibly held-out) point from the
    /// line; positive means the point sits above the trend.
    pub fn residual(&self, nll: f64, metric: f64) -> f64 {
        metric - self.predict(nll)
    }
}

/// Fits the trend line through `(nll, metric)` points.
pub fn loglinear_trend(points: &[(f64, f64)]) -> Result<TrendFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "trend fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx < 1e-24 {
        return Err(Error::InsufficientData(
            "trend fit needs at least 2 distinct abscissae".to_string(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - my) * (y - my)).sum();
    let r2 = if ss_tot < 1e-24 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(TrendFit {
        slope,
        intercept,
        r2,
    })
}

/// One model's NLL plus its downstream metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub model: String,
    pub nll: f64,
    pub metrics: BTreeMap<String, f64>,
}

impl MetricSeries {
    pub fn validate(&self) -> Result<()> {
        if !self.nll.is_finite() || self.nll <= 0.0 {
            return Err(Error::Validation {
                line: None,
                msg: format!(
                    "model '{}': nll must be positive, got {}",
                    self.model, self.nll
                ),
            });
        }
        Ok(())
    }
}

/// A numeric table keyed by column name; the first CSV column holds model
/// identifiers, every other column is numeric.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub models: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl SeriesTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Typed per-model view using `nll_column` as the NLL; every column not
    /// starting with "nll" becomes a metric.
    pub fn to_series(&self, nll_column: &str) -> Result<Vec<MetricSeries>> {
        let nll = self
            .column(nll_column)
            .ok_or_else(|| Error::Config(format!("series table has no column '{nll_column}'")))?;
        let mut out = Vec::with_capacity(self.models.len());
        for (i, model) in self.models.iter().enumerate() {
            let metrics = self
                .columns
                .iter()
                .filter(|(n, _)| !n.starts_with("nll"))
                .map(|(n, v)| (n.clone(), v[i]))
                .collect();
            let series = MetricSeries {
                model: model.clone(),
                nll: nll[i],
                metrics,
            };
            series.validate()?;
            out.push(series);
        }
        Ok(out)
    }
}

/// Reads a model/NLL/metric table. The first column is taken as the model
/// id regardless of its header; all remaining columns must parse as
/// numbers.
pub fn read_series_csv<R: Read>(reader: R) -> Result<SeriesTable> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "series CSV needs a model column plus at least one numeric column".to_string(),
        });
    }
    let names: Vec<String> = headers
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let mut models = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = names.into_iter().map(|n| (n, Vec::new())).collect();
    for (i, record) in r.records().enumerate() {
        let line = i as u64 + 2;
        let record = record?;
        models.push(
            record
                .get(0)
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: "missing model field".to_string(),
                })?
                .to_string(),
        );
        for (k, (name, values)) in columns.iter_mut().enumerate() {
            let raw = record.get(k + 1).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing value for column '{name}'"),
            })?;
            values.push(raw.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad value '{raw}' in column '{name}': {e}"),
            })?);
        }
    }
    Ok(SeriesTable { models, columns })
}

/// Reads scored tokens from CSV with header `role,data_format,logprob`.
pub fn read_scored_csv<R: Read>(reader: R) -> Result<Vec<ScoredToken>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (role_col, fmt_col, lp_col) = match (col("role"), col("data_format"), col("logprob")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "scored-token CSV needs columns role, data_format, logprob".to_string(),
            })
        }
    };
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i as u64 + 2;
        let record = record?;
        let get = |idx: usize, what: &str| {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing {what} field"),
            })
        };
        let token = ScoredToken {
            role: get(role_col, "role")?
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("{e}"),
                })?,
            data_format: get(fmt_col, "data_format")?
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("{e}"),
                })?,
            logprob: get(lp_col, "logprob")?
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad logprob: {e}"),
                })?,
        };
        token.validate().map_err(|e| Error::Validation {
            line: Some(line),
            msg: e.to_string(),
        })?;
        out.push(token);
    }
    Ok(out)
}

/// Writes scored tokens with the canonical header.
pub fn write_scored_csv<W: Write>(writer: W, tokens: &[ScoredToken]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["role", "data_format", "logprob"])?;
    for t in tokens {
        w.write_record([
            t.role.name().to_string(),
            t.data_format.name().to_string(),
            format!("{:.17e}", t.logprob),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a correlation matrix (rows × metrics). `None` cells are written
/// as `undefined` (constant series).
pub fn write_correlation_csv<W: Write>(
    writer: W,
    metric_names: &[String],
    rows: &[(String, Vec<Option<f64>>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["series".to_string()];
    header.extend(metric_names.iter().cloned());
    w.write_record(&header)?;
    for (label, cells) in rows {
        let mut record = vec![label.clone()];
        for cell in cells {
            record.push(match cell {
                Some(v) => format!("{v:.6}"),
                None => "undefined".to_string(),
            });
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
