//! Source-mixture planning and deterministic sampling schedules.
//!
//! A mixture assigns each data source a target share of training events.
//! [`plan_mixture`] builds those shares from a text ratio plus speech corpus
//! sizes; [`sample_schedule`] turns a mixture into a concrete, reproducible
//! stream of `(source, document, epoch, format)` events.
//!
//! Determinism contract: the schedule is a pure function of the spec, the
//! per-source document counts and the event count. The generator is a
//! SplitMix-style 64-bit mixer whose constants are fixed below and are part
//! of the format contract — changing them changes every schedule.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::interleave::RenderFormat;

/// Canonical source name given to the text corpus by [`plan_mixture`].
pub const TEXT_SOURCE: &str = "text";

/// Default epoch cap: repeating data stays effective up to about four
/// passes, so the scheduler refuses to start a fifth unless told otherwise.
pub const DEFAULT_MAX_EPOCHS: u32 = 4;

/// Golden-ratio increment of the SplitMix64 state advance.
const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
/// Finalizer multipliers (Stafford mix 13 variant used by SplitMix64).
const SPLITMIX_MUL1: u64 = 0xBF58_476D_1CE4_E5B9;
const SPLITMIX_MUL2: u64 = 0x94D0_49BB_1331_11EB;

/// Minimal SplitMix64 generator.
///
/// Hand-rolled rather than pulled from a crate because the exact output
/// stream is a compatibility surface: schedules must be bit-identical across
/// releases and platforms, so the generator cannot silently change with a
/// dependency upgrade.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform draw in `[0, bound)` by rejection sampling.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }
}

/// SplitMix64 output finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(SPLITMIX_MUL1);
    z = (z ^ (z >> 27)).wrapping_mul(SPLITMIX_MUL2);
    z ^ (z >> 31)
}

/// Seed for the per-(source, epoch) permutation substream.
///
/// Part of the format contract: documented so independent implementations
/// can reproduce schedules exactly.
fn substream_seed(seed: u64, source_index: usize, epoch: u32) -> u64 {
    mix64(seed.wrapping_add(mix64(((source_index as u64) << 32) | epoch as u64)))
}

/// Target sampling shares over named sources.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// `(source, weight)` pairs in draw order; weights sum to 1.
    pub entries: Vec<(String, f64)>,
    pub seed: u64,
    pub max_epochs: u32,
}

impl MixtureSpec {
    /// Checks the weight simplex and source names.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("mixture has no sources".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, w) in &self.entries {
            if name.is_empty() {
                return Err(Error::Config("mixture source name is empty".to_string()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate mixture source '{name}'")));
            }
            if !w.is_finite() || *w <= 0.0 || *w > 1.0 {
                return Err(Error::Config(format!(
                    "weight for source '{name}' is {w}, expected a fraction in (0, 1]"
                )));
            }
        }
        let sum: f64 = self.entries.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "mixture weights sum to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(())
    }

    pub fn weight_of(&self, source: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(name, _)| name == source)
            .map(|&(_, w)| w)
    }

    /// Serializes as `key = value` lines; source order is preserved.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("max_epochs = {}\n", self.max_epochs));
        for (name, w) in &self.entries {
            out.push_str(&format!("source.{name} = {w:.17}\n"));
        }
        out
    }

    /// Parses the `key = value` form written by [`MixtureSpec::to_key_value`].
    pub fn from_key_value(text: &str) -> Result<MixtureSpec> {
        let mut seed: Option<u64> = None;
        let mut max_epochs = DEFAULT_MAX_EPOCHS;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                msg: format!("expected 'key = value', got '{raw}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |msg: String| Error::Parse {
                line: i as u64 + 1,
                msg,
            };
            match key {
                "seed" => {
                    seed = Some(
                        value
                            .parse()
                            .map_err(|e| bad(format!("bad seed '{value}': {e}")))?,
                    )
                }
                "max_epochs" => {
                    max_epochs = value
                        .parse()
                        .map_err(|e| bad(format!("bad max_epochs '{value}': {e}")))?
                }
                _ => match key.strip_prefix("source.") {
                    Some(name) => entries.push((
                        name.to_string(),
                        value
                            .parse()
                            .map_err(|e| bad(format!("bad weight '{value}': {e}")))?,
                    )),
                    None => return Err(bad(format!("unknown key '{key}'"))),
                },
            }
        }
        let spec = MixtureSpec {
            entries,
            seed: seed.ok_or_else(|| Error::Config("mixture spec is missing a seed".into()))?,
            max_epochs,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Builds a mixture from a text share plus speech corpus sizes.
///
/// The text source gets exactly `text_ratio`; each speech source gets the
/// remaining mass in proportion to its token count. Entry order is the text
/// source first, then speech sources by name. Seed defaults to 0 and
/// `max_epochs` to [`DEFAULT_MAX_EPOCHS`]; set them on the returned spec.
pub fn plan_mixture(text_ratio: f64, speech_sizes: &BTreeMap<String, f64>) -> Result<MixtureSpec> {
    if !(0.0..1.0).contains(&text_ratio) {
        return Err(Error::Domain(format!(
            "text_ratio must lie in [0, 1), got {text_ratio}"
        )));
    }
    let total: f64 = speech_sizes.values().sum();
    if speech_sizes.is_empty() || total <= 0.0 {
        return Err(Error::Config(
            "speech sources must have positive total size".to_string(),
        ));
    }
    for (name, size) in speech_sizes {
        if !size.is_finite() || *size < 0.0 {
            return Err(Error::Config(format!(
                "speech source '{name}' has invalid size {size}"
            )));
        }
    }
    let mut entries = Vec::with_capacity(speech_sizes.len() + 1);
    if text_ratio > 0.0 {
        entries.push((TEXT_SOURCE.to_string(), text_ratio));
    }
    for (name, size) in speech_sizes {
        if *size > 0.0 {
            entries.push((name.clone(), (1.0 - text_ratio) * size / total));
        }
    }
    let spec = MixtureSpec {
        entries,
        seed: 0,
        max_epochs: DEFAULT_MAX_EPOCHS,
    };
    spec.validate()?;
    Ok(spec)
}

/// One scheduled training event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleEvent {
    pub source: String,
    /// Document index within the source, `0..doc_count`.
    pub doc_index: u64,
    /// 1-based epoch over the source.
    pub epoch: u32,
    pub format: RenderFormat,
}

/// Per-source traversal state: a seed-derived permutation per epoch,
/// consumed without replacement and reshuffled on epoch turnover.
struct SourceState {
    name: String,
    index: usize,
    docs: u64,
    epoch: u32,
    order: Vec<u64>,
    pos: usize,
    emitted: u64,
}

impl SourceState {
    fn new(name: &str, index: usize, docs: u64, seed: u64) -> SourceState {
        let mut s = SourceState {
            name: name.to_string(),
            index,
            docs,
            epoch: 1,
            order: Vec::new(),
            pos: 0,
            emitted: 0,
        };
        s.shuffle(seed);
        s
    }

    /// Fisher–Yates permutation of the document indices for the current
    /// epoch, seeded from (schedule seed, source index, epoch).
    fn shuffle(&mut self, seed: u64) {
        let mut g = SplitMix64::new(substream_seed(seed, self.index, self.epoch));
        self.order = (0..self.docs).collect();
        for i in (1..self.order.len()).rev() {
            let j = g.next_below(i as u64 + 1) as usize;
            self.order.swap(i, j);
        }
        self.pos = 0;
    }
}

/// Lazily yields schedule events; see [`sample_schedule`].
pub struct ScheduleSampler {
    max_epochs: u32,
    seed: u64,
    cumulative: Vec<f64>,
    sources: Vec<SourceState>,
    draw: SplitMix64,
    remaining: u64,
    emitted: u64,
    failed: bool,
}

impl ScheduleSampler {
    pub fn new(
        spec: &MixtureSpec,
        source_doc_counts: &BTreeMap<String, u64>,
        total_events: u64,
    ) -> Result<ScheduleSampler> {
        spec.validate()?;
        if total_events == 0 {
            return Err(Error::Config("total_events must be at least 1".to_string()));
        }
        let mut cumulative = Vec::with_capacity(spec.entries.len());
        let mut sources = Vec::with_capacity(spec.entries.len());
        let mut acc = 0.0;
        for (i, (name, w)) in spec.entries.iter().enumerate() {
            let docs = *source_doc_counts.get(name).ok_or_else(|| {
                Error::Config(format!("no document count for mixture source '{name}'"))
            })?;
            if docs == 0 {
                return Err(Error::Config(format!("mixture source '{name}' is empty")));
            }
            acc += w;
            cumulative.push(acc);
            sources.push(SourceState::new(name, i, docs, spec.seed));
        }
        // Guard against float drift: the final bucket absorbs everything.
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(ScheduleSampler {
            max_epochs: spec.max_epochs,
            seed: spec.seed,
            cumulative,
            sources,
            draw: SplitMix64::new(spec.seed),
            remaining: total_events,
            emitted: 0,
            failed: false,
        })
    }

    fn next_event(&mut self) -> Result<SampleEvent> {
        let u = self.draw.next_f64();
        let k = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        let seed = self.seed;
        let max_epochs = self.max_epochs;
        let emitted_total = self.emitted;
        let src = &mut self.sources[k];
        if src.pos >= src.order.len() {
            if src.epoch >= max_epochs {
                return Err(Error::Exhausted {
                    source_name: src.name.clone(),
                    events_emitted: emitted_total,
                    docs: src.docs,
                    epochs_completed: src.epoch,
                    max_epochs,
                });
            }
            src.epoch += 1;
            src.shuffle(seed);
        }
        let doc_index = src.order[src.pos];
        src.pos += 1;
        src.emitted += 1;
        // Alternates per (doc, epoch) so both renderings of a document
        // appear across consecutive epochs.
        let format = if (doc_index + src.epoch as u64).is_multiple_of(2) {
            RenderFormat::TextFirst
        } else {
            RenderFormat::AudioFirst
        };
        let event = SampleEvent {
            source: src.name.clone(),
            doc_index,
            epoch: src.epoch,
            format,
        };
        self.emitted += 1;
        Ok(event)
    }
}

impl Iterator for ScheduleSampler {
    type Item = Result<SampleEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 || self.failed {
            return None;
        }
        self.remaining -= 1;
        let ev = self.next_event();
        if ev.is_err() {
            self.failed = true;
        }
        Some(ev)
    }
}

/// Materializes a full schedule. Identical inputs produce identical output,
/// byte for byte once serialized.
pub fn sample_schedule(
    spec: &MixtureSpec,
    source_doc_counts: &BTreeMap<String, u64>,
    total_events: u64,
) -> Result<Vec<SampleEvent>> {
    ScheduleSampler::new(spec, source_doc_counts, total_events)?.collect()
}

/// Realized per-source event shares of a schedule.
pub fn realized_shares(events: &[SampleEvent]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for ev in events {
        *counts.entry(ev.source.clone()).or_insert(0) += 1;
    }
    let n = events.len().max(1) as f64;
    counts.into_iter().map(|(k, v)| (k, v as f64 / n)).collect()
}

/// Writes a schedule as an audit CSV: `event,source,doc_index,epoch,format`.
pub fn write_schedule_csv<W: Write>(writer: W, events: &[SampleEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["event", "source", "doc_index", "epoch", "format"])?;
    for (i, ev) in events.iter().enumerate() {
        w.write_record([
            i.to_string(),
            ev.source.clone(),
            ev.doc_index.to_string(),
            ev.epoch.to_string(),
            ev.format.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speech_sizes() -> BTreeMap<String, f64> {
        // Billions of tokens; shares 51.6% / 28.8% / 14.6% of the 95%
        // speech mass.
        BTreeMap::from([
            ("Yodas".to_string(), 131.0),
            ("Emilia-Yodas".to_string(), 73.1),
            ("Emilia".to_string(), 37.1),
        ])
    }

    #[test]
    fn plan_reproduces_published_weights() {
        let spec = plan_mixture(0.05, &speech_sizes()).unwrap();
        let w = |s: &str| spec.weight_of(s).unwrap();
        assert!((w(TEXT_SOURCE) - 0.05).abs() < 1e-12);
        assert!((w("Yodas") - 0.516).abs() < 1e-3, "{}", w("Yodas"));
        assert!((w("Emilia-Yodas") - 0.288).abs() < 1e-3);
        assert!((w("Emilia") - 0.146).abs() < 1e-3);
        assert_eq!(spec.entries[0].0, TEXT_SOURCE);
        assert_eq!(spec.max_epochs, DEFAULT_MAX_EPOCHS);
    }

    #[test]
    fn plan_zero_text_ratio_is_speech_only() {
        let spec = plan_mixture(0.0, &speech_sizes()).unwrap();
        assert!(spec.weight_of(TEXT_SOURCE).is_none());
        let sum: f64 = spec.entries.iter().map(|(_, w)| w).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((spec.weight_of("Yodas").unwrap() - 131.0 / 241.2).abs() < 1e-12);
    }

    #[test]
    fn plan_single_source_even_split() {
        let sizes = BTreeMap::from([("only".to_string(), 10.0)]);
        let spec = plan_mixture(0.5, &sizes).unwrap();
        assert_eq!(spec.entries.len(), 2);
        assert!((spec.weight_of(TEXT_SOURCE).unwrap() - 0.5).abs() < 1e-12);
        assert!((spec.weight_of("only").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn plan_rejects_bad_inputs() {
        assert!(plan_mixture(1.0, &speech_sizes()).is_err());
        assert!(plan_mixture(-0.1, &speech_sizes()).is_err());
        assert!(plan_mixture(0.05, &BTreeMap::new()).is_err());
        let zero = BTreeMap::from([("a".to_string(), 0.0)]);
        assert!(plan_mixture(0.05, &zero).is_err());
    }

    #[test]
    fn validate_rejects_broken_simplex() {
        let mut spec = plan_mixture(0.05, &speech_sizes()).unwrap();
        spec.entries[0].1 += 0.01;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn schedule_is_deterministic() {
        let mut spec = plan_mixture(0.05, &speech_sizes()).unwrap();
        spec.seed = 42;
        let counts = BTreeMap::from([
            (TEXT_SOURCE.to_string(), 500u64),
            ("Yodas".to_string(), 5_000),
            ("Emilia-Yodas".to_string(), 3_000),
            ("Emilia".to_string(), 1_500),
        ]);
        let a = sample_schedule(&spec, &counts, 10_000).unwrap();
        let b = sample_schedule(&spec, &counts, 10_000).unwrap();
        assert_eq!(a, b);

        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_schedule_csv(&mut csv_a, &a).unwrap();
        write_schedule_csv(&mut csv_b, &b).unwrap();
        assert_eq!(csv_a, csv_b);

        spec.seed = 43;
        let c = sample_schedule(&spec, &counts, 10_000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_source_visits_every_doc_once_per_epoch() {
        let spec = MixtureSpec {
            entries: vec![("A".to_string(), 1.0)],
            seed: 7,
            max_epochs: 4,
        };
        let counts = BTreeMap::from([("A".to_string(), 10u64)]);
        let events = sample_schedule(&spec, &counts, 10).unwrap();
        let mut seen: Vec<u64> = events.iter().map(|e| e.doc_index).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(events.iter().all(|e| e.epoch == 1));
    }

    #[test]
    fn epochs_reshuffle_and_alternate_format() {
        let spec = MixtureSpec {
            entries: vec![("A".to_string(), 1.0)],
            seed: 11,
            max_epochs: 2,
        };
        let counts = BTreeMap::from([("A".to_string(), 64u64)]);
        let events = sample_schedule(&spec, &counts, 128).unwrap();
        let (e1, e2) = events.split_at(64);
        let order1: Vec<u64> = e1.iter().map(|e| e.doc_index).collect();
        let order2: Vec<u64> = e2.iter().map(|e| e.doc_index).collect();
        assert_ne!(order1, order2, "epochs should reshuffle");
        for ev in events.iter() {
            let want = if (ev.doc_index + ev.epoch as u64).is_multiple_of(2) {
                RenderFormat::TextFirst
            } else {
                RenderFormat::AudioFirst
            };
            assert_eq!(ev.format, want);
        }
        // Across the two epochs each document appears in both formats.
        let f1: BTreeMap<u64, RenderFormat> = e1.iter().map(|e| (e.doc_index, e.format)).collect();
        let f2: BTreeMap<u64, RenderFormat> = e2.iter().map(|e| (e.doc_index, e.format)).collect();
        for (doc, f) in &f1 {
            assert_ne!(f, &f2[doc]);
        }
    }

    #[test]
    fn exhaustion_reports_counts() {
        let spec = MixtureSpec {
            entries: vec![("A".to_string(), 1.0)],
            seed: 1,
            max_epochs: 2,
        };
        let counts = BTreeMap::from([("A".to_string(), 3u64)]);
        let err = sample_schedule(&spec, &counts, 7).unwrap_err();
        match err {
            Error::Exhausted {
                source_name,
                events_emitted,
                docs,
                epochs_completed,
                max_epochs,
            } => {
                assert_eq!(source_name, "A");
                assert_eq!(events_emitted, 6);
                assert_eq!(docs, 3);
                assert_eq!(epochs_completed, 2);
                assert_eq!(max_epochs, 2);
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn frequencies_converge_to_weights() {
        let spec = MixtureSpec {
            entries: vec![("A".to_string(), 0.9), ("B".to_string(), 0.1)],
            seed: 123,
            max_epochs: 4,
        };
        let counts = BTreeMap::from([("A".to_string(), 40_000u64), ("B".to_string(), 10_000u64)]);
        let events = sample_schedule(&spec, &counts, 100_000).unwrap();
        let shares = realized_shares(&events);
        assert!((shares["A"] - 0.9).abs() < 0.005, "{}", shares["A"]);
        assert!((shares["B"] - 0.1).abs() < 0.005, "{}", shares["B"]);
    }

    #[test]
    fn spec_file_round_trip() {
        let mut spec = plan_mixture(0.05, &speech_sizes()).unwrap();
        spec.seed = 99;
        spec.max_epochs = 3;
        let text = spec.to_key_value();
        let back = MixtureSpec::from_key_value(&text).unwrap();
        assert_eq!(back.seed, 99);
        assert_eq!(back.max_epochs, 3);
        assert_eq!(back.entries.len(), spec.entries.len());
        for ((n1, w1), (n2, w2)) in spec.entries.iter().zip(&back.entries) {
            assert_eq!(n1, n2);
            assert!((w1 - w2).abs() < 1e-15);
        }
    }

    #[test]
    fn spec_file_requires_seed_and_valid_weights() {
        assert!(MixtureSpec::from_key_value("source.a = 1.0\n").is_err());
        assert!(MixtureSpec::from_key_value("seed = 1\nsource.a = 0.4\n").is_err());
        let ok = MixtureSpec::from_key_value("# comment\nseed = 1\nsource.a = 1.0\n").unwrap();
        assert_eq!(ok.entries, vec![("a".to_string(), 1.0)]);
        assert_eq!(ok.max_epochs, DEFAULT_MAX_EPOCHS);
    }

    #[test]
    fn splitmix_reference_vector() {
        // First outputs for seed 0; pinned so any change to the generator
        // (and therefore to every schedule) is caught loudly.
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
    }
}
