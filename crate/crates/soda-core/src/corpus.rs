//! Document manifests and token-budget accounting.
//!
//! The ingestion format is JSON lines: one self-contained document record per
//! line, with fields `doc_id`, `source` and `utterances`, each utterance a
//! pre-tokenized transcript (`text_ids`) plus a frames x codebooks code
//! matrix (`codes`, row-major). `duration_s` is optional and must agree with
//! `frames / 12.5` within one frame when present.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{VocabLayout, FRAME_RATE_HZ};

/// One transcribed speech segment: text ids plus its code matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text_ids: Vec<u32>,
    /// Row-major frames x codebooks matrix.
    pub codes: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.codes.len()
    }

    /// Duration in seconds, derived from the frame count when not supplied.
    pub fn duration_s(&self) -> f64 {
        self.duration_s
            .unwrap_or(self.codes.len() as f64 / FRAME_RATE_HZ)
    }
}

/// An ordered list of utterances from one source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: String,
    pub utterances: Vec<Utterance>,
}

impl Document {
    /// Checks the document against a vocabulary layout: at least one
    /// utterance, text ids inside the text region, valid code matrix,
    /// duration consistent with the frame count.
    pub fn validate(&self, layout: &VocabLayout) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::Validation {
                line: None,
                msg: format!("document '{}' has no utterances", self.doc_id),
            });
        }
        for (u, utt) in self.utterances.iter().enumerate() {
            for &id in &utt.text_ids {
                if id >= layout.audio_base() {
                    return Err(Error::Validation {
                        line: None,
                        msg: format!(
                            "document '{}', utterance {u}: text id {id} is not below \
                             audio_base {}",
                            self.doc_id,
                            layout.audio_base()
                        ),
                    });
                }
            }
            layout
                .flatten_codes(&utt.codes)
                .map_err(|e| Error::Validation {
                    line: None,
                    msg: format!("document '{}', utterance {u}: {e}", self.doc_id),
                })?;
            if let Some(d) = utt.duration_s {
                let derived = utt.codes.len() as f64 / FRAME_RATE_HZ;
                if (d - derived).abs() > 1.0 / FRAME_RATE_HZ {
                    return Err(Error::Validation {
                        line: None,
                        msg: format!(
                            "document '{}', utterance {u}: duration_s {d} disagrees with \
                             {} frames ({derived:.3} s) by more than one frame",
                            self.doc_id,
                            utt.codes.len()
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-document token counts under a given layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenCounts {
    pub audio_tokens: u64,
    pub text_tokens: u64,
    /// Framing tokens per rendering: four utterance delimiters per utterance
    /// plus the document begin/end pair.
    pub framing_tokens: u64,
    /// Tokens across both renderings (audio-first + text-first).
    pub interleaved_tokens: u64,
}

/// Counts a document's tokens. `interleaved_tokens` covers both render
/// formats, so each document is counted twice.
pub fn count_tokens(doc: &Document, layout: &VocabLayout) -> TokenCounts {
    let audio: u64 = doc
        .utterances
        .iter()
        .map(|u| u.frames() as u64 * layout.num_codebooks() as u64)
        .sum();
    let text: u64 = doc.utterances.iter().map(|u| u.text_ids.len() as u64).sum();
    let framing = 4 * doc.utterances.len() as u64 + 2;
    TokenCounts {
        audio_tokens: audio,
        text_tokens: text,
        framing_tokens: framing,
        interleaved_tokens: 2 * (audio + text + framing),
    }
}

/// Running totals for one data source.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceStats {
    pub source: String,
    pub documents: u64,
    pub audio_tokens: u64,
    pub text_tokens: u64,
    pub interleaved_tokens: u64,
}

impl SourceStats {
    pub fn new(source: impl Into<String>) -> SourceStats {
        SourceStats {
            source: source.into(),
            ..SourceStats::default()
        }
    }

    pub fn absorb(&mut self, counts: TokenCounts) {
        self.documents += 1;
        self.audio_tokens += counts.audio_tokens;
        self.text_tokens += counts.text_tokens;
        self.interleaved_tokens += counts.interleaved_tokens;
    }

    /// Commutative merge of two partial tallies for the same source.
    pub fn merge(&mut self, other: &SourceStats) {
        self.documents += other.documents;
        self.audio_tokens += other.audio_tokens;
        self.text_tokens += other.text_tokens;
        self.interleaved_tokens += other.interleaved_tokens;
    }
}

/// Lazy, order-preserving reader over a JSON-lines manifest.
///
/// Each item is one validated [`Document`]; malformed or invalid lines are
/// reported with their 1-based line number.
pub struct ManifestReader<R> {
    lines: std::io::Lines<R>,
    layout: VocabLayout,
    line_no: u64,
}

/// Opens a manifest stream for reading against the given layout.
pub fn parse_manifest<R: BufRead>(reader: R, layout: &VocabLayout) -> ManifestReader<R> {
    ManifestReader {
        lines: reader.lines(),
        layout: layout.clone(),
        line_no: 0,
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = match serde_json::from_str(&line) {
                Ok(d) => d,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line_no,
                        msg: e.to_string(),
                    }))
                }
            };
            return Some(match doc.validate(&self.layout) {
                Ok(()) => Ok(doc),
                Err(Error::Validation { msg, .. }) => Err(Error::Validation {
                    line: Some(self.line_no),
                    msg,
                }),
                Err(e) => Err(e),
            });
        }
    }
}

/// Serializes one document as a manifest line.
pub fn to_manifest_line(doc: &Document) -> String {
    serde_json::to_string(doc).expect("document serialization cannot fail")
}
