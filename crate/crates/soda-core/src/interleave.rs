//! Rendering documents into token streams and packing them into
//! fixed-length training sequences.
//!
//! A rendered document is a flat id stream with a fixed template. With
//! `begin`/`end` the document delimiters and per-utterance text block
//! `[text_start, ids.., text_end]` and audio block
//! `[audio_start, codes.., audio_end]`:
//!
//! ```text
//! text-first:  begin (text-block audio-block)* end
//! audio-first: begin (audio-block text-block)* end
//! ```
//!
//! so a document renders to exactly `2 + sum(4 + |text_i| + F_i * K)` tokens
//! for utterance text lengths `|text_i|`, frame counts `F_i` and `K`
//! codebooks.
//!
//! The packer concatenates rendered documents into one continuous stream and
//! cuts it into windows of exactly `seq_len` tokens. Documents straddle
//! window boundaries rather than being padded; the trailing partial window
//! is withheld and reported, never emitted.

use std::fmt;
use std::str::FromStr;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::vocab::{SpecialToken, TokenRole, VocabLayout};

/// Which modality leads within each utterance of a rendered document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RenderFormat {
    TextFirst,
    AudioFirst,
}

impl RenderFormat {
    /// Stable single-byte encoding used by the shard format.
    pub fn as_byte(self) -> u8 {
        match self {
            RenderFormat::TextFirst => 0,
            RenderFormat::AudioFirst => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<RenderFormat> {
        match b {
            0 => Ok(RenderFormat::TextFirst),
            1 => Ok(RenderFormat::AudioFirst),
            _ => Err(Error::ShardFormat(format!("unknown format byte {b}"))),
        }
    }
}

impl fmt::Display for RenderFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenderFormat::TextFirst => "text-first",
            RenderFormat::AudioFirst => "audio-first",
        })
    }
}

impl FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<RenderFormat> {
        match s {
            "text-first" | "text_first" => Ok(RenderFormat::TextFirst),
            "audio-first" | "audio_first" => Ok(RenderFormat::AudioFirst),
            other => Err(Error::Config(format!("unknown render format '{other}'"))),
        }
    }
}

/// Token count of a rendered document, without rendering it.
pub fn rendered_len(doc: &Document, layout: &VocabLayout) -> usize {
    2 + doc
        .utterances
        .iter()
        .map(|u| 4 + u.text_ids.len() + u.frames() * layout.num_codebooks() as usize)
        .sum::<usize>()
}

/// Renders a document into a flat token stream in the given format.
///
/// The caller is expected to have validated the document (see
/// [`Document::validate`]); out-of-range codes still error here rather than
/// producing a corrupt stream.
pub fn render(doc: &Document, format: RenderFormat, layout: &VocabLayout) -> Vec<u32> {
    let mut out = Vec::with_capacity(rendered_len(doc, layout));
    out.push(layout.begin_of_text());
    for utt in &doc.utterances {
        let text = |out: &mut Vec<u32>| {
            out.push(layout.special_id(SpecialToken::TextStart));
            out.extend_from_slice(&utt.text_ids);
            out.push(layout.special_id(SpecialToken::TextEnd));
        };
        let audio = |out: &mut Vec<u32>| {
            out.push(layout.special_id(SpecialToken::AudioStart));
            out.extend(
                layout
                    .flatten_codes(&utt.codes)
                    .expect("codes validated before rendering"),
            );
            out.push(layout.special_id(SpecialToken::AudioEnd));
        };
        match format {
            RenderFormat::TextFirst => {
                text(&mut out);
                audio(&mut out);
            }
            RenderFormat::AudioFirst => {
                audio(&mut out);
                text(&mut out);
            }
        }
    }
    out.push(layout.end_of_text());
    debug_assert_eq!(out.len(), rendered_len(doc, layout));
    out
}

/// Byte range of one document's contribution to a packed sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocSpan {
    /// Start offset within the sequence, inclusive.
    pub start: u32,
    /// End offset within the sequence, exclusive.
    pub end: u32,
    pub doc_id: String,
    pub format: RenderFormat,
}

/// One fixed-length training sequence with provenance spans.
///
/// Invariants: `tokens.len() == roles.len() == seq_len`; spans are sorted,
/// contiguous and cover `[0, seq_len)` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSequence {
    pub tokens: Vec<u32>,
    pub roles: Vec<TokenRole>,
    pub spans: Vec<DocSpan>,
}

impl PackedSequence {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }
}

/// Totals reported when a packing run is closed out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackSummary {
    pub sequences_emitted: u64,
    pub documents_consumed: u64,
    pub tokens_packed: u64,
    /// Length of the withheld trailing partial window (zero if the stream
    /// ended exactly on a boundary).
    pub remainder_tokens: u64,
}

/// Cuts a continuous stream of rendered documents into exact `seq_len`
/// windows.
pub struct Packer {
    seq_len: usize,
    layout: VocabLayout,
    tokens: Vec<u32>,
    roles: Vec<TokenRole>,
    spans: Vec<DocSpan>,
    sequences_emitted: u64,
    documents_consumed: u64,
    tokens_packed: u64,
}

impl Packer {
    pub fn new(seq_len: usize, layout: &VocabLayout) -> Result<Packer> {
        if seq_len == 0 {
            return Err(Error::Config("seq_len must be positive".to_string()));
        }
        Ok(Packer {
            seq_len,
            layout: layout.clone(),
            tokens: Vec::new(),
            roles: Vec::new(),
            spans: Vec::new(),
            sequences_emitted: 0,
            documents_consumed: 0,
            tokens_packed: 0,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Appends one rendered document to the stream and returns any sequences
    /// completed by it (possibly several for a long document).
    pub fn append(
        &mut self,
        doc_id: &str,
        format: RenderFormat,
        rendered: &[u32],
    ) -> Result<Vec<PackedSequence>> {
        if rendered.is_empty() {
            return Err(Error::Validation {
                line: None,
                msg: format!("document '{doc_id}' rendered to zero tokens"),
            });
        }
        let start = self.tokens.len() as u64;
        for &id in rendered {
            self.roles.push(self.layout.classify(id)?);
            self.tokens.push(id);
        }
        self.spans.push(DocSpan {
            start: start as u32,
            end: (start as usize + rendered.len()) as u32,
            doc_id: doc_id.to_string(),
            format,
        });
        self.documents_consumed += 1;

        let mut out = Vec::new();
        while self.tokens.len() >= self.seq_len {
            out.push(self.cut_window());
        }
        Ok(out)
    }

    /// Removes the first `seq_len` tokens from the buffer as one sequence,
    /// splitting a straddling document span at the boundary.
    fn cut_window(&mut self) -> PackedSequence {
        let cut = self.seq_len as u32;
        let tokens: Vec<u32> = self.tokens.drain(..self.seq_len).collect();
        let roles: Vec<TokenRole> = self.roles.drain(..self.seq_len).collect();

        let mut emitted = Vec::new();
        let mut kept = Vec::new();
        for span in self.spans.drain(..) {
            if span.end <= cut {
                emitted.push(span);
            } else if span.start >= cut {
                kept.push(DocSpan {
                    start: span.start - cut,
                    end: span.end - cut,
                    ..span
                });
            } else {
                emitted.push(DocSpan {
                    start: span.start,
                    end: cut,
                    doc_id: span.doc_id.clone(),
                    format: span.format,
                });
                kept.push(DocSpan {
                    start: 0,
                    end: span.end - cut,
                    ..span
                });
            }
        }
        self.spans = kept;
        self.sequences_emitted += 1;
        self.tokens_packed += self.seq_len as u64;
        PackedSequence {
            tokens,
            roles,
            spans: emitted,
        }
    }

    /// Closes the run: returns the withheld partial window (if any) and the
    /// run totals. The remainder is never padded to `seq_len`.
    pub fn finish(self) -> (Option<PackedSequence>, PackSummary) {
        let summary = PackSummary {
            sequences_emitted: self.sequences_emitted,
            documents_consumed: self.documents_consumed,
            tokens_packed: self.tokens_packed,
            remainder_tokens: self.tokens.len() as u64,
        };
        let remainder = if self.tokens.is_empty() {
            None
        } else {
            Some(PackedSequence {
                tokens: self.tokens,
                roles: self.roles,
                spans: self.spans,
            })
        };
        (remainder, summary)
    }
}

/// Splits a packed sequence back into per-document segments, in stream
/// order. Segments of a document that straddles window boundaries are
/// recovered by concatenating its segments across consecutive sequences.
pub fn unpack(seq: &PackedSequence) -> Result<Vec<(String, RenderFormat, Vec<u32>)>> {
    let mut cursor = 0u32;
    let mut out = Vec::with_capacity(seq.spans.len());
    for span in &seq.spans {
        if span.start != cursor || span.end <= span.start {
            return Err(Error::ShardFormat(format!(
                "span table is not contiguous: span [{}, {}) after offset {cursor}",
                span.start, span.end
            )));
        }
        if span.end as usize > seq.tokens.len() {
            return Err(Error::ShardFormat(format!(
                "span [{}, {}) exceeds sequence length {}",
                span.start,
                span.end,
                seq.tokens.len()
            )));
        }
        out.push((
            span.doc_id.clone(),
            span.format,
            seq.tokens[span.start as usize..span.end as usize].to_vec(),
        ));
        cursor = span.end;
    }
    if cursor as usize != seq.tokens.len() {
        return Err(Error::ShardFormat(format!(
            "span table covers {cursor} of {} tokens",
            seq.tokens.len()
        )));
    }
    Ok(out)
}
