//! Token id space: text region, audio region (codebook x code), special region.
//!
//! The id space is a single contiguous range laid out as
//! `[text | audio | special]`. Audio ids map bijectively to `(codebook, code)`
//! pairs of the codec; codebook 0 carries semantic content and the remaining
//! codebooks carry acoustic detail. The four special markers sit at the very
//! end of the space.

use std::fmt;

use crate::error::{Error, Result};

/// The four framing markers appended after the audio region, in id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialToken {
    TextStart = 0,
    TextEnd = 1,
    AudioStart = 2,
    AudioEnd = 3,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 4] = [
        SpecialToken::TextStart,
        SpecialToken::TextEnd,
        SpecialToken::AudioStart,
        SpecialToken::AudioEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpecialToken::TextStart => "text_start",
            SpecialToken::TextEnd => "text_end",
            SpecialToken::AudioStart => "audio_start",
            SpecialToken::AudioEnd => "audio_end",
        }
    }
}

/// What a token id contributes to a sequence.
///
/// `Semantic` is an audio token from codebook 0, `Acoustic` one from any
/// later codebook. The discriminant values are the on-disk role bytes of the
/// shard format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TokenRole {
    Text = 0,
    Semantic = 1,
    Acoustic = 2,
    Special = 3,
}

impl TokenRole {
    pub fn from_byte(b: u8) -> Result<TokenRole> {
        match b {
            0 => Ok(TokenRole::Text),
            1 => Ok(TokenRole::Semantic),
            2 => Ok(TokenRole::Acoustic),
            3 => Ok(TokenRole::Special),
            _ => Err(Error::ShardFormat(format!("invalid role byte {b}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenRole::Text => "text",
            TokenRole::Semantic => "semantic",
            TokenRole::Acoustic => "acoustic",
            TokenRole::Special => "special",
        }
    }
}

impl fmt::Display for TokenRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TokenRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<TokenRole> {
        match s {
            "text" => Ok(TokenRole::Text),
            "semantic" => Ok(TokenRole::Semantic),
            "acoustic" => Ok(TokenRole::Acoustic),
            "special" => Ok(TokenRole::Special),
            _ => Err(Error::Config(format!("unknown token role '{s}'"))),
        }
    }
}

/// Code frame rate of the codec, in frames per second.
pub const FRAME_RATE_HZ: f64 = 12.5;

/// Partition of the token id space.
///
/// Everything is derived from five numbers: the base text vocabulary size,
/// the codebook grid, and the ids of the document begin/end markers (which
/// live inside the base text vocabulary, not in the special region).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabLayout {
    text_size: u32,
    num_codebooks: u32,
    codebook_size: u32,
    begin_of_text: u32,
    end_of_text: u32,
}

impl Default for VocabLayout {
    /// The documented layout: 128,256 text ids, 8 codebooks x 2,048 codes,
    /// 4 special ids, 144,644 ids total.
    fn default() -> Self {
        VocabLayout {
            text_size: 128_256,
            num_codebooks: 8,
            codebook_size: 2_048,
            begin_of_text: 128_000,
            end_of_text: 128_001,
        }
    }
}

impl VocabLayout {
    pub fn new(
        text_size: u32,
        num_codebooks: u32,
        codebook_size: u32,
        begin_of_text: u32,
        end_of_text: u32,
    ) -> Result<VocabLayout> {
        if text_size == 0 || num_codebooks == 0 || codebook_size == 0 {
            return Err(Error::Config(
                "text_size, num_codebooks and codebook_size must be positive".into(),
            ));
        }
        let audio = (num_codebooks as u64) * (codebook_size as u64);
        if text_size as u64 + audio + 4 > u32::MAX as u64 {
            return Err(Error::Config(
                "vocabulary does not fit in 32-bit ids".into(),
            ));
        }
        if begin_of_text >= text_size || end_of_text >= text_size {
            return Err(Error::Config(format!(
                "begin_of_text ({begin_of_text}) and end_of_text ({end_of_text}) \
                 must lie inside the text region [0, {text_size})"
            )));
        }
        if begin_of_text == end_of_text {
            return Err(Error::Config(
                "begin_of_text and end_of_text must differ".into(),
            ));
        }
        Ok(VocabLayout {
            text_size,
            num_codebooks,
            codebook_size,
            begin_of_text,
            end_of_text,
        })
    }

    pub fn text_size(&self) -> u32 {
        self.text_size
    }

    pub fn num_codebooks(&self) -> u32 {
        self.num_codebooks
    }

    pub fn codebook_size(&self) -> u32 {
        self.codebook_size
    }

    /// Document begin marker; a member of the base text vocabulary.
    pub fn begin_of_text(&self) -> u32 {
        self.begin_of_text
    }

    /// Document end marker; a member of the base text vocabulary.
    pub fn end_of_text(&self) -> u32 {
        self.end_of_text
    }

    /// First audio id; equal to `text_size`.
    pub fn audio_base(&self) -> u32 {
        self.text_size
    }

    /// First special id; equal to `audio_base + num_codebooks * codebook_size`.
    pub fn special_base(&self) -> u32 {
        self.text_size + self.num_codebooks * self.codebook_size
    }

    /// Total vocabulary size.
    pub fn total(&self) -> u32 {
        self.special_base() + SpecialToken::ALL.len() as u32
    }

    /// Id of one of the four framing markers.
    pub fn special_id(&self, tok: SpecialToken) -> u32 {
        self.special_base() + tok as u32
    }

    /// Maps a `(codebook, code)` pair to its token id.
    ///
    /// Bijective over the audio region: `audio_base + codebook * codebook_size + code`.
    pub fn audio_token_id(&self, codebook: u32, code: u32) -> Result<u32> {
        if codebook >= self.num_codebooks {
            return Err(Error::OutOfRange {
                field: "codebook",
                value: codebook as u64,
                bound: self.num_codebooks as u64,
            });
        }
        if code >= self.codebook_size {
            return Err(Error::OutOfRange {
                field: "code",
                value: code as u64,
                bound: self.codebook_size as u64,
            });
        }
        Ok(self.audio_base() + codebook * self.codebook_size + code)
    }

    /// Exact inverse of [`audio_token_id`](Self::audio_token_id).
    pub fn decode_audio_token(&self, id: u32) -> Result<(u32, u32)> {
        if id < self.audio_base() || id >= self.special_base() {
            return Err(Error::WrongRegion {
                id,
                region: "audio",
                start: self.audio_base(),
                end: self.special_base(),
            });
        }
        let offset = id - self.audio_base();
        Ok((offset / self.codebook_size, offset % self.codebook_size))
    }

    /// Role of any id in `[0, total)`.
    pub fn classify(&self, id: u32) -> Result<TokenRole> {
        if id < self.audio_base() {
            Ok(TokenRole::Text)
        } else if id < self.audio_base() + self.codebook_size {
            Ok(TokenRole::Semantic)
        } else if id < self.special_base() {
            Ok(TokenRole::Acoustic)
        } else if id < self.total() {
            Ok(TokenRole::Special)
        } else {
            Err(Error::OutOfRange {
                field: "token id",
                value: id as u64,
                bound: self.total() as u64,
            })
        }
    }

    /// Flattens a frames x codebooks code matrix into token ids, frame-major
    /// with codebooks in ascending order within each frame.
    ///
    /// A 12.5 Hz stream over 8 codebooks therefore yields 100 ids per second
    /// of audio.
    pub fn flatten_codes(&self, codes: &[Vec<u32>]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(codes.len() * self.num_codebooks as usize);
        for (frame, row) in codes.iter().enumerate() {
            if row.len() != self.num_codebooks as usize {
                return Err(Error::Validation {
                    line: None,
                    msg: format!(
                        "frame {frame} has {} codes, expected num_codebooks = {}",
                        row.len(),
                        self.num_codebooks
                    ),
                });
            }
            for (codebook, &code) in row.iter().enumerate() {
                if code >= self.codebook_size {
                    return Err(Error::Validation {
                        line: None,
                        msg: format!(
                            "frame {frame}, codebook {codebook}: code {code} \
                             exceeds codebook_size bound {}",
                            self.codebook_size
                        ),
                    });
                }
                out.push(self.audio_base() + codebook as u32 * self.codebook_size + code);
            }
        }
        Ok(out)
    }

    /// Serializes the layout as a key-value text block, one `name value` pair
    /// per line. Derived fields are included so shard files are self-describing.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("text_size {}\n", self.text_size));
        s.push_str(&format!("num_codebooks {}\n", self.num_codebooks));
        s.push_str(&format!("codebook_size {}\n", self.codebook_size));
        s.push_str(&format!("begin_of_text {}\n", self.begin_of_text));
        s.push_str(&format!("end_of_text {}\n", self.end_of_text));
        s.push_str(&format!("audio_base {}\n", self.audio_base()));
        s.push_str(&format!("special_base {}\n", self.special_base()));
        s.push_str(&format!("total {}\n", self.total()));
        for tok in SpecialToken::ALL {
            s.push_str(&format!("{} {}\n", tok.name(), self.special_id(tok)));
        }
        s
    }

    /// Parses the key-value block written by [`to_key_value`](Self::to_key_value).
    ///
    /// Derived fields, when present, are checked against the recomputed
    /// values; a mismatch means the block was hand-edited or corrupted.
    pub fn from_key_value(text: &str) -> Result<VocabLayout> {
        let mut fields = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once(char::is_whitespace)
                    .ok_or_else(|| Error::Parse {
                        line: i as u64 + 1,
                        msg: format!("expected 'name value', got '{line}'"),
                    })?;
            let value: u32 = value.trim().parse().map_err(|_| Error::Parse {
                line: i as u64 + 1,
                msg: format!("field '{key}' is not a decimal integer: '{}'", value.trim()),
            })?;
            fields.insert(key.to_string(), value);
        }
        let get = |name: &str| {
            fields
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("layout is missing field '{name}'")))
        };
        let layout = VocabLayout::new(
            get("text_size")?,
            get("num_codebooks")?,
            get("codebook_size")?,
            get("begin_of_text")?,
            get("end_of_text")?,
        )?;
        let check = |name: &str, expect: u32| -> Result<()> {
            if let Some(&v) = fields.get(name) {
                if v != expect {
                    return Err(Error::Config(format!(
                        "layout field '{name}' is {v} but derives to {expect}"
                    )));
                }
            }
            Ok(())
        };
        check("audio_base", layout.audio_base())?;
        check("special_base", layout.special_base())?;
        check("total", layout.total())?;
        for tok in SpecialToken::ALL {
            check(tok.name(), layout.special_id(tok))?;
        }
        Ok(layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_totals() {
        let l = VocabLayout::default();
        assert_eq!(l.text_size(), 128_256);
        assert_eq!(l.audio_base(), 128_256);
        assert_eq!(l.special_base(), 144_640);
        assert_eq!(l.total(), 144_644);
        assert_eq!(l.special_id(SpecialToken::TextStart), 144_640);
        assert_eq!(l.special_id(SpecialToken::AudioEnd), 144_643);
    }

    #[test]
    fn audio_token_id_examples() {
        let l = VocabLayout::default();
        assert_eq!(l.audio_token_id(0, 0).unwrap(), 128_256);
        assert_eq!(l.audio_token_id(7, 2047).unwrap(), 144_639);
        let err = l.audio_token_id(8, 0).unwrap_err();
        assert!(err.to_string().contains("codebook"), "{err}");
        let err = l.audio_token_id(0, 2048).unwrap_err();
        assert!(err.to_string().contains("code"), "{err}");
    }

    #[test]
    fn decode_audio_token_examples() {
        let l = VocabLayout::default();
        assert_eq!(l.decode_audio_token(128_256).unwrap(), (0, 0));
        assert_eq!(l.decode_audio_token(144_639).unwrap(), (7, 2047));
        assert!(l.decode_audio_token(100).is_err());
        assert!(l.decode_audio_token(144_640).is_err());
    }

    #[test]
    fn round_trip_exhaustive() {
        let l = VocabLayout::default();
        for codebook in 0..8 {
            for code in 0..2048 {
                let id = l.audio_token_id(codebook, code).unwrap();
                assert_eq!(l.decode_audio_token(id).unwrap(), (codebook, code));
            }
        }
    }

    #[test]
    fn classify_examples() {
        let l = VocabLayout::default();
        assert_eq!(l.classify(0).unwrap(), TokenRole::Text);
        assert_eq!(l.classify(128_255).unwrap(), TokenRole::Text);
        assert_eq!(l.classify(128_256).unwrap(), TokenRole::Semantic);
        // (130500 - 128256) / 2048 = codebook 1, confirmed by the decode route
        assert_eq!(l.decode_audio_token(130_500).unwrap().0, 1);
        assert_eq!(l.classify(130_500).unwrap(), TokenRole::Acoustic);
        assert_eq!(l.classify(144_640).unwrap(), TokenRole::Special);
        assert!(l.classify(144_644).is_err());
    }

    #[test]
    fn roles_partition_id_space() {
        let l = VocabLayout::default();
        let mut counts = [0u32; 4];
        for id in 0..l.total() {
            counts[l.classify(id).unwrap() as usize] += 1;
        }
        assert_eq!(counts, [128_256, 2_048, 14_336, 4]);
    }

    #[test]
    fn flatten_single_frame_of_zeros() {
        let l = VocabLayout::default();
        let ids = l.flatten_codes(&[vec![0; 8]]).unwrap();
        let expect: Vec<u32> = (0..8).map(|c| 128_256 + 2_048 * c).collect();
        assert_eq!(ids, expect);
        assert_eq!(*ids.last().unwrap(), 142_592);
    }

    #[test]
    fn flatten_ten_seconds_is_thousand_ids() {
        // 125 frames at 12.5 Hz = 10 s of audio = 1,000 ids at 100 tokens/sec.
        let l = VocabLayout::default();
        let codes = vec![vec![1u32; 8]; 125];
        assert_eq!(l.flatten_codes(&codes).unwrap().len(), 1_000);
    }

    #[test]
    fn flatten_empty_matrix() {
        let l = VocabLayout::default();
        assert!(l.flatten_codes(&[]).unwrap().is_empty());
    }

    #[test]
    fn flatten_errors_carry_coordinates() {
        let l = VocabLayout::default();
        let err = l.flatten_codes(&[vec![0; 8], vec![0; 7]]).unwrap_err();
        assert!(err.to_string().contains("frame 1"), "{err}");
        let err = l
            .flatten_codes(&[vec![0; 8], vec![0, 0, 0, 2048, 0, 0, 0, 0]])
            .unwrap_err();
        assert!(err.to_string().contains("frame 1, codebook 3"), "{err}");
        assert!(err.to_string().contains("2048"), "{err}");
    }

    #[test]
    fn unflatten_recovers_matrix() {
        let l = VocabLayout::default();
        let codes: Vec<Vec<u32>> = (0..5)
            .map(|f| (0..8).map(|c| ((f * 31 + c * 7) % 2048) as u32).collect())
            .collect();
        let ids = l.flatten_codes(&codes).unwrap();
        let mut rebuilt = vec![Vec::new(); 5];
        for (i, &id) in ids.iter().enumerate() {
            let (cb, code) = l.decode_audio_token(id).unwrap();
            assert_eq!(cb as usize, i % 8);
            rebuilt[i / 8].push(code);
        }
        assert_eq!(rebuilt, codes);
    }

    #[test]
    fn key_value_round_trip() {
        let l = VocabLayout::default();
        let text = l.to_key_value();
        assert_eq!(VocabLayout::from_key_value(&text).unwrap(), l);

        let custom = VocabLayout::new(1000, 4, 16, 0, 1).unwrap();
        assert_eq!(
            VocabLayout::from_key_value(&custom.to_key_value()).unwrap(),
            custom
        );
    }

    #[test]
    fn key_value_rejects_corrupt_derived_field() {
        let l = VocabLayout::default();
        let text = l.to_key_value().replace("total 144644", "total 144645");
        assert!(VocabLayout::from_key_value(&text).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(VocabLayout::new(0, 8, 2048, 0, 1).is_err());
        assert!(VocabLayout::new(100, 8, 2048, 100, 1).is_err());
        assert!(VocabLayout::new(100, 8, 2048, 5, 5).is_err());
    }
}
