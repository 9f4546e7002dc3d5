//! Binary container for packed training sequences.
//!
//! Layout (all integers little-endian u32 unless noted):
//!
//! ```text
//! magic            4 bytes, b"SODA"
//! version          u32, currently 1
//! seq_len          u32
//! count            u32, number of sequences
//! layout_len       u32, byte length of the vocabulary block
//! layout           layout_len bytes of UTF-8 `key = value` lines
//! count times:
//!   tokens         seq_len * u32
//!   roles          seq_len bytes
//!   span_count     u32
//!   span_count times:
//!     start        u32 (inclusive)
//!     end          u32 (exclusive)
//!     doc_id_len   u32
//!     doc_id       doc_id_len bytes of UTF-8
//!     format       1 byte (0 = text-first, 1 = audio-first)
//! ```
//!
//! The vocabulary layout travels inside the shard so a reader never needs
//! out-of-band configuration to interpret ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::interleave::{DocSpan, PackedSequence, RenderFormat};
use crate::vocab::{TokenRole, VocabLayout};

pub const SHARD_MAGIC: &[u8; 4] = b"SODA";
pub const SHARD_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Streaming shard writer. Sequences are appended one at a time; the header
/// count is patched when the writer is finished.
pub struct ShardWriter<W: Write + Seek> {
    out: W,
    seq_len: usize,
    layout: VocabLayout,
    count: u32,
    count_pos: u64,
}

impl ShardWriter<BufWriter<File>> {
    pub fn create(path: &Path, seq_len: usize, layout: &VocabLayout) -> Result<Self> {
        ShardWriter::new(BufWriter::new(File::create(path)?), seq_len, layout)
    }
}

impl<W: Write + Seek> ShardWriter<W> {
    pub fn new(mut out: W, seq_len: usize, layout: &VocabLayout) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Config("seq_len must be positive".to_string()));
        }
        out.write_all(SHARD_MAGIC)?;
        write_u32(&mut out, SHARD_VERSION)?;
        write_u32(&mut out, seq_len as u32)?;
        let count_pos = out.stream_position()?;
        write_u32(&mut out, 0)?; // patched in finish()
        let block = layout.to_key_value();
        write_u32(&mut out, block.len() as u32)?;
        out.write_all(block.as_bytes())?;
        Ok(ShardWriter {
            out,
            seq_len,
            layout: layout.clone(),
            count: 0,
            count_pos,
        })
    }

    pub fn append(&mut self, seq: &PackedSequence) -> Result<()> {
        if seq.tokens.len() != self.seq_len || seq.roles.len() != self.seq_len {
            return Err(Error::ShardFormat(format!(
                "sequence length {} does not match shard seq_len {}",
                seq.tokens.len(),
                self.seq_len
            )));
        }
        let total = self.layout.total();
        for &id in &seq.tokens {
            if id >= total {
                return Err(Error::ShardFormat(format!(
                    "token id {id} outside vocabulary of size {total}"
                )));
            }
        }
        for &id in &seq.tokens {
            write_u32(&mut self.out, id)?;
        }
        let role_bytes: Vec<u8> = seq.roles.iter().map(|r| *r as u8).collect();
        self.out.write_all(&role_bytes)?;
        write_u32(&mut self.out, seq.spans.len() as u32)?;
        for span in &seq.spans {
            write_u32(&mut self.out, span.start)?;
            write_u32(&mut self.out, span.end)?;
            write_u32(&mut self.out, span.doc_id.len() as u32)?;
            self.out.write_all(span.doc_id.as_bytes())?;
            self.out.write_all(&[span.format.as_byte()])?;
        }
        self.count += 1;
        Ok(())
    }

    /// Patches the sequence count into the header and flushes.
    pub fn finish(mut self) -> Result<u32> {
        let end = self.out.stream_position()?;
        self.out.seek(SeekFrom::Start(self.count_pos))?;
        write_u32(&mut self.out, self.count)?;
        self.out.seek(SeekFrom::Start(end))?;
        self.out.flush()?;
        Ok(self.count)
    }
}

/// Streaming shard reader; yields sequences in file order.
#[derive(Debug)]
pub struct ShardReader<R: Read> {
    input: R,
    seq_len: usize,
    layout: VocabLayout,
    count: u32,
    read: u32,
}

impl ShardReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        ShardReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> ShardReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != SHARD_MAGIC {
            return Err(Error::ShardFormat(format!(
                "bad magic {magic:?}, expected {SHARD_MAGIC:?}"
            )));
        }
        let version = read_u32(&mut input)?;
        if version != SHARD_VERSION {
            return Err(Error::ShardFormat(format!(
                "unsupported version {version}, expected {SHARD_VERSION}"
            )));
        }
        let seq_len = read_u32(&mut input)? as usize;
        if seq_len == 0 {
            return Err(Error::ShardFormat("seq_len is zero".to_string()));
        }
        let count = read_u32(&mut input)?;
        let layout_len = read_u32(&mut input)? as usize;
        let mut block = vec![0u8; layout_len];
        input.read_exact(&mut block)?;
        let text = String::from_utf8(block)
            .map_err(|e| Error::ShardFormat(format!("layout block is not UTF-8: {e}")))?;
        let layout = VocabLayout::from_key_value(&text)?;
        Ok(ShardReader {
            input,
            seq_len,
            layout,
            count,
            read: 0,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn layout(&self) -> &VocabLayout {
        &self.layout
    }

    /// Number of sequences the header promises.
    pub fn sequence_count(&self) -> u32 {
        self.count
    }

    fn read_sequence(&mut self) -> Result<PackedSequence> {
        let mut tokens = Vec::with_capacity(self.seq_len);
        let total = self.layout.total();
        for _ in 0..self.seq_len {
            let id = read_u32(&mut self.input)?;
            if id >= total {
                return Err(Error::ShardFormat(format!(
                    "token id {id} outside vocabulary of size {total}"
                )));
            }
            tokens.push(id);
        }
        let mut role_bytes = vec![0u8; self.seq_len];
        self.input.read_exact(&mut role_bytes)?;
        let roles = role_bytes
            .into_iter()
            .map(TokenRole::from_byte)
            .collect::<Result<Vec<_>>>()?;
        let span_count = read_u32(&mut self.input)?;
        let mut spans = Vec::with_capacity(span_count as usize);
        let mut cursor = 0u32;
        for _ in 0..span_count {
            let start = read_u32(&mut self.input)?;
            let end = read_u32(&mut self.input)?;
            let id_len = read_u32(&mut self.input)? as usize;
            let mut id_buf = vec![0u8; id_len];
            self.input.read_exact(&mut id_buf)?;
            let doc_id = String::from_utf8(id_buf)
                .map_err(|e| Error::ShardFormat(format!("doc_id is not UTF-8: {e}")))?;
            let mut fmt = [0u8; 1];
            self.input.read_exact(&mut fmt)?;
            let format = RenderFormat::from_byte(fmt[0])?;
            if start != cursor || end <= start {
                return Err(Error::ShardFormat(format!(
                    "span table is not contiguous: span [{start}, {end}) after offset {cursor}"
                )));
            }
            cursor = end;
            spans.push(DocSpan {
                start,
                end,
                doc_id,
                format,
            });
        }
        if cursor as usize != self.seq_len {
            return Err(Error::ShardFormat(format!(
                "span table covers {cursor} of {} tokens",
                self.seq_len
            )));
        }
        Ok(PackedSequence {
            tokens,
            roles,
            spans,
        })
    }
}

impl<R: Read> Iterator for ShardReader<R> {
    type Item = Result<PackedSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.count {
            return None;
        }
        self.read += 1;
        Some(self.read_sequence())
    }
}

/// Writes a whole shard in one call.
pub fn write_shard(
    path: &Path,
    seq_len: usize,
    layout: &VocabLayout,
    sequences: &[PackedSequence],
) -> Result<()> {
    let mut w = ShardWriter::create(path, seq_len, layout)?;
    for seq in sequences {
        w.append(seq)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a whole shard into memory.
pub fn read_shard(path: &Path) -> Result<(VocabLayout, usize, Vec<PackedSequence>)> {
    let reader = ShardReader::open(path)?;
    let layout = reader.layout().clone();
    let seq_len = reader.seq_len();
    let sequences = reader.collect::<Result<Vec<_>>>()?;
    Ok((layout, seq_len, sequences))
}
