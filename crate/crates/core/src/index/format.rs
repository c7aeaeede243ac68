//! Binary index file, little-endian:
//!
//! ```text
//! header     "ASCX" u16 version u8 quant_bits f32 quant_scale u32 m u32 n u32 vocab u32 doc_count
//! lexicon    vocab x (u32 term, u32 global_max, u32 cluster_count)
//! directory  m x (u64 offset, u64 length)
//! clusters   m x block, contiguous, in directory order
//! trailer    u32 CRC32 of every preceding byte
//!
//! block      u32 member_count, u32 term_count,
//!            member_count x (u32 doc, u32 segment),
//!            term_count x (u32 term, u32 postings, u32 payload_offset, u32 payload_len),
//!            term_count x n segment maxima (1 byte each if quant_bits <= 8, else 2),
//!            posting payloads
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::posting::PostingList;
use super::{Cluster, ClusterSkippingIndex, LexiconEntry};
use crate::quant::Quantization;
use crate::types::{DocId, TermId, Weight};

pub const MAGIC: &[u8; 4] = b"ASCX";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 * 4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index version {0}, expected {FORMAT_VERSION}")]
    UnsupportedVersion(u16),
    #[error("index file is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed index: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(len).ok_or(FormatError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.bytes.len().saturating_sub(self.pos)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Fails before allocating when `count * each` exceeds what is left.
    fn ensure(&self, count: usize, each: usize) -> Result<(), FormatError> {
        match count.checked_mul(each) {
            Some(total) if total <= self.remaining() => Ok(()),
            _ => Err(FormatError::Truncated),
        }
    }
}

impl ClusterSkippingIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.segments as usize;
        let wb = self.quant.weight_bytes();
        let mut out = Vec::with_capacity(HEADER_LEN + self.posting_count() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.quant.bits());
        out.extend_from_slice(&self.quant.scale().to_le_bytes());
        for v in [self.clusters.len() as u32, self.segments, self.lexicon.len() as u32, self.doc_count] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.lexicon {
            for v in [e.term, e.global_max, e.cluster_count] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let blocks: Vec<Vec<u8>> = self.clusters.iter().map(|c| encode_cluster(c, n, wb)).collect();
        let mut offset = (out.len() + blocks.len() * 16) as u64;
        for b in &blocks {
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
            offset += b.len() as u64;
        }
        for b in &blocks {
            out.extend_from_slice(b);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Parses and fully validates an index image. Every structural and
    /// semantic invariant the search path relies on is checked here.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < MAGIC.len() {
            return Err(FormatError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let mut r = Reader::new(bytes, 4);
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let bits = r.u8()?;
        let scale = r.f32()?;
        let m = r.u32()? as usize;
        let n = r.u32()? as usize;
        let vocab = r.u32()? as usize;
        let doc_count = r.u32()?;
        let quant = Quantization::new(bits, scale).map_err(|e| malformed(e.to_string()))?;
        if m == 0 || n == 0 {
            return Err(malformed("cluster and segment counts must be positive"));
        }

        r.ensure(vocab, 12)?;
        let mut lexicon = Vec::with_capacity(vocab);
        for _ in 0..vocab {
            lexicon.push(LexiconEntry { term: r.u32()?, global_max: r.u32()?, cluster_count: r.u32()? });
        }

        r.ensure(m, 16)?;
        let mut directory = Vec::with_capacity(m);
        for _ in 0..m {
            directory.push((r.u64()?, r.u64()?));
        }
        let mut expected = r.pos as u64;
        for &(offset, len) in &directory {
            if offset != expected {
                return Err(malformed("cluster blocks are not contiguous"));
            }
            expected = offset.checked_add(len).ok_or_else(|| malformed("block length overflow"))?;
        }
        let body_end = expected.checked_add(4).ok_or_else(|| malformed("block length overflow"))?;
        if (bytes.len() as u64) < body_end {
            return Err(FormatError::Truncated);
        }
        if bytes.len() as u64 > body_end {
            return Err(malformed("trailing bytes after checksum"));
        }
        let body_end = expected as usize;
        let stored = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(FormatError::ChecksumMismatch { stored, computed });
        }

        let wb = quant.weight_bytes();
        let max_level = quant.max_level();
        let mut clusters = Vec::with_capacity(m);
        for (ci, &(offset, len)) in directory.iter().enumerate() {
            let block = &bytes[offset as usize..(offset + len) as usize];
            let cluster = decode_cluster(block, n, wb, max_level).map_err(|e| match e {
                FormatError::Malformed(msg) => malformed(format!("cluster {ci}: {msg}")),
                FormatError::Truncated => malformed(format!("cluster {ci}: block too short")),
                other => other,
            })?;
            clusters.push(cluster);
        }

        let index = ClusterSkippingIndex { quant, segments: n as u32, doc_count, lexicon, clusters, table: Default::default() };
        validate_global(&index)?;
        Ok(index.with_bound_table())
    }
}

fn encode_cluster(c: &Cluster, n: usize, wb: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(c.members.len() as u32).to_le_bytes());
    out.extend_from_slice(&(c.terms.len() as u32).to_le_bytes());
    for &(d, s) in &c.members {
        out.extend_from_slice(&d.to_le_bytes());
        out.extend_from_slice(&s.to_le_bytes());
    }
    let mut payload_offset = 0u32;
    for (slot, &t) in c.terms.iter().enumerate() {
        let p = &c.postings[slot];
        for v in [t, p.len() as u32, payload_offset, p.encoded().len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        payload_offset += p.encoded().len() as u32;
    }
    for &w in &c.segment_max[..c.terms.len() * n] {
        if wb == 1 {
            out.push(w as u8);
        } else {
            out.extend_from_slice(&(w as u16).to_le_bytes());
        }
    }
    for p in &c.postings {
        out.extend_from_slice(p.encoded());
    }
    out
}

fn decode_cluster(block: &[u8], n: usize, wb: usize, max_level: Weight) -> Result<Cluster, FormatError> {
    let mut r = Reader::new(block, 0);
    let member_count = r.u32()? as usize;
    let term_count = r.u32()? as usize;
    r.ensure(member_count, 8)?;
    let mut members: Vec<(DocId, u32)> = Vec::with_capacity(member_count);
    for _ in 0..member_count {
        let doc = r.u32()?;
        let seg = r.u32()?;
        if seg as usize >= n {
            return Err(malformed(format!("doc {doc} segment {seg} out of range")));
        }
        if doc == crate::types::END_DOC {
            return Err(malformed("reserved doc id"));
        }
        if members.last().is_some_and(|&(p, _)| p >= doc) {
            return Err(malformed("members not strictly increasing"));
        }
        members.push((doc, seg));
    }
    r.ensure(term_count, 16)?;
    let mut dir: Vec<(TermId, u32, u32, u32)> = Vec::with_capacity(term_count);
    for _ in 0..term_count {
        dir.push((r.u32()?, r.u32()?, r.u32()?, r.u32()?));
    }
    let seg_cells = term_count.checked_mul(n).ok_or(FormatError::Truncated)?;
    r.ensure(seg_cells, wb)?;
    let mut segment_max = Vec::with_capacity(seg_cells);
    for _ in 0..seg_cells {
        let w = if wb == 1 { r.u8()? as Weight } else { r.u16()? as Weight };
        if w > max_level {
            return Err(malformed("segment maximum exceeds quantization range"));
        }
        segment_max.push(w);
    }
    let payload = &block[r.pos..];
    let mut terms = Vec::with_capacity(term_count);
    let mut postings = Vec::with_capacity(term_count);
    let mut term_max = Vec::with_capacity(term_count);
    let mut expected_offset = 0usize;
    for (slot, &(term, count, offset, len)) in dir.iter().enumerate() {
        if terms.last().is_some_and(|&p| p >= term) {
            return Err(malformed("terms not strictly increasing"));
        }
        if offset as usize != expected_offset {
            return Err(malformed("posting payloads are not contiguous"));
        }
        let end =
            expected_offset.checked_add(len as usize).filter(|&e| e <= payload.len()).ok_or_else(|| malformed("posting payload out of bounds"))?;
        let list = PostingList::from_encoded(payload[expected_offset..end].to_vec(), count, wb, max_level)
            .map_err(|e| malformed(format!("term {term}: {e}")))?;
        expected_offset = end;

        let mut computed = vec![0 as Weight; n];
        for (doc, w) in list.decode() {
            let i =
                members.binary_search_by_key(&doc, |&(d, _)| d).map_err(|_| malformed(format!("term {term}: posting for non-member doc {doc}")))?;
            let s = members[i].1 as usize;
            computed[s] = computed[s].max(w);
        }
        if computed[..] != segment_max[slot * n..(slot + 1) * n] {
            return Err(malformed(format!("term {term}: segment maxima disagree with postings")));
        }
        term_max.push(computed.iter().copied().max().unwrap_or(0));
        terms.push(term);
        postings.push(list);
    }
    if expected_offset != payload.len() {
        return Err(malformed("unused bytes after posting payloads"));
    }
    Ok(Cluster { members, terms, postings, segment_max, term_max })
}

fn validate_global(index: &ClusterSkippingIndex) -> Result<(), FormatError> {
    let mut docs: Vec<DocId> = index.clusters.iter().flat_map(|c| c.members.iter().map(|&(d, _)| d)).collect();
    if docs.len() != index.doc_count as usize {
        return Err(malformed("document count disagrees with cluster membership"));
    }
    docs.sort_unstable();
    if docs.windows(2).any(|w| w[0] == w[1]) {
        return Err(malformed("document assigned to more than one cluster"));
    }
    let mut lex: std::collections::BTreeMap<TermId, (Weight, u32)> = Default::default();
    for c in &index.clusters {
        for (slot, &t) in c.terms.iter().enumerate() {
            let e = lex.entry(t).or_insert((0, 0));
            e.0 = e.0.max(c.term_max[slot]);
            e.1 += 1;
        }
    }
    let rebuilt: Vec<LexiconEntry> =
        lex.into_iter().map(|(term, (global_max, cluster_count))| LexiconEntry { term, global_max, cluster_count }).collect();
    if rebuilt != index.lexicon {
        return Err(malformed("lexicon disagrees with cluster contents"));
    }
    Ok(())
}
