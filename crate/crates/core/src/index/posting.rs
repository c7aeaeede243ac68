//! Delta + LEB128 varint doc ids, fixed-width weights.

use crate::types::{DocId, Weight, END_DOC};

pub fn write_varint(buf: &mut Vec<u8>, mut value: u32) {
    loop {
        let byte = (value & 0x7F) as u8;
        value >>= 7;
        if value == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

/// Reads one varint at `*pos`, rejecting encodings longer than five bytes
/// or overflowing 32 bits.
pub fn read_varint(bytes: &[u8], pos: &mut usize) -> Option<u32> {
    let mut value = 0u32;
    for i in 0..5 {
        let byte = *bytes.get(*pos)?;
        *pos += 1;
        if i == 4 && byte > 0x0F {
            return None;
        }
        value |= ((byte & 0x7F) as u32) << (7 * i);
        if byte & 0x80 == 0 {
            return Some(value);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PostingError {
    #[error("doc ids not strictly increasing at position {0}")]
    Unordered(usize),
    #[error("zero weight at position {0}")]
    ZeroWeight(usize),
    #[error("weight {weight} at position {pos} exceeds {max}")]
    WeightOverflow { pos: usize, weight: Weight, max: Weight },
    #[error("reserved doc id at position {0}")]
    ReservedDoc(usize),
    #[error("posting payload is malformed")]
    Malformed,
    #[error("posting list is empty")]
    Empty,
}

/// One term's postings inside one cluster, kept encoded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostingList {
    bytes: Vec<u8>,
    len: u32,
    weight_bytes: u8,
}

impl PostingList {
    pub fn encode(postings: &[(DocId, Weight)], weight_bytes: usize, max_weight: Weight) -> Result<Self, PostingError> {
        if postings.is_empty() {
            return Err(PostingError::Empty);
        }
        let mut bytes = Vec::with_capacity(postings.len() * (1 + weight_bytes));
        let mut prev: Option<DocId> = None;
        for (pos, &(doc, weight)) in postings.iter().enumerate() {
            if doc == END_DOC {
                return Err(PostingError::ReservedDoc(pos));
            }
            if weight == 0 {
                return Err(PostingError::ZeroWeight(pos));
            }
            if weight > max_weight {
                return Err(PostingError::WeightOverflow { pos, weight, max: max_weight });
            }
            let delta = match prev {
                Some(p) if doc <= p => return Err(PostingError::Unordered(pos)),
                Some(p) => doc - p,
                None => doc,
            };
            write_varint(&mut bytes, delta);
            if weight_bytes == 1 {
                bytes.push(weight as u8);
            } else {
                bytes.extend_from_slice(&(weight as u16).to_le_bytes());
            }
            prev = Some(doc);
        }
        Ok(Self { bytes, len: postings.len() as u32, weight_bytes: weight_bytes as u8 })
    }

    /// Wraps an encoded payload after fully validating it.
    pub fn from_encoded(bytes: Vec<u8>, len: u32, weight_bytes: usize, max_weight: Weight) -> Result<Self, PostingError> {
        let list = Self { bytes, len, weight_bytes: weight_bytes as u8 };
        if len == 0 {
            return Err(PostingError::Empty);
        }
        let mut pos = 0usize;
        let mut prev: Option<DocId> = None;
        for i in 0..len as usize {
            let delta = read_varint(&list.bytes, &mut pos).ok_or(PostingError::Malformed)?;
            let doc = match prev {
                None => delta,
                Some(p) => {
                    if delta == 0 {
                        return Err(PostingError::Unordered(i));
                    }
                    p.checked_add(delta).ok_or(PostingError::Malformed)?
                }
            };
            if doc == END_DOC {
                return Err(PostingError::ReservedDoc(i));
            }
            let weight = list.read_weight(&mut pos).ok_or(PostingError::Malformed)?;
            if weight == 0 {
                return Err(PostingError::ZeroWeight(i));
            }
            if weight > max_weight {
                return Err(PostingError::WeightOverflow { pos: i, weight, max: max_weight });
            }
            prev = Some(doc);
        }
        if pos != list.bytes.len() {
            return Err(PostingError::Malformed);
        }
        Ok(list)
    }

    fn read_weight(&self, pos: &mut usize) -> Option<Weight> {
        if self.weight_bytes == 1 {
            let w = *self.bytes.get(*pos)? as Weight;
            *pos += 1;
            Some(w)
        } else {
            let b = self.bytes.get(*pos..*pos + 2)?;
            *pos += 2;
            Some(u16::from_le_bytes([b[0], b[1]]) as Weight)
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn encoded(&self) -> &[u8] {
        &self.bytes
    }

    pub fn cursor(&self) -> PostingCursor<'_> {
        let mut c = PostingCursor { list: self, pos: 0, remaining: self.len, doc: 0, weight: 0, started: false };
        c.advance();
        c
    }

    pub fn decode(&self) -> Vec<(DocId, Weight)> {
        let mut out = Vec::with_capacity(self.len());
        let mut c = self.cursor();
        while c.doc() != END_DOC {
            out.push((c.doc(), c.weight()));
            c.advance();
        }
        out
    }
}

/// Forward-only cursor; `doc()` is `END_DOC` once exhausted.
#[derive(Clone, Debug)]
pub struct PostingCursor<'a> {
    list: &'a PostingList,
    pos: usize,
    remaining: u32,
    doc: DocId,
    weight: Weight,
    started: bool,
}

impl PostingCursor<'_> {
    #[inline]
    pub fn doc(&self) -> DocId {
        self.doc
    }

    #[inline]
    pub fn weight(&self) -> Weight {
        self.weight
    }

    /// Moves to the next posting. Payloads are validated on construction,
    /// so decoding cannot fail here.
    pub fn advance(&mut self) {
        if self.remaining == 0 {
            self.doc = END_DOC;
            self.weight = 0;
            return;
        }
        self.remaining -= 1;
        let delta = read_varint(&self.list.bytes, &mut self.pos).expect("validated posting payload");
        self.doc = if self.started { self.doc + delta } else { delta };
        self.started = true;
        self.weight = self.list.read_weight(&mut self.pos).expect("validated posting payload");
    }

    /// Advances to the first posting with doc id `>= target`.
    pub fn seek(&mut self, target: DocId) {
        while self.doc < target {
            self.advance();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn varint_edges() {
        for v in [0u32, 1, 127, 128, 16_383, 16_384, u32::MAX] {
            let mut buf = Vec::new();
            write_varint(&mut buf, v);
            let mut pos = 0;
            assert_eq!(read_varint(&buf, &mut pos), Some(v));
            assert_eq!(pos, buf.len());
        }
        let mut pos = 0;
        assert_eq!(read_varint(&[0xFF, 0xFF, 0xFF, 0xFF, 0x1F], &mut pos), None);
        let mut pos = 0;
        assert_eq!(read_varint(&[0x80], &mut pos), None);
    }

    #[test]
    fn rejects_invalid_postings() {
        assert_eq!(PostingList::encode(&[(3, 1), (3, 2)], 1, 255), Err(PostingError::Unordered(1)));
        assert_eq!(PostingList::encode(&[(3, 0)], 1, 255), Err(PostingError::ZeroWeight(0)));
        assert!(PostingList::encode(&[(3, 256)], 1, 255).is_err());
        assert_eq!(PostingList::encode(&[], 1, 255), Err(PostingError::Empty));
    }

    #[test]
    fn seek_skips_forward() {
        let list = PostingList::encode(&[(2, 1), (5, 2), (9, 3), (40, 4)], 1, 255).unwrap();
        let mut c = list.cursor();
        c.seek(6);
        assert_eq!((c.doc(), c.weight()), (9, 3));
        c.seek(9);
        assert_eq!(c.doc(), 9);
        c.seek(41);
        assert_eq!(c.doc(), END_DOC);
    }

    #[test]
    fn from_encoded_rejects_trailing_bytes() {
        let list = PostingList::encode(&[(2, 1), (5, 2)], 1, 255).unwrap();
        let mut bytes = list.encoded().to_vec();
        bytes.push(0);
        assert_eq!(PostingList::from_encoded(bytes, 2, 1, 255), Err(PostingError::Malformed));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            docs in proptest::collection::btree_map(0u32..u32::MAX - 1, 1u32..=65_535, 1..200),
            wide in any::<bool>(),
        ) {
            let width = if wide { 2 } else { 1 };
            let max = if wide { 65_535 } else { 255 };
            let postings: Vec<_> = docs.into_iter().map(|(d, w)| (d, w.min(max))).collect();
            let list = PostingList::encode(&postings, width, max).unwrap();
            prop_assert_eq!(list.decode(), postings.clone());
            let again = PostingList::from_encoded(list.encoded().to_vec(), postings.len() as u32, width, max).unwrap();
            prop_assert_eq!(again, list);
        }
    }
}
