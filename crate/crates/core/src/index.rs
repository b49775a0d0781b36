//! Bit-packed bipolar codes, exact top-K Hamming search, and persistence.
//!
//! # Index file format (`NHIX`, version 1)
//!
//! All integers little-endian; f64 stored as its IEEE-754 bit pattern.
//!
//! | Field            | Type      | Notes                                   |
//! |------------------|-----------|-----------------------------------------|
//! | magic            | 4 bytes   | `NHIX`                                  |
//! | version          | u16       | 1                                       |
//! | l_bits           | u16       | code length L                           |
//! | d                | u32       | hyperdimensionality D of the scenes     |
//! | count            | u64       | number of entries                       |
//! | basis_seed       | u64       | positional-basis seed                   |
//! | w                | f64 bits  | length scale used at encode time        |
//! | encoder_fp       | u64       | encoder checkpoint fingerprint          |
//! | hash_fp          | u64       | hash model fingerprint                  |
//! | entries          | count times (id u64, ceil(L/64) u64 words)          |
//! | checksum         | u64       | FNV-1a of every preceding byte          |
//!
//! Bit 0 of word 0 is code position 0; bit value 1 encodes +1, 0 encodes -1.
//! Unused high bits of the last word are zero.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const INDEX_MAGIC: [u8; 4] = *b"NHIX";
pub const INDEX_VERSION: u16 = 1;

/// FNV-1a 64-bit, used both for file checksums and model fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// An L-bit bipolar code packed into u64 words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedCode {
    words: Vec<u64>,
    l_bits: usize,
}

impl PackedCode {
    pub fn l_bits(&self) -> usize {
        self.l_bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn from_words(words: Vec<u64>, l_bits: usize) -> Result<Self> {
        if words.len() != l_bits.div_ceil(64) {
            return Err(Error::invalid("word count does not match l_bits"));
        }
        if l_bits % 64 != 0 {
            let mask = !0u64 << (l_bits % 64);
            if let Some(last) = words.last() {
                if last & mask != 0 {
                    return Err(Error::invalid("unused high bits must be zero"));
                }
            }
        }
        Ok(PackedCode { words, l_bits })
    }
}

/// Pack one bipolar row (entries exactly +-1); bit j is set iff entry j is +1.
pub fn pack(code: &[f64]) -> Result<PackedCode> {
    if code.is_empty() {
        return Err(Error::invalid("cannot pack an empty code"));
    }
    let mut words = vec![0u64; code.len().div_ceil(64)];
    for (j, &v) in code.iter().enumerate() {
        if v == 1.0 {
            words[j / 64] |= 1u64 << (j % 64);
        } else if v != -1.0 {
            return Err(Error::invalid(format!(
                "code entry {j} is {v}, expected exactly +1 or -1"
            )));
        }
    }
    Ok(PackedCode {
        words,
        l_bits: code.len(),
    })
}

/// Unpack to the +-1 representation.
pub fn unpack(code: &PackedCode) -> Vec<f64> {
    (0..code.l_bits)
        .map(|j| {
            if code.words[j / 64] >> (j % 64) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Hamming distance: popcount of the XOR. Requires equal widths.
pub fn hamming(a: &PackedCode, b: &PackedCode) -> Result<u32> {
    if a.l_bits != b.l_bits {
        return Err(Error::invalid(format!(
            "code width mismatch: {} vs {}",
            a.l_bits, b.l_bits
        )));
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Configuration fingerprints embedded in the index so query-time artifacts
/// can be checked for compatibility.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexMetadata {
    pub basis_seed: u64,
    pub w: f64,
    pub d: u32,
    pub encoder_fingerprint: u64,
    pub hash_fingerprint: u64,
}

/// An immutable retrieval index: ids with their packed codes.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<(u64, PackedCode)>,
    l_bits: usize,
    metadata: IndexMetadata,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l_bits(&self) -> usize {
        self.l_bits
    }

    pub fn metadata(&self) -> &IndexMetadata {
        &self.metadata
    }

    pub fn entries(&self) -> &[(u64, PackedCode)] {
        &self.entries
    }

    pub fn code_for(&self, id: u64) -> Option<&PackedCode> {
        self.entries
            .binary_search_by_key(&id, |(i, _)| *i)
            .ok()
            .map(|pos| &self.entries[pos].1)
    }
}

/// Build an index from bipolar rows. Ids must be unique; entries are stored
/// sorted by id.
pub fn index_build(
    items: Vec<(u64, Vec<f64>)>,
    l_bits: usize,
    metadata: IndexMetadata,
) -> Result<RetrievalIndex> {
    if l_bits == 0 {
        return Err(Error::invalid("l_bits must be >= 1"));
    }
    let mut entries = Vec::with_capacity(items.len());
    for (id, row) in items {
        if row.len() != l_bits {
            return Err(Error::invalid(format!(
                "code for id {id} has length {}, expected {l_bits}",
                row.len()
            )));
        }
        entries.push((id, pack(&row)?));
    }
    entries.sort_by_key(|(id, _)| *id);
    for pair in entries.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::invalid(format!("duplicate item id {}", pair[0].0)));
        }
    }
    Ok(RetrievalIndex {
        entries,
        l_bits,
        metadata,
    })
}

/// Exact top-K by Hamming distance: ascending distance, ties broken by
/// ascending id, exactly `min(k, len)` results.
pub fn query_topk(
    index: &RetrievalIndex,
    code: &PackedCode,
    k: usize,
) -> Result<Vec<(u64, u32)>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if code.l_bits() != index.l_bits {
        return Err(Error::invalid(format!(
            "query width {} does not match index width {}",
            code.l_bits(),
            index.l_bits
        )));
    }
    let mut scored: Vec<(u32, u64)> = Vec::with_capacity(index.entries.len());
    for (id, stored) in &index.entries {
        scored.push((hamming(stored, code)?, *id));
    }
    scored.sort_unstable();
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(dist, id)| (id, dist))
        .collect())
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::corrupt(field, "file truncated"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u16(&mut self, field: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, field: &'static str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(field)?))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Serialize the index; identical inputs produce identical bytes.
pub fn index_save(index: &RetrievalIndex, sink: &mut impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&INDEX_MAGIC);
    put_u16(&mut buf, INDEX_VERSION);
    put_u16(
        &mut buf,
        u16::try_from(index.l_bits).map_err(|_| Error::invalid("l_bits exceeds u16"))?,
    );
    put_u32(&mut buf, index.metadata.d);
    put_u64(&mut buf, index.entries.len() as u64);
    put_u64(&mut buf, index.metadata.basis_seed);
    put_u64(&mut buf, index.metadata.w.to_bits());
    put_u64(&mut buf, index.metadata.encoder_fingerprint);
    put_u64(&mut buf, index.metadata.hash_fingerprint);
    for (id, code) in &index.entries {
        put_u64(&mut buf, *id);
        for word in &code.words {
            put_u64(&mut buf, *word);
        }
    }
    let checksum = fnv1a64(&buf);
    put_u64(&mut buf, checksum);
    sink.write_all(&buf)?;
    Ok(())
}

/// Load and validate an index file.
pub fn index_load(source: &mut impl Read) -> Result<RetrievalIndex> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(Error::corrupt("checksum", "file shorter than its checksum"));
    }
    let (body, check) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(check.try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(Error::corrupt(
            "checksum",
            format!("stored {stored:#018x}, computed {computed:#018x}"),
        ));
    }

    let mut r = ByteReader::new(body);
    let magic = r.take(4, "magic")?;
    if magic != INDEX_MAGIC {
        return Err(Error::corrupt("magic", format!("found {magic:02x?}")));
    }
    let version = r.u16("version")?;
    if version != INDEX_VERSION {
        return Err(Error::corrupt(
            "version",
            format!("found {version}, expected {INDEX_VERSION}"),
        ));
    }
    let l_bits = r.u16("l_bits")? as usize;
    if l_bits == 0 {
        return Err(Error::corrupt("l_bits", "zero code width"));
    }
    let d = r.u32("d")?;
    let count = r.u64("count")? as usize;
    let metadata = IndexMetadata {
        basis_seed: r.u64("basis_seed")?,
        w: r.f64("w")?,
        d,
        encoder_fingerprint: r.u64("encoder_fp")?,
        hash_fingerprint: r.u64("hash_fp")?,
    };
    let words_per = l_bits.div_ceil(64);
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u64("entries")?;
        let mut words = Vec::with_capacity(words_per);
        for _ in 0..words_per {
            words.push(r.u64("entries")?);
        }
        let code = PackedCode::from_words(words, l_bits)
            .map_err(|e| Error::corrupt("entries", e.to_string()))?;
        entries.push((id, code));
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt(
            "entries",
            format!("{} trailing bytes after entries", r.remaining()),
        ));
    }
    for pair in entries.windows(2) {
        if pair[0].0 >= pair[1].0 {
            return Err(Error::corrupt("entries", "ids not strictly increasing"));
        }
    }
    Ok(RetrievalIndex {
        entries,
        l_bits,
        metadata,
    })
}
