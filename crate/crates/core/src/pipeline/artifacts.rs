//! Binary persistence for trained models and intermediate matrices.
//!
//! Four sibling formats, all little-endian with a 4-byte magic, a u16
//! version, and a trailing FNV-1a checksum over every preceding byte:
//!
//! - `NHEC`: encoder checkpoint (dims z, z', D, c then the parameter blocks
//!   in declaration order, each f64)
//! - `NHHM`: hash model (L, 2D, then P row-major and b, each f64)
//! - `NHSC`: encoded scenes (D, count, basis seed, w, encoder fingerprint,
//!   then id + flattened 2D-vector per image)
//! - `NHBC`: bipolar codes (L, count, D, basis seed, w, encoder and hash
//!   fingerprints, then id + one signed byte per bit)
//!
//! A file's fingerprint is its checksum; downstream artifacts embed the
//! fingerprints of what produced them, and consumers compare before use.

use std::io::{Read, Write};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::hasher::HashModel;
use crate::index::{fnv1a64, ByteReader};
use crate::mat::Mat;

pub const ENCODER_MAGIC: [u8; 4] = *b"NHEC";
pub const HASH_MAGIC: [u8; 4] = *b"NHHM";
pub const SCENES_MAGIC: [u8; 4] = *b"NHSC";
pub const CODES_MAGIC: [u8; 4] = *b"NHBC";
pub const ARTIFACT_VERSION: u16 = 1;

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

fn read_f64s(r: &mut ByteReader, n: usize, field: &'static str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.f64(field)?);
    }
    Ok(out)
}

fn finish(mut buf: Vec<u8>, sink: &mut impl Write) -> Result<u64> {
    let checksum = fnv1a64(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    sink.write_all(&buf)?;
    Ok(checksum)
}

fn open<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(ByteReader<'a>, u64)> {
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
    let found = r.take(4, "magic")?;
    if found != magic {
        return Err(Error::corrupt("magic", format!("found {found:02x?}")));
    }
    let version = r.u16("version")?;
    if version != ARTIFACT_VERSION {
        return Err(Error::corrupt(
            "version",
            format!("found {version}, expected {ARTIFACT_VERSION}"),
        ));
    }
    Ok((r, stored))
}

fn expect_consumed(r: &ByteReader) -> Result<()> {
    if r.remaining() != 0 {
        return Err(Error::corrupt(
            "payload",
            format!("{} trailing bytes", r.remaining()),
        ));
    }
    Ok(())
}

/// Save an encoder checkpoint; returns its fingerprint.
pub fn save_encoder(params: &EncoderParams, sink: &mut impl Write) -> Result<u64> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&ENCODER_MAGIC);
    buf.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    for dim in [params.z(), params.z_prime(), params.d(), params.classes()] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    put_f64s(&mut buf, params.w_ext.data());
    put_f64s(&mut buf, &params.b_ext);
    put_f64s(&mut buf, params.w_gen.data());
    put_f64s(&mut buf, &params.b_gen);
    put_f64s(&mut buf, params.w_rec.data());
    put_f64s(&mut buf, &params.b_rec);
    put_f64s(&mut buf, params.c_mat.data());
    finish(buf, sink)
}

/// Load an encoder checkpoint with its fingerprint.
pub fn load_encoder(source: &mut impl Read) -> Result<(EncoderParams, u64)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (mut r, fingerprint) = open(&bytes, &ENCODER_MAGIC)?;
    let z = r.u32("z")? as usize;
    let z_prime = r.u32("z_prime")? as usize;
    let d = r.u32("d")? as usize;
    let c = r.u32("c")? as usize;
    if z_prime < 1 || z <= z_prime || d < z || c < 2 {
        return Err(Error::corrupt("dims", format!("z={z} z'={z_prime} d={d} c={c}")));
    }
    let w_ext = Mat::from_vec(z_prime, z, read_f64s(&mut r, z_prime * z, "w_ext")?)?;
    let b_ext = read_f64s(&mut r, z_prime, "b_ext")?;
    let w_gen = Mat::from_vec(d, z_prime, read_f64s(&mut r, d * z_prime, "w_gen")?)?;
    let b_gen = read_f64s(&mut r, d, "b_gen")?;
    let w_rec = Mat::from_vec(z, d, read_f64s(&mut r, z * d, "w_rec")?)?;
    let b_rec = read_f64s(&mut r, z, "b_rec")?;
    let c_mat = Mat::from_vec(d, c, read_f64s(&mut r, d * c, "c_mat")?)?;
    expect_consumed(&r)?;
    Ok((
        EncoderParams {
            w_ext,
            b_ext,
            w_gen,
            b_gen,
            w_rec,
            b_rec,
            c_mat,
        },
        fingerprint,
    ))
}

/// Save a hash model; returns its fingerprint.
pub fn save_hash_model(model: &HashModel, sink: &mut impl Write) -> Result<u64> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&HASH_MAGIC);
    buf.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    buf.extend_from_slice(
        &u16::try_from(model.l_bits())
            .map_err(|_| Error::invalid("l_bits exceeds u16"))?
            .to_le_bytes(),
    );
    buf.extend_from_slice(&(model.dim2d() as u32).to_le_bytes());
    put_f64s(&mut buf, model.p.data());
    put_f64s(&mut buf, &model.b);
    finish(buf, sink)
}

pub fn load_hash_model(source: &mut impl Read) -> Result<(HashModel, u64)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (mut r, fingerprint) = open(&bytes, &HASH_MAGIC)?;
    let l_bits = r.u16("l_bits")? as usize;
    let dim2d = r.u32("dim2d")? as usize;
    if l_bits < 1 || dim2d < 2 {
        return Err(Error::corrupt("dims", format!("l_bits={l_bits} dim2d={dim2d}")));
    }
    let p = Mat::from_vec(l_bits, dim2d, read_f64s(&mut r, l_bits * dim2d, "p")?)?;
    let b = read_f64s(&mut r, l_bits, "b")?;
    expect_consumed(&r)?;
    Ok((HashModel { p, b }, fingerprint))
}

/// Encoded scenes with the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenesArtifact {
    pub d: u32,
    pub basis_seed: u64,
    pub w: f64,
    pub encoder_fingerprint: u64,
    /// Per image: id and the flattened 2D-dimensional representation.
    pub entries: Vec<(u64, Vec<f64>)>,
}

impl ScenesArtifact {
    /// Stack the flattened scenes into an M x 2D matrix (id order).
    pub fn matrix(&self) -> Result<Mat> {
        let dim2d = 2 * self.d as usize;
        let mut data = Vec::with_capacity(self.entries.len() * dim2d);
        for (_, flat) in &self.entries {
            if flat.len() != dim2d {
                return Err(Error::invalid("scene width mismatch"));
            }
            data.extend_from_slice(flat);
        }
        Mat::from_vec(self.entries.len(), dim2d, data)
    }
}

pub fn save_scenes(scenes: &ScenesArtifact, sink: &mut impl Write) -> Result<u64> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&SCENES_MAGIC);
    buf.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    buf.extend_from_slice(&scenes.d.to_le_bytes());
    buf.extend_from_slice(&(scenes.entries.len() as u64).to_le_bytes());
    buf.extend_from_slice(&scenes.basis_seed.to_le_bytes());
    buf.extend_from_slice(&scenes.w.to_bits().to_le_bytes());
    buf.extend_from_slice(&scenes.encoder_fingerprint.to_le_bytes());
    let dim2d = 2 * scenes.d as usize;
    for (id, flat) in &scenes.entries {
        if flat.len() != dim2d {
            return Err(Error::invalid(format!(
                "scene {id} has width {}, expected {dim2d}",
                flat.len()
            )));
        }
        buf.extend_from_slice(&id.to_le_bytes());
        put_f64s(&mut buf, flat);
    }
    finish(buf, sink)
}

pub fn load_scenes(source: &mut impl Read) -> Result<(ScenesArtifact, u64)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (mut r, fingerprint) = open(&bytes, &SCENES_MAGIC)?;
    let d = r.u32("d")?;
    let count = r.u64("count")? as usize;
    let basis_seed = r.u64("basis_seed")?;
    let w = r.f64("w")?;
    let encoder_fingerprint = r.u64("encoder_fp")?;
    let dim2d = 2 * d as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u64("entries")?;
        entries.push((id, read_f64s(&mut r, dim2d, "entries")?));
    }
    expect_consumed(&r)?;
    Ok((
        ScenesArtifact {
            d,
            basis_seed,
            w,
            encoder_fingerprint,
            entries,
        },
        fingerprint,
    ))
}

/// Bipolar codes with full provenance fingerprints.
#[derive(Clone, Debug, PartialEq)]
pub struct CodesArtifact {
    pub l_bits: usize,
    pub d: u32,
    pub basis_seed: u64,
    pub w: f64,
    pub encoder_fingerprint: u64,
    pub hash_fingerprint: u64,
    /// Per image: id and its +-1 row.
    pub entries: Vec<(u64, Vec<f64>)>,
}

pub fn save_codes(codes: &CodesArtifact, sink: &mut impl Write) -> Result<u64> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CODES_MAGIC);
    buf.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    buf.extend_from_slice(
        &u16::try_from(codes.l_bits)
            .map_err(|_| Error::invalid("l_bits exceeds u16"))?
            .to_le_bytes(),
    );
    buf.extend_from_slice(&(codes.entries.len() as u64).to_le_bytes());
    buf.extend_from_slice(&codes.d.to_le_bytes());
    buf.extend_from_slice(&codes.basis_seed.to_le_bytes());
    buf.extend_from_slice(&codes.w.to_bits().to_le_bytes());
    buf.extend_from_slice(&codes.encoder_fingerprint.to_le_bytes());
    buf.extend_from_slice(&codes.hash_fingerprint.to_le_bytes());
    for (id, row) in &codes.entries {
        if row.len() != codes.l_bits {
            return Err(Error::invalid(format!(
                "code {id} has length {}, expected {}",
                row.len(),
                codes.l_bits
            )));
        }
        buf.extend_from_slice(&id.to_le_bytes());
        for &v in row {
            if v == 1.0 {
                buf.push(1u8);
            } else if v == -1.0 {
                buf.push(0xFF);
            } else {
                return Err(Error::invalid(format!("code {id} entry {v} is not bipolar")));
            }
        }
    }
    finish(buf, sink)
}

pub fn load_codes(source: &mut impl Read) -> Result<(CodesArtifact, u64)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (mut r, fingerprint) = open(&bytes, &CODES_MAGIC)?;
    let l_bits = r.u16("l_bits")? as usize;
    let count = r.u64("count")? as usize;
    let d = r.u32("d")?;
    let basis_seed = r.u64("basis_seed")?;
    let w = r.f64("w")?;
    let encoder_fingerprint = r.u64("encoder_fp")?;
    let hash_fingerprint = r.u64("hash_fp")?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.u64("entries")?;
        let raw = r.take(l_bits, "entries")?;
        let row: Result<Vec<f64>> = raw
            .iter()
            .map(|&b| match b {
                1u8 => Ok(1.0),
                0xFF => Ok(-1.0),
                other => Err(Error::corrupt("entries", format!("byte {other:#04x}"))),
            })
            .collect();
        entries.push((id, row?));
    }
    expect_consumed(&r)?;
    Ok((
        CodesArtifact {
            l_bits,
            d,
            basis_seed,
            w,
            encoder_fingerprint,
            hash_fingerprint,
            entries,
        },
        fingerprint,
    ))
}
