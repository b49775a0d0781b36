//! The feature-dataset ingestion format: a line-delimited JSON manifest plus
//! a binary blob of 32-bit-float feature vectors.
//!
//! Any upstream extractor that emits this layout plugs into the pipeline; no
//! model runtime is ever linked. The synthetic generator produces the same
//! files.
//!
//! - `manifest.jsonl`: header line `{"magic":"NHMF","version":1,...}`, then
//!   one JSON object per image with its dimensions, global-feature offset and
//!   object list (bbox `[x, y, w, h]` in pixels, pseudo-label, feature
//!   offset). Offsets index vector slots in the blob, not bytes.
//! - `features.blob`: magic `NHFB`, version u16, z u32, count u64, then
//!   `count * z` little-endian f32 values, trailing FNV-1a checksum.
//! - `annotations.jsonl` / `labels.jsonl`: ground truth for evaluation, same
//!   header convention (`NHAN`, `NHLB`).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{fnv1a64, ByteReader};
use crate::metrics::{LabeledItem, SpatialAnnotation};

pub const MANIFEST_MAGIC: &str = "NHMF";
pub const ANNOTATIONS_MAGIC: &str = "NHAN";
pub const LABELS_MAGIC: &str = "NHLB";
pub const BLOB_MAGIC: [u8; 4] = *b"NHFB";
pub const FORMAT_VERSION: u16 = 1;

/// One detected object: bounding box in pixels, upstream pseudo-label, and
/// the blob slot of its feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub bbox: [f64; 4],
    pub pseudo_label: u32,
    pub feature_offset: u64,
}

impl ObjectRecord {
    /// Bounding-box center, normalized by the image dimensions.
    pub fn center_normalized(&self, image_w: f64, image_h: f64) -> (f64, f64) {
        (
            (self.bbox[0] + self.bbox[2] / 2.0) / image_w,
            (self.bbox[1] + self.bbox[3] / 2.0) / image_h,
        )
    }
}

/// One image's manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub image_w: f64,
    pub image_h: f64,
    pub global_offset: u64,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    magic: String,
    version: u16,
    z: usize,
    vector_count: u64,
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    magic: String,
    version: u16,
}

/// The ingested dataset: manifest records plus the feature blob.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDataset {
    records: Vec<ImageRecord>,
    blob: Vec<f32>,
    z: usize,
}

impl FeatureDataset {
    pub fn new(records: Vec<ImageRecord>, blob: Vec<f32>, z: usize) -> Result<Self> {
        if z == 0 {
            return Err(Error::invalid("feature width z must be >= 1"));
        }
        if blob.len() % z != 0 {
            return Err(Error::invalid(format!(
                "blob length {} is not a multiple of z = {z}",
                blob.len()
            )));
        }
        let count = (blob.len() / z) as u64;
        let mut last_id: Option<u64> = None;
        for rec in &records {
            if let Some(last) = last_id {
                if rec.image_id <= last {
                    return Err(Error::invalid(format!(
                        "image ids must be strictly increasing, {} follows {last}",
                        rec.image_id
                    )));
                }
            }
            last_id = Some(rec.image_id);
            if !(rec.image_w > 0.0) || !(rec.image_h > 0.0) {
                return Err(Error::invalid(format!(
                    "image {} has non-positive dimensions",
                    rec.image_id
                )));
            }
            if rec.global_offset >= count {
                return Err(Error::invalid(format!(
                    "image {} global offset {} out of blob bounds ({count} vectors)",
                    rec.image_id, rec.global_offset
                )));
            }
            for (i, obj) in rec.objects.iter().enumerate() {
                if obj.feature_offset >= count {
                    return Err(Error::invalid(format!(
                        "image {} object {i} feature offset {} out of blob bounds",
                        rec.image_id, obj.feature_offset
                    )));
                }
                let [x, y, w, h] = obj.bbox;
                if !(w > 0.0)
                    || !(h > 0.0)
                    || x < 0.0
                    || y < 0.0
                    || x + w > rec.image_w + 1e-9
                    || y + h > rec.image_h + 1e-9
                {
                    return Err(Error::invalid(format!(
                        "image {} object {i} bbox {:?} outside image bounds",
                        rec.image_id, obj.bbox
                    )));
                }
            }
        }
        Ok(FeatureDataset { records, blob, z })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn record(&self, image_id: u64) -> Option<&ImageRecord> {
        self.records
            .binary_search_by_key(&image_id, |r| r.image_id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn vector_count(&self) -> u64 {
        (self.blob.len() / self.z) as u64
    }

    pub fn vector(&self, offset: u64) -> &[f32] {
        let start = offset as usize * self.z;
        &self.blob[start..start + self.z]
    }

    pub fn vector_f64(&self, offset: u64) -> Vec<f64> {
        self.vector(offset).iter().map(|&v| f64::from(v)).collect()
    }

    /// Write the manifest as line-delimited JSON with a leading header.
    pub fn write_manifest(&self, sink: &mut impl Write) -> Result<()> {
        let header = ManifestHeader {
            magic: MANIFEST_MAGIC.to_string(),
            version: FORMAT_VERSION,
            z: self.z,
            vector_count: self.vector_count(),
        };
        writeln!(sink, "{}", serde_json::to_string(&header).unwrap())?;
        for rec in &self.records {
            writeln!(sink, "{}", serde_json::to_string(rec).unwrap())?;
        }
        Ok(())
    }

    /// Write the binary feature blob.
    pub fn write_blob(&self, sink: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.blob.len() * 4);
        buf.extend_from_slice(&BLOB_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.z as u32).to_le_bytes());
        buf.extend_from_slice(&self.vector_count().to_le_bytes());
        for v in &self.blob {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let checksum = fnv1a64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        sink.write_all(&buf)?;
        Ok(())
    }

    /// Load from manifest and blob readers, revalidating every invariant.
    pub fn read(manifest: &mut impl Read, blob: &mut impl Read) -> Result<Self> {
        let mut manifest_text = String::new();
        manifest.read_to_string(&mut manifest_text)?;
        let mut lines = manifest_text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::corrupt("manifest", "empty manifest"))?;
        let header: ManifestHeader = serde_json::from_str(header_line)
            .map_err(|e| Error::corrupt("manifest", format!("bad header: {e}")))?;
        if header.magic != MANIFEST_MAGIC {
            return Err(Error::corrupt("magic", format!("found `{}`", header.magic)));
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::corrupt(
                "version",
                format!("found {}, expected {FORMAT_VERSION}", header.version),
            ));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImageRecord = serde_json::from_str(line).map_err(|e| {
                Error::corrupt("manifest", format!("record line {}: {e}", i + 2))
            })?;
            records.push(rec);
        }

        let mut blob_bytes = Vec::new();
        blob.read_to_end(&mut blob_bytes)?;
        if blob_bytes.len() < 8 {
            return Err(Error::corrupt("checksum", "blob shorter than checksum"));
        }
        let (body, check) = blob_bytes.split_at(blob_bytes.len() - 8);
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
        if magic != BLOB_MAGIC {
            return Err(Error::corrupt("magic", format!("found {magic:02x?}")));
        }
        let version = r.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::corrupt(
                "version",
                format!("found {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let z = r.u32("z")? as usize;
        if z != header.z {
            return Err(Error::Incompatible {
                fields: vec![format!("z (manifest {} vs blob {z})", header.z)],
            });
        }
        let count = r.u64("count")? as usize;
        if count as u64 != header.vector_count {
            return Err(Error::Incompatible {
                fields: vec![format!(
                    "vector_count (manifest {} vs blob {count})",
                    header.vector_count
                )],
            });
        }
        let mut data = Vec::with_capacity(count * z);
        for _ in 0..count * z {
            let bytes = r.take(4, "blob data")?;
            data.push(f32::from_le_bytes(bytes.try_into().unwrap()));
        }
        if r.remaining() != 0 {
            return Err(Error::corrupt("blob data", "trailing bytes"));
        }
        FeatureDataset::new(records, data, z)
    }
}

fn write_jsonl<T: Serialize>(magic: &str, items: &[T], sink: &mut impl Write) -> Result<()> {
    let header = JsonlHeader {
        magic: magic.to_string(),
        version: FORMAT_VERSION,
    };
    writeln!(sink, "{}", serde_json::to_string(&header).unwrap())?;
    for item in items {
        writeln!(sink, "{}", serde_json::to_string(item).unwrap())?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(magic: &str, source: &mut impl Read) -> Result<Vec<T>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::corrupt("header", "empty file"))?;
    let header: JsonlHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::corrupt("header", format!("bad header: {e}")))?;
    if header.magic != magic {
        return Err(Error::corrupt(
            "magic",
            format!("found `{}`, expected `{magic}`", header.magic),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::corrupt(
            "version",
            format!("found {}, expected {FORMAT_VERSION}", header.version),
        ));
    }
    let mut items = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(line).map_err(|e| {
            Error::corrupt("record", format!("line {}: {e}", i + 2))
        })?);
    }
    Ok(items)
}

pub fn write_annotations(items: &[SpatialAnnotation], sink: &mut impl Write) -> Result<()> {
    write_jsonl(ANNOTATIONS_MAGIC, items, sink)
}

pub fn read_annotations(source: &mut impl Read) -> Result<Vec<SpatialAnnotation>> {
    let items: Vec<SpatialAnnotation> = read_jsonl(ANNOTATIONS_MAGIC, source)?;
    // Revalidate through the checked constructor.
    items
        .into_iter()
        .map(|a| SpatialAnnotation::new(a.item_id, a.objects, a.image_w, a.image_h))
        .collect()
}

pub fn write_labels(items: &[LabeledItem], sink: &mut impl Write) -> Result<()> {
    write_jsonl(LABELS_MAGIC, items, sink)
}

pub fn read_labels(source: &mut impl Read) -> Result<Vec<LabeledItem>> {
    let items: Vec<LabeledItem> = read_jsonl(LABELS_MAGIC, source)?;
    items
        .into_iter()
        .map(|l| LabeledItem::new(l.item_id, l.class_labels))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dataset() -> FeatureDataset {
        let records = vec![
            ImageRecord {
                image_id: 0,
                image_w: 640.0,
                image_h: 480.0,
                global_offset: 0,
                objects: vec![ObjectRecord {
                    bbox: [100.0, 100.0, 50.0, 80.0],
                    pseudo_label: 3,
                    feature_offset: 1,
                }],
            },
            ImageRecord {
                image_id: 5,
                image_w: 320.0,
                image_h: 240.0,
                global_offset: 2,
                objects: vec![],
            },
        ];
        let blob: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        FeatureDataset::new(records, blob, 4).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = sample_dataset();
        let mut manifest = Vec::new();
        let mut blob = Vec::new();
        ds.write_manifest(&mut manifest).unwrap();
        ds.write_blob(&mut blob).unwrap();
        let loaded = FeatureDataset::read(&mut &manifest[..], &mut &blob[..]).unwrap();
        assert_eq!(ds, loaded);
        // Deterministic serialization.
        let mut manifest2 = Vec::new();
        loaded.write_manifest(&mut manifest2).unwrap();
        assert_eq!(manifest, manifest2);
    }

    #[test]
    fn vector_lookup() {
        let ds = sample_dataset();
        assert_eq!(ds.vector(1), &[2.0, 2.5, 3.0, 3.5]);
        assert_eq!(ds.record(5).unwrap().global_offset, 2);
        assert!(ds.record(1).is_none());
    }

    #[test]
    fn center_normalization() {
        let obj = ObjectRecord {
            bbox: [100.0, 100.0, 50.0, 80.0],
            pseudo_label: 0,
            feature_offset: 0,
        };
        let (x, y) = obj.center_normalized(640.0, 480.0);
        assert!((x - 125.0 / 640.0).abs() < 1e-12);
        assert!((y - 140.0 / 480.0).abs() < 1e-12);
    }

    #[test]
    fn offset_out_of_bounds_rejected() {
        let records = vec![ImageRecord {
            image_id: 0,
            image_w: 64.0,
            image_h: 64.0,
            global_offset: 3,
            objects: vec![],
        }];
        assert!(FeatureDataset::new(records, vec![0.0; 12], 4).is_err());
    }

    #[test]
    fn bbox_outside_image_rejected() {
        let records = vec![ImageRecord {
            image_id: 0,
            image_w: 64.0,
            image_h: 64.0,
            global_offset: 0,
            objects: vec![ObjectRecord {
                bbox: [60.0, 0.0, 10.0, 10.0],
                pseudo_label: 0,
                feature_offset: 0,
            }],
        }];
        assert!(FeatureDataset::new(records, vec![0.0; 4], 4).is_err());
    }

    #[test]
    fn corrupted_blob_checksum_detected() {
        let ds = sample_dataset();
        let mut manifest = Vec::new();
        let mut blob = Vec::new();
        ds.write_manifest(&mut manifest).unwrap();
        ds.write_blob(&mut blob).unwrap();
        let mid = blob.len() / 2;
        blob[mid] ^= 0x01;
        match FeatureDataset::read(&mut &manifest[..], &mut &blob[..]) {
            Err(Error::Corrupt { field, .. }) => assert_eq!(field, "checksum"),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn annotations_and_labels_round_trip() {
        let anns = vec![SpatialAnnotation::new(
            3,
            vec![crate::metrics::AnnotatedObject {
                class_label: 2,
                x: 10.0,
                y: 20.0,
            }],
            64.0,
            64.0,
        )
        .unwrap()];
        let mut buf = Vec::new();
        write_annotations(&anns, &mut buf).unwrap();
        let loaded = read_annotations(&mut &buf[..]).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].item_id, 3);

        let labels = vec![LabeledItem::new(3, vec![2, 2, 1]).unwrap()];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        let loaded = read_labels(&mut &buf[..]).unwrap();
        assert_eq!(loaded[0].class_labels, vec![1, 2]);
    }

    #[test]
    fn wrong_magic_in_jsonl_detected() {
        let labels = vec![LabeledItem::new(0, vec![1]).unwrap()];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert!(matches!(
            read_annotations(&mut &buf[..]),
            Err(Error::Corrupt { field: "magic", .. })
        ));
    }
}
