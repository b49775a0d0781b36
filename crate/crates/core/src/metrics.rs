//! Retrieval metrics: mAP@K and the spatial-aware mAP@K_r.
//!
//! mAP@K_r treats a retrieved image as relevant only if some query object
//! finds a same-class object in it whose normalized coordinates lie within
//! radius `r`. The pair-to-image aggregation rule is isolated behind
//! [`MatchPolicy`] so stricter rules can slot in later.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An item with its ground-truth class labels (multi-label capable).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledItem {
    pub item_id: u64,
    pub class_labels: Vec<u32>,
}

impl LabeledItem {
    pub fn new(item_id: u64, mut class_labels: Vec<u32>) -> Result<Self> {
        if class_labels.is_empty() {
            return Err(Error::invalid(format!(
                "item {item_id} has an empty label set"
            )));
        }
        class_labels.sort_unstable();
        class_labels.dedup();
        Ok(LabeledItem {
            item_id,
            class_labels,
        })
    }
}

/// Single-label relevance: the two items share their (first) label.
/// Convention used for single-label corpora.
pub fn single_label_relevant(a: &LabeledItem, b: &LabeledItem) -> bool {
    a.class_labels.first() == b.class_labels.first()
}

/// Multi-label relevance: the label sets intersect.
pub fn multi_label_relevant(a: &LabeledItem, b: &LabeledItem) -> bool {
    let small: HashSet<u32> = a.class_labels.iter().copied().collect();
    b.class_labels.iter().any(|l| small.contains(l))
}

/// One annotated object: class plus its coordinates in image space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub class_label: u32,
    pub x: f64,
    pub y: f64,
}

/// Ground-truth object positions for one image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpatialAnnotation {
    pub item_id: u64,
    pub objects: Vec<AnnotatedObject>,
    pub image_w: f64,
    pub image_h: f64,
}

impl SpatialAnnotation {
    pub fn new(
        item_id: u64,
        objects: Vec<AnnotatedObject>,
        image_w: f64,
        image_h: f64,
    ) -> Result<Self> {
        if !(image_w > 0.0) || !(image_h > 0.0) {
            return Err(Error::invalid(format!(
                "item {item_id} has non-positive image dimensions {image_w}x{image_h}"
            )));
        }
        for (i, o) in objects.iter().enumerate() {
            if !(0.0..=image_w).contains(&o.x) || !(0.0..=image_h).contains(&o.y) {
                return Err(Error::invalid(format!(
                    "item {item_id} object {i} at ({}, {}) outside image bounds",
                    o.x, o.y
                )));
            }
        }
        Ok(SpatialAnnotation {
            item_id,
            objects,
            image_w,
            image_h,
        })
    }
}

/// How object-pair matches aggregate into image-level relevance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MatchPolicy {
    /// Relevant iff at least one (query object, retrieved object) pair
    /// matches. The weakest consistent reading.
    #[default]
    AnyPair,
}

/// The spatial match test for two objects: same class and squared
/// normalized-coordinate distance at most `r^2` (inclusive).
pub fn spatial_match(
    a: &AnnotatedObject,
    dims_a: (f64, f64),
    b: &AnnotatedObject,
    dims_b: (f64, f64),
    r: f64,
) -> Result<bool> {
    if !(dims_a.0 > 0.0) || !(dims_a.1 > 0.0) || !(dims_b.0 > 0.0) || !(dims_b.1 > 0.0) {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("radius r must be > 0, got {r}")));
    }
    if a.class_label != b.class_label {
        return Ok(false);
    }
    let dx = a.x / dims_a.0 - b.x / dims_b.0;
    let dy = a.y / dims_a.1 - b.y / dims_b.1;
    Ok(dx * dx + dy * dy <= r * r)
}

fn image_relevant(
    query: &SpatialAnnotation,
    candidate: &SpatialAnnotation,
    r: f64,
    policy: MatchPolicy,
) -> Result<bool> {
    match policy {
        MatchPolicy::AnyPair => {
            for qo in &query.objects {
                for co in &candidate.objects {
                    if spatial_match(
                        qo,
                        (query.image_w, query.image_h),
                        co,
                        (candidate.image_w, candidate.image_h),
                        r,
                    )? {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        }
    }
}

/// Average precision at `k`.
///
/// `AP@k = (sum over relevant hits i <= k of precision@i) / min(k, R)` with
/// `R` the number of relevant items in the whole ranking; 0 when nothing is
/// relevant.
pub fn average_precision(
    ranking: &[u64],
    relevant: impl Fn(u64) -> bool,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut seen = HashSet::with_capacity(ranking.len());
    for id in ranking {
        if !seen.insert(*id) {
            return Err(Error::invalid(format!("duplicate id {id} in ranking")));
        }
    }
    let total_relevant = ranking.iter().filter(|&&id| relevant(id)).count();
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &id) in ranking.iter().take(k).enumerate() {
        if relevant(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(total_relevant) as f64)
}

/// Mean of AP@k over a query set.
pub fn map_at_k<'a, F>(queries: &'a [(Vec<u64>, F)], k: usize) -> Result<f64>
where
    F: Fn(u64) -> bool,
{
    if queries.is_empty() {
        return Err(Error::invalid("query list is empty"));
    }
    let mut sum = 0.0;
    for (ranking, relevant) in queries {
        sum += average_precision(ranking, relevant, k)?;
    }
    Ok(sum / queries.len() as f64)
}

/// Spatial-aware mAP@K_r.
///
/// Every ranked id must have an annotation in `corpus`; relevance follows
/// [`MatchPolicy::AnyPair`] against the query's own annotation.
pub fn map_at_k_r(
    queries: &[(Vec<u64>, &SpatialAnnotation)],
    corpus: &BTreeMap<u64, SpatialAnnotation>,
    k: usize,
    r: f64,
) -> Result<f64> {
    map_at_k_r_with(queries, corpus, k, r, MatchPolicy::AnyPair)
}

pub fn map_at_k_r_with(
    queries: &[(Vec<u64>, &SpatialAnnotation)],
    corpus: &BTreeMap<u64, SpatialAnnotation>,
    k: usize,
    r: f64,
    policy: MatchPolicy,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::invalid("query list is empty"));
    }
    let mut sum = 0.0;
    for (ranking, query_ann) in queries {
        // Resolve relevance up front so missing annotations fail loudly.
        let mut relevant_ids = HashSet::new();
        for id in ranking {
            let candidate = corpus.get(id).ok_or_else(|| {
                Error::invalid(format!("ranked item {id} has no spatial annotation"))
            })?;
            if image_relevant(query_ann, candidate, r, policy)? {
                relevant_ids.insert(*id);
            }
        }
        sum += average_precision(ranking, |id| relevant_ids.contains(&id), k)?;
    }
    Ok(sum / queries.len() as f64)
}
