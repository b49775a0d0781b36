//! Synthetic scene generator: a desk-scale stand-in for upstream detection
//! and embedding models.
//!
//! Class prototypes are drawn in feature space; each object is its class
//! prototype plus Gaussian noise placed uniformly in the image, and the
//! global feature is the mean of the object features plus noise. Ground
//! truth (positions, labels) is recorded alongside for evaluation.

use crate::error::{Error, Result};
use crate::metrics::{AnnotatedObject, LabeledItem, SpatialAnnotation};
use crate::rng::{gaussian_f64, rng_from_seed, uniform_in, uniform_usize};

use super::dataset::{FeatureDataset, ImageRecord, ObjectRecord};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_images: usize,
    pub n_classes: usize,
    pub z: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Noise around the class prototype for object features.
    pub noise_sigma: f64,
    /// Noise on top of the object-feature mean for the global feature.
    pub global_noise_sigma: f64,
    pub image_w: f64,
    pub image_h: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 128,
            n_classes: 8,
            z: 64,
            objects_min: 1,
            objects_max: 4,
            noise_sigma: 0.1,
            global_noise_sigma: 0.1,
            image_w: 640.0,
            image_h: 480.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::invalid("n_images must be >= 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid("n_classes must be >= 2"));
        }
        if self.z < 8 {
            return Err(Error::invalid("z must be >= 8"));
        }
        if self.objects_min < 1 || self.objects_max < self.objects_min {
            return Err(Error::invalid(
                "objects per image must satisfy 1 <= min <= max",
            ));
        }
        if !(self.noise_sigma >= 0.0) || !(self.global_noise_sigma >= 0.0) {
            return Err(Error::invalid("noise scales must be >= 0"));
        }
        if !(self.image_w > 0.0) || !(self.image_h > 0.0) {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok(())
    }
}

/// Generator output: the ingestable dataset plus its ground truth.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: FeatureDataset,
    pub annotations: Vec<SpatialAnnotation>,
    pub labels: Vec<LabeledItem>,
    /// The class prototypes actually used (one per class, length z).
    pub prototypes: Vec<Vec<f64>>,
}

/// Generate a synthetic corpus; byte-identical for identical inputs.
pub fn synth_generate(seed: u64, config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let prototypes: Vec<Vec<f64>> = (0..config.n_classes)
        .map(|_| (0..config.z).map(|_| gaussian_f64(&mut rng)).collect())
        .collect();

    let mut records = Vec::with_capacity(config.n_images);
    let mut blob: Vec<f32> = Vec::new();
    let mut annotations = Vec::with_capacity(config.n_images);
    let mut labels = Vec::with_capacity(config.n_images);

    for image_id in 0..config.n_images as u64 {
        let span = config.objects_max - config.objects_min + 1;
        let n_obj = config.objects_min + uniform_usize(&mut rng, span);
        let mut object_features: Vec<Vec<f64>> = Vec::with_capacity(n_obj);
        let mut objects = Vec::with_capacity(n_obj);
        let mut ann_objects = Vec::with_capacity(n_obj);
        let mut label_set = Vec::new();

        // Reserve the global slot first so each image's vectors are
        // contiguous: [global, obj_0, obj_1, ...].
        let global_offset = (blob.len() / config.z) as u64;
        blob.extend(std::iter::repeat(0.0f32).take(config.z));

        for _ in 0..n_obj {
            let class = uniform_usize(&mut rng, config.n_classes);
            let feature: Vec<f64> = prototypes[class]
                .iter()
                .map(|&p| p + config.noise_sigma * gaussian_f64(&mut rng))
                .collect();
            // Box size between 5% and 25% of each image dimension; the
            // center is clamped so the box stays inside the image.
            let bw = uniform_in(&mut rng, 0.05, 0.25) * config.image_w;
            let bh = uniform_in(&mut rng, 0.05, 0.25) * config.image_h;
            let cx = uniform_in(&mut rng, 0.0, 1.0) * config.image_w;
            let cy = uniform_in(&mut rng, 0.0, 1.0) * config.image_h;
            let cx = cx.clamp(bw / 2.0, config.image_w - bw / 2.0);
            let cy = cy.clamp(bh / 2.0, config.image_h - bh / 2.0);

            let feature_offset = (blob.len() / config.z) as u64;
            blob.extend(feature.iter().map(|&v| v as f32));
            objects.push(ObjectRecord {
                bbox: [cx - bw / 2.0, cy - bh / 2.0, bw, bh],
                pseudo_label: class as u32,
                feature_offset,
            });
            ann_objects.push(AnnotatedObject {
                class_label: class as u32,
                x: cx,
                y: cy,
            });
            label_set.push(class as u32);
            object_features.push(feature);
        }

        // Global feature: mean of the object features plus noise.
        let mut global = vec![0.0f64; config.z];
        for feature in &object_features {
            for (g, &v) in global.iter_mut().zip(feature) {
                *g += v;
            }
        }
        for g in global.iter_mut() {
            *g = *g / n_obj as f64 + config.global_noise_sigma * gaussian_f64(&mut rng);
        }
        let start = global_offset as usize * config.z;
        for (slot, &v) in blob[start..start + config.z].iter_mut().zip(&global) {
            *slot = v as f32;
        }

        records.push(ImageRecord {
            image_id,
            image_w: config.image_w,
            image_h: config.image_h,
            global_offset,
            objects,
        });
        annotations.push(SpatialAnnotation::new(
            image_id,
            ann_objects,
            config.image_w,
            config.image_h,
        )?);
        labels.push(LabeledItem::new(image_id, label_set)?);
    }

    Ok(SynthOutput {
        dataset: FeatureDataset::new(records, blob, config.z)?,
        annotations,
        labels,
        prototypes,
    })
}

/// The constructed conditional-retrieval case: a query sharing one object
/// with a match scene and another object with every distractor.
#[derive(Clone, Debug)]
pub struct ConditionalTestbed {
    pub output: SynthOutput,
    /// Image id of the query.
    pub query_id: u64,
    /// Image id of the scene containing a near-duplicate of the target
    /// object at the target position.
    pub match_id: u64,
    /// Index of the target object within the query's object list.
    pub boosted_object: usize,
}

/// Build the eta-manipulation testbed.
///
/// Scene 0 holds a near-duplicate of the target object at its position plus
/// an unrelated filler; the query (scene 1) holds the target plus a clutter
/// object; every distractor holds the same clutter object plus its own
/// filler. Raising the target's weight in the query should promote (or
/// hold) scene 0's rank.
pub fn conditional_testbed(seed: u64, z: usize, n_distractors: usize) -> Result<ConditionalTestbed> {
    if z < 8 {
        return Err(Error::invalid("z must be >= 8"));
    }
    if n_distractors < 1 {
        return Err(Error::invalid("need at least one distractor"));
    }
    let mut rng = rng_from_seed(seed);
    let n_classes = 2 + n_distractors + 1; // target, clutter, fillers
    let prototypes: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..z).map(|_| gaussian_f64(&mut rng)).collect())
        .collect();
    let noisy = |rng: &mut crate::rng::Rng, proto: &[f64], sigma: f64| -> Vec<f64> {
        proto.iter().map(|&p| p + sigma * gaussian_f64(rng)).collect()
    };

    let (image_w, image_h) = (640.0, 480.0);
    let target_pos = (0.25, 0.25);
    let clutter_pos = (0.75, 0.75);
    let box_size = 40.0;

    let mut blob: Vec<f32> = Vec::new();
    let mut records = Vec::new();
    let mut annotations = Vec::new();
    let mut labels = Vec::new();

    let push_vec = |blob: &mut Vec<f32>, v: &[f64]| -> u64 {
        let offset = (blob.len() / z) as u64;
        blob.extend(v.iter().map(|&x| x as f32));
        offset
    };
    let add_image = |blob: &mut Vec<f32>,
                         image_id: u64,
                         objects: Vec<(u32, Vec<f64>, (f64, f64))>|
     -> Result<(ImageRecord, SpatialAnnotation, LabeledItem)> {
        let mut global = vec![0.0f64; z];
        for (_, feature, _) in &objects {
            for (g, &v) in global.iter_mut().zip(feature) {
                *g += v;
            }
        }
        for g in global.iter_mut() {
            *g /= objects.len() as f64;
        }
        let global_offset = push_vec(blob, &global);
        let mut object_records = Vec::new();
        let mut ann_objects = Vec::new();
        let mut label_set = Vec::new();
        for (class, feature, (x, y)) in objects {
            let offset = push_vec(blob, &feature);
            let cx = x * image_w;
            let cy = y * image_h;
            object_records.push(ObjectRecord {
                bbox: [cx - box_size / 2.0, cy - box_size / 2.0, box_size, box_size],
                pseudo_label: class,
                feature_offset: offset,
            });
            ann_objects.push(AnnotatedObject {
                class_label: class,
                x: cx,
                y: cy,
            });
            label_set.push(class);
        }
        Ok((
            ImageRecord {
                image_id,
                image_w,
                image_h,
                global_offset,
                objects: object_records,
            },
            SpatialAnnotation::new(image_id, ann_objects, image_w, image_h)?,
            LabeledItem::new(image_id, label_set)?,
        ))
    };

    // Scene 0: near-duplicate target + filler.
    let near_dup = noisy(&mut rng, &prototypes[0], 0.05);
    let filler0 = noisy(&mut rng, &prototypes[2], 0.05);
    let (rec, ann, label) = add_image(
        &mut blob,
        0,
        vec![(0, near_dup, target_pos), (2, filler0, (0.6, 0.4))],
    )?;
    records.push(rec);
    annotations.push(ann);
    labels.push(label);

    // Scene 1 (the query): target + clutter.
    let target = noisy(&mut rng, &prototypes[0], 0.05);
    let clutter = noisy(&mut rng, &prototypes[1], 0.05);
    let (rec, ann, label) = add_image(
        &mut blob,
        1,
        vec![(0, target, target_pos), (1, clutter, clutter_pos)],
    )?;
    records.push(rec);
    annotations.push(ann);
    labels.push(label);

    // Distractors: the same clutter object plus a distinct filler each.
    for i in 0..n_distractors {
        let clutter_copy = noisy(&mut rng, &prototypes[1], 0.05);
        let filler = noisy(&mut rng, &prototypes[3 + i], 0.05);
        let x = uniform_in(&mut rng, 0.1, 0.9);
        let y = uniform_in(&mut rng, 0.1, 0.45);
        let (rec, ann, label) = add_image(
            &mut blob,
            2 + i as u64,
            vec![
                (1, clutter_copy, clutter_pos),
                ((3 + i) as u32, filler, (x, y)),
            ],
        )?;
        records.push(rec);
        annotations.push(ann);
        labels.push(label);
    }

    let dataset = FeatureDataset::new(records, blob, z)?;
    Ok(ConditionalTestbed {
        output: SynthOutput {
            dataset,
            annotations,
            labels,
            prototypes,
        },
        query_id: 1,
        match_id: 0,
        boosted_object: 0,
    })
}

/// Parameters of the position-permuted-duplicates corpus.
#[derive(Clone, Debug)]
pub struct PermutedTestbedConfig {
    pub z: usize,
    pub n_bases: usize,
    pub objects_per_base: usize,
    /// Duplicates keeping the base positions.
    pub n_exact: usize,
    /// Duplicates with cyclically permuted positions.
    pub n_permuted: usize,
    pub n_classes: usize,
    /// Feature jitter between a base object and its copies in duplicates.
    pub duplicate_noise: f64,
    /// Feature noise around the class prototype for base objects.
    pub proto_noise: f64,
}

impl Default for PermutedTestbedConfig {
    fn default() -> Self {
        PermutedTestbedConfig {
            z: 64,
            n_bases: 40,
            objects_per_base: 3,
            n_exact: 1,
            n_permuted: 3,
            n_classes: 8,
            duplicate_noise: 0.05,
            proto_noise: 0.1,
        }
    }
}

/// The permuted-duplicates corpus plus the base-image ids.
#[derive(Clone, Debug)]
pub struct PermutedTestbed {
    pub output: SynthOutput,
    pub base_ids: Vec<u64>,
}

/// Build a corpus where every base scene is accompanied by exact duplicates
/// (same object positions) and permuted duplicates (same objects, positions
/// cyclically rotated). Objects within a scene carry distinct classes and
/// well-separated positions, so a permuted copy never matches the base
/// spatially at small radii.
pub fn permuted_testbed(seed: u64, config: &PermutedTestbedConfig) -> Result<PermutedTestbed> {
    if config.z < 8 {
        return Err(Error::invalid("z must be >= 8"));
    }
    if config.objects_per_base < 2 {
        return Err(Error::invalid("need at least 2 objects per base"));
    }
    if config.n_classes < config.objects_per_base {
        return Err(Error::invalid("need at least as many classes as objects"));
    }
    if config.n_bases < 1 {
        return Err(Error::invalid("need at least one base"));
    }
    let mut rng = rng_from_seed(seed);
    let z = config.z;
    let prototypes: Vec<Vec<f64>> = (0..config.n_classes)
        .map(|_| (0..z).map(|_| gaussian_f64(&mut rng)).collect())
        .collect();

    let (image_w, image_h) = (640.0, 480.0);
    let box_size = 40.0;
    let mut blob: Vec<f32> = Vec::new();
    let mut records = Vec::new();
    let mut annotations = Vec::new();
    let mut labels = Vec::new();
    let mut base_ids = Vec::new();
    let mut next_id = 0u64;

    for _ in 0..config.n_bases {
        // Distinct classes for this base.
        let mut classes: Vec<u32> = Vec::new();
        while classes.len() < config.objects_per_base {
            let candidate = uniform_usize(&mut rng, config.n_classes) as u32;
            if !classes.contains(&candidate) {
                classes.push(candidate);
            }
        }
        // Well-separated positions: pairwise distance at least 0.35 in
        // normalized coordinates keeps permuted copies outside r = 0.1.
        let mut positions: Vec<(f64, f64)> = Vec::new();
        while positions.len() < config.objects_per_base {
            let candidate = (
                uniform_in(&mut rng, 0.1, 0.9),
                uniform_in(&mut rng, 0.1, 0.9),
            );
            let ok = positions.iter().all(|&(x, y)| {
                let (dx, dy) = (x - candidate.0, y - candidate.1);
                (dx * dx + dy * dy).sqrt() >= 0.35
            });
            if ok {
                positions.push(candidate);
            }
        }
        let base_features: Vec<Vec<f64>> = classes
            .iter()
            .map(|&c| {
                prototypes[c as usize]
                    .iter()
                    .map(|&p| p + config.proto_noise * gaussian_f64(&mut rng))
                    .collect()
            })
            .collect();

        // The base plus its duplicates, each with its own feature jitter.
        // Duplicate d uses position shift 0 (exact) or a nonzero cyclic
        // rotation (permuted); nonzero shifts of distinct positions are
        // derangements.
        let k = config.objects_per_base;
        let mut variants: Vec<usize> = vec![0; 1 + config.n_exact];
        for i in 0..config.n_permuted {
            variants.push(1 + (i % (k - 1)));
        }
        for (variant_idx, &shift) in variants.iter().enumerate() {
            let is_base = variant_idx == 0;
            let jitter = if is_base { 0.0 } else { config.duplicate_noise };
            let features: Vec<Vec<f64>> = base_features
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|&v| v + jitter * gaussian_f64(&mut rng))
                        .collect()
                })
                .collect();

            let mut global = vec![0.0f64; z];
            for feature in &features {
                for (g, &v) in global.iter_mut().zip(feature) {
                    *g += v;
                }
            }
            for g in global.iter_mut() {
                *g /= k as f64;
            }
            let global_offset = (blob.len() / z) as u64;
            blob.extend(global.iter().map(|&v| v as f32));

            let mut objects = Vec::with_capacity(k);
            let mut ann_objects = Vec::with_capacity(k);
            for (i, feature) in features.iter().enumerate() {
                let (x, y) = positions[(i + shift) % k];
                let cx = x * image_w;
                let cy = y * image_h;
                let feature_offset = (blob.len() / z) as u64;
                blob.extend(feature.iter().map(|&v| v as f32));
                objects.push(ObjectRecord {
                    bbox: [cx - box_size / 2.0, cy - box_size / 2.0, box_size, box_size],
                    pseudo_label: classes[i],
                    feature_offset,
                });
                ann_objects.push(AnnotatedObject {
                    class_label: classes[i],
                    x: cx,
                    y: cy,
                });
            }
            records.push(ImageRecord {
                image_id: next_id,
                image_w,
                image_h,
                global_offset,
                objects,
            });
            annotations.push(SpatialAnnotation::new(
                next_id, ann_objects, image_w, image_h,
            )?);
            labels.push(LabeledItem::new(next_id, classes.clone())?);
            if is_base {
                base_ids.push(next_id);
            }
            next_id += 1;
        }
    }

    Ok(PermutedTestbed {
        output: SynthOutput {
            dataset: FeatureDataset::new(records, blob, z)?,
            annotations,
            labels,
            prototypes,
        },
        base_ids,
    })
}
