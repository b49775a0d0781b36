//! Browser playground for spatial-aware scene hashing.
//!
//! Three interactive operations, exported through wasm-bindgen with JSON
//! strings at the boundary:
//!
//! - [`kernel_curve`]: empirical vs analytic position-kernel samples for a
//!   chosen length scale
//! - [`Workbench::retrieve`]: place objects on a canvas, weight them, and
//!   rank a seeded synthetic corpus by Hamming distance
//! - [`Workbench::spatial_scores`]: mAP@K and spatial mAP@K_r of the live
//!   corpus, showing how the length scale trades semantic for spatial
//!   precision
//!
//! The logic is plain Rust over the core crate; the wasm boundary only
//! parses and serializes, so everything is testable natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use hyperscene_core::error::{Error, Result};
use hyperscene_core::hasher::{
    binarize, hash_forward, hash_init, hash_train, HashLossWeights, HashModel, HashTrainConfig,
};
use hyperscene_core::hdc::NonlinearEncoder;
use hyperscene_core::index::{
    index_build, pack, query_topk, IndexMetadata, PackedCode, RetrievalIndex,
};
use hyperscene_core::mat::Mat;
use hyperscene_core::metrics::{average_precision, map_at_k_r, SpatialAnnotation};
use hyperscene_core::pipeline::synth::{synth_generate, SynthConfig, SynthOutput};
use hyperscene_core::rng::derive_seed;
use hyperscene_core::spatial::{
    compose_scene, encode_position, expected_position_kernel, new_basis, ObjectPlacement,
    PositionalBasis,
};

fn to_js_err(err: Error) -> JsValue {
    JsValue::from_str(&err.to_string())
}

#[derive(Serialize)]
struct KernelPoint {
    dist: f64,
    empirical: f64,
    analytic: f64,
}

fn kernel_curve_impl(w: f64, d: usize, seed: u64, max_dist: f64, n_points: usize) -> Result<String> {
    if n_points < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    let basis = new_basis(seed, d)?;
    let origin = encode_position(&basis, 0.0, 0.0, w)?;
    let mut points = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let dist = max_dist * i as f64 / (n_points - 1) as f64;
        // Diagonal displacement so both axes participate.
        let (dx, dy) = (dist / 2f64.sqrt(), dist / 2f64.sqrt());
        let shifted = encode_position(&basis, dx, dy, w)?;
        points.push(KernelPoint {
            dist,
            empirical: origin.cosine(&shifted)?,
            analytic: expected_position_kernel(dx, dy, w)?,
        });
    }
    Ok(serde_json::to_string(&points).unwrap())
}

/// Sample the empirical position-encoding similarity against its analytic
/// kernel `exp(-dist^2 / (2 w^2))`; returns a JSON array of
/// `{dist, empirical, analytic}` points.
#[wasm_bindgen]
pub fn kernel_curve(w: f64, d: usize, seed: u64, max_dist: f64, n_points: usize) -> std::result::Result<String, JsValue> {
    kernel_curve_impl(w, d, seed, max_dist, n_points).map_err(to_js_err)
}

/// Workbench construction parameters.
#[derive(Clone, Debug, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    #[serde(default = "default_n_images")]
    pub n_images: usize,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_l_bits")]
    pub l_bits: usize,
    pub w: f64,
    /// Hash-training epochs; 0 keeps the random hyperplanes.
    #[serde(default = "default_train_epochs")]
    pub train_epochs: usize,
}

fn default_n_images() -> usize {
    120
}

fn default_n_classes() -> usize {
    6
}

fn default_d() -> usize {
    500
}

fn default_l_bits() -> usize {
    32
}

fn default_train_epochs() -> usize {
    15
}

const DEMO_Z: usize = 32;

#[derive(Serialize)]
struct SceneView {
    image_id: u64,
    objects: Vec<ObjectView>,
}

#[derive(Serialize, Clone)]
struct ObjectView {
    class: u32,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct QueryJson {
    objects: Vec<QueryObject>,
    #[serde(default = "default_eta_glob")]
    eta_glob: f64,
}

fn default_eta_glob() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct QueryObject {
    class: u32,
    x: f64,
    y: f64,
    #[serde(default = "default_eta")]
    eta: f64,
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Serialize)]
struct Hit {
    image_id: u64,
    distance: u32,
    objects: Vec<ObjectView>,
}

#[derive(Serialize)]
struct Scores {
    map_at_k: f64,
    points: Vec<ScorePoint>,
}

#[derive(Serialize)]
struct ScorePoint {
    r: f64,
    score: f64,
}

struct WorkbenchInner {
    config: DemoConfig,
    output: SynthOutput,
    encoder: NonlinearEncoder,
    basis: PositionalBasis,
    model: HashModel,
    index: RetrievalIndex,
}

fn normalized(row: &[f64]) -> Result<Vec<f64>> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedSimilarity("scene"));
    }
    Ok(row.iter().map(|v| v / norm).collect())
}

impl WorkbenchInner {
    fn build(config: DemoConfig) -> Result<Self> {
        if config.d < DEMO_Z {
            return Err(Error::invalid("d must be at least 32"));
        }
        let synth = SynthConfig {
            n_images: config.n_images,
            n_classes: config.n_classes,
            z: DEMO_Z,
            objects_min: 1,
            objects_max: 3,
            noise_sigma: 0.25,
            global_noise_sigma: 0.25,
            image_w: 1.0,
            image_h: 1.0,
        };
        let output = synth_generate(derive_seed(config.seed, "synth"), &synth)?;
        let encoder = NonlinearEncoder::new(
            derive_seed(config.seed, "baseline-encoder"),
            DEMO_Z,
            config.d,
        )?;
        let basis = new_basis(derive_seed(config.seed, "positional-basis"), config.d)?;

        // Compose and normalize every scene.
        let mut entries: Vec<(u64, Vec<f64>)> = Vec::with_capacity(config.n_images);
        for rec in output.dataset.records() {
            let scene = compose_record(&output, rec.image_id, &encoder, &basis, config.w)?;
            entries.push((rec.image_id, normalized(&scene)?));
        }
        let dim2d = 2 * config.d;
        let mut data = Vec::with_capacity(entries.len() * dim2d);
        for (_, row) in &entries {
            data.extend_from_slice(row);
        }
        let corpus = Mat::from_vec(entries.len(), dim2d, data)?;

        let mut model = hash_init(derive_seed(config.seed, "hash-init"), config.l_bits, dim2d)?;
        if config.train_epochs > 0 {
            let train = HashTrainConfig {
                weights: HashLossWeights::default(),
                learning_rate: 10.0,
                epochs: config.train_epochs,
                batch_size: 64,
                seed: derive_seed(config.seed, "hash-train"),
            };
            model = hash_train(model, &corpus, &train)?.0;
        }
        let codes = binarize(&hash_forward(&model, &corpus)?);
        let items: Vec<(u64, Vec<f64>)> = entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, codes.row(i).to_vec()))
            .collect();
        let index = index_build(
            items,
            config.l_bits,
            IndexMetadata {
                basis_seed: basis.seed(),
                w: config.w,
                d: config.d as u32,
                encoder_fingerprint: 0,
                hash_fingerprint: 0,
            },
        )?;
        Ok(WorkbenchInner {
            config,
            output,
            encoder,
            basis,
            model,
            index,
        })
    }

    fn scene_view(&self, image_id: u64) -> Vec<ObjectView> {
        let ann = &self.output.annotations[image_id as usize];
        ann.objects
            .iter()
            .map(|o| ObjectView {
                class: o.class_label,
                x: o.x / ann.image_w,
                y: o.y / ann.image_h,
            })
            .collect()
    }

    fn scenes_json(&self) -> String {
        let views: Vec<SceneView> = self
            .output
            .dataset
            .records()
            .iter()
            .map(|rec| SceneView {
                image_id: rec.image_id,
                objects: self.scene_view(rec.image_id),
            })
            .collect();
        serde_json::to_string(&views).unwrap()
    }

    fn query_code(&self, query: &QueryJson) -> Result<PackedCode> {
        if query.objects.is_empty() {
            return Err(Error::invalid("query needs at least one object"));
        }
        let mut placements = Vec::with_capacity(query.objects.len());
        let mut feature_sum = vec![0.0f64; DEMO_Z];
        for obj in &query.objects {
            let class = obj.class as usize;
            if class >= self.output.prototypes.len() {
                return Err(Error::invalid(format!(
                    "class {class} out of range ({} classes)",
                    self.output.prototypes.len()
                )));
            }
            let feature = &self.output.prototypes[class];
            for (s, &v) in feature_sum.iter_mut().zip(feature) {
                *s += v;
            }
            let hv = self.encoder.encode(feature)?;
            placements.push(ObjectPlacement::new(hv, obj.x, obj.y, obj.eta)?);
        }
        for s in feature_sum.iter_mut() {
            *s /= query.objects.len() as f64;
        }
        let global_hv = self.encoder.encode(&feature_sum)?;
        let scene = compose_scene(
            &global_hv,
            &placements,
            query.eta_glob,
            &self.basis,
            self.config.w,
        )?;
        let flat = normalized(scene.flat())?;
        let row = Mat::from_vec(1, flat.len(), flat)?;
        let codes = binarize(&hash_forward(&self.model, &row)?);
        pack(codes.row(0))
    }

    fn retrieve(&self, query_json: &str, k: usize) -> Result<String> {
        let query: QueryJson = serde_json::from_str(query_json)
            .map_err(|e| Error::invalid(format!("query json: {e}")))?;
        let code = self.query_code(&query)?;
        let ranked = query_topk(&self.index, &code, k)?;
        let hits: Vec<Hit> = ranked
            .into_iter()
            .map(|(image_id, distance)| Hit {
                image_id,
                distance,
                objects: self.scene_view(image_id),
            })
            .collect();
        Ok(serde_json::to_string(&hits).unwrap())
    }

    fn spatial_scores(&self, k: usize, r_values: &[f64]) -> Result<String> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        let mut rankings: Vec<(u64, Vec<u64>)> = Vec::with_capacity(self.index.len());
        for (id, code) in self.index.entries() {
            let ranked = query_topk(&self.index, code, self.index.len())?;
            rankings.push((
                *id,
                ranked
                    .into_iter()
                    .map(|(rid, _)| rid)
                    .filter(|rid| rid != id)
                    .collect(),
            ));
        }
        let labels = &self.output.labels;
        let mut ap_sum = 0.0;
        for (id, ranking) in &rankings {
            let query_labels: std::collections::HashSet<u32> = labels[*id as usize]
                .class_labels
                .iter()
                .copied()
                .collect();
            let relevant = |rid: u64| {
                labels[rid as usize]
                    .class_labels
                    .iter()
                    .any(|l| query_labels.contains(l))
            };
            ap_sum += average_precision(ranking, relevant, k)?;
        }
        let map = ap_sum / rankings.len() as f64;

        let ann_map: std::collections::BTreeMap<u64, SpatialAnnotation> = self
            .output
            .annotations
            .iter()
            .map(|a| (a.item_id, a.clone()))
            .collect();
        let mut points = Vec::with_capacity(r_values.len());
        for &r in r_values {
            let queries: Vec<(Vec<u64>, &SpatialAnnotation)> = rankings
                .iter()
                .map(|(id, ranking)| (ranking.clone(), &ann_map[id]))
                .collect();
            points.push(ScorePoint {
                r,
                score: map_at_k_r(&queries, &ann_map, k, r)?,
            });
        }
        Ok(serde_json::to_string(&Scores {
            map_at_k: map,
            points,
        })
        .unwrap())
    }
}

/// The interactive corpus: synthetic scenes encoded, hashed, and indexed at
/// construction; queries run against the live index.
#[wasm_bindgen]
pub struct Workbench {
    inner: WorkbenchInner,
}

#[wasm_bindgen]
impl Workbench {
    /// Build from a JSON config: `{"seed": 7, "w": 0.1, ...}`.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> std::result::Result<Workbench, JsValue> {
        let config: DemoConfig = serde_json::from_str(config_json)
            .map_err(|e| JsValue::from_str(&format!("config json: {e}")))?;
        let inner = WorkbenchInner::build(config).map_err(to_js_err)?;
        Ok(Workbench { inner })
    }

    /// All corpus scenes as `[{image_id, objects: [{class, x, y}]}]`.
    pub fn scenes(&self) -> String {
        self.inner.scenes_json()
    }

    /// Rank the corpus for a composed query:
    /// `{"objects": [{"class": 0, "x": 0.3, "y": 0.4, "eta": 10}], "eta_glob": 1}`.
    pub fn retrieve(&self, query_json: &str, k: usize) -> std::result::Result<String, JsValue> {
        self.inner.retrieve(query_json, k).map_err(to_js_err)
    }

    /// mAP@K plus spatial mAP@K_r for comma-separated radii.
    pub fn spatial_scores(&self, k: usize, r_csv: &str) -> std::result::Result<String, JsValue> {
        let r_values: std::result::Result<Vec<f64>, JsValue> = r_csv
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| JsValue::from_str(&format!("bad radius `{s}`")))
            })
            .collect();
        self.inner.spatial_scores(k, &r_values?).map_err(to_js_err)
    }

    pub fn l_bits(&self) -> usize {
        self.inner.config.l_bits
    }

    pub fn n_classes(&self) -> usize {
        self.inner.config.n_classes
    }
}

fn compose_record(
    output: &SynthOutput,
    image_id: u64,
    encoder: &NonlinearEncoder,
    basis: &PositionalBasis,
    w: f64,
) -> Result<Vec<f64>> {
    let rec = output
        .dataset
        .record(image_id)
        .ok_or_else(|| Error::invalid(format!("image {image_id} missing")))?;
    let global_hv = encoder.encode(&output.dataset.vector_f64(rec.global_offset))?;
    let mut placements = Vec::with_capacity(rec.objects.len());
    for obj in &rec.objects {
        let hv = encoder.encode(&output.dataset.vector_f64(obj.feature_offset))?;
        let (x, y) = obj.center_normalized(rec.image_w, rec.image_h);
        placements.push(ObjectPlacement::new(hv, x, y, 1.0)?);
    }
    Ok(compose_scene(&global_hv, &placements, 1.0, basis, w)?
        .flat()
        .to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(w: f64) -> DemoConfig {
        DemoConfig {
            seed: 7,
            n_images: 60,
            n_classes: 5,
            d: 300,
            l_bits: 32,
            w,
            train_epochs: 5,
        }
    }

    #[test]
    fn kernel_curve_is_valid_json_and_decays() {
        let json = kernel_curve_impl(0.3, 2_000, 9, 1.0, 8).unwrap();
        let points: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(points.len(), 8);
        let first = points[0]["empirical"].as_f64().unwrap();
        let last = points[7]["empirical"].as_f64().unwrap();
        assert!(first > 0.99);
        assert!(last < first);
        for p in &points {
            let gap = (p["empirical"].as_f64().unwrap() - p["analytic"].as_f64().unwrap()).abs();
            assert!(gap < 0.1, "gap {gap}");
        }
    }

    #[test]
    fn workbench_builds_and_retrieves() {
        let bench = WorkbenchInner::build(config(0.2)).unwrap();
        let scenes: Vec<serde_json::Value> =
            serde_json::from_str(&bench.scenes_json()).unwrap();
        assert_eq!(scenes.len(), 60);

        // Query copying scene 0's first object: scene 0 should rank highly.
        let scene0 = &scenes[0];
        let obj = &scene0["objects"][0];
        let query = format!(
            r#"{{"objects":[{{"class":{},"x":{},"y":{},"eta":4.0}}],"eta_glob":1.0}}"#,
            obj["class"], obj["x"], obj["y"]
        );
        let hits: Vec<serde_json::Value> =
            serde_json::from_str(&bench.retrieve(&query, 10).unwrap()).unwrap();
        assert_eq!(hits.len(), 10);
        assert!(hits[0]["distance"].as_u64().unwrap() <= 32);
    }

    #[test]
    fn eta_reweighting_changes_ranking_toward_target() {
        let bench = WorkbenchInner::build(config(0.15)).unwrap();
        // Two-object query: boosting one object's weight moves scenes
        // containing that class/position up relative to the other's.
        let q = |eta0: f64, eta1: f64| {
            format!(
                r#"{{"objects":[{{"class":0,"x":0.2,"y":0.2,"eta":{eta0}}},{{"class":1,"x":0.8,"y":0.8,"eta":{eta1}}}]}}"#
            )
        };
        let plain: Vec<serde_json::Value> =
            serde_json::from_str(&bench.retrieve(&q(1.0, 1.0), 60).unwrap()).unwrap();
        let boosted: Vec<serde_json::Value> =
            serde_json::from_str(&bench.retrieve(&q(8.0, 1.0), 60).unwrap()).unwrap();
        assert_eq!(plain.len(), 60);
        assert_eq!(boosted.len(), 60);
        // The rankings must differ somewhere for a genuine reweighting.
        let ids = |hits: &[serde_json::Value]| -> Vec<u64> {
            hits.iter().map(|h| h["image_id"].as_u64().unwrap()).collect()
        };
        assert_ne!(ids(&plain), ids(&boosted));
    }

    #[test]
    fn sharper_scale_scores_higher_spatially() {
        let sharp = WorkbenchInner::build(config(0.1)).unwrap();
        let loose = WorkbenchInner::build(config(10.0)).unwrap();
        let parse = |json: String| -> f64 {
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            v["points"][0]["score"].as_f64().unwrap()
        };
        let sharp_score = parse(sharp.spatial_scores(20, &[0.1]).unwrap());
        let loose_score = parse(loose.spatial_scores(20, &[0.1]).unwrap());
        assert!(
            sharp_score > loose_score,
            "sharp {sharp_score} vs loose {loose_score}"
        );
    }
}
