//! End-to-end pipeline steps, file conventions, and the query path.
//!
//! Every step reads and writes files under one output directory using fixed
//! names, so the stages compose like the CLI subcommands that wrap them.
//! All stage seeds derive from the config's root seed by label; persisted
//! artifacts carry fingerprints and every consumer cross-checks them before
//! use.
//!
//! Scene rows are L2-normalized immediately before hashing (training,
//! corpus hashing, and querying alike). Cosine similarities and sign
//! hashes are invariant under positive row scaling, so this changes no
//! semantics; it keeps `tanh` inputs in its responsive range.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{encoder_forward, encoder_init, encoder_train, EncoderLoss, EncoderTrainConfig};
use crate::error::{Error, Result};
use crate::hasher::{
    binarize, hash_forward, hash_init, hash_train, HashLossBreakdown, HashModel, HashTrainConfig,
    LossTerm,
};
use crate::index::{
    index_build, index_load, index_save, pack, query_topk, IndexMetadata, RetrievalIndex,
};
use crate::mat::Mat;
use crate::metrics::{
    map_at_k_r, multi_label_relevant, single_label_relevant, LabeledItem, SpatialAnnotation,
};
use crate::rng::derive_seed;
use crate::spatial::{compose_scene, new_basis, ObjectPlacement, PositionalBasis, SceneRep};

use super::artifacts::{
    load_codes, load_encoder, load_hash_model, load_scenes, save_codes, save_encoder,
    save_hash_model, save_scenes, CodesArtifact, ScenesArtifact,
};
use super::config::PipelineConfig;
use super::dataset::{
    read_annotations, read_labels, write_annotations, write_labels, FeatureDataset,
};
use super::report::{AblateReport, AblateRow, EvalReport, RPoint};
use super::synth::{synth_generate, SynthConfig, SynthOutput};

/// Fixed file names under one pipeline output directory.
#[derive(Clone, Debug)]
pub struct PipelinePaths {
    out_dir: PathBuf,
}

impl PipelinePaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        PipelinePaths {
            out_dir: out_dir.into(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn manifest(&self) -> PathBuf {
        self.out_dir.join("manifest.jsonl")
    }

    pub fn blob(&self) -> PathBuf {
        self.out_dir.join("features.blob")
    }

    pub fn annotations(&self) -> PathBuf {
        self.out_dir.join("annotations.jsonl")
    }

    pub fn labels(&self) -> PathBuf {
        self.out_dir.join("labels.jsonl")
    }

    pub fn encoder(&self) -> PathBuf {
        self.out_dir.join("encoder.nhec")
    }

    pub fn encoder_trace(&self) -> PathBuf {
        self.out_dir.join("encoder_trace.json")
    }

    pub fn scenes(&self) -> PathBuf {
        self.out_dir.join("scenes.nhsc")
    }

    pub fn hash_model(&self) -> PathBuf {
        self.out_dir.join("hash.nhhm")
    }

    pub fn hash_trace(&self) -> PathBuf {
        self.out_dir.join("hash_trace.json")
    }

    pub fn codes(&self) -> PathBuf {
        self.out_dir.join("codes.nhbc")
    }

    pub fn index(&self) -> PathBuf {
        self.out_dir.join("index.nhix")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.out_dir.join("eval_report.json")
    }

    pub fn ablate_report(&self) -> PathBuf {
        self.out_dir.join("ablate_report.json")
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn load_dataset(paths: &PipelinePaths) -> Result<FeatureDataset> {
    let manifest = fs::read(paths.manifest())?;
    let blob = fs::read(paths.blob())?;
    FeatureDataset::read(&mut &manifest[..], &mut &blob[..])
}

/// L2-normalize one flattened scene row.
fn normalized_row(row: &[f64]) -> Result<Vec<f64>> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedSimilarity("scene"));
    }
    Ok(row.iter().map(|v| v / norm).collect())
}

fn normalized_matrix(entries: &[(u64, Vec<f64>)], dim2d: usize) -> Result<Mat> {
    let mut data = Vec::with_capacity(entries.len() * dim2d);
    for (_, row) in entries {
        data.extend(normalized_row(row)?);
    }
    Mat::from_vec(entries.len(), dim2d, data)
}

#[derive(Debug, Clone, Copy)]
pub struct SynthRunInfo {
    pub images: usize,
    pub vectors: u64,
}

/// Generate the synthetic corpus and write all four dataset files.
pub fn run_synth(
    paths: &PipelinePaths,
    config: &PipelineConfig,
    synth: &SynthConfig,
) -> Result<SynthRunInfo> {
    config.validate()?;
    if synth.z != config.z {
        return Err(Error::Incompatible {
            fields: vec![format!(
                "z (config {} vs synth {})",
                config.z, synth.z
            )],
        });
    }
    let output = synth_generate(derive_seed(config.seed, "synth"), synth)?;
    write_synth_output(paths, &output)?;
    Ok(SynthRunInfo {
        images: output.dataset.records().len(),
        vectors: output.dataset.vector_count(),
    })
}

/// Write an in-memory synthetic corpus to the standard files.
pub fn write_synth_output(paths: &PipelinePaths, output: &SynthOutput) -> Result<()> {
    fs::create_dir_all(paths.out_dir())?;
    write_file(&paths.manifest(), |buf| output.dataset.write_manifest(buf))?;
    write_file(&paths.blob(), |buf| output.dataset.write_blob(buf))?;
    write_file(&paths.annotations(), |buf| {
        write_annotations(&output.annotations, buf)
    })?;
    write_file(&paths.labels(), |buf| write_labels(&output.labels, buf))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainEncoderInfo {
    pub fingerprint: u64,
    pub trace: Vec<EncoderLoss>,
}

/// Train the context encoder on every object feature with its pseudo-label.
pub fn run_train_encoder(paths: &PipelinePaths, config: &PipelineConfig) -> Result<TrainEncoderInfo> {
    config.validate()?;
    let dataset = load_dataset(paths)?;
    if dataset.z() != config.z {
        return Err(Error::Incompatible {
            fields: vec![format!("z (config {} vs dataset {})", config.z, dataset.z())],
        });
    }
    let mut samples = Vec::new();
    for rec in dataset.records() {
        for obj in &rec.objects {
            let label = obj.pseudo_label as usize;
            if label >= config.c {
                return Err(Error::invalid(format!(
                    "pseudo-label {label} exceeds configured class count {}",
                    config.c
                )));
            }
            samples.push((dataset.vector_f64(obj.feature_offset), label));
        }
    }
    if samples.is_empty() {
        return Err(Error::invalid("dataset has no object features to train on"));
    }
    let params = encoder_init(
        derive_seed(config.seed, "encoder-init"),
        config.z,
        config.z_prime,
        config.d,
        config.c,
    )?;
    let train_config = EncoderTrainConfig {
        lambda_rec: config.lambda_rec,
        learning_rate: config.lr_encoder,
        epochs: config.epochs_encoder,
        batch_size: config.batch_encoder,
        seed: derive_seed(config.seed, "encoder-train"),
    };
    let (trained, trace) = encoder_train(params, &samples, &train_config)?;
    let mut fingerprint = 0;
    write_file(&paths.encoder(), |buf| {
        fingerprint = save_encoder(&trained, buf)?;
        Ok(())
    })?;
    write_file(&paths.encoder_trace(), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &trace)
            .map_err(|e| Error::invalid(e.to_string()))?;
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(TrainEncoderInfo { fingerprint, trace })
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeInfo {
    pub scenes: usize,
    pub fingerprint: u64,
}

/// Encode every image into its flattened scene representation.
pub fn run_encode(paths: &PipelinePaths, config: &PipelineConfig) -> Result<EncodeInfo> {
    config.validate()?;
    let dataset = load_dataset(paths)?;
    let encoder_bytes = fs::read(paths.encoder())?;
    let (encoder, encoder_fp) = load_encoder(&mut &encoder_bytes[..])?;
    let mut mismatched = Vec::new();
    if encoder.z() != config.z {
        mismatched.push(format!("z (config {} vs encoder {})", config.z, encoder.z()));
    }
    if encoder.d() != config.d {
        mismatched.push(format!("d (config {} vs encoder {})", config.d, encoder.d()));
    }
    if dataset.z() != encoder.z() {
        mismatched.push(format!(
            "z (dataset {} vs encoder {})",
            dataset.z(),
            encoder.z()
        ));
    }
    if !mismatched.is_empty() {
        return Err(Error::Incompatible { fields: mismatched });
    }

    let basis_seed = derive_seed(config.seed, "positional-basis");
    let basis = new_basis(basis_seed, config.d)?;
    let mut entries = Vec::with_capacity(dataset.records().len());
    for rec in dataset.records() {
        let scene = encode_record(&dataset, rec.image_id, &encoder, &basis, config.w, None, 1.0)?;
        entries.push((rec.image_id, scene.flat().to_vec()));
    }
    let artifact = ScenesArtifact {
        d: config.d as u32,
        basis_seed,
        w: config.w,
        encoder_fingerprint: encoder_fp,
        entries,
    };
    let mut fingerprint = 0;
    write_file(&paths.scenes(), |buf| {
        fingerprint = save_scenes(&artifact, buf)?;
        Ok(())
    })?;
    Ok(EncodeInfo {
        scenes: artifact.entries.len(),
        fingerprint,
    })
}

/// Compose one image's scene; `etas` (when given) carries one weight per
/// object in record order.
fn encode_record(
    dataset: &FeatureDataset,
    image_id: u64,
    encoder: &crate::encoder::EncoderParams,
    basis: &PositionalBasis,
    w: f64,
    etas: Option<&[f64]>,
    eta_glob: f64,
) -> Result<SceneRep> {
    let rec = dataset
        .record(image_id)
        .ok_or_else(|| Error::invalid(format!("image id {image_id} not in dataset")))?;
    if let Some(etas) = etas {
        if etas.len() != rec.objects.len() {
            return Err(Error::invalid(format!(
                "eta list length {} does not match object count {}",
                etas.len(),
                rec.objects.len()
            )));
        }
    }
    let global_hv = encoder_forward(encoder, &dataset.vector_f64(rec.global_offset))?;
    let mut objects = Vec::with_capacity(rec.objects.len());
    for (i, obj) in rec.objects.iter().enumerate() {
        let hv = encoder_forward(encoder, &dataset.vector_f64(obj.feature_offset))?;
        let (x, y) = obj.center_normalized(rec.image_w, rec.image_h);
        let eta = etas.map(|e| e[i]).unwrap_or(1.0);
        objects.push(ObjectPlacement::new(hv, x, y, eta)?);
    }
    compose_scene(&global_hv, &objects, eta_glob, basis, w)
}

#[derive(Debug, Clone)]
pub struct TrainHashInfo {
    pub fingerprint: u64,
    pub trace: Vec<HashLossBreakdown>,
}

/// Train the hyperplane hash on the normalized scene matrix.
pub fn run_train_hash(paths: &PipelinePaths, config: &PipelineConfig) -> Result<TrainHashInfo> {
    config.validate()?;
    let scenes_bytes = fs::read(paths.scenes())?;
    let (scenes, _) = load_scenes(&mut &scenes_bytes[..])?;
    if scenes.d as usize != config.d {
        return Err(Error::Incompatible {
            fields: vec![format!("d (config {} vs scenes {})", config.d, scenes.d)],
        });
    }
    let corpus = normalized_matrix(&scenes.entries, 2 * config.d)?;
    let model = hash_init(
        derive_seed(config.seed, "hash-init"),
        config.l_bits,
        2 * config.d,
    )?;
    let train_config = HashTrainConfig {
        weights: config.hash_weights,
        learning_rate: config.lr_hash,
        epochs: config.epochs_hash,
        batch_size: config.batch_hash,
        seed: derive_seed(config.seed, "hash-train"),
    };
    let (trained, trace) = hash_train(model, &corpus, &train_config)?;
    let mut fingerprint = 0;
    write_file(&paths.hash_model(), |buf| {
        fingerprint = save_hash_model(&trained, buf)?;
        Ok(())
    })?;
    write_file(&paths.hash_trace(), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &trace)
            .map_err(|e| Error::invalid(e.to_string()))?;
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(TrainHashInfo { fingerprint, trace })
}

#[derive(Debug, Clone, Copy)]
pub struct HashInfo {
    pub codes: usize,
    pub fingerprint: u64,
}

/// Hash the scenes into bipolar codes with the trained model.
pub fn run_hash(paths: &PipelinePaths, config: &PipelineConfig) -> Result<HashInfo> {
    config.validate()?;
    let scenes_bytes = fs::read(paths.scenes())?;
    let (scenes, _) = load_scenes(&mut &scenes_bytes[..])?;
    let model_bytes = fs::read(paths.hash_model())?;
    let (model, hash_fp) = load_hash_model(&mut &model_bytes[..])?;
    let mut mismatched = Vec::new();
    if scenes.d as usize != config.d {
        mismatched.push(format!("d (config {} vs scenes {})", config.d, scenes.d));
    }
    if model.dim2d() != 2 * scenes.d as usize {
        mismatched.push(format!(
            "dim2d (model {} vs scenes {})",
            model.dim2d(),
            2 * scenes.d
        ));
    }
    if model.l_bits() != config.l_bits {
        mismatched.push(format!(
            "l_bits (config {} vs model {})",
            config.l_bits,
            model.l_bits()
        ));
    }
    if !mismatched.is_empty() {
        return Err(Error::Incompatible { fields: mismatched });
    }
    let corpus = normalized_matrix(&scenes.entries, 2 * config.d)?;
    let codes = binarize(&hash_forward(&model, &corpus)?);
    let artifact = CodesArtifact {
        l_bits: config.l_bits,
        d: scenes.d,
        basis_seed: scenes.basis_seed,
        w: scenes.w,
        encoder_fingerprint: scenes.encoder_fingerprint,
        hash_fingerprint: hash_fp,
        entries: scenes
            .entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, codes.row(i).to_vec()))
            .collect(),
    };
    let mut fingerprint = 0;
    write_file(&paths.codes(), |buf| {
        fingerprint = save_codes(&artifact, buf)?;
        Ok(())
    })?;
    Ok(HashInfo {
        codes: artifact.entries.len(),
        fingerprint,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct IndexInfo {
    pub entries: usize,
}

/// Pack the codes into the retrieval index file.
pub fn run_build_index(paths: &PipelinePaths) -> Result<IndexInfo> {
    let codes_bytes = fs::read(paths.codes())?;
    let (codes, _) = load_codes(&mut &codes_bytes[..])?;
    let metadata = IndexMetadata {
        basis_seed: codes.basis_seed,
        w: codes.w,
        d: codes.d,
        encoder_fingerprint: codes.encoder_fingerprint,
        hash_fingerprint: codes.hash_fingerprint,
    };
    let index = index_build(codes.entries, codes.l_bits, metadata)?;
    write_file(&paths.index(), |buf| index_save(&index, buf))?;
    Ok(IndexInfo {
        entries: index.len(),
    })
}

/// A conditional query: which image (or inline features), the weights, an
/// optional focus region, and the length scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuerySpec {
    #[serde(default)]
    pub image_id: Option<u64>,
    #[serde(default)]
    pub inline: Option<InlineQuery>,
    pub eta_glob: f64,
    /// One weight per object in record order; empty means all ones.
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub focus_region: Option<FocusRegion>,
    pub w: f64,
}

/// Features supplied directly instead of by dataset id.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InlineQuery {
    pub global: Vec<f64>,
    pub objects: Vec<InlineObject>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InlineObject {
    pub feature: Vec<f64>,
    /// Normalized center position in [0, 1].
    pub x: f64,
    pub y: f64,
}

/// A rectangle in normalized coordinates whose contained objects get their
/// eta multiplied. An explicit per-object eta list overrides the region.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FocusRegion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub eta_multiplier: f64,
}

impl FocusRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

impl QuerySpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_none() && self.inline.is_none() {
            return Err(Error::invalid("query needs an image id or inline features"));
        }
        if !(self.eta_glob > 0.0) {
            return Err(Error::invalid("eta_glob must be > 0"));
        }
        if self.eta.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::invalid("every eta must be > 0"));
        }
        if let Some(region) = &self.focus_region {
            if !(region.eta_multiplier > 0.0) {
                return Err(Error::invalid("focus multiplier must be > 0"));
            }
            if !(region.x0 <= region.x1) || !(region.y0 <= region.y1) {
                return Err(Error::invalid("focus region is inverted"));
            }
        }
        if !(self.w > 0.0) {
            return Err(Error::invalid("w must be > 0"));
        }
        Ok(())
    }
}

/// Run a conditional query against the persisted index.
///
/// The index metadata (basis seed, w, D, model fingerprints) must match the
/// query-side configuration and checkpoints; any mismatch aborts with the
/// offending fields listed.
pub fn run_query(
    paths: &PipelinePaths,
    config: &PipelineConfig,
    spec: &QuerySpec,
    k: usize,
) -> Result<Vec<(u64, u32)>> {
    config.validate()?;
    spec.validate()?;
    let index_bytes = fs::read(paths.index())?;
    let index = index_load(&mut &index_bytes[..])?;
    let encoder_bytes = fs::read(paths.encoder())?;
    let (encoder, encoder_fp) = load_encoder(&mut &encoder_bytes[..])?;
    let model_bytes = fs::read(paths.hash_model())?;
    let (model, hash_fp) = load_hash_model(&mut &model_bytes[..])?;

    let basis_seed = derive_seed(config.seed, "positional-basis");
    let meta = index.metadata();
    let mut mismatched = Vec::new();
    if meta.basis_seed != basis_seed {
        mismatched.push(format!(
            "basis_seed (index {} vs config {basis_seed})",
            meta.basis_seed
        ));
    }
    if meta.w.to_bits() != spec.w.to_bits() {
        mismatched.push(format!("w (index {} vs query {})", meta.w, spec.w));
    }
    if meta.d as usize != config.d {
        mismatched.push(format!("d (index {} vs config {})", meta.d, config.d));
    }
    if meta.encoder_fingerprint != encoder_fp {
        mismatched.push(format!(
            "encoder_fingerprint (index {:#018x} vs checkpoint {encoder_fp:#018x})",
            meta.encoder_fingerprint
        ));
    }
    if meta.hash_fingerprint != hash_fp {
        mismatched.push(format!(
            "hash_fingerprint (index {:#018x} vs checkpoint {hash_fp:#018x})",
            meta.hash_fingerprint
        ));
    }
    if !mismatched.is_empty() {
        return Err(Error::Incompatible { fields: mismatched });
    }

    let scene = build_query_scene(paths, config, spec, &encoder, basis_seed)?;
    let flat = normalized_row(scene.flat())?;
    let row = Mat::from_vec(1, flat.len(), flat)?;
    let relaxed = hash_forward(&model, &row)?;
    let code = binarize(&relaxed);
    let packed = pack(code.row(0))?;
    query_topk(&index, &packed, k)
}

fn build_query_scene(
    paths: &PipelinePaths,
    config: &PipelineConfig,
    spec: &QuerySpec,
    encoder: &crate::encoder::EncoderParams,
    basis_seed: u64,
) -> Result<SceneRep> {
    let basis = new_basis(basis_seed, config.d)?;
    if let Some(inline) = &spec.inline {
        let etas = resolve_etas(
            spec,
            inline.objects.iter().map(|o| (o.x, o.y)).collect::<Vec<_>>(),
        )?;
        let global_hv = encoder_forward(encoder, &inline.global)?;
        let mut objects = Vec::with_capacity(inline.objects.len());
        for (obj, eta) in inline.objects.iter().zip(etas) {
            let hv = encoder_forward(encoder, &obj.feature)?;
            objects.push(ObjectPlacement::new(hv, obj.x, obj.y, eta)?);
        }
        return compose_scene(&global_hv, &objects, spec.eta_glob, &basis, spec.w);
    }
    let image_id = spec.image_id.expect("validated");
    let dataset = load_dataset(paths)?;
    let rec = dataset
        .record(image_id)
        .ok_or_else(|| Error::invalid(format!("image id {image_id} not in dataset")))?;
    let centers: Vec<(f64, f64)> = rec
        .objects
        .iter()
        .map(|o| o.center_normalized(rec.image_w, rec.image_h))
        .collect();
    let etas = resolve_etas(spec, centers)?;
    encode_record(
        &dataset,
        image_id,
        encoder,
        &basis,
        spec.w,
        Some(&etas),
        spec.eta_glob,
    )
}

/// Effective per-object weights: an explicit eta list wins; otherwise a
/// focus region multiplies the contained objects' unit weight.
fn resolve_etas(spec: &QuerySpec, centers: Vec<(f64, f64)>) -> Result<Vec<f64>> {
    if !spec.eta.is_empty() {
        if spec.eta.len() != centers.len() {
            return Err(Error::invalid(format!(
                "eta list length {} does not match object count {}",
                spec.eta.len(),
                centers.len()
            )));
        }
        return Ok(spec.eta.clone());
    }
    Ok(centers
        .iter()
        .map(|&(x, y)| match &spec.focus_region {
            Some(region) if region.contains(x, y) => region.eta_multiplier,
            _ => 1.0,
        })
        .collect())
}

/// Label-relevance convention for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelevanceMode {
    /// Items relevant iff their first labels are equal.
    SingleLabel,
    /// Items relevant iff their label sets intersect.
    MultiLabel,
}

impl RelevanceMode {
    pub fn name(&self) -> &'static str {
        match self {
            RelevanceMode::SingleLabel => "single-label",
            RelevanceMode::MultiLabel => "multi-label",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single" | "single-label" => Ok(RelevanceMode::SingleLabel),
            "multi" | "multi-label" => Ok(RelevanceMode::MultiLabel),
            other => Err(Error::invalid(format!(
                "unknown relevance mode `{other}` (expected single or multi)"
            ))),
        }
    }
}

/// Evaluation options.
#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub k: usize,
    /// Radii for the spatial-aware metric; empty skips it.
    pub r_values: Vec<f64>,
    pub relevance: RelevanceMode,
    /// Keep the query itself in its own ranking (off by default).
    pub include_self: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: 50,
            r_values: vec![],
            relevance: RelevanceMode::MultiLabel,
            include_self: false,
        }
    }
}

/// Evaluate retrieval quality of the persisted index against ground truth.
/// Every indexed image queries the full corpus with its stored code.
pub fn run_eval(paths: &PipelinePaths, options: &EvalOptions) -> Result<EvalReport> {
    let index_bytes = fs::read(paths.index())?;
    let index = index_load(&mut &index_bytes[..])?;
    let labels_bytes = fs::read(paths.labels())?;
    let labels = read_labels(&mut &labels_bytes[..])?;
    let report = evaluate_index(&index, &labels, paths, options)?;
    write_file(&paths.eval_report(), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &report)
            .map_err(|e| Error::invalid(e.to_string()))?;
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(report)
}

fn evaluate_index(
    index: &RetrievalIndex,
    labels: &[LabeledItem],
    paths: &PipelinePaths,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if options.k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if index.is_empty() {
        return Err(Error::invalid("index is empty"));
    }
    let label_map: BTreeMap<u64, &LabeledItem> =
        labels.iter().map(|l| (l.item_id, l)).collect();
    for (id, _) in index.entries() {
        if !label_map.contains_key(id) {
            return Err(Error::invalid(format!("indexed item {id} has no label")));
        }
    }

    // Full ranking per query from its stored code.
    let mut rankings: Vec<(u64, Vec<u64>)> = Vec::with_capacity(index.len());
    for (id, code) in index.entries() {
        let ranked = query_topk(index, code, index.len())?;
        let ranking: Vec<u64> = ranked
            .into_iter()
            .map(|(rid, _)| rid)
            .filter(|rid| options.include_self || rid != id)
            .collect();
        rankings.push((*id, ranking));
    }

    let mut ap_sum = 0.0;
    for (id, ranking) in &rankings {
        let query_label = label_map[id];
        let relevant = |rid: u64| {
            let candidate = label_map[&rid];
            match options.relevance {
                RelevanceMode::SingleLabel => single_label_relevant(query_label, candidate),
                RelevanceMode::MultiLabel => multi_label_relevant(query_label, candidate),
            }
        };
        ap_sum += crate::metrics::average_precision(ranking, relevant, options.k)?;
    }
    let map = ap_sum / rankings.len() as f64;

    let mut r_points = Vec::new();
    if !options.r_values.is_empty() {
        let ann_bytes = fs::read(paths.annotations())?;
        let annotations = read_annotations(&mut &ann_bytes[..])?;
        let ann_map: BTreeMap<u64, SpatialAnnotation> = annotations
            .into_iter()
            .map(|a| (a.item_id, a))
            .collect();
        for (id, _) in index.entries() {
            if !ann_map.contains_key(id) {
                return Err(Error::invalid(format!(
                    "indexed item {id} has no spatial annotation"
                )));
            }
        }
        for &r in &options.r_values {
            let queries: Vec<(Vec<u64>, &SpatialAnnotation)> = rankings
                .iter()
                .map(|(id, ranking)| (ranking.clone(), &ann_map[id]))
                .collect();
            let score = map_at_k_r(&queries, &ann_map, options.k, r)?;
            r_points.push(RPoint { r, score });
        }
    }

    Ok(EvalReport {
        k: options.k,
        relevance: options.relevance.name().to_string(),
        include_self: options.include_self,
        query_count: rankings.len(),
        map_at_k: map,
        map_at_k_r: r_points,
    })
}

/// Train every ablation variant and report retrieval quality per variant.
///
/// Rows: the full model, one row per excluded term, and the untrained
/// random-hyperplane baseline.
pub fn run_ablate(
    paths: &PipelinePaths,
    config: &PipelineConfig,
    exclusions: &[LossTerm],
    options: &EvalOptions,
) -> Result<AblateReport> {
    config.validate()?;
    let scenes_bytes = fs::read(paths.scenes())?;
    let (scenes, _) = load_scenes(&mut &scenes_bytes[..])?;
    if scenes.d as usize != config.d {
        return Err(Error::Incompatible {
            fields: vec![format!("d (config {} vs scenes {})", config.d, scenes.d)],
        });
    }
    let labels_bytes = fs::read(paths.labels())?;
    let labels = read_labels(&mut &labels_bytes[..])?;
    let corpus = normalized_matrix(&scenes.entries, 2 * config.d)?;
    let init = hash_init(
        derive_seed(config.seed, "hash-init"),
        config.l_bits,
        2 * config.d,
    )?;

    let mut rows = Vec::new();
    let mut variants: Vec<(String, Option<crate::hasher::HashLossWeights>)> = Vec::new();
    variants.push(("full".to_string(), Some(config.hash_weights)));
    for term in exclusions {
        variants.push((
            format!("without_{}", term.name()),
            Some(config.hash_weights.without(*term)),
        ));
    }
    variants.push(("random_hyperplanes".to_string(), None));

    for (name, weights) in variants {
        let model = match weights {
            Some(weights) => {
                let train_config = HashTrainConfig {
                    weights,
                    learning_rate: config.lr_hash,
                    epochs: config.epochs_hash,
                    batch_size: config.batch_hash,
                    seed: derive_seed(config.seed, "hash-train"),
                };
                hash_train(init.clone(), &corpus, &train_config)?.0
            }
            None => init.clone(),
        };
        let map = map_for_model(&model, &corpus, &scenes, &labels, options)?;
        rows.push(AblateRow {
            variant: name,
            map_at_k: map,
        });
    }
    let report = AblateReport {
        k: options.k,
        relevance: options.relevance.name().to_string(),
        rows,
    };
    write_file(&paths.ablate_report(), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &report)
            .map_err(|e| Error::invalid(e.to_string()))?;
        buf.push(b'\n');
        Ok(())
    })?;
    Ok(report)
}

fn map_for_model(
    model: &HashModel,
    corpus: &Mat,
    scenes: &ScenesArtifact,
    labels: &[LabeledItem],
    options: &EvalOptions,
) -> Result<f64> {
    let codes = binarize(&hash_forward(model, corpus)?);
    let items: Vec<(u64, Vec<f64>)> = scenes
        .entries
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (*id, codes.row(i).to_vec()))
        .collect();
    let metadata = IndexMetadata {
        basis_seed: scenes.basis_seed,
        w: scenes.w,
        d: scenes.d,
        encoder_fingerprint: scenes.encoder_fingerprint,
        hash_fingerprint: 0,
    };
    let index = index_build(items, model.l_bits(), metadata)?;
    let label_map: BTreeMap<u64, &LabeledItem> =
        labels.iter().map(|l| (l.item_id, l)).collect();
    for (id, _) in index.entries() {
        if !label_map.contains_key(id) {
            return Err(Error::invalid(format!("indexed item {id} has no label")));
        }
    }
    let mut ap_sum = 0.0;
    for (id, code) in index.entries() {
        let ranked = query_topk(&index, code, index.len())?;
        let ranking: Vec<u64> = ranked
            .into_iter()
            .map(|(rid, _)| rid)
            .filter(|rid| options.include_self || rid != id)
            .collect();
        let query_label = label_map[id];
        let relevant = |rid: u64| {
            let candidate = label_map[&rid];
            match options.relevance {
                RelevanceMode::SingleLabel => single_label_relevant(query_label, candidate),
                RelevanceMode::MultiLabel => multi_label_relevant(query_label, candidate),
            }
        };
        ap_sum += crate::metrics::average_precision(&ranking, relevant, options.k)?;
    }
    Ok(ap_sum / index.len() as f64)
}
