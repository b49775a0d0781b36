//! End-to-end tests of the pipeline steps through the filesystem.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use hyperscene_core::error::Error;
use hyperscene_core::hasher::LossTerm;
use hyperscene_core::pipeline::steps::{
    run_build_index, run_encode, run_eval, run_hash, run_query, run_synth, run_train_encoder,
    run_train_hash, write_synth_output, run_ablate,
};
use hyperscene_core::pipeline::{
    EvalOptions, PipelineConfig, PipelinePaths, QuerySpec, RelevanceMode, SynthConfig,
};

static DIR_COUNTER: AtomicU64 = AtomicU64::new(0);

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let id = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
        let path = std::env::temp_dir().join(format!(
            "hyperscene-test-{}-{tag}-{id}",
            std::process::id()
        ));
        fs::create_dir_all(&path).unwrap();
        TempDir(path)
    }

    fn paths(&self) -> PipelinePaths {
        PipelinePaths::new(&self.0)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

/// A small, fast configuration for end-to-end runs.
fn small_config() -> PipelineConfig {
    PipelineConfig {
        d: 400,
        z: 32,
        z_prime: 8,
        c: 6,
        // 64 bits keeps distinct scenes collision-free at this corpus size;
        // self-retrieval-at-rank-1 needs that.
        l_bits: 64,
        w: 0.5,
        // Mild training: these tests exercise the plumbing, and heavy
        // optimization at this tiny scale can collapse codes.
        lr_hash: 0.5,
        epochs_encoder: 3,
        epochs_hash: 5,
        batch_encoder: 32,
        batch_hash: 32,
        seed: 1234,
        ..PipelineConfig::default()
    }
}

fn small_synth(config: &PipelineConfig) -> SynthConfig {
    SynthConfig {
        n_images: 48,
        n_classes: config.c,
        z: config.z,
        objects_min: 1,
        objects_max: 3,
        ..SynthConfig::default()
    }
}

/// Run synth through build-index, returning the paths.
fn full_pipeline(tag: &str, config: &PipelineConfig) -> (TempDir, PipelinePaths) {
    let dir = TempDir::new(tag);
    let paths = dir.paths();
    run_synth(&paths, config, &small_synth(config)).unwrap();
    run_train_encoder(&paths, config).unwrap();
    run_encode(&paths, config).unwrap();
    run_train_hash(&paths, config).unwrap();
    run_hash(&paths, config).unwrap();
    run_build_index(&paths).unwrap();
    (dir, paths)
}

#[test]
fn pipeline_runs_end_to_end_and_self_retrieves() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("e2e", &config);

    // Self-retrieval: querying with an indexed image's own features and all
    // weights at 1 puts that image at rank 1 with distance 0, for every
    // indexed image (exact codes collide with themselves).
    for image_id in 0..48u64 {
        let spec = QuerySpec {
            image_id: Some(image_id),
            inline: None,
            eta_glob: 1.0,
            eta: vec![],
            focus_region: None,
            w: config.w,
        };
        let ranked = run_query(&paths, &config, &spec, 5).unwrap();
        assert_eq!(ranked[0], (image_id, 0), "image {image_id}");
    }
}

#[test]
fn focus_region_covering_nothing_is_a_no_op() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("focus", &config);
    let plain = QuerySpec {
        image_id: Some(3),
        inline: None,
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w,
    };
    let empty_region = QuerySpec {
        focus_region: Some(hyperscene_core::pipeline::steps::FocusRegion {
            // Degenerate corner sliver that contains no object center.
            x0: 0.0,
            y0: 0.0,
            x1: 1e-9,
            y1: 1e-9,
            eta_multiplier: 10.0,
        }),
        ..plain.clone()
    };
    let a = run_query(&paths, &config, &plain, 10).unwrap();
    let b = run_query(&paths, &config, &empty_region, 10).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rerunning_pipeline_is_byte_identical() {
    let config = small_config();
    let (_dir1, paths1) = full_pipeline("det1", &config);
    let (_dir2, paths2) = full_pipeline("det2", &config);
    let options = EvalOptions {
        k: 10,
        r_values: vec![0.1, 0.2],
        relevance: RelevanceMode::MultiLabel,
        include_self: false,
    };
    run_eval(&paths1, &options).unwrap();
    run_eval(&paths2, &options).unwrap();
    for (a, b) in [
        (paths1.manifest(), paths2.manifest()),
        (paths1.blob(), paths2.blob()),
        (paths1.annotations(), paths2.annotations()),
        (paths1.labels(), paths2.labels()),
        (paths1.encoder(), paths2.encoder()),
        (paths1.encoder_trace(), paths2.encoder_trace()),
        (paths1.scenes(), paths2.scenes()),
        (paths1.hash_model(), paths2.hash_model()),
        (paths1.hash_trace(), paths2.hash_trace()),
        (paths1.codes(), paths2.codes()),
        (paths1.index(), paths2.index()),
        (paths1.eval_report(), paths2.eval_report()),
    ] {
        let bytes_a = fs::read(&a).unwrap();
        let bytes_b = fs::read(&b).unwrap();
        assert_eq!(bytes_a, bytes_b, "{a:?} differs from {b:?}");
    }
}

#[test]
fn zero_object_image_encodes_global_only() {
    use hyperscene_core::encoder::encoder_forward;
    use hyperscene_core::pipeline::artifacts::{load_encoder, load_scenes};
    use hyperscene_core::pipeline::dataset::{FeatureDataset, ImageRecord};

    let config = small_config();
    let dir = TempDir::new("zeroobj");
    let paths = dir.paths();
    // Synthesize normally, then append a zero-object image that reuses an
    // existing global vector slot.
    let output = hyperscene_core::pipeline::synth_generate(
        hyperscene_core::rng::derive_seed(config.seed, "synth"),
        &small_synth(&config),
    )
    .unwrap();
    let mut records = output.dataset.records().to_vec();
    let donor_offset = records[0].global_offset;
    let next_id = records.last().unwrap().image_id + 1;
    records.push(ImageRecord {
        image_id: next_id,
        image_w: 640.0,
        image_h: 480.0,
        global_offset: donor_offset,
        objects: vec![],
    });
    let blob: Vec<f32> = (0..output.dataset.vector_count())
        .flat_map(|i| output.dataset.vector(i).to_vec())
        .collect();
    let dataset = FeatureDataset::new(records, blob, config.z).unwrap();
    fs::create_dir_all(paths.out_dir()).unwrap();
    let mut manifest = Vec::new();
    dataset.write_manifest(&mut manifest).unwrap();
    fs::write(paths.manifest(), manifest).unwrap();
    let mut blob_bytes = Vec::new();
    dataset.write_blob(&mut blob_bytes).unwrap();
    fs::write(paths.blob(), blob_bytes).unwrap();

    run_train_encoder(&paths, &config).unwrap();
    run_encode(&paths, &config).unwrap();

    let (scenes, _) = load_scenes(&mut &fs::read(paths.scenes()).unwrap()[..]).unwrap();
    let (encoder, _) = load_encoder(&mut &fs::read(paths.encoder()).unwrap()[..]).unwrap();
    let flat = &scenes.entries.last().unwrap().1;
    let global_hv = encoder_forward(&encoder, &dataset.vector_f64(donor_offset)).unwrap();
    // Real part equals the global embedding, imaginary part is zero.
    for (a, b) in flat[..config.d].iter().zip(global_hv.values()) {
        assert_eq!(a, b);
    }
    assert!(flat[config.d..].iter().all(|&v| v == 0.0));
}

#[test]
fn eta_boost_promotes_matching_scene() {
    // The constructed conditional-retrieval case: scene 0 carries a
    // near-duplicate of the query's target object at the same position;
    // distractors share the query's clutter object instead. Boosting the
    // target's weight from 1 to 10 improves (or holds) scene 0's rank.
    let n_distractors = 5;
    let config = PipelineConfig {
        c: n_distractors + 3,
        ..small_config()
    };
    let dir = TempDir::new("etaboost");
    let paths = dir.paths();
    let testbed = hyperscene_core::pipeline::synth::conditional_testbed(
        hyperscene_core::rng::derive_seed(config.seed, "synth"),
        config.z,
        n_distractors,
    )
    .unwrap();
    write_synth_output(&paths, &testbed.output).unwrap();
    run_train_encoder(&paths, &config).unwrap();
    run_encode(&paths, &config).unwrap();
    run_train_hash(&paths, &config).unwrap();
    run_hash(&paths, &config).unwrap();
    run_build_index(&paths).unwrap();

    let n_images = testbed.output.dataset.records().len();
    let plain = QuerySpec {
        image_id: Some(testbed.query_id),
        inline: None,
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w,
    };
    let mut eta = vec![1.0; 2];
    eta[testbed.boosted_object] = 10.0;
    let boosted = QuerySpec {
        eta,
        ..plain.clone()
    };
    let ranked_plain = run_query(&paths, &config, &plain, n_images).unwrap();
    let ranked_boosted = run_query(&paths, &config, &boosted, n_images).unwrap();
    let rank = |ranked: &[(u64, u32)], id: u64| ranked.iter().position(|(r, _)| *r == id).unwrap();
    let before = rank(&ranked_plain, testbed.match_id);
    let after = rank(&ranked_boosted, testbed.match_id);
    assert!(after <= before, "match rank worsened: {before} -> {after}");
}

#[test]
fn inline_query_matches_id_query() {
    use hyperscene_core::pipeline::steps::{InlineObject, InlineQuery};

    // An inline query carrying image 2's own features and normalized
    // centers reproduces the by-id query exactly.
    let config = small_config();
    let (_dir, paths) = full_pipeline("inline", &config);
    let manifest = fs::read(paths.manifest()).unwrap();
    let blob = fs::read(paths.blob()).unwrap();
    let ds =
        hyperscene_core::pipeline::FeatureDataset::read(&mut &manifest[..], &mut &blob[..]).unwrap();
    let rec = ds.record(2).unwrap().clone();
    let inline = InlineQuery {
        global: ds.vector_f64(rec.global_offset),
        objects: rec
            .objects
            .iter()
            .map(|o| {
                let (x, y) = o.center_normalized(rec.image_w, rec.image_h);
                InlineObject {
                    feature: ds.vector_f64(o.feature_offset),
                    x,
                    y,
                }
            })
            .collect(),
    };
    let by_inline = QuerySpec {
        image_id: None,
        inline: Some(inline),
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w,
    };
    let by_id = QuerySpec {
        image_id: Some(2),
        inline: None,
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w,
    };
    let a = run_query(&paths, &config, &by_inline, 10).unwrap();
    let b = run_query(&paths, &config, &by_id, 10).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0], (2, 0));
}

#[test]
fn eta_length_mismatch_rejected() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("etalen", &config);
    let spec = QuerySpec {
        image_id: Some(0),
        inline: None,
        eta_glob: 1.0,
        eta: vec![1.0; 99],
        focus_region: None,
        w: config.w,
    };
    assert!(matches!(
        run_query(&paths, &config, &spec, 5),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn mismatched_seed_fails_with_field_list() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("mismatch", &config);
    let other = PipelineConfig {
        seed: 999,
        ..config.clone()
    };
    let spec = QuerySpec {
        image_id: Some(0),
        inline: None,
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w,
    };
    match run_query(&paths, &other, &spec, 5) {
        Err(Error::Incompatible { fields }) => {
            assert!(fields.iter().any(|f| f.contains("basis_seed")), "{fields:?}");
        }
        other => panic!("expected incompatibility, got {other:?}"),
    }
}

#[test]
fn mismatched_w_fails() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("wmismatch", &config);
    let spec = QuerySpec {
        image_id: Some(0),
        inline: None,
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w * 2.0,
    };
    match run_query(&paths, &config, &spec, 5) {
        Err(Error::Incompatible { fields }) => {
            assert!(fields.iter().any(|f| f.starts_with("w ")), "{fields:?}");
        }
        other => panic!("expected incompatibility, got {other:?}"),
    }
}

#[test]
fn corrupt_index_is_reported() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("corrupt", &config);
    let mut bytes = fs::read(paths.index()).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xFF;
    fs::write(paths.index(), bytes).unwrap();
    let spec = QuerySpec {
        image_id: Some(0),
        inline: None,
        eta_glob: 1.0,
        eta: vec![],
        focus_region: None,
        w: config.w,
    };
    assert!(matches!(
        run_query(&paths, &config, &spec, 5),
        Err(Error::Corrupt { .. })
    ));
}

#[test]
fn eval_r_sweep_is_monotone_and_rerun_identical() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("evalsweep", &config);
    let options = EvalOptions {
        k: 20,
        r_values: vec![0.1, 0.2, 0.3, 0.4],
        relevance: RelevanceMode::MultiLabel,
        include_self: false,
    };
    let report = run_eval(&paths, &options).unwrap();
    let first = fs::read(paths.eval_report()).unwrap();
    assert_eq!(report.map_at_k_r.len(), 4);
    for pair in report.map_at_k_r.windows(2) {
        assert!(
            pair[1].score >= pair[0].score - 1e-12,
            "r sweep not monotone: {:?}",
            report.map_at_k_r
        );
    }
    run_eval(&paths, &options).unwrap();
    let second = fs::read(paths.eval_report()).unwrap();
    assert_eq!(first, second);
}

#[test]
fn eval_perfect_index_scores_one() {
    use hyperscene_core::pipeline::artifacts::{save_codes, CodesArtifact};
    use hyperscene_core::metrics::LabeledItem;
    use hyperscene_core::pipeline::dataset::write_labels;

    // Hand-built codes: same-class items share an exact code, classes
    // differ, so every ranking lists the own class first.
    let dir = TempDir::new("perfect");
    let paths = dir.paths();
    fs::create_dir_all(paths.out_dir()).unwrap();
    let l = 16;
    let n_classes = 4u64;
    let per_class = 5u64;
    let mut entries = Vec::new();
    let mut labels = Vec::new();
    for class in 0..n_classes {
        // Orthogonal-ish bipolar patterns per class from the class bits.
        let row: Vec<f64> = (0..l)
            .map(|j| {
                if (j as u64 / (l as u64 / n_classes)) == class {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        for i in 0..per_class {
            let id = class * per_class + i;
            entries.push((id, row.clone()));
            labels.push(LabeledItem::new(id, vec![class as u32]).unwrap());
        }
    }
    let codes = CodesArtifact {
        l_bits: l,
        d: 8,
        basis_seed: 1,
        w: 1.0,
        encoder_fingerprint: 0,
        hash_fingerprint: 0,
        entries,
    };
    let mut buf = Vec::new();
    save_codes(&codes, &mut buf).unwrap();
    fs::write(paths.codes(), buf).unwrap();
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf).unwrap();
    fs::write(paths.labels(), buf).unwrap();
    run_build_index(&paths).unwrap();

    let options = EvalOptions {
        k: 4,
        r_values: vec![],
        relevance: RelevanceMode::SingleLabel,
        include_self: false,
    };
    let report = run_eval(&paths, &options).unwrap();
    assert!((report.map_at_k - 1.0).abs() < 1e-12, "mAP {}", report.map_at_k);
}

#[test]
fn ablate_report_shape() {
    let config = small_config();
    let (_dir, paths) = full_pipeline("ablate", &config);
    let options = EvalOptions {
        k: 10,
        r_values: vec![],
        relevance: RelevanceMode::MultiLabel,
        include_self: false,
    };
    let exclusions = [LossTerm::Mse, LossTerm::Order];
    let report = run_ablate(&paths, &config, &exclusions, &options).unwrap();
    // Rows: full + one per exclusion + random hyperplanes.
    assert_eq!(report.rows.len(), exclusions.len() + 2);
    assert_eq!(report.rows[0].variant, "full");
    assert_eq!(report.rows.last().unwrap().variant, "random_hyperplanes");
    assert!(report.rows.iter().all(|r| (0.0..=1.0).contains(&r.map_at_k)));
    // Report file rewrites identically.
    let first = fs::read(paths.ablate_report()).unwrap();
    run_ablate(&paths, &config, &exclusions, &options).unwrap();
    let second = fs::read(paths.ablate_report()).unwrap();
    assert_eq!(first, second);
}

#[test]
fn shifted_object_scene_is_less_similar_than_duplicate() {
    use hyperscene_core::pipeline::artifacts::load_scenes;
    use hyperscene_core::hdc::cosine_similarity;
    use hyperscene_core::metrics::{AnnotatedObject, SpatialAnnotation};
    use hyperscene_core::metrics::LabeledItem;
    use hyperscene_core::pipeline::dataset::{FeatureDataset, ImageRecord, ObjectRecord};
    use hyperscene_core::pipeline::SynthOutput;

    // Three images sharing one object feature: exact duplicate at the same
    // position, and a copy shifted by 0.5; encoded at small w the duplicate
    // stays closer.
    let config = PipelineConfig {
        d: 500,
        z: 32,
        z_prime: 8,
        c: 2,
        w: 0.1,
        epochs_encoder: 1,
        ..small_config()
    };
    let dir = TempDir::new("shifted");
    let paths = dir.paths();
    let z = config.z;
    let feature: Vec<f32> = (0..z).map(|i| (i as f32 * 0.31).sin()).collect();
    let global: Vec<f32> = vec![0.25; z];
    let mut blob = Vec::new();
    blob.extend_from_slice(&global);
    blob.extend_from_slice(&feature);
    let object_at = |x: f64, y: f64| ObjectRecord {
        bbox: [x - 10.0, y - 10.0, 20.0, 20.0],
        pseudo_label: 0,
        feature_offset: 1,
    };
    // 640x480 image; positions in pixels. Displacement of 0.5 in normalized
    // coordinates = (0.3, 0.4) direction.
    let records = vec![
        ImageRecord {
            image_id: 0,
            image_w: 640.0,
            image_h: 480.0,
            global_offset: 0,
            objects: vec![object_at(0.2 * 640.0, 0.2 * 480.0)],
        },
        ImageRecord {
            image_id: 1,
            image_w: 640.0,
            image_h: 480.0,
            global_offset: 0,
            objects: vec![object_at(0.2 * 640.0, 0.2 * 480.0)],
        },
        ImageRecord {
            image_id: 2,
            image_w: 640.0,
            image_h: 480.0,
            global_offset: 0,
            objects: vec![object_at(0.5 * 640.0, 0.6 * 480.0)],
        },
    ];
    let dataset = FeatureDataset::new(records, blob, z).unwrap();
    let annotations: Vec<SpatialAnnotation> = dataset
        .records()
        .iter()
        .map(|rec| {
            SpatialAnnotation::new(
                rec.image_id,
                rec.objects
                    .iter()
                    .map(|o| AnnotatedObject {
                        class_label: o.pseudo_label,
                        x: o.bbox[0] + o.bbox[2] / 2.0,
                        y: o.bbox[1] + o.bbox[3] / 2.0,
                    })
                    .collect(),
                rec.image_w,
                rec.image_h,
            )
            .unwrap()
        })
        .collect();
    let labels: Vec<LabeledItem> = dataset
        .records()
        .iter()
        .map(|r| LabeledItem::new(r.image_id, vec![0]).unwrap())
        .collect();
    let output = SynthOutput {
        dataset,
        annotations,
        labels,
        prototypes: vec![],
    };
    write_synth_output(&paths, &output).unwrap();
    run_train_encoder(&paths, &config).unwrap();
    run_encode(&paths, &config).unwrap();
    let (scenes, _) = load_scenes(&mut &fs::read(paths.scenes()).unwrap()[..]).unwrap();
    let sim_dup = cosine_similarity(&scenes.entries[0].1, &scenes.entries[1].1).unwrap();
    let sim_shift = cosine_similarity(&scenes.entries[0].1, &scenes.entries[2].1).unwrap();
    assert!(
        sim_dup > sim_shift,
        "duplicate {sim_dup} vs shifted {sim_shift}"
    );
}
