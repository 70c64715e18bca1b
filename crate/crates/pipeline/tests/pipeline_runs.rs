use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use river_core::rollout::{Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse};
use river_core::twin::{diff_twins, parse_twin, serialize_twin, VideoTwin};
use river_pipeline::bench::{
    load_manifest, render_report, run_eval, BenchmarkManifest, EvalOptions, EvalRunReport, ManifestError, ReportFormat,
    SampleOutcome,
};
use river_pipeline::clients::Services;
use river_pipeline::conditioning::{build_conditioning, ConditioningError};
use river_pipeline::config::PipelineConfig;
use river_pipeline::frames::load_frames;
use river_pipeline::mock::{
    CannedPerception, ColorPerception, EchoEditor, ReasonerScript, RefusingEditor, ScriptedReasoner,
};
use river_pipeline::perception::{build_twin, BuildTwinError};
use river_pipeline::run::{edit_video, run_pipeline, RunOptions, Stage};
use river_testkit::twin_gen::{mutate_twin, random_twin, TwinShape};
use serde_json::json;

fn bench_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bench")
}

fn video(name: &str) -> PathBuf {
    bench_dir().join("videos").join(name)
}

fn config() -> PipelineConfig {
    PipelineConfig::load(Some(&bench_dir().join("config.toml"))).unwrap()
}

fn fixture_twin(name: &str) -> VideoTwin {
    parse_twin(&std::fs::read_to_string(video(name).join("twin.json")).unwrap()).unwrap()
}

fn script(name: &str) -> ReasonerScript {
    ReasonerScript::load(&video(name)).unwrap()
}

fn manifest() -> BenchmarkManifest {
    load_manifest(&bench_dir().join("manifest.jsonl")).unwrap()
}

fn copy_frames(name: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(video(name)).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "png") || path.file_name().unwrap() == "index.json" {
            std::fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
        }
    }
    dir
}

fn instance(id: u64, category: &str, x: f64) -> serde_json::Value {
    json!({"id": id, "category": category, "attributes": ["red"],
           "mask": {"rle": [0, 64 * 48], "width": 64, "height": 48},
           "centroid": [x, 24.0], "depth": 0.5})
}

#[test]
fn canned_perception_two_instances_three_frames() {
    let dir = copy_frames("s1");
    let frame = json!({"instances": [instance(0, "car", 16.0), instance(1, "person", 48.0)]});
    let perception = CannedPerception(json!({"frames": [frame.clone(), frame.clone(), frame]}));
    let twin = build_twin(dir.path(), Some(&perception), Some((64, 48)), &[]).unwrap();
    assert_eq!(twin.frame_count, 3);
    for f in &twin.frames {
        assert_eq!(f.instances.len(), 2);
        assert_eq!(f.instances[0].spatial.x, 0.25);
        assert_eq!(f.instances[1].spatial.x, 0.75);
        assert_eq!(f.instances[0].spatial.size, 1.0);
    }
    assert!(twin.validate().valid);
}

#[test]
fn missing_category_names_the_field() {
    let dir = copy_frames("s1");
    let mut broken = instance(5, "car", 1.0);
    broken.as_object_mut().unwrap().remove("category");
    let ok = json!({"instances": []});
    let perception = CannedPerception(json!({"frames": [ok.clone(), {"instances": [broken]}, ok]}));
    let err = build_twin(dir.path(), Some(&perception), Some((64, 48)), &[]).unwrap_err();
    match err {
        BuildTwinError::MalformedPerceptionResponse { path, .. } => assert_eq!(path, "frames[1].instances[0].category"),
        other => panic!("{other}"),
    }
}

#[test]
fn fixture_twin_wins_over_perception() {
    let perception = ColorPerception::default();
    let twin = build_twin(&video("s2"), Some(&perception), Some((64, 48)), &[]).unwrap();
    assert_eq!(perception.calls(), 0);
    assert_eq!(twin, fixture_twin("s2"));
}

#[test]
fn no_fixture_and_no_perception() {
    let dir = copy_frames("s1");
    let err = build_twin(dir.path(), None, None, &[]).unwrap_err();
    assert!(matches!(err, BuildTwinError::FixtureMissing(_)), "{err}");
}

#[test]
fn color_perception_reproduces_fixture_twin() {
    let dir = copy_frames("s3");
    let twin = build_twin(dir.path(), Some(&ColorPerception::default()), Some((64, 48)), &[]).unwrap();
    assert_eq!(serialize_twin(&twin), serialize_twin(&fixture_twin("s3")));
}

#[test]
fn identity_edit_conditions_nothing() {
    let twin = fixture_twin("s1");
    let c = build_conditioning(&twin, &serialize_twin(&twin)).unwrap();
    assert!(c.payload.text_descriptions.is_empty());
    assert!(c.payload.spatial_guidance.is_empty());
    assert_eq!(c.payload.frame_count, 3);
}

#[test]
fn one_attribute_change_one_entry() {
    let twin = fixture_twin("s1");
    let mut edited = twin.clone();
    edited.frames[1]
        .instances
        .iter_mut()
        .find(|o| o.id == 0)
        .unwrap()
        .attributes
        .push("golden".into());
    let c = build_conditioning(&twin, &serialize_twin(&edited)).unwrap();
    assert_eq!(c.payload.text_descriptions.len(), 1);
    assert_eq!(c.payload.spatial_guidance.len(), 1);
    let g = &c.payload.spatial_guidance[0];
    assert_eq!((g.frame, g.id, g.removed), (1, 0, false));
    assert!(
        c.payload.text_descriptions[0].contains("golden"),
        "{}",
        c.payload.text_descriptions[0]
    );
}

#[test]
fn removal_across_three_frames() {
    let twin = fixture_twin("s2");
    let mut edited = twin.clone();
    for f in &mut edited.frames {
        f.instances.retain(|o| o.id != 3);
    }
    let c = build_conditioning(&twin, &serialize_twin(&edited)).unwrap();
    assert_eq!(c.payload.spatial_guidance.len(), 3);
    assert_eq!(c.payload.text_descriptions.len(), 3);
    for (t, g) in c.payload.spatial_guidance.iter().enumerate() {
        assert_eq!((g.frame, g.id, g.removed), (t, 3, true));
        assert_eq!(g.mask_ref, twin.instance(t, 3).unwrap().mask_ref);
    }
}

#[test]
fn malformed_edit_is_rejected_with_report() {
    let twin = fixture_twin("s1");
    match build_conditioning(&twin, "{\"frames\": [") {
        Err(ConditioningError::InvalidEdit(report)) => assert!(!report.valid),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn conditioning_covers_exactly_the_diff(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = TwinShape::default();
        let original = random_twin(&mut rng, &shape);
        let edited = mutate_twin(&mut rng, &original, &shape);
        let c = build_conditioning(&original, &serialize_twin(&edited)).unwrap();
        prop_assert_eq!(c.payload.keys(), diff_twins(&original, &edited).touched());
        prop_assert_eq!(c.payload.text_descriptions.len(), c.payload.spatial_guidance.len());
    }
}

fn services_for(name: &str) -> Services {
    Services::mock_all([script(name)])
}

#[test]
fn dry_run_never_calls_editor() {
    let editor = Arc::new(RefusingEditor::default());
    let mut services = services_for("s1");
    services.editor = Some(editor.clone());
    let opts = RunOptions {
        no_editor: true,
        output_dir: None,
    };
    let record = edit_video(&video("s1"), &script("s1").query, &config(), &services, &opts);
    assert_eq!(editor.calls(), 0);
    assert!(!record.editor_called);
    assert!(record.failure.is_none(), "{:?}", record.failure);
    assert_eq!(record.payload.unwrap().spatial_guidance.len(), 3);
    assert!(record.edited_frames.is_empty());
}

#[test]
fn missing_editor_is_a_dry_run() {
    let mut services = services_for("s1");
    services.editor = None;
    let out = run_pipeline(
        &video("s1"),
        &script("s1").query,
        &config(),
        &services,
        &RunOptions::default(),
    );
    assert!(out.record.failure.is_none());
    assert!(out.record.payload.is_some());
    assert!(out.edited_frames.is_none());
    assert!(out.record.verdict.is_none());
    assert_eq!(out.record.reward.unwrap().r_perf, 0.0);
}

#[test]
fn full_mock_stack_writes_echoed_frames() {
    let editor = Arc::new(EchoEditor::default());
    let mut services = services_for("s1");
    services.editor = Some(editor.clone());
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        no_editor: false,
        output_dir: Some(dir.path().to_path_buf()),
    };
    let record = edit_video(&video("s1"), &script("s1").query, &config(), &services, &opts);
    assert_eq!(editor.calls(), 1);
    assert_eq!(record.edited_frames.len(), 3);
    assert_eq!(
        load_frames(dir.path(), None).unwrap(),
        load_frames(&video("s1"), Some((64, 48))).unwrap()
    );
    let reward = record.reward.unwrap();
    assert_eq!((reward.r_token, reward.r_exec, reward.r_dt), (0.0, 0.0, 0.5));
    assert!(record.verdict.is_some());
}

#[test]
fn invalid_edit_skips_editor() {
    let editor = Arc::new(EchoEditor::default());
    let mut services = services_for("s3");
    services.editor = Some(editor.clone());
    let record = edit_video(
        &video("s3"),
        &script("s3").query,
        &config(),
        &services,
        &RunOptions::default(),
    );
    assert_eq!(editor.calls(), 0);
    assert!(record.failure.is_none());
    assert!(record.payload.is_none());
    let reward = record.reward.unwrap();
    assert_eq!(reward.r_dt, -0.5);
    assert_eq!(reward.r_perf, -1.0);
}

#[test]
fn scripted_run_is_reproducible() {
    let run = || {
        let record = edit_video(
            &video("s2"),
            &script("s2").query,
            &config(),
            &services_for("s2"),
            &RunOptions::default(),
        );
        serde_json::to_string(&record).unwrap()
    };
    assert_eq!(run(), run());
}

struct SeedSpy {
    inner: ScriptedReasoner,
    seeds: Mutex<Vec<u64>>,
}

impl Reasoner for SeedSpy {
    fn complete(&self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        self.seeds.lock().unwrap().push(request.seed);
        self.inner.complete(request)
    }
}

#[test]
fn seed_reaches_the_reasoner_request() {
    let mut cfg = config();
    cfg.seed = 1234;
    let spy = Arc::new(SeedSpy {
        inner: ScriptedReasoner::new([script("s2")]),
        seeds: Mutex::new(Vec::new()),
    });
    let mut services = services_for("s2");
    services.reasoner = Some(spy.clone());
    let record = edit_video(
        &video("s2"),
        &script("s2").query,
        &cfg,
        &services,
        &RunOptions::default(),
    );
    assert_eq!(record.seed, 1234);
    assert_eq!(*spy.seeds.lock().unwrap(), vec![1234; 3]);
}

#[test]
fn unreachable_reasoner_gives_error_rows() {
    let m = manifest();
    let reasoner = Arc::new(ScriptedReasoner::unreachable());
    let mut services = Services::mock_all([]);
    services.reasoner = Some(reasoner.clone());
    let report = run_eval(&m, &services, &config(), 2, &EvalOptions::default()).unwrap();
    assert_eq!(report.error_count(), 3);
    for row in &report.samples {
        match &row.outcome {
            SampleOutcome::Error { stage, message, .. } => {
                assert_eq!(*stage, Stage::Rollout);
                assert!(message.contains("timed out"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }
    assert_eq!(reasoner.calls(), 3);
    let text = render_report(&report, ReportFormat::Text);
    assert!(text.contains("3 errors"), "{text}");
}

#[test]
fn parallelism_does_not_change_results() {
    let m = manifest();
    let run = |p| {
        let services = Services::mock_all(["s1", "s2", "s3"].map(script));
        run_eval(&m, &services, &config(), p, &EvalOptions::default())
            .unwrap()
            .to_jsonl()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn report_survives_jsonl() {
    let m = manifest();
    let services = Services::mock_all(["s1", "s2", "s3"].map(script));
    let report = run_eval(&m, &services, &config(), 1, &EvalOptions::default()).unwrap();
    let back = EvalRunReport::from_jsonl(&report.to_jsonl()).unwrap();
    assert_eq!(
        render_report(&back, ReportFormat::Csv),
        render_report(&report, ReportFormat::Csv)
    );
    assert_eq!(back.samples.len(), 3);
}

#[test]
fn manifest_round_trip_and_counts() {
    let m = manifest();
    assert_eq!(m.name, "fixture");
    assert_eq!(m.samples.len(), 3);
    let counts = m.counts();
    assert_eq!(counts.total, 3);
    let back = BenchmarkManifest::parse(&m.to_jsonl(), "other", &m.base_dir, true).unwrap();
    assert_eq!(back, m);
}

fn parse(text: &str) -> Result<BenchmarkManifest, ManifestError> {
    BenchmarkManifest::parse(text, "t", &bench_dir(), true)
}

#[test]
fn manifest_errors() {
    let line = |id: &str, video: &str, level: u8, cat: &str| {
        json!({"sample_id": id, "video_ref": video, "query": "q", "level": level, "category": cat}).to_string()
    };
    let good = line("a", "videos/s1", 1, "semantic");
    assert!(matches!(
        parse(&format!("{good}\n{{not json")),
        Err(ManifestError::NotParseable { line: 2, .. })
    ));
    assert!(matches!(
        parse(&line("a", "videos/s1", 4, "semantic")),
        Err(ManifestError::InvalidLevel { level: 4, .. })
    ));
    assert!(matches!(
        parse(&line("a", "videos/s1", 2, "causal")),
        Err(ManifestError::InvalidCategory { .. })
    ));
    assert!(matches!(
        parse(&line("a", "videos/nope", 2, "spatial")),
        Err(ManifestError::MissingVideo { .. })
    ));
    assert!(matches!(
        parse(&format!("{good}\n{good}")),
        Err(ManifestError::DuplicateSample(_))
    ));
    assert!(parse(&format!("\n{good}\n\n")).is_ok());
}
