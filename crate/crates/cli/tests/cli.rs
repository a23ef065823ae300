use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use pyrofocus::data::{load_scene, read_patch_store, save_scene, Split};
use pyrofocus::models::{Checkpoint, Model};
use pyrofocus::numerics::Tensor;
use pyrofocus_cli::render::{decode_ppm, decode_seg};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pyrofocus"));
    c.env_remove("PYROFOCUS_SEED").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Corpus, preprocessed data and small checkpoints shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let r = |n: &str| root.join(n).to_str().unwrap().to_string();
        ok(&["gen", "--scenes", "25", "--prevalence", "0.3", "--seed", "5", "--out", &r("corpus")]);
        ok(&["preprocess", "--in", &r("corpus"), "--out", &r("data"), "--seed", "5"]);
        ok(&["gen", "--scenes", "25", "--prevalence", "0.3", "--seed", "6", "--out", &r("corpus2")]);
        ok(&["preprocess", "--in", &r("corpus2"), "--out", &r("data2"), "--seed", "6"]);
        ok(&[
            "train", "--model", "simple-cnn", "--epochs", "2", "--batch", "16", "--data", &r("data"), "--out",
            &r("clf.ckpt"),
        ]);
        for (model, out) in [("unet-seg", "seg.ckpt"), ("unet-frp", "frp.ckpt")] {
            ok(&[
                "train", "--model", model, "--epochs", "1", "--width", "4", "--all-patches", "--data", &r("data"),
                "--out", &r(out),
            ]);
        }
        Fixture { _dir: dir, root }
    })
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        // The config echo records the output path.
        .filter(|e| e.file_name() != "config.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn gen_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen", "--scenes", "2", "--seed", "7", "--out", s(out)]);
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 7);
}

#[test]
fn seed_falls_back_to_environment() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["gen", "--scenes", "1", "--seed", "11", "--out", s(&a)]);
    let o = bin().args(["gen", "--scenes", "1", "--out", s(&b)]).env("PYROFOCUS_SEED", "11").output().unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("scene_0000.msf")).unwrap(), fs::read(b.join("scene_0000.msf")).unwrap());
}

#[test]
fn zero_scenes_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--scenes", "0", "--out", s(d.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error["));
}

#[test]
fn zero_prevalence_is_fire_free() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "--scenes", "3", "--prevalence", "0", "--out", s(d.path())]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(d.path().join("manifest.json")).unwrap()).unwrap();
    for sc in m["scenes"].as_array().unwrap() {
        assert_eq!(sc["fire_pixels"], 0);
        let scene = load_scene(d.path().join(sc["file"].as_str().unwrap())).unwrap();
        assert!(scene.class_mask.unwrap().iter().all(|&c| c == 0));
    }
}

#[test]
fn preprocess_splits_and_reruns_identically() {
    let f = fixture();
    let split = fs::read_to_string(f.p("data/split.csv")).unwrap();
    let rows: Vec<&str> = split.lines().skip(1).collect();
    assert_eq!(rows.len(), 100);
    let count = |name| rows.iter().filter(|r| r.ends_with(name)).count();
    assert_eq!((count("train"), count("val"), count("test")), (80, 10, 10));

    let d = tempfile::tempdir().unwrap();
    ok(&["preprocess", "--in", s(&f.p("corpus")), "--out", s(d.path()), "--seed", "5"]);
    assert_eq!(fs::read_to_string(d.path().join("split.csv")).unwrap(), split);
}

#[test]
fn augment_adds_one_copy_per_train_fire_patch() {
    let f = fixture();
    let (_, plain) = read_patch_store(f.p("data/patches.pfps")).unwrap();
    let train_fire = plain
        .iter()
        .filter(|p| p.split == Split::Train && p.patch.label().unwrap().is_fire())
        .count();
    assert!(train_fire > 0);
    let d = tempfile::tempdir().unwrap();
    ok(&["preprocess", "--in", s(&f.p("corpus")), "--out", s(d.path()), "--seed", "5", "--augment"]);
    let (_, aug) = read_patch_store(d.path().join("patches.pfps")).unwrap();
    let train = |v: &[pyrofocus::data::StoredPatch]| v.iter().filter(|p| p.split == Split::Train).count();
    assert_eq!(train(&aug), train(&plain) + train_fire);
}

#[test]
fn missing_scene_files_are_listed() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("c");
    fs::create_dir(&corpus).unwrap();
    fs::copy(f.p("corpus/manifest.json"), corpus.join("manifest.json")).unwrap();
    let o = run(&["preprocess", "--in", s(&corpus), "--out", s(&d.path().join("out"))]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("scene_0000.msf"));
}

#[test]
fn training_writes_history_and_needs_a_scaler() {
    let f = fixture();
    let hist = fs::read_to_string(f.p("clf.ckpt.history.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,val_loss,val_metric"));
    assert_eq!(lines.count(), 2);
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(f.p("clf.ckpt.config.json")).unwrap()).unwrap();
    assert_eq!(echo["args"]["lr"], 0.001);

    let d = tempfile::tempdir().unwrap();
    let o = run(&["train", "--model", "unet-seg", "--data", s(d.path()), "--out", s(&d.path().join("x.ckpt"))]);
    assert_eq!(code(&o), 3);
}

fn bench(f: &Fixture, data: &str, report: &Path) -> Output {
    run(&[
        "bench", "--task", "seg", "--classifier", s(&f.p("clf.ckpt")), "--unet", s(&f.p("seg.ckpt")), "--data",
        s(&f.p(data)), "--repeats", "1", "--warmup", "0", "--threads", "1", "--images", "3", "--report", s(report),
    ])
}

#[test]
fn bench_reports_are_reproducible_and_complete() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.json"), d.path().join("b.json"));
    for r in [&a, &b] {
        let o = bench(f, "data", r);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let load = |p: &Path| -> serde_json::Value { serde_json::from_slice(&fs::read(p).unwrap()).unwrap() };
    let (ra, rb) = (load(&a), load(&b));
    let reports = ra.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for (x, y) in reports.iter().zip(rb.as_array().unwrap()) {
        assert_eq!(x["prediction_sha256"], y["prediction_sha256"]);
        assert_eq!(x["patches_routed"], y["patches_routed"]);
    }
    let required = [
        "pipeline", "task", "images", "scene_ids", "repeats", "warmup", "threads", "batch_size", "patches_total",
        "patches_routed", "predicted_per_class", "stage1_total_s", "stage2_total_s", "overhead_s",
        "end_to_end_total_median_s", "seconds_per_image_median", "speedup_percent", "gating_miss_rate",
        "prediction_sha256", "cost_model",
    ];
    for r in reports {
        for k in required {
            assert!(r.get(k).is_some(), "missing {k}");
        }
        assert_eq!(r["images"], 3);
        assert_eq!(r["prediction_sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(reports[0]["pipeline"], "single");
    assert!(reports[1]["cost_model"]["predicted_s"].as_f64().unwrap() > 0.0);
    let sweep = fs::read_to_string(d.path().join("a.json.sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn bench_rejects_a_foreign_scaler() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let o = bench(f, "data2", &d.path().join("r.json"));
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[incompatible]"));
}

/// A copy of the test classifier that never routes a patch.
fn never_routing_classifier(f: &Fixture, out: &Path) {
    let mut ck = Checkpoint::load(f.p("clf.ckpt")).unwrap();
    let Model::Classifier(c) = &mut ck.model else { unreachable!() };
    let store = c.store_mut();
    let w = store.value(store.id("fc2.weight").unwrap()).shape().to_vec();
    store.assign("fc2.weight", Tensor::zeros(w)).unwrap();
    store.assign("fc2.bias", Tensor::new(vec![4], vec![100.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
    ck.save(out).unwrap();
}

fn infer(f: &Fixture, cmd: &str, scene: &Path, classifier: &Path, unet: &str, task: &str, out: &Path) -> Output {
    run(&[
        cmd, "--scene", s(scene), "--classifier", s(classifier), "--unet", s(&f.p(unet)), "--task", task, "--out",
        s(out),
    ])
}

#[test]
fn fire_free_overlay_is_the_base_composite() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let clf = d.path().join("quiet.ckpt");
    never_routing_classifier(f, &clf);
    let scene_path = f.p("corpus/scene_0000.msf");
    let out = d.path().join("o");
    let o = infer(f, "infer", &scene_path, &clf, "seg.ckpt", "seg", &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = load_scene(d.path().join("o.pred.msf")).unwrap();
    assert!(pred.class_mask.as_ref().unwrap().iter().all(|&c| c == 0));
    let overlay = decode_ppm(&fs::read(d.path().join("o.ppm")).unwrap()).unwrap();
    let base = pyrofocus_cli::render::base_composite(&pred).unwrap();
    assert_eq!(overlay.rgb, base);
    assert!(d.path().join("o.legend.ppm").is_file());
    assert!(d.path().join("o.config.json").is_file());
}

#[test]
fn overlay_dims_and_palette_round_trip() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    // 50×130 crops to 48×128.
    ok(&["gen", "--scenes", "1", "--height", "50", "--width", "130", "--seed", "3", "--out", s(&d.path().join("g"))]);
    let scene = d.path().join("g/scene_0000.msf");
    let out = d.path().join("seg");
    let o = infer(f, "infer", &scene, &f.p("clf.ckpt"), "seg.ckpt", "seg", &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = decode_ppm(&fs::read(d.path().join("seg.ppm")).unwrap()).unwrap();
    assert_eq!((img.height, img.width), (48, 128));
    let pred = load_scene(d.path().join("seg.pred.msf")).unwrap();
    assert_eq!(decode_seg(&img.rgb), pred.class_mask.unwrap());

    let out = d.path().join("frp");
    let o = infer(f, "render", &scene, &f.p("clf.ckpt"), "frp.ckpt", "frp", &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = decode_ppm(&fs::read(d.path().join("frp.ppm")).unwrap()).unwrap();
    assert_eq!((img.height, img.width), (48, 128));
    assert!(img.comments.iter().any(|c| c.starts_with("frp_max_mw=")));
    assert!(!d.path().join("frp.pred.msf").exists());
}

#[test]
fn band_mismatch_is_incompatible() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let mut scene = load_scene(f.p("corpus/scene_0001.msf")).unwrap();
    scene.wavelengths[8] = 13.0;
    let path = d.path().join("odd.msf");
    save_scene(&scene, &path).unwrap();
    let o = infer(f, "infer", &path, &f.p("clf.ckpt"), "seg.ckpt", "seg", &d.path().join("x"));
    assert_eq!(code(&o), 4);
}
