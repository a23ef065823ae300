//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use pyrofocus::data::{
    load_scene, patchify, read_patch_store, read_points_csv, save_scene, write_patch_store, FireClass, PatchSet,
    ScalerParams, Scene, Split, StoredPatch, MWIR_WAVELENGTH_UM,
};
use pyrofocus::models::{
    train_classifier, train_unet, Checkpoint, ClassifierArch, ClassifierSpec, EpochRecord, Model, ModelSpec,
    TrainConfig, UNetHead, UNetSpec,
};
use pyrofocus::pipeline::{
    benchmark, evaluate_classifier, evaluate_planes, fire_patch_set, frp_mean_baseline, patch_set, prepare,
    run_pyrofocus, run_single_stage, scaled_batch, select_bench_scenes, write_sweep_csv, BenchConfig, BenchImage,
    CascadeConfig, EvalMetrics, PatchBatch, PipelineKind, Planes, PrepareConfig, Routing, RoutingStats, SourceScene,
    Task,
};
use pyrofocus::synth::{write_corpus, CorpusManifest, SceneConfig};

use pyrofocus_cli::{render, Failure};

pub const PATCHES_FILE: &str = "patches.pfps";
pub const SPLIT_FILE: &str = "split.csv";
pub const SCALER_FILE: &str = "scaler.json";
pub const PREP_FILE: &str = "prep.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Serialize)]
struct Echo<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    args: &'a A,
}

/// Writes the effective parameters of a run next to its outputs.
fn echo<A: Serialize>(path: &Path, command: &str, seed: Option<u64>, args: &A) -> Result<()> {
    let e = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        args,
    };
    fs::write(path, serde_json::to_string_pretty(&e)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- gen

#[derive(Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub scenes: usize,
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 0.25)]
    pub prevalence: f64,
    #[arg(long, env = "PYROFOCUS_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen(a: GenArgs) -> Result<()> {
    let cfg = SceneConfig {
        height: a.height,
        width: a.width,
        prevalence: a.prevalence,
        seed: a.seed,
        ..SceneConfig::default()
    };
    let m = write_corpus(&cfg, a.scenes, &a.out)?;
    echo(&a.out.join(CONFIG_FILE), "gen", Some(a.seed), &a)?;
    let fire: usize = m.scenes.iter().map(|s| s.fire_patches).sum();
    let total: usize = m.scenes.iter().map(|s| s.patches).sum();
    info!("wrote {} scenes ({fire}/{total} fire patches) to {}", m.scenes.len(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------- preprocess

#[derive(Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Add one flipped, noised copy of every training fire patch.
    #[arg(long)]
    pub augment: bool,
    #[arg(long, default_value_t = pyrofocus::data::AUGMENT_NOISE_SIGMA)]
    pub noise_sigma: f32,
    #[arg(long, env = "PYROFOCUS_SEED", default_value_t = 42)]
    pub seed: u64,
}

/// Summary of a preprocessed directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct PrepInfo {
    pub seed: u64,
    pub source: PathBuf,
    pub channels: usize,
    pub wavelengths: Vec<f32>,
    pub augment: bool,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub augmented: usize,
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&a.input).map_err(|e| match e {
        pyrofocus::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            anyhow::Error::new(Failure::Missing(format!("no corpus manifest in {}", a.input.display())))
        }
        other => other.into(),
    })?;
    let absent: Vec<String> = manifest
        .scenes
        .iter()
        .flat_map(|s| [&s.file, &s.points_file])
        .filter(|f| !a.input.join(f).is_file())
        .cloned()
        .collect();
    if !absent.is_empty() {
        return Err(Failure::Missing(format!("missing scene files: {}", absent.join(", "))).into());
    }
    let mut sources = Vec::with_capacity(manifest.scenes.len());
    for s in &manifest.scenes {
        let scene = load_scene(a.input.join(&s.file)).with_context(|| format!("loading {}", s.file))?;
        let points = read_points_csv(BufReader::new(File::open(a.input.join(&s.points_file))?))?;
        sources.push(SourceScene {
            id: s.id,
            scene,
            points: Some(points),
        });
    }
    let mwir = manifest
        .config
        .wavelengths
        .iter()
        .position(|&w| (w - MWIR_WAVELENGTH_UM).abs() < 0.05);
    let cfg = PrepareConfig {
        augment: a.augment,
        noise_sigma: a.noise_sigma,
        mwir_sensor_max: mwir.map(|i| manifest.config.sensor_max_radiance()[i]),
        ..PrepareConfig::new(a.seed)
    };
    let prepared = prepare(sources, &cfg)?;
    fs::create_dir_all(&a.out)?;
    write_patch_store(a.out.join(PATCHES_FILE), prepared.channels, &prepared.patches)?;
    prepared.manifest.write_csv(File::create(a.out.join(SPLIT_FILE))?)?;
    fs::write(a.out.join(SCALER_FILE), prepared.scaler.to_json() + "\n")?;
    let info = PrepInfo {
        seed: a.seed,
        source: fs::canonicalize(&a.input)?,
        channels: prepared.channels,
        wavelengths: prepared.wavelengths.clone(),
        augment: a.augment,
        train: prepared.manifest.count(Split::Train),
        val: prepared.manifest.count(Split::Val),
        test: prepared.manifest.count(Split::Test),
        augmented: prepared.patches.iter().filter(|p| p.augmented).count(),
    };
    write_json(&a.out.join(PREP_FILE), &info)?;
    echo(&a.out.join(CONFIG_FILE), "preprocess", Some(a.seed), &a)?;
    info!(
        "{} train (+{} augmented), {} val, {} test patches",
        info.train, info.augmented, info.val, info.test
    );
    Ok(())
}

/// A preprocessed directory loaded into memory.
struct Data {
    dir: PathBuf,
    info: PrepInfo,
    scaler: ScalerParams,
    patches: Vec<StoredPatch>,
}

impl Data {
    fn load(dir: &Path) -> Result<Self> {
        let scaler_path = dir.join(SCALER_FILE);
        if !scaler_path.is_file() {
            return Err(Failure::Missing(format!(
                "scaler {} not found; run preprocess first",
                scaler_path.display()
            ))
            .into());
        }
        let scaler: ScalerParams = serde_json::from_str(&fs::read_to_string(&scaler_path)?)?;
        let info: PrepInfo = serde_json::from_str(
            &fs::read_to_string(dir.join(PREP_FILE)).with_context(|| format!("reading {PREP_FILE}"))?,
        )?;
        let (_, patches) = read_patch_store(dir.join(PATCHES_FILE)).context("reading the patch store")?;
        Ok(Self {
            dir: dir.to_path_buf(),
            info,
            scaler,
            patches,
        })
    }

    fn set(&self, split: Split) -> Result<PatchSet> {
        Ok(patch_set(&self.patches, &self.scaler, split)?)
    }

    fn check(&self, ckpt: &Checkpoint, what: &str) -> Result<()> {
        let Some(s) = &ckpt.scaler else {
            bail!(Failure::Incompatible(format!("{what} checkpoint carries no scaler")));
        };
        if s.fingerprint() != self.scaler.fingerprint() {
            bail!(Failure::Incompatible(format!(
                "{what} checkpoint was trained with a different scaler than {}",
                self.dir.display()
            )));
        }
        Ok(())
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

// --------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SimpleCnn,
    ResnetLite,
    UnetSeg,
    UnetFrp,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Default 30.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Default 128 for classifiers, 32 for U-Nets.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, env = "PYROFOCUS_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// U-Net base width.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// U-Net down/up levels.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long)]
    pub no_deep_supervision: bool,
    /// Train U-Nets on every patch instead of the fire-labeled ones.
    #[arg(long)]
    pub all_patches: bool,
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for h in history {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = Data::load(&a.data)?;
    let c = data.info.channels;
    let (model, history, cfg) = match a.model {
        ModelKind::SimpleCnn | ModelKind::ResnetLite => {
            let arch = if matches!(a.model, ModelKind::SimpleCnn) {
                ClassifierArch::SimpleCnn
            } else {
                ClassifierArch::ResnetLite
            };
            let mut cfg = TrainConfig::classifier(a.seed);
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
            cfg.lr = a.lr;
            let t = train_classifier(
                &data.set(Split::Train)?,
                &data.set(Split::Val)?,
                ClassifierSpec::new(arch, c),
                &cfg,
            )?;
            (Model::Classifier(t.model), t.history, cfg)
        }
        ModelKind::UnetSeg | ModelKind::UnetFrp => {
            let head = if matches!(a.model, ModelKind::UnetSeg) {
                UNetHead::Segmentation
            } else {
                UNetHead::Frp
            };
            let spec = UNetSpec {
                base_width: a.width,
                depth: a.depth,
                deep_supervision: !a.no_deep_supervision,
                ..UNetSpec::new(c, head)
            };
            let mut cfg = TrainConfig::unet(a.seed);
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
            cfg.lr = a.lr;
            let sets = |split| {
                if a.all_patches {
                    data.set(split)
                } else {
                    Ok(fire_patch_set(&data.patches, &data.scaler, split)?)
                }
            };
            let t = train_unet(&sets(Split::Train)?, &sets(Split::Val)?, spec, &cfg)?;
            (Model::Unet(t.model), t.history, cfg)
        }
    };
    let ckpt = Checkpoint {
        model,
        history,
        scaler: Some(data.scaler.clone()),
        wavelengths: Some(data.info.wavelengths.clone()),
        train_config: Some(cfg),
    };
    ckpt.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    write_history(&with_suffix(&a.out, ".history.csv"), &ckpt.history)?;
    echo(&with_suffix(&a.out, ".config.json"), "train", Some(a.seed), &a)?;
    if let Some(best) = ckpt.history.iter().min_by(|x, y| x.val_loss.total_cmp(&y.val_loss)) {
        info!(
            "best epoch {} (val loss {:.5}, metric {:.4}) saved to {}",
            best.epoch,
            best.val_loss,
            best.val_metric,
            a.out.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Classifier or U-Net checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// With a U-Net checkpoint, also evaluate the cascade through this classifier.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Serialize)]
struct EvalReport {
    model: ModelSpec,
    split: Split,
    patches: usize,
    metrics: EvalMetrics,
    pyrofocus: Option<EvalMetrics>,
    routing: Option<RoutingStats>,
    frp_mean_baseline_mae: Option<f64>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let data = Data::load(&a.data)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    data.check(&ckpt, "evaluated")?;
    let split = Split::from(a.split);
    let set = data.set(split)?;
    if set.is_empty() {
        bail!(Failure::Usage(format!("split {split} is empty")));
    }
    let report = match &ckpt.model {
        Model::Classifier(c) => EvalReport {
            model: ckpt.model.spec(),
            split,
            patches: set.len(),
            metrics: evaluate_classifier(c, &set, 64)?,
            pyrofocus: None,
            routing: None,
            frp_mean_baseline_mae: None,
        },
        Model::Unet(u) => {
            let task = match u.spec().head {
                UNetHead::Segmentation => Task::Seg,
                UNetHead::Frp => Task::Frp,
            };
            let x = scaled_batch(&set);
            let single = run_single_stage(&x, None, u, task, 64, a.threads)?;
            let (pyro, routing) = match &a.classifier {
                Some(p) => {
                    let cc = load_checkpoint(p)?;
                    data.check(&cc, "classifier")?;
                    let Model::Classifier(clf) = &cc.model else {
                        bail!(Failure::Usage(format!("{} is not a classifier checkpoint", p.display())));
                    };
                    let cfg = CascadeConfig {
                        threads: a.threads,
                        ..CascadeConfig::new(task)
                    };
                    let out = run_pyrofocus(&x, None, clf, u, &cfg)?;
                    (Some(evaluate_planes(&out.planes, &set)?), Some(out.stats))
                }
                None => (None, None),
            };
            let baseline = match task {
                Task::Frp => Some(frp_mean_baseline(&data.set(Split::Train)?, &set)?.value),
                Task::Seg => None,
            };
            EvalReport {
                model: ckpt.model.spec(),
                split,
                patches: set.len(),
                metrics: evaluate_planes(&single.planes, &set)?,
                pyrofocus: pyro,
                routing,
                frp_mean_baseline_mae: baseline,
            }
        }
    };
    write_json(&a.report, &report)?;
    echo(&with_suffix(&a.report, ".config.json"), "eval", None, &a)?;
    let m = &report.metrics;
    match m.masked_mae {
        Some(mae) => info!("masked MAE {:.5} over {} fire pixels", mae.value, mae.pixels),
        None => info!("accuracy {:.4}, MIoU {:.4}", m.accuracy, m.miou),
    }
    Ok(())
}

// --------------------------------------------------------------- bench

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineArg {
    Single,
    Pyrofocus,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Seg,
    Frp,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Seg => Task::Seg,
            TaskArg::Frp => Task::Frp,
        }
    }
}

#[derive(Args, Serialize)]
pub struct BenchArgs {
    /// Pipelines to time; the single-stage one is the speedup baseline.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "single,pyrofocus")]
    pub pipeline: Vec<PipelineArg>,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub unet: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Number of highest-fire-activity test scenes.
    #[arg(long, default_value_t = 10)]
    pub images: usize,
    /// Route when 1 − P(NoFire) ≥ tau instead of by argmax.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub report: PathBuf,
    /// Sweep CSV; defaults to `<report>.sweep.csv`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
}

fn load_images(data: &Data, k: usize) -> Result<Vec<BenchImage>> {
    let manifest = CorpusManifest::load(&data.info.source)
        .with_context(|| format!("reading the corpus manifest in {}", data.info.source.display()))?;
    let mut images = Vec::new();
    for id in select_bench_scenes(&data.patches, k) {
        let entry = manifest
            .scenes
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Failure::Missing(format!("scene {id} is not in the corpus manifest")))?;
        let scene = load_scene(data.info.source.join(&entry.file))?;
        let (patches, _) = patchify(&scene)?;
        let truth: Option<Vec<u8>> = patches.iter().map(|p| p.mask.clone()).collect::<Option<Vec<_>>>().map(|v| v.concat());
        images.push(BenchImage {
            scene_id: id,
            patches: PatchBatch::from_patches(&patches)?,
            truth,
        });
    }
    Ok(images)
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let data = Data::load(&a.data)?;
    let task = Task::from(a.task);
    let unet_ckpt = load_checkpoint(&a.unet)?;
    data.check(&unet_ckpt, "U-Net")?;
    let Model::Unet(unet) = &unet_ckpt.model else {
        bail!(Failure::Usage(format!("{} is not a U-Net checkpoint", a.unet.display())));
    };
    let pipelines: Vec<PipelineKind> = a
        .pipeline
        .iter()
        .map(|p| match p {
            PipelineArg::Single => PipelineKind::Single,
            PipelineArg::Pyrofocus => PipelineKind::Pyrofocus,
        })
        .collect();
    let clf_ckpt = match &a.classifier {
        Some(p) => {
            let c = load_checkpoint(p)?;
            data.check(&c, "classifier")?;
            Some(c)
        }
        None if pipelines.contains(&PipelineKind::Pyrofocus) => {
            bail!(Failure::Usage("the pyrofocus pipeline needs --classifier".into()))
        }
        None => None,
    };
    let classifier = match clf_ckpt.as_ref().map(|c| &c.model) {
        Some(Model::Classifier(c)) => Some(c),
        Some(_) => bail!(Failure::Usage("--classifier is not a classifier checkpoint".into())),
        None => None,
    };
    let images = load_images(&data, a.images)?;
    let cfg = BenchConfig {
        cascade: CascadeConfig {
            task,
            routing: a.tau.map_or(Routing::Argmax, |tau| Routing::Threshold { tau }),
            batch_size: a.batch,
            threads: a.threads,
        },
        repeats: a.repeats,
        warmup: a.warmup,
    };
    let reports = benchmark(&pipelines, &images, &data.scaler, classifier, unet, &cfg)?;
    write_json(&a.report, &reports)?;
    let prevalence = CorpusManifest::load(&data.info.source)?.config.prevalence;
    let sweep = a.sweep.clone().unwrap_or_else(|| with_suffix(&a.report, ".sweep.csv"));
    let rows: Vec<(f64, _)> = reports.iter().map(|r| (prevalence, r.clone())).collect();
    write_sweep_csv(&rows, BufWriter::new(File::create(&sweep)?))?;
    echo(&with_suffix(&a.report, ".config.json"), "bench", None, &a)?;
    for r in &reports {
        info!(
            "{}: {:.4} s/image, routed {}/{}{}",
            r.pipeline,
            r.seconds_per_image_median,
            r.patches_routed,
            r.patches_total,
            r.speedup_percent.map_or(String::new(), |s| format!(", speedup {s:.1}%"))
        );
    }
    Ok(())
}

// ------------------------------------------------------- infer, render

#[derive(Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Without a classifier every patch goes through the U-Net.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub unet: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

fn check_bands(ckpt: &Checkpoint, scene: &Scene, what: &str) -> Result<()> {
    let ok = match &ckpt.wavelengths {
        Some(w) => *w == scene.wavelengths,
        None => ckpt.model.spec().in_channels() == scene.channels(),
    };
    if !ok {
        bail!(Failure::Incompatible(format!(
            "scene bands {:?} do not match the {what} checkpoint",
            scene.wavelengths
        )));
    }
    Ok(())
}

pub fn infer(a: InferArgs, write_planes: bool) -> Result<()> {
    let scene = load_scene(&a.scene).with_context(|| format!("loading {}", a.scene.display()))?;
    let task = Task::from(a.task);
    let unet_ckpt = load_checkpoint(&a.unet)?;
    check_bands(&unet_ckpt, &scene, "U-Net")?;
    let Model::Unet(unet) = &unet_ckpt.model else {
        bail!(Failure::Usage(format!("{} is not a U-Net checkpoint", a.unet.display())));
    };
    let scaler = unet_ckpt
        .scaler
        .as_ref()
        .ok_or_else(|| Failure::Incompatible("U-Net checkpoint carries no scaler".into()))?;
    let (patches, tiling) = patchify(&scene)?;
    let batch = PatchBatch::from_patches(&patches)?;
    let cfg = CascadeConfig {
        threads: a.threads,
        ..CascadeConfig::new(task)
    };
    let out = match &a.classifier {
        Some(p) => {
            let cc = load_checkpoint(p)?;
            check_bands(&cc, &scene, "classifier")?;
            if cc.scaler.as_ref().map(ScalerParams::fingerprint) != Some(scaler.fingerprint()) {
                bail!(Failure::Incompatible("classifier and U-Net were trained with different scalers".into()));
            }
            let Model::Classifier(clf) = &cc.model else {
                bail!(Failure::Usage(format!("{} is not a classifier checkpoint", p.display())));
            };
            run_pyrofocus(&batch, Some(scaler), clf, unet, &cfg)?
        }
        None => run_single_stage(&batch, Some(scaler), unet, task, cfg.batch_size, a.threads)?,
    };
    let cropped = pyrofocus::data::stitch(
        &patches
            .iter()
            .map(|p| pyrofocus::data::Patch {
                mask: None,
                frp: None,
                ..p.clone()
            })
            .collect::<Vec<_>>(),
        &tiling,
        &scene.wavelengths,
    )?;
    let stitched = out.planes.stitch(&tiling)?;
    let base = render::base_composite(&cropped)?;
    let (w, h) = (cropped.width, cropped.height);
    let (image, comment, mut pred_scene) = match &stitched {
        Planes::Seg(mask) => {
            let mut s = cropped.clone();
            s.class_mask = Some(mask.clone());
            (render::overlay_seg(&base, mask), None, s)
        }
        Planes::Frp(frp) => {
            let mw: Vec<f32> = frp.iter().map(|&v| if v > 0.0 { scaler.unscale_frp(v) } else { 0.0 }).collect();
            let max = mw.iter().copied().fold(0.0f32, f32::max);
            let mut s = cropped.clone();
            s.frp = Some(mw.clone());
            (render::overlay_frp(&base, &mw, max), Some(format!("frp_max_mw={max:.3}")), s)
        }
    };
    pred_scene.geo = None;
    fs::create_dir_all(a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
    let overlay = with_suffix(&a.out, ".ppm");
    render::write_ppm(&overlay, w, h, &image, comment.as_deref())?;
    let (lw, lh, legend) = render::legend(task, comment.as_deref());
    render::write_ppm(&with_suffix(&a.out, ".legend.ppm"), lw, lh, &legend, comment.as_deref())?;
    if write_planes {
        save_scene(&pred_scene, with_suffix(&a.out, ".pred.msf"))?;
    }
    echo(
        &with_suffix(&a.out, ".config.json"),
        if write_planes { "infer" } else { "render" },
        None,
        &a,
    )?;
    let routed = out.routed.iter().filter(|r| **r).count();
    info!(
        "{} patches, {routed} through the U-Net; overlay {}",
        out.routed.len(),
        overlay.display()
    );
    let fire = match &stitched {
        Planes::Seg(m) => m.iter().filter(|&&c| c != FireClass::NoFire.code()).count(),
        Planes::Frp(f) => f.iter().filter(|&&v| v > 0.0).count(),
    };
    info!("{fire} of {} pixels predicted as fire", w * h);
    Ok(())
}
