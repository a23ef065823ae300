//! Latency benchmark of the single-stage and cascade pipelines.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cascade::{
    prediction_hash, run_pyrofocus, run_single_stage, CascadeConfig, PatchBatch, Planes, RoutingStats, StageTimes,
};
use crate::data::{ScalerParams, Split, StoredPatch, PATCH_PIXELS};
use crate::error::{Error, Result};
use crate::models::{Classifier, UNet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Single,
    Pyrofocus,
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "pyrofocus" => Ok(Self::Pyrofocus),
            other => Err(Error::config(format!(
                "unknown pipeline {other:?} (expected single or pyrofocus)"
            ))),
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Single => "single",
            Self::Pyrofocus => "pyrofocus",
        })
    }
}

/// One benchmark image: its unscaled patches and, optionally, the true
/// class mask `[N][24][64]` for the gating miss rate.
#[derive(Clone, Debug)]
pub struct BenchImage {
    pub scene_id: usize,
    pub patches: PatchBatch,
    pub truth: Option<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub cascade: CascadeConfig,
    pub repeats: usize,
    pub warmup: usize,
}

impl BenchConfig {
    pub fn new(cascade: CascadeConfig) -> Self {
        Self {
            cascade,
            repeats: 10,
            warmup: 2,
        }
    }
}

/// Cascade time predicted from per-patch stage costs:
/// `t_cls·N + t_unet·N_routed + overhead`, with `t_unet` and `overhead`
/// taken from the single-stage run and `t_cls` from the cascade run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub t_cls_ms: f64,
    pub t_unet_ms: f64,
    pub overhead_s: f64,
    pub predicted_s: f64,
    pub measured_s: f64,
    pub relative_error: f64,
    pub unet_to_cls_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pipeline: PipelineKind,
    pub task: super::Task,
    pub baseline: Option<PipelineKind>,
    pub images: usize,
    pub scene_ids: Vec<usize>,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
    pub batch_size: usize,
    pub patches_total: usize,
    pub patches_routed: usize,
    pub predicted_per_class: [usize; 4],
    /// Stage totals over all images for the repeat with the median
    /// end-to-end time.
    pub stage1_total_s: f64,
    pub stage2_total_s: f64,
    pub overhead_s: f64,
    pub stage1_ms_per_patch: f64,
    /// Per routed patch.
    pub stage2_ms_per_patch: f64,
    pub end_to_end_total_median_s: f64,
    pub end_to_end_total_mean_s: f64,
    pub seconds_per_image_median: f64,
    pub seconds_per_image_mean: f64,
    pub speedup_percent: Option<f64>,
    /// Fraction of true fire pixels in patches the classifier did not route.
    pub gating_miss_rate: Option<f64>,
    pub prediction_sha256: String,
    pub cost_model: Option<CostModel>,
}

pub fn speedup_percent(t_base: f64, t_new: f64) -> f64 {
    100.0 * (t_base - t_new) / t_base
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

struct Measured {
    totals: Vec<StageTimes>,
    stats: RoutingStats,
    hash: String,
    miss: Option<f64>,
}

impl Measured {
    /// Index of the repeat whose total is the (lower) median.
    fn median_repeat(&self) -> usize {
        let mut order: Vec<usize> = (0..self.totals.len()).collect();
        order.sort_by(|&a, &b| self.totals[a].total_s.total_cmp(&self.totals[b].total_s));
        order[(order.len() - 1) / 2]
    }
}

fn measure(
    kind: PipelineKind,
    images: &[BenchImage],
    scaler: &ScalerParams,
    classifier: Option<&Classifier>,
    unet: &UNet,
    cfg: &BenchConfig,
) -> Result<Measured> {
    let run = |img: &BenchImage| match kind {
        PipelineKind::Single => run_single_stage(
            &img.patches,
            Some(scaler),
            unet,
            cfg.cascade.task,
            cfg.cascade.batch_size,
            cfg.cascade.threads,
        ),
        PipelineKind::Pyrofocus => run_pyrofocus(
            &img.patches,
            Some(scaler),
            classifier.ok_or_else(|| Error::config("the cascade needs a classifier"))?,
            unet,
            &cfg.cascade,
        ),
    };
    for _ in 0..cfg.warmup {
        for img in images {
            run(img)?;
        }
    }
    let mut totals = Vec::with_capacity(cfg.repeats);
    let mut first: Option<(RoutingStats, String, Option<f64>)> = None;
    for _ in 0..cfg.repeats {
        let mut t = StageTimes::default();
        let mut stats = RoutingStats::default();
        let mut planes: Vec<Planes> = Vec::new();
        let (mut fire, mut missed) = (0usize, 0usize);
        let mut have_truth = true;
        for img in images {
            let out = run(img)?;
            t.add(&out.times);
            stats.merge(&out.stats);
            match &img.truth {
                Some(m) => {
                    for (k, routed) in out.routed.iter().enumerate() {
                        let f = m[k * PATCH_PIXELS..][..PATCH_PIXELS].iter().filter(|&&c| c != 0).count();
                        fire += f;
                        if !routed {
                            missed += f;
                        }
                    }
                }
                None => have_truth = false,
            }
            planes.push(out.planes);
        }
        totals.push(t);
        if first.is_none() {
            let miss = (have_truth && fire > 0).then(|| missed as f64 / fire as f64);
            let miss = if have_truth && fire == 0 { Some(0.0) } else { miss };
            first = Some((stats, prediction_hash(&planes), miss));
        }
    }
    let (stats, hash, miss) = first.expect("repeats ≥ 1");
    Ok(Measured {
        totals,
        stats,
        hash,
        miss,
    })
}

/// Times each pipeline over `images` (preloaded; no I/O is timed). The
/// single-stage pipeline, when present, is the speedup baseline.
pub fn benchmark(
    pipelines: &[PipelineKind],
    images: &[BenchImage],
    scaler: &ScalerParams,
    classifier: Option<&Classifier>,
    unet: &UNet,
    cfg: &BenchConfig,
) -> Result<Vec<BenchReport>> {
    if cfg.repeats < 1 {
        return Err(Error::config("benchmark needs at least one repeat"));
    }
    if images.is_empty() {
        return Err(Error::data("no benchmark images"));
    }
    let measured: Vec<(PipelineKind, Measured)> = pipelines
        .iter()
        .map(|&k| measure(k, images, scaler, classifier, unet, cfg).map(|m| (k, m)))
        .collect::<Result<_>>()?;
    let baseline = measured.iter().find(|(k, _)| *k == PipelineKind::Single);
    let base_median = baseline.map(|(_, m)| median(&m.totals.iter().map(|t| t.total_s).collect::<Vec<_>>()));

    Ok(measured
        .iter()
        .map(|(kind, m)| {
            let totals: Vec<f64> = m.totals.iter().map(|t| t.total_s).collect();
            let med = median(&totals);
            let mean = totals.iter().sum::<f64>() / totals.len() as f64;
            let rep = m.totals[m.median_repeat()];
            let n = m.stats.patches_total;
            let routed = m.stats.patches_routed;
            let per = |s: f64, k: usize| if k == 0 { 0.0 } else { 1e3 * s / k as f64 };
            let cost_model = match (kind, baseline) {
                (PipelineKind::Pyrofocus, Some((_, b))) => {
                    let brep = b.totals[b.median_repeat()];
                    let t_cls = rep.stage1_s / n as f64;
                    let t_unet = brep.stage2_s / b.stats.patches_total as f64;
                    let overhead = brep.overhead_s().max(0.0);
                    let predicted = t_cls * n as f64 + t_unet * routed as f64 + overhead;
                    Some(CostModel {
                        t_cls_ms: 1e3 * t_cls,
                        t_unet_ms: 1e3 * t_unet,
                        overhead_s: overhead,
                        predicted_s: predicted,
                        measured_s: med,
                        relative_error: (med - predicted).abs() / med,
                        unet_to_cls_ratio: t_unet / t_cls,
                    })
                }
                _ => None,
            };
            BenchReport {
                pipeline: *kind,
                task: cfg.cascade.task,
                baseline: baseline.map(|_| PipelineKind::Single),
                images: images.len(),
                scene_ids: images.iter().map(|i| i.scene_id).collect(),
                repeats: cfg.repeats,
                warmup: cfg.warmup,
                threads: cfg.cascade.threads,
                batch_size: cfg.cascade.batch_size,
                patches_total: n,
                patches_routed: routed,
                predicted_per_class: m.stats.predicted_per_class,
                stage1_total_s: rep.stage1_s,
                stage2_total_s: rep.stage2_s,
                overhead_s: rep.overhead_s(),
                stage1_ms_per_patch: per(rep.stage1_s, n),
                stage2_ms_per_patch: per(rep.stage2_s, routed),
                end_to_end_total_median_s: med,
                end_to_end_total_mean_s: mean,
                seconds_per_image_median: med / images.len() as f64,
                seconds_per_image_mean: mean / images.len() as f64,
                speedup_percent: base_median.map(|b| speedup_percent(b, med)),
                gating_miss_rate: match kind {
                    PipelineKind::Single => m.miss.map(|_| 0.0),
                    PipelineKind::Pyrofocus => m.miss,
                },
                prediction_sha256: m.hash.clone(),
                cost_model,
            }
        })
        .collect())
}

/// Scenes with at least one test patch, ranked by total fire pixels
/// (descending, ties by id), truncated to `k`.
pub fn select_bench_scenes(patches: &[StoredPatch], k: usize) -> Vec<usize> {
    let mut fire: std::collections::BTreeMap<usize, (usize, bool)> = Default::default();
    for sp in patches.iter().filter(|p| !p.augmented) {
        let e = fire.entry(sp.scene_id).or_default();
        e.0 += sp
            .patch
            .mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&c| c != 0).count());
        e.1 |= sp.split == Split::Test;
    }
    let mut ranked: Vec<(usize, usize)> = fire
        .into_iter()
        .filter(|(_, (_, test))| *test)
        .map(|(id, (f, _))| (id, f))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(id, _)| id).collect()
}

pub const SWEEP_HEADER: [&str; 7] = [
    "pipeline",
    "task",
    "p",
    "patches_total",
    "patches_routed",
    "t_end_to_end_s",
    "speedup_pct",
];

/// Writes one sweep row per report at prevalence `p`.
pub fn write_sweep_csv(rows: &[(f64, BenchReport)], w: impl io::Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SWEEP_HEADER)?;
    for (p, r) in rows {
        csv.write_record([
            r.pipeline.to_string(),
            r.task.to_string(),
            p.to_string(),
            r.patches_total.to_string(),
            r.patches_routed.to_string(),
            format!("{:.6}", r.end_to_end_total_median_s),
            r.speedup_percent.map_or(String::new(), |s| format!("{s:.3}")),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_formula() {
        assert_eq!(speedup_percent(1.5, 1.5), 0.0);
        assert!((speedup_percent(2.702, 0.713) - 73.6).abs() < 0.05);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
