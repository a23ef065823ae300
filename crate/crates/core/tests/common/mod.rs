//! Test-only oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use pyrofocus::numerics::{Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Central finite-difference gradient of the scalar `f` at `x`.
pub fn numeric_grad(x: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.clone();
    for (i, gi) in g.iter_mut().enumerate() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        *gi = (up - down) / (2.0 * FD_STEP);
    }
    Tensor::new(x.shape().to_vec(), g).unwrap()
}

/// `max |a − n| / max(max |n|, max |a|)`; 0 when both are identically zero.
pub fn rel_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .data()
        .iter()
        .chain(numeric.data())
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Checks every input of a scalar-valued graph builder against finite
/// differences. Returns the worst relative error across inputs.
pub fn check_gradients(inputs: &[Tensor<f64>], build: &dyn Fn(&[Var<f64>]) -> Var<f64>) -> f64 {
    let vars: Vec<Var<f64>> = inputs.iter().cloned().map(Var::param).collect();
    let out = build(&vars);
    let grads = out.backward().unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(&vars[i]);
        let f = |probe: &Tensor<f64>| {
            let vs: Vec<Var<f64>> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| Var::constant(if j == i { probe.clone() } else { t.clone() }))
                .collect();
            build(&vs).value().item()
        };
        let numeric = numeric_grad(x, &f);
        worst = worst.max(rel_error(&analytic, &numeric));
    }
    worst
}

/// Distinct values with spacing far above `FD_STEP`, so max-pool argmax
/// positions cannot flip under perturbation.
pub fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.01).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).unwrap()
}

/// Uniform values kept at least `gap` away from every point in `kinks`.
pub fn away_from(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64, kinks: &[f64], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| loop {
        let v = rng.random_range(lo..hi);
        if kinks.iter().all(|k| (v - k).abs() > gap) {
            break v;
        }
    })
}

pub struct GradReport {
    pub primitive: &'static str,
    pub cases: usize,
    pub worst: f64,
}

fn run(primitive: &'static str, cases: usize, mut case: impl FnMut(usize) -> f64) -> GradReport {
    let worst = (0..cases).map(&mut case).fold(0.0, f64::max);
    GradReport { primitive, cases, worst }
}

/// Randomized finite-difference checks of every differentiable primitive.
/// Each scalar objective is a random fixed weighting of the output.
pub fn gradcheck_suite(seed: u64, cases: usize) -> Vec<GradReport> {
    use pyrofocus::numerics::{Activation, FrpLossConfig};
    let mut r = rng(seed);
    let mut out = Vec::new();

    out.push(run("conv2d", cases, |_| {
        let (n, ci, co) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let k = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let pad = r.random_range(0..k);
        let (h, w) = (r.random_range(k..k + 5), r.random_range(k..k + 5));
        let x = uniform(&mut r, &[n, ci, h, w], -1.0, 1.0);
        let wt = uniform(&mut r, &[co, ci, k, k], -1.0, 1.0);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let m = uniform(&mut r, &[n, co, ho, wo], -1.0, 1.0);
        check_gradients(&[x, wt], &|v| v[0].conv2d(&v[1], stride, pad).unwrap().weighted_sum(&m).unwrap())
    }));

    out.push(run("conv_transpose2d", cases, |_| {
        let (n, ci, co) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let k = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let (h, w) = (r.random_range(1..5), r.random_range(1..5));
        let x = uniform(&mut r, &[n, ci, h, w], -1.0, 1.0);
        let wt = uniform(&mut r, &[ci, co, k, k], -1.0, 1.0);
        let m = uniform(&mut r, &[n, co, (h - 1) * stride + k, (w - 1) * stride + k], -1.0, 1.0);
        check_gradients(&[x, wt], &|v| v[0].conv_transpose2d(&v[1], stride).unwrap().weighted_sum(&m).unwrap())
    }));

    out.push(run("channel_bias", cases, |_| {
        let shape = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4)];
        let x = uniform(&mut r, &shape, -1.0, 1.0);
        let b = uniform(&mut r, &[shape[1]], -1.0, 1.0);
        let m = uniform(&mut r, &shape, -1.0, 1.0);
        check_gradients(&[x, b], &|v| v[0].add_channel_bias(&v[1]).unwrap().weighted_sum(&m).unwrap())
    }));

    out.push(run("batchnorm_train", cases, |_| {
        let shape = [r.random_range(1..4), r.random_range(1..4), r.random_range(1..4), r.random_range(2..4)];
        let x = uniform(&mut r, &shape, -2.0, 2.0);
        let g = uniform(&mut r, &[shape[1]], 0.5, 1.5);
        let b = uniform(&mut r, &[shape[1]], -0.5, 0.5);
        let m = uniform(&mut r, &shape, -1.0, 1.0);
        check_gradients(&[x, g, b], &|v| {
            v[0].batchnorm_train(&v[1], &v[2]).unwrap().0.weighted_sum(&m).unwrap()
        })
    }));

    out.push(run("batchnorm_eval", cases, |_| {
        let shape = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4)];
        let c = shape[1];
        let x = uniform(&mut r, &shape, -2.0, 2.0);
        let g = uniform(&mut r, &[c], 0.5, 1.5);
        let b = uniform(&mut r, &[c], -0.5, 0.5);
        let mean: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
        let var: Vec<f64> = (0..c).map(|_| r.random_range(0.1..2.0)).collect();
        let m = uniform(&mut r, &shape, -1.0, 1.0);
        check_gradients(&[x, g, b], &|v| {
            v[0].batchnorm_eval(&v[1], &v[2], &mean, &var).unwrap().weighted_sum(&m).unwrap()
        })
    }));

    out.push(run("maxpool2d", cases, |_| {
        let k = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let shape = [r.random_range(1..3), r.random_range(1..3), r.random_range(k..k + 5), r.random_range(k..k + 5)];
        let x = distinct(&mut r, &shape);
        let ho = (shape[2] - k) / stride + 1;
        let wo = (shape[3] - k) / stride + 1;
        let m = uniform(&mut r, &[shape[0], shape[1], ho, wo], -1.0, 1.0);
        check_gradients(&[x], &|v| v[0].maxpool2d(k, stride).unwrap().weighted_sum(&m).unwrap())
    }));

    let acts = [
        ("relu", Activation::Relu),
        ("leaky_relu", Activation::LeakyRelu),
        ("gelu", Activation::Gelu),
        ("hswish", Activation::Hswish),
    ];
    for (name, kind) in acts {
        out.push(run(name, cases, |_| {
            let shape = [r.random_range(1..4), r.random_range(1..6)];
            let x = away_from(&mut r, &shape, -5.0, 5.0, &[-3.0, 0.0, 3.0], 1e-2);
            let m = uniform(&mut r, &shape, -1.0, 1.0);
            check_gradients(&[x], &|v| v[0].activation(kind).weighted_sum(&m).unwrap())
        }));
    }

    out.push(run("add", cases, |_| {
        let shape = [r.random_range(1..4), r.random_range(1..4), r.random_range(1..4)];
        let a = uniform(&mut r, &shape, -1.0, 1.0);
        let b = uniform(&mut r, &shape, -1.0, 1.0);
        let m = uniform(&mut r, &shape, -1.0, 1.0);
        check_gradients(&[a, b], &|v| v[0].add(&v[1]).unwrap().scale(0.7).weighted_sum(&m).unwrap())
    }));

    out.push(run("concat_channels", cases, |_| {
        let (n, h, w) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let (c1, c2) = (r.random_range(1..4), r.random_range(1..4));
        let a = uniform(&mut r, &[n, c1, h, w], -1.0, 1.0);
        let b = uniform(&mut r, &[n, c2, h, w], -1.0, 1.0);
        let m = uniform(&mut r, &[n, c1 + c2, h, w], -1.0, 1.0);
        check_gradients(&[a, b], &|v| Var::concat_channels(v).unwrap().weighted_sum(&m).unwrap())
    }));

    out.push(run("global_avg_pool", cases, |_| {
        let shape = [r.random_range(1..4), r.random_range(1..4), r.random_range(1..5), r.random_range(1..5)];
        let x = uniform(&mut r, &shape, -1.0, 1.0);
        let m = uniform(&mut r, &[shape[0], shape[1]], -1.0, 1.0);
        check_gradients(&[x], &|v| v[0].global_avg_pool().unwrap().weighted_sum(&m).unwrap())
    }));

    out.push(run("linear", cases, |_| {
        let (n, fi, fo) = (r.random_range(1..5), r.random_range(1..6), r.random_range(1..6));
        let x = uniform(&mut r, &[n, fi], -1.0, 1.0);
        let w = uniform(&mut r, &[fo, fi], -1.0, 1.0);
        let b = uniform(&mut r, &[fo], -1.0, 1.0);
        let m = uniform(&mut r, &[n, fo], -1.0, 1.0);
        check_gradients(&[x, w, b], &|v| v[0].linear(&v[1], &v[2]).unwrap().weighted_sum(&m).unwrap())
    }));

    out.push(run("cross_entropy", cases, |_| {
        let (n, k) = (r.random_range(1..4), r.random_range(2..5));
        let spatial: Vec<usize> = if r.random_bool(0.5) { vec![] } else { vec![r.random_range(1..4), r.random_range(1..4)] };
        let mut shape = vec![n, k];
        shape.extend(&spatial);
        let sites = n * spatial.iter().product::<usize>();
        let targets: Vec<usize> = (0..sites).map(|_| r.random_range(0..k)).collect();
        let x = uniform(&mut r, &shape, -3.0, 3.0);
        check_gradients(&[x], &|v| v[0].cross_entropy(&targets).unwrap())
    }));

    out.push(run("frp_loss", cases, |_| {
        let shape = [r.random_range(1..3), 1, r.random_range(1..4), r.random_range(2..5)];
        let len: usize = shape.iter().product();
        let fire: Vec<bool> = (0..len).map(|_| r.random_bool(0.4)).collect();
        let target = Tensor::from_fn(shape.to_vec(), |i| if fire[i] { r.random_range(0.1..2.0) } else { 0.0 });
        // Keep predictions off the |p − t| and max(p, 0) kinks.
        let pred = Tensor::from_fn(shape.to_vec(), |i| loop {
            let p: f64 = r.random_range(-1.0..2.5);
            if (p - target.data()[i]).abs() > 1e-2 && p.abs() > 1e-2 {
                break p;
            }
        });
        let cfg = FrpLossConfig::default();
        check_gradients(&[pred], &|v| v[0].frp_loss(&target, &fire, &cfg).unwrap())
    }));

    out
}

/// Scenes `0..n` of a default-generator corpus, as preprocessing input.
pub fn corpus(n: usize, prevalence: f64, seed: u64) -> Vec<pyrofocus::pipeline::SourceScene> {
    use pyrofocus::synth::{generate_corpus_scene, SceneConfig};
    let cfg = SceneConfig {
        prevalence,
        seed,
        ..SceneConfig::default()
    };
    (0..n)
        .map(|i| {
            let g = generate_corpus_scene(&cfg, i).unwrap();
            pyrofocus::pipeline::SourceScene {
                id: i,
                scene: g.scene,
                points: Some(g.points),
            }
        })
        .collect()
}

/// Great-circle distance in metres (haversine), independent of the local
/// projection used by the join.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * pyrofocus::data::EARTH_RADIUS_M * a.sqrt().asin()
}

/// Brute-force point-to-pixel join: each point goes to its nearest pixel
/// center if within `threshold`; a pixel keeps its nearest point.
pub fn brute_force_join(points: &[pyrofocus::data::FrpPoint], scene: &pyrofocus::data::Scene, threshold: f64) -> Vec<f32> {
    let geo = scene.geo.as_ref().unwrap();
    let mut best: Vec<Option<(f64, f64)>> = vec![None; scene.pixels()];
    for p in points {
        let (mut bd, mut bi) = (f64::INFINITY, 0);
        for i in 0..scene.pixels() {
            let d = haversine_m(p.lat, p.lon, geo.lat[i], geo.lon[i]);
            if d < bd {
                bd = d;
                bi = i;
            }
        }
        if bd <= threshold && best[bi].is_none_or(|(d, f)| bd < d || (bd == d && p.frp_mw > f)) {
            best[bi] = Some((bd, p.frp_mw));
        }
    }
    best.into_iter().map(|b| b.map_or(0.0, |(_, f)| f as f32)).collect()
}

/// Confusion counts by direct enumeration of `(truth, pred)` pairs.
pub fn brute_confusion(pred: &[u8], truth: &[u8], k: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; k]; k];
    for t in 0..k {
        for p in 0..k {
            m[t][p] = truth.iter().zip(pred).filter(|(&a, &b)| a as usize == t && b as usize == p).count() as u64;
        }
    }
    m
}

/// Mean IoU from per-class pixel sets; classes absent from both are skipped.
pub fn brute_miou(pred: &[u8], truth: &[u8], k: usize) -> f64 {
    let mut ious = Vec::new();
    for c in 0..k as u8 {
        let inter = pred.iter().zip(truth).filter(|(&p, &t)| p == c && t == c).count();
        let union = pred.iter().zip(truth).filter(|(&p, &t)| p == c || t == c).count();
        if union > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    ious.iter().sum::<f64>() / ious.len() as f64
}

/// Masked MAE accumulated in f64; `None` when the mask is empty.
pub fn brute_masked_mae(pred: &[f32], truth: &[f32], fire: &[bool]) -> Option<f64> {
    let errs: Vec<f64> = (0..pred.len())
        .filter(|&i| fire[i])
        .map(|i| (f64::from(pred[i]) - f64::from(truth[i])).abs())
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}
