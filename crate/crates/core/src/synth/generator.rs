//! Synthetic multispectral fire scenes with exact ground truth.
//!
//! A scene is a smooth background temperature field with elliptical fires
//! placed inside randomly chosen patches. Each pixel's radiance is the mean
//! Planck radiance over a 4×4 grid of sub-pixel samples, so fire edges
//! produce mixed pixels. Labels come from the noiseless 3.755 µm brightness
//! temperature; mixed pixels whose temperature falls too close to a class
//! boundary have their fire excess rescaled out of the ambiguous band.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::noise::value_noise;
use super::planck::{brightness_temperature, radiance, STEFAN_BOLTZMANN};
use crate::data::{
    ClassThresholds, FireClass, FrpPoint, Geolocation, LocalProjection, Scene, Tiling, JOIN_THRESHOLD_M,
    MWIR_WAVELENGTH_UM, PATCH_H, PATCH_W,
};
use crate::error::{Error, Result};

/// Band centers in µm: three SWIR, two MWIR, four LWIR.
pub const DEFAULT_WAVELENGTHS: [f32; 9] = [2.16, 2.21, 2.26, 3.755, 3.91, 8.2, 10.63, 11.33, 12.13];

/// Sub-pixel samples per axis.
const SUBSAMPLES: usize = 4;
/// Uniform jitter of true FRP points around their pixel center, per axis, m.
pub const POINT_JITTER_M: f64 = 2.0;
/// Distance range of decoy points from a fire pixel center, m.
pub const DECOY_DISTANCE_M: (f64, f64) = (6.0, 20.0);
/// Decoys as a fraction of true points (rounded up).
pub const DECOY_FRACTION: f64 = 0.01;
const MAX_PLACEMENT_TRIES: usize = 200;

/// Peak-temperature regime of a fire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FireKind {
    Smoldering,
    Flaming,
    Saturated,
}

/// An elliptical fire in continuous pixel coordinates (pixel `(r, c)`
/// covers `[r, r+1) × [c, c+1)`).
///
/// Temperature falls from `core_temp_k` at the center to `edge_temp_k` at
/// the boundary as `T = T_edge + (T_core − T_edge)(1 − ρ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireSpec {
    pub center_row: f64,
    pub center_col: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle_rad: f64,
    pub core_temp_k: f64,
    pub edge_temp_k: f64,
}

impl FireSpec {
    /// Half extents `(rows, cols)` of the axis-aligned bounding box.
    fn half_extent(&self) -> (f64, f64) {
        let (s, c) = self.angle_rad.sin_cos();
        let (a, b) = (self.semi_major, self.semi_minor);
        ((a * a * s * s + b * b * c * c).sqrt(), (a * a * c * c + b * b * s * s).sqrt())
    }

    /// Temperature at a point, if inside.
    fn temperature(&self, y: f64, x: f64) -> Option<f64> {
        let (s, c) = self.angle_rad.sin_cos();
        let (dy, dx) = (y - self.center_row, x - self.center_col);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let rho2 = (u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2);
        (rho2 < 1.0).then_some(self.edge_temp_k + (self.core_temp_k - self.edge_temp_k) * (1.0 - rho2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub wavelengths: Vec<f32>,
    pub background_temp_mean: f64,
    pub background_temp_std: f64,
    /// Lattice spacing of the background value noise, pixels.
    pub background_cell_px: usize,
    /// Inclusive range of fires placed in each chosen patch.
    pub fires_per_patch: (usize, usize),
    /// Inclusive range of ellipse semi-axes, pixels.
    pub semi_axis_px: (f64, f64),
    pub smoldering_core_k: (f64, f64),
    pub flaming_core_k: (f64, f64),
    pub saturated_core_k: (f64, f64),
    pub edge_temp_k: (f64, f64),
    /// MWIR (3–5 µm) bands clip at the radiance of a blackbody at this temperature.
    pub mwir_saturation_k: f64,
    /// Every other band clips at this temperature.
    pub saturation_k: f64,
    pub thresholds: ClassThresholds,
    /// Half-widths of the excluded brightness-temperature bands around the
    /// smoldering, flaming and saturation boundaries, K.
    pub margins_k: [f64; 3],
    /// Noise standard deviation as a fraction of each band's sensor maximum.
    pub noise_fraction: f64,
    pub pixel_spacing_m: f64,
    /// Geodetic coordinates of the scene center.
    pub center_lat: f64,
    pub center_lon: f64,
    /// Target fraction of patches containing fire.
    pub prevalence: f64,
    /// Explicit fires; replaces prevalence-driven placement when set.
    pub fires: Option<Vec<FireSpec>>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 2 * PATCH_H,
            width: 2 * PATCH_W,
            wavelengths: DEFAULT_WAVELENGTHS.to_vec(),
            background_temp_mean: 300.0,
            background_temp_std: 5.0,
            background_cell_px: 16,
            fires_per_patch: (1, 2),
            semi_axis_px: (2.0, 5.0),
            smoldering_core_k: (600.0, 750.0),
            flaming_core_k: (850.0, 1150.0),
            saturated_core_k: (1300.0, 1400.0),
            edge_temp_k: (450.0, 800.0),
            mwir_saturation_k: 1250.0,
            saturation_k: 1500.0,
            thresholds: ClassThresholds::default(),
            margins_k: [60.0, 25.0, 25.0],
            noise_fraction: 0.005,
            pixel_spacing_m: 30.0,
            center_lat: 34.0,
            center_lon: -118.5,
            prevalence: 0.25,
            fires: None,
            seed: 0,
        }
    }
}

fn ordered(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::config(format!("{name} range ({lo}, {hi}) must be positive and ordered")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prevalence) {
            return Err(Error::config(format!("prevalence {} outside [0, 1]", self.prevalence)));
        }
        if self.height == 0 || self.width == 0 || self.wavelengths.is_empty() {
            return Err(Error::config("scene needs positive size and at least one band"));
        }
        ordered("smoldering core temperature", self.smoldering_core_k)?;
        ordered("flaming core temperature", self.flaming_core_k)?;
        ordered("saturated core temperature", self.saturated_core_k)?;
        ordered("edge temperature", self.edge_temp_k)?;
        ordered("semi-axis", self.semi_axis_px)?;
        if !(self.background_temp_mean > 0.0 && self.background_temp_std >= 0.0) {
            return Err(Error::config("background temperature must be positive"));
        }
        if self.edge_temp_k.0 <= self.background_temp_mean + 4.0 * self.background_temp_std {
            return Err(Error::config("edge temperatures must exceed the background"));
        }
        let t = &self.thresholds;
        let m = &self.margins_k;
        if m.iter().any(|v| !(*v >= 0.0))
            || t.smolder_k + m[0] >= t.flame_k - m[1]
            || t.flame_k + m[1] >= self.mwir_saturation_k - m[2]
            || t.smolder_k - m[0] <= self.background_temp_mean
        {
            return Err(Error::config(format!(
                "class margins {m:?} overlap around thresholds {}/{}/{} K",
                t.smolder_k, t.flame_k, self.mwir_saturation_k
            )));
        }
        if self.fires_per_patch.0 == 0 || self.fires_per_patch.0 > self.fires_per_patch.1 {
            return Err(Error::config("fires per patch must be an ordered range starting at 1 or more"));
        }
        if 2.0 * self.semi_axis_px.1 + 2.0 > PATCH_H as f64 {
            return Err(Error::config(format!(
                "fires with semi-axis {} px do not fit inside a {PATCH_H}-row patch",
                self.semi_axis_px.1
            )));
        }
        if self.pixel_spacing_m <= DECOY_DISTANCE_M.1 + JOIN_THRESHOLD_M {
            return Err(Error::config(format!(
                "pixel spacing must exceed {} m so decoys stay unmatched",
                DECOY_DISTANCE_M.1 + JOIN_THRESHOLD_M
            )));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(Error::config("noise fraction must be non-negative"));
        }
        self.mwir_band()?;
        Ok(())
    }

    fn mwir_band(&self) -> Result<usize> {
        self.wavelengths
            .iter()
            .position(|&w| (w - MWIR_WAVELENGTH_UM).abs() <= 0.05)
            .ok_or_else(|| Error::config(format!("no band near {MWIR_WAVELENGTH_UM} µm")))
    }

    /// Clip level of each band, in radiance units.
    pub fn sensor_max_radiance(&self) -> Vec<f64> {
        self.wavelengths
            .iter()
            .map(|&w| {
                let t = if (3.0..5.0).contains(&w) { self.mwir_saturation_k } else { self.saturation_k };
                radiance(w as f64, t)
            })
            .collect()
    }
}

/// A generated scene and its side products.
#[derive(Clone, Debug)]
pub struct GeneratedScene {
    pub scene: Scene,
    /// One point per fire pixel followed by `decoys` decoy points.
    pub points: Vec<FrpPoint>,
    pub decoys: usize,
    pub fires: Vec<FireSpec>,
    pub warnings: Vec<String>,
}

struct Renderer<'a> {
    cfg: &'a SceneConfig,
    wl: Vec<f64>,
    mwir: usize,
    sensor_max: Vec<f64>,
}

struct PixelTruth {
    radiance: Vec<f64>,
    frp_mw: f64,
    class: FireClass,
}

impl Renderer<'_> {
    fn pixel(&self, r: usize, c: usize, t_bg: f64, fires: &[FireSpec]) -> PixelTruth {
        let bg: Vec<f64> = self.wl.iter().map(|&l| radiance(l, t_bg)).collect();
        let mut mix = vec![0.0; self.wl.len()];
        let mut excess_power = 0.0;
        let mut inside = 0;
        let n = SUBSAMPLES * SUBSAMPLES;
        for i in 0..SUBSAMPLES {
            for j in 0..SUBSAMPLES {
                let y = r as f64 + (i as f64 + 0.5) / SUBSAMPLES as f64;
                let x = c as f64 + (j as f64 + 0.5) / SUBSAMPLES as f64;
                let t = fires.iter().filter_map(|f| f.temperature(y, x)).fold(None, |m: Option<f64>, t| {
                    Some(m.map_or(t, |m| m.max(t)))
                });
                match t {
                    Some(t) => {
                        inside += 1;
                        excess_power += t.powi(4) - t_bg.powi(4);
                        for (m, &l) in mix.iter_mut().zip(&self.wl) {
                            *m += radiance(l, t);
                        }
                    }
                    None => {
                        for (m, b) in mix.iter_mut().zip(&bg) {
                            *m += b;
                        }
                    }
                }
            }
        }
        if inside == 0 {
            return PixelTruth {
                radiance: bg.iter().zip(&self.sensor_max).map(|(b, m)| b.min(*m)).collect(),
                frp_mw: 0.0,
                class: FireClass::NoFire,
            };
        }
        for m in &mut mix {
            *m /= n as f64;
        }
        let area = self.cfg.pixel_spacing_m.powi(2);
        let mut frp = STEFAN_BOLTZMANN * area * excess_power / n as f64 * 1e-6;

        // Push the fire excess out of the ambiguous band around each boundary.
        let lw = self.wl[self.mwir];
        let (lm, lb) = (mix[self.mwir], bg[self.mwir]);
        let tb = brightness_temperature(lw, lm).unwrap_or(t_bg);
        let t = &self.cfg.thresholds;
        let bounds = [t.smolder_k, t.flame_k, self.cfg.mwir_saturation_k];
        for (&thr, &margin) in bounds.iter().zip(&self.cfg.margins_k) {
            if (tb - thr).abs() < margin {
                let target = if tb < thr { thr - margin } else { thr + margin };
                let s = (radiance(lw, target) - lb) / (lm - lb);
                for (m, b) in mix.iter_mut().zip(&bg) {
                    *m = b + s * (*m - b);
                }
                frp *= s;
                break;
            }
        }
        let class = t.classify(mix[self.mwir], self.sensor_max[self.mwir]);
        PixelTruth {
            radiance: mix.iter().zip(&self.sensor_max).map(|(v, m)| v.min(*m)).collect(),
            frp_mw: if class.is_fire() { frp } else { 0.0 },
            class,
        }
    }
}

fn sample_fire(rng: &mut ChaCha8Rng, cfg: &SceneConfig, row0: usize, col0: usize) -> FireSpec {
    let kind = [FireKind::Smoldering, FireKind::Flaming, FireKind::Saturated][rng.random_range(0..3)];
    let core_range = match kind {
        FireKind::Smoldering => cfg.smoldering_core_k,
        FireKind::Flaming => cfg.flaming_core_k,
        FireKind::Saturated => cfg.saturated_core_k,
    };
    let core = rng.random_range(core_range.0..=core_range.1);
    let edge_hi = cfg.edge_temp_k.1.min(core - 50.0).max(cfg.edge_temp_k.0);
    let edge = rng.random_range(cfg.edge_temp_k.0..=edge_hi);
    let a = rng.random_range(cfg.semi_axis_px.0..=cfg.semi_axis_px.1);
    let b = rng.random_range(cfg.semi_axis_px.0..=a);
    let mut fire = FireSpec {
        center_row: 0.0,
        center_col: 0.0,
        semi_major: a,
        semi_minor: b,
        angle_rad: rng.random_range(0.0..std::f64::consts::PI),
        core_temp_k: core,
        edge_temp_k: edge,
    };
    // Keep the whole ellipse (plus half a pixel) inside the patch.
    let (hy, hx) = fire.half_extent();
    let (y_lo, y_hi) = (row0 as f64 + hy + 0.5, (row0 + PATCH_H) as f64 - hy - 0.5);
    let (x_lo, x_hi) = (col0 as f64 + hx + 0.5, (col0 + PATCH_W) as f64 - hx - 0.5);
    fire.center_row = rng.random_range(y_lo..=y_hi);
    fire.center_col = rng.random_range(x_lo..=x_hi);
    fire
}

fn touching(fires: &[FireSpec], r: usize, c: usize) -> Vec<FireSpec> {
    fires
        .iter()
        .filter(|f| {
            let (hy, hx) = f.half_extent();
            (r as f64) < f.center_row + hy
                && (r + 1) as f64 > f.center_row - hy
                && (c as f64) < f.center_col + hx
                && (c + 1) as f64 > f.center_col - hx
        })
        .copied()
        .collect()
}

/// Generates one scene. Fully determined by `cfg` (including its seed).
pub fn generate_scene(cfg: &SceneConfig) -> Result<GeneratedScene> {
    cfg.validate()?;
    let (h, w, nb) = (cfg.height, cfg.width, cfg.wavelengths.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = Renderer {
        cfg,
        wl: cfg.wavelengths.iter().map(|&l| l as f64).collect(),
        mwir: cfg.mwir_band()?,
        sensor_max: cfg.sensor_max_radiance(),
    };
    let t_bg = value_noise(
        &mut rng,
        h,
        w,
        cfg.background_cell_px,
        cfg.background_temp_mean,
        cfg.background_temp_std,
    );

    let mut truth: Vec<Option<PixelTruth>> = (0..h * w).map(|_| None).collect();
    let mut fires = Vec::new();
    let mut warnings = Vec::new();

    match &cfg.fires {
        Some(list) => {
            for (i, f) in list.iter().enumerate() {
                let (hy, hx) = f.half_extent();
                if f.center_row - hy < 0.0
                    || f.center_col - hx < 0.0
                    || f.center_row + hy > h as f64
                    || f.center_col + hx > w as f64
                {
                    let msg = format!("fire {i} extends beyond the {h}×{w} scene and is clipped");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
            fires = list.clone();
        }
        None if cfg.prevalence > 0.0 => {
            let tiling = Tiling::for_scene(h, w).map_err(|e| Error::config(e.to_string()))?;
            let n = tiling.len();
            let k = ((cfg.prevalence * n as f64 + rng.random::<f64>()).floor() as usize).min(n);
            let origins: Vec<(usize, usize)> = tiling.origins().collect();
            let mut chosen = sample(&mut rng, n, k).into_vec();
            chosen.sort_unstable();
            for p in chosen {
                let (row0, col0) = origins[p];
                let mut placed = false;
                for _ in 0..MAX_PLACEMENT_TRIES {
                    let count = rng.random_range(cfg.fires_per_patch.0..=cfg.fires_per_patch.1);
                    let patch_fires: Vec<FireSpec> = (0..count).map(|_| sample_fire(&mut rng, cfg, row0, col0)).collect();
                    let mut any_fire = false;
                    let mut local = Vec::with_capacity(PATCH_H * PATCH_W);
                    for rr in row0..row0 + PATCH_H {
                        for cc in col0..col0 + PATCH_W {
                            let near = touching(&patch_fires, rr, cc);
                            let px = r.pixel(rr, cc, t_bg[rr * w + cc], &near);
                            any_fire |= px.class.is_fire();
                            local.push((rr * w + cc, px));
                        }
                    }
                    if any_fire {
                        for (i, px) in local {
                            truth[i] = Some(px);
                        }
                        fires.extend(patch_fires);
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(Error::config(format!(
                        "could not place a detectable fire in patch ({row0}, {col0}) after {MAX_PLACEMENT_TRIES} tries"
                    )));
                }
            }
        }
        None => {}
    }

    let mut bands = vec![0f32; nb * h * w];
    let mut frp = vec![0f32; h * w];
    let mut mask = vec![0u8; h * w];
    let noise: Vec<Normal<f64>> = r
        .sensor_max
        .iter()
        .map(|m| Normal::new(0.0, cfg.noise_fraction * m).expect("validated noise"))
        .collect();
    for i in 0..h * w {
        let px = match truth[i].take() {
            Some(px) => px,
            None => {
                let near = if cfg.fires.is_some() { touching(&fires, i / w, i % w) } else { Vec::new() };
                r.pixel(i / w, i % w, t_bg[i], &near)
            }
        };
        mask[i] = px.class.code();
        frp[i] = px.frp_mw as f32;
        for b in 0..nb {
            let v = px.radiance[b] + noise[b].sample(&mut rng);
            bands[b * h * w + i] = v.clamp(0.0, r.sensor_max[b]) as f32;
        }
    }

    let proj = LocalProjection::new(cfg.center_lat, cfg.center_lon);
    let s = cfg.pixel_spacing_m;
    let center_xy = |i: usize| {
        let (row, col) = (i / w, i % w);
        ((col as f64 + 0.5 - w as f64 / 2.0) * s, -(row as f64 + 0.5 - h as f64 / 2.0) * s)
    };
    let mut lat = Vec::with_capacity(h * w);
    let mut lon = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let (x, y) = center_xy(i);
        let (la, lo) = proj.unproject(x, y);
        lat.push(la);
        lon.push(lo);
    }

    let fire_pixels: Vec<usize> = (0..h * w).filter(|&i| mask[i] != 0).collect();
    let mut points = Vec::with_capacity(fire_pixels.len() + 1);
    for &i in &fire_pixels {
        let (x, y) = center_xy(i);
        let jx = rng.random_range(-POINT_JITTER_M..=POINT_JITTER_M);
        let jy = rng.random_range(-POINT_JITTER_M..=POINT_JITTER_M);
        let (la, lo) = proj.unproject(x + jx, y + jy);
        points.push(FrpPoint {
            lat: la,
            lon: lo,
            frp_mw: frp[i] as f64,
        });
    }
    let decoys = (fire_pixels.len() as f64 * DECOY_FRACTION).ceil() as usize;
    for _ in 0..decoys {
        let i = fire_pixels[rng.random_range(0..fire_pixels.len())];
        let (x, y) = center_xy(i);
        let d = rng.random_range(DECOY_DISTANCE_M.0..=DECOY_DISTANCE_M.1);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (la, lo) = proj.unproject(x + d * theta.cos(), y + d * theta.sin());
        points.push(FrpPoint {
            lat: la,
            lon: lo,
            frp_mw: rng.random_range(1.0..100.0),
        });
    }

    let mut scene = Scene::new(h, w, cfg.wavelengths.clone(), bands)?;
    scene.frp = Some(frp);
    scene.class_mask = Some(mask);
    scene.geo = Some(Geolocation { lat, lon });
    scene.validate()?;
    Ok(GeneratedScene {
        scene,
        points,
        decoys,
        fires,
        warnings,
    })
}
