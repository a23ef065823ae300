//! Overlay rendering to binary PPM (P6).

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use pyrofocus::data::{FireClass, Scene};
use pyrofocus::pipeline::Task;

/// Bands of the false-color base (R, G, B), µm.
pub const BASE_BANDS_UM: [f32; 3] = [2.16, 3.755, 11.33];
/// The stretched base occupies `[BASE_LO, BASE_HI]`, so overlay colors with
/// a 0 or 255 component never collide with it.
pub const BASE_LO: u8 = 32;
pub const BASE_HI: u8 = 223;
const STRETCH: (f64, f64) = (0.02, 0.98);

pub fn class_color(class: FireClass) -> Option<[u8; 3]> {
    match class {
        FireClass::NoFire => None,
        FireClass::Smoldering => Some([255, 255, 0]),
        FireClass::Flaming => Some([255, 128, 0]),
        FireClass::Saturated => Some([255, 0, 0]),
    }
}

fn percentile(sorted: &[f32], q: f64) -> f32 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// RGB bytes `[H][W][3]` of the 2–98% stretched false-color composite.
pub fn base_composite(scene: &Scene) -> Result<Vec<u8>> {
    let n = scene.pixels();
    ensure!(n > 0, "empty scene");
    let mut rgb = vec![0u8; n * 3];
    for (k, &wl) in BASE_BANDS_UM.iter().enumerate() {
        let Some(b) = scene.band_near(wl, 0.05) else {
            bail!(crate::Failure::Incompatible(format!("scene has no band near {wl} µm")));
        };
        let band = scene.band(b);
        let mut sorted = band.to_vec();
        sorted.sort_by(f32::total_cmp);
        let (lo, hi) = (percentile(&sorted, STRETCH.0), percentile(&sorted, STRETCH.1));
        let span = f64::from(BASE_HI - BASE_LO);
        for (i, &v) in band.iter().enumerate() {
            let t = if hi > lo {
                ((v - lo) as f64 / (hi - lo) as f64).clamp(0.0, 1.0)
            } else {
                0.5
            };
            rgb[i * 3 + k] = BASE_LO + (t * span).round() as u8;
        }
    }
    Ok(rgb)
}

pub fn overlay_seg(base: &[u8], mask: &[u8]) -> Vec<u8> {
    let mut out = base.to_vec();
    for (i, &c) in mask.iter().enumerate() {
        if let Some(col) = FireClass::from_code(c).and_then(class_color) {
            out[i * 3..i * 3 + 3].copy_from_slice(&col);
        }
    }
    out
}

/// Red ramp: `[255, g, g]` with `g = 223·(1 − frp/max)`, so the brightest
/// fire is pure red.
pub fn frp_color(frp: f32, max: f32) -> [u8; 3] {
    let t = if max > 0.0 { (frp / max).clamp(0.0, 1.0) } else { 1.0 };
    let g = (f32::from(BASE_HI) * (1.0 - t)).round() as u8;
    [255, g, g]
}

pub fn overlay_frp(base: &[u8], frp: &[f32], max: f32) -> Vec<u8> {
    let mut out = base.to_vec();
    for (i, &v) in frp.iter().enumerate() {
        if v > 0.0 {
            out[i * 3..i * 3 + 3].copy_from_slice(&frp_color(v, max));
        }
    }
    out
}

/// Recovers the class mask from a segmentation overlay.
pub fn decode_seg(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks(3)
        .map(|px| {
            FireClass::ALL
                .into_iter()
                .find(|&c| class_color(c).is_some_and(|col| col == px))
                .unwrap_or(FireClass::NoFire)
                .code()
        })
        .collect()
}

/// Legend strip: one 16×16 swatch per class, or an 8-step FRP ramp.
pub fn legend(task: Task, _note: Option<&str>) -> (usize, usize, Vec<u8>) {
    const SW: usize = 16;
    let colors: Vec<[u8; 3]> = match task {
        Task::Seg => FireClass::ALL
            .into_iter()
            .map(|c| class_color(c).unwrap_or([BASE_HI / 2 + BASE_LO / 2; 3]))
            .collect(),
        Task::Frp => (0..8).map(|i| frp_color((i + 1) as f32, 8.0)).collect(),
    };
    let (w, h) = (SW * colors.len(), SW);
    let mut px = Vec::with_capacity(w * h * 3);
    for _ in 0..h {
        for x in 0..w {
            px.extend_from_slice(&colors[x / SW]);
        }
    }
    (w, h, px)
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8], comment: Option<&str>) -> Vec<u8> {
    let mut out = b"P6\n".to_vec();
    if let Some(c) = comment {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    out.extend_from_slice(format!("{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(rgb);
    out
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8], comment: Option<&str>) -> Result<()> {
    ensure!(rgb.len() == width * height * 3, "pixel buffer does not match {width}×{height}");
    fs::write(path, encode_ppm(width, height, rgb, comment)).with_context(|| format!("writing {}", path.display()))
}

/// Parsed P6 image.
#[derive(Debug, PartialEq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub comments: Vec<String>,
    pub rgb: Vec<u8>,
}

pub fn decode_ppm(buf: &[u8]) -> Result<Ppm> {
    let mut pos = 0;
    let mut comments = Vec::new();
    let mut token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if buf.get(*pos) == Some(&b'#') {
                let end = buf[*pos..].iter().position(|&b| b == b'\n').map_or(buf.len(), |e| *pos + e);
                comments.push(String::from_utf8_lossy(&buf[*pos + 1..end]).trim().to_string());
                *pos = end;
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        ensure!(*pos > start, "truncated PPM header");
        Ok(String::from_utf8_lossy(&buf[start..*pos]).into_owned())
    };
    ensure!(token(&mut pos)? == "P6", "not a P6 image");
    let width: usize = token(&mut pos)?.parse()?;
    let height: usize = token(&mut pos)?.parse()?;
    ensure!(token(&mut pos)? == "255", "unsupported max value");
    pos += 1;
    let rgb = buf.get(pos..).unwrap_or_default().to_vec();
    ensure!(rgb.len() == width * height * 3, "PPM pixel data has the wrong length");
    Ok(Ppm {
        width,
        height,
        comments,
        rgb,
    })
}
