//! Nearest-pixel join of FRP point observations onto a scene grid.

use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};

/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
pub const JOIN_THRESHOLD_M: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrpPoint {
    pub lat: f64,
    pub lon: f64,
    pub frp_mw: f64,
}

/// Equirectangular projection about a reference point, in meters.
#[derive(Clone, Copy, Debug)]
pub struct LocalProjection {
    lat0: f64,
    lon0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(lat0: f64, lon0: f64) -> Self {
        Self {
            lat0,
            lon0,
            cos_lat0: lat0.to_radians().cos(),
        }
    }

    /// Centered on the middle of the scene's coordinate span.
    pub fn for_scene(scene: &Scene) -> Result<Self> {
        let geo = scene
            .geo
            .as_ref()
            .ok_or_else(|| Error::data("scene has no geolocation planes"))?;
        let span = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let (la, lb) = span(&geo.lat);
        let (oa, ob) = span(&geo.lon);
        if !(la.is_finite() && lb.is_finite() && oa.is_finite() && ob.is_finite()) {
            return Err(Error::data("scene geolocation contains non-finite coordinates"));
        }
        Ok(Self::new((la + lb) / 2.0, (oa + ob) / 2.0))
    }

    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = EARTH_RADIUS_M * self.cos_lat0 * (lon - self.lon0).to_radians();
        let y = EARTH_RADIUS_M * (lat - self.lat0).to_radians();
        (x, y)
    }

    /// Inverse of [`project`](Self::project).
    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        let lat = self.lat0 + (y / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon0 + (x / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees();
        (lat, lon)
    }
}

/// Attaches each point to its nearest pixel center when that center lies
/// within `threshold` meters; unmatched pixels get 0.
///
/// Ties between equidistant pixel centers go to the lowest pixel index. A
/// pixel matched by several points keeps the nearest one, and among equally
/// near points the larger FRP.
pub fn join_frp(points: &[FrpPoint], scene: &Scene, threshold: f64) -> Result<Vec<f32>> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::config(format!("join threshold must be positive, got {threshold}")));
    }
    if let Some(p) = points.iter().find(|p| !(p.lat.is_finite() && p.lon.is_finite())) {
        return Err(Error::data(format!("point with non-finite coordinates ({}, {})", p.lat, p.lon)));
    }
    let proj = LocalProjection::for_scene(scene)?;
    let geo = scene.geo.as_ref().expect("checked by for_scene");
    let centers: Vec<(f64, f64)> = geo.lat.iter().zip(&geo.lon).map(|(&la, &lo)| proj.project(la, lo)).collect();

    let cell = threshold;
    let key = |(x, y): (f64, f64)| ((x / cell).floor() as i64, (y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &c) in centers.iter().enumerate() {
        grid.entry(key(c)).or_default().push(i);
    }

    // Per pixel: (distance, frp) of the winning point.
    let mut best: Vec<Option<(f64, f64)>> = vec![None; centers.len()];
    for p in points {
        let q = proj.project(p.lat, p.lon);
        let (kx, ky) = key(q);
        let mut nearest: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(cands) = grid.get(&(kx + dx, ky + dy)) else { continue };
                for &i in cands {
                    let d = (centers[i].0 - q.0).hypot(centers[i].1 - q.1);
                    let better = match nearest {
                        None => true,
                        Some((bd, bi)) => d < bd || (d == bd && i < bi),
                    };
                    if better {
                        nearest = Some((d, i));
                    }
                }
            }
        }
        let Some((d, i)) = nearest else { continue };
        if d > threshold {
            continue;
        }
        let replace = match best[i] {
            None => true,
            Some((bd, bf)) => d < bd || (d == bd && p.frp_mw > bf),
        };
        if replace {
            best[i] = Some((d, p.frp_mw));
        }
    }
    Ok(best.into_iter().map(|b| b.map_or(0.0, |(_, f)| f as f32)).collect())
}

/// CSV with header `lat,lon,frp_mw`.
pub fn write_points_csv(points: &[FrpPoint], w: impl io::Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for p in points {
        csv.serialize(p)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_points_csv(r: impl io::Read) -> Result<Vec<FrpPoint>> {
    let mut csv = csv::Reader::from_reader(r);
    Ok(csv.deserialize().collect::<Result<Vec<FrpPoint>, _>>()?)
}
