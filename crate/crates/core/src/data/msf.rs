//! The MSF scene file.
//!
//! ```text
//! "MSF1" | H u32 | W u32 | C u32 | flags u32
//! wavelengths: C × f32
//! bands: C × H·W × f32
//! [flags & 1] FRP: H·W × f32
//! [flags & 2] class mask: H·W × u8
//! [flags & 4] latitude, longitude: 2 × H·W × f64
//! ```
//!
//! All integers and floats are little-endian; planes are row-major.

use std::fs;
use std::path::Path;

use super::scene::{Geolocation, Scene};
use crate::error::{Error, Result};

pub const MSF_MAGIC: &[u8; 4] = b"MSF1";

const FLAG_FRP: u32 = 1;
const FLAG_MASK: u32 = 2;
const FLAG_GEO: u32 = 4;

pub fn encode_scene(scene: &Scene) -> Result<Vec<u8>> {
    scene.validate()?;
    let n = scene.pixels();
    let mut flags = 0;
    if scene.frp.is_some() {
        flags |= FLAG_FRP;
    }
    if scene.class_mask.is_some() {
        flags |= FLAG_MASK;
    }
    if scene.geo.is_some() {
        flags |= FLAG_GEO;
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::data(format!("dimension {v} exceeds u32")));
    let mut out = Vec::with_capacity(20 + 4 * (scene.channels() * (n + 1) + n) + 17 * n);
    out.extend_from_slice(MSF_MAGIC);
    for v in [dim(scene.height)?, dim(scene.width)?, dim(scene.channels())?, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in scene.wavelengths.iter().chain(&scene.bands) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(frp) = &scene.frp {
        for v in frp {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(mask) = &scene.class_mask {
        out.extend_from_slice(mask);
    }
    if let Some(geo) = &scene.geo {
        for v in geo.lat.iter().chain(&geo.lon) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub(crate) struct Reader<'a> {
    pub(crate) buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos as u64,
                format!("truncated file: {what} needs {len} bytes, {} left", self.buf.len() - self.pos),
            )),
        }
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    pub(crate) fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }
}

pub fn decode_scene(buf: &[u8]) -> Result<Scene> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MSF_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {:?}, expected \"MSF1\"", String::from_utf8_lossy(magic)),
        ));
    }
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let c = r.u32("channel count")? as usize;
    let flags_at = r.pos as u64;
    let flags = r.u32("flags")?;
    if flags & !(FLAG_FRP | FLAG_MASK | FLAG_GEO) != 0 {
        return Err(Error::format(flags_at, format!("unknown flag bits {flags:#x}")));
    }
    let n = h
        .checked_mul(w)
        .filter(|&n| n > 0 && c > 0)
        .ok_or_else(|| Error::format(4, format!("invalid dimensions {h}×{w}×{c}")))?;
    let band_len = n
        .checked_mul(c)
        .ok_or_else(|| Error::format(4, format!("dimensions {h}×{w}×{c} overflow")))?;
    let wavelengths = r.f32s(c, "wavelengths")?;
    let bands = r.f32s(band_len, "band planes")?;
    let frp = if flags & FLAG_FRP != 0 { Some(r.f32s(n, "FRP plane")?) } else { None };
    let class_mask = if flags & FLAG_MASK != 0 {
        Some(r.take(n, "class mask")?.to_vec())
    } else {
        None
    };
    let geo = if flags & FLAG_GEO != 0 {
        let lat = r.f64s(n, "latitude plane")?;
        let lon = r.f64s(n, "longitude plane")?;
        Some(Geolocation { lat, lon })
    } else {
        None
    };
    if r.pos != buf.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes", buf.len() - r.pos),
        ));
    }
    let scene = Scene {
        height: h,
        width: w,
        wavelengths,
        bands,
        frp,
        class_mask,
        geo,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_scene(scene)?)?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    decode_scene(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scene {
        let mut s = Scene::new(2, 3, vec![3.755, 11.33], (0..12).map(|i| i as f32 * 0.5).collect()).unwrap();
        s.frp = Some(vec![0.0, 1.5, 0.0, 0.0, 2.0, 0.0]);
        s.class_mask = Some(vec![0, 2, 0, 0, 3, 0]);
        s.geo = Some(Geolocation {
            lat: (0..6).map(|i| 34.0 + i as f64 * 1e-4).collect(),
            lon: (0..6).map(|i| -118.0 - i as f64 * 1e-4).collect(),
        });
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = tiny();
        let bytes = encode_scene(&s).unwrap();
        assert_eq!(bytes.len(), 20 + 8 + 48 + 24 + 6 + 96);
        assert_eq!(decode_scene(&bytes).unwrap(), s);
    }

    #[test]
    fn bad_magic_names_expected() {
        let mut bytes = encode_scene(&tiny()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode_scene(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
        assert!(err.to_string().contains("MSF1"));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_scene(&tiny()).unwrap();
        let err = decode_scene(&bytes[..30]).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 28, .. }), "{err}");
    }

    #[test]
    fn absent_flag_means_absent_plane() {
        let mut s = tiny();
        s.frp = None;
        let back = decode_scene(&encode_scene(&s).unwrap()).unwrap();
        assert!(back.frp.is_none());
        assert!(back.class_mask.is_some());
    }

    #[test]
    fn overflowing_dims_rejected() {
        let mut bytes = Vec::from(*MSF_MAGIC);
        for v in [u32::MAX, u32::MAX, u32::MAX, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_scene(&bytes), Err(Error::Format { .. })));
    }
}
