//! On-disk filtered-basis cache.
//!
//! Layout: one file per plane, `<dir>/<key>.fbp`, where `key` is the hex
//! SHA-256 of the source image (shape and raw `f64` samples) followed by the
//! canonical config string. Plane files hold the magic line `CFBP1`, a
//! `width height channels` line, then the samples as little-endian `f64` in
//! planar order. Samples are stored at full precision so a cached basis is
//! bitwise identical to a recomputed one.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{self, FilterConfig};
use crate::image::Image;

const MAGIC: &str = "CFBP1";

#[derive(Debug, Clone)]
pub struct FbCache {
    dir: PathBuf,
}

pub fn image_digest(img: &Image) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"compfilter-image-v1");
    for d in [img.width(), img.height(), img.channels()] {
        h.update((d as u64).to_le_bytes());
    }
    for v in img.data() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl FbCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating cache {}", dir.display()), e))?;
        Ok(FbCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn plane_path(&self, source_digest: &[u8; 32], cfg: &FilterConfig) -> PathBuf {
        let mut h = Sha256::new();
        h.update(source_digest);
        h.update(cfg.to_string().as_bytes());
        self.dir.join(format!("{}.fbp", hex(&h.finalize())))
    }

    /// Returns the cached plane or computes and stores it.
    pub fn plane(&self, source: &Image, source_digest: &[u8; 32], cfg: &FilterConfig) -> Result<Image> {
        let path = self.plane_path(source_digest, cfg);
        if let Ok(bytes) = fs::read(&path) {
            if let Some(img) = decode_plane(&bytes).filter(|p| p.shape() == source.shape()) {
                return Ok(img);
            }
        }
        let plane = filters::apply(source, cfg)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, encode_plane(&plane))
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| Error::io(format!("writing cache plane {}", path.display()), e))?;
        Ok(plane)
    }
}

pub fn encode_plane(img: &Image) -> Vec<u8> {
    let mut out = format!("{MAGIC}\n{} {} {}\n", img.width(), img.height(), img.channels()).into_bytes();
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_plane(bytes: &[u8]) -> Option<Image> {
    let mut parts = bytes.splitn(3, |b| *b == b'\n');
    if parts.next()? != MAGIC.as_bytes() {
        return None;
    }
    let dims: Vec<usize> = std::str::from_utf8(parts.next()?)
        .ok()?
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    let [w, h, c] = dims[..] else { return None };
    let payload = parts.next()?;
    if payload.len() != w * h * c * 8 {
        return None;
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Image::new(w, h, c, data).ok()
}
