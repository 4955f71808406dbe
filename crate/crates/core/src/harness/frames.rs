//! Synthetic frames: a tiny generated image plus analytic depth.

use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::media::AssetCache;
use crate::session::{encode_depth_blob, DepthRef, FrameInput};
use crate::spatial::{DepthGrid, Intrinsics, Pose};

/// A plane `z = z0 + gx * u + gy * v` over normalized image coordinates
/// `u, v` in `[0, 1]`, sampled on a grid. Listed cells are holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub z0: f64,
    #[serde(default)]
    pub gx: f64,
    #[serde(default)]
    pub gy: f64,
    pub grid: [u32; 2],
    #[serde(default)]
    pub holes: Vec<[u32; 2]>,
}

impl PlaneSpec {
    pub fn depth_at(&self, u: f64, v: f64) -> f64 {
        self.z0 + self.gx * u + self.gy * v
    }

    pub fn to_grid(&self) -> DepthGrid {
        let [w, h] = self.grid;
        let mut data = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let u = (f64::from(x) + 0.5) / f64::from(w);
                let v = (f64::from(y) + 0.5) / f64::from(h);
                let hole = self.holes.contains(&[x, y]);
                data.push(if hole { 0.0 } else { self.depth_at(u, v) });
            }
        }
        DepthGrid { width: w, height: h, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthSpec {
    Constant(f64),
    Plane(PlaneSpec),
}

fn default_width() -> u32 {
    640
}

fn default_height() -> u32 {
    480
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    /// Seeds the generated image; frames with equal labels are identical.
    pub label: String,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    pub depth: DepthSpec,
}

const THUMB_W: usize = 16;
const THUMB_H: usize = 12;

/// A 16x12 binary PGM whose pixels come from the label's digest.
pub fn thumbnail(label: &str) -> Vec<u8> {
    let seed = Digest::of(label.as_bytes());
    let bytes = hex::decode(seed.as_str()).expect("digests are hex");
    let mut out = format!("P5\n{THUMB_W} {THUMB_H}\n255\n").into_bytes();
    out.extend((0..THUMB_W * THUMB_H).map(|i| bytes[i % bytes.len()]));
    out
}

impl FrameSpec {
    /// Stores the image and depth blobs and returns the wire frame.
    pub fn upload(&self, cache: &AssetCache, timestamp: f64) -> std::io::Result<FrameInput> {
        let image = cache.put(&thumbnail(&self.label))?;
        let depth = match &self.depth {
            DepthSpec::Constant(z) => DepthRef::Constant(*z),
            DepthSpec::Plane(p) => DepthRef::Blob(cache.put(&encode_depth_blob(&p.to_grid()))?),
        };
        Ok(FrameInput {
            image: Some(image),
            image_base64: None,
            width: self.width,
            height: self.height,
            intrinsics: self.intrinsics,
            pose: self.pose,
            depth: Some(depth),
            timestamp,
        })
    }
}
