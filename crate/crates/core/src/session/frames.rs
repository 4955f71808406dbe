use super::protocol::{DepthRef, FrameInput};
use crate::digest::Digest;
use crate::media::AssetCache;
use crate::spatial::{CameraFrame, DepthGrid, DepthMap, Intrinsics, Pose};
use base64::Engine as _;

/// Camera assumed for frames that arrive without a camera model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultCamera {
    pub horizontal_fov_deg: f64,
    pub plane_depth: f64,
}

impl Default for DefaultCamera {
    fn default() -> Self {
        DefaultCamera { horizontal_fov_deg: 60.0, plane_depth: 1.0 }
    }
}

impl DefaultCamera {
    pub fn intrinsics(&self, width: u32, height: u32) -> Intrinsics {
        let (w, h) = (f64::from(width), f64::from(height));
        let f = (w / 2.0) / (self.horizontal_fov_deg.to_radians() / 2.0).tan();
        Intrinsics { fx: f, fy: f, cx: w / 2.0, cy: h / 2.0 }
    }
}

/// Depth grid blob layout: `u32` LE width, `u32` LE height, then
/// `width * height` `f32` LE samples, row-major.
pub fn encode_depth_blob(grid: &DepthGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + grid.data.len() * 4);
    out.extend_from_slice(&grid.width.to_le_bytes());
    out.extend_from_slice(&grid.height.to_le_bytes());
    for d in &grid.data {
        out.extend_from_slice(&(*d as f32).to_le_bytes());
    }
    out
}

pub fn decode_depth_blob(bytes: &[u8]) -> Result<DepthGrid, String> {
    if bytes.len() < 8 {
        return Err("depth blob shorter than its header".into());
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let n =
        (width as usize).checked_mul(height as usize).ok_or_else(|| "depth blob dimensions overflow".to_string())?;
    let body = &bytes[8..];
    if body.len() != n * 4 {
        return Err(format!("depth blob {width}x{height} needs {} bytes, has {}", n * 4, body.len()));
    }
    let data = body.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect();
    Ok(DepthGrid { width, height, data })
}

/// Resolves a client frame into a validated camera frame. Returns the frame
/// and the depth blob digest it was built from, if any.
pub fn resolve_frame(
    input: &FrameInput,
    cache: &AssetCache,
    defaults: &DefaultCamera,
) -> Result<(CameraFrame, Option<Digest>), String> {
    let image = match (&input.image, &input.image_base64) {
        (Some(_), Some(_)) => return Err("give either image or image_base64, not both".into()),
        (Some(d), None) => {
            if !cache.contains(d) {
                return Err(format!("image {} has not been uploaded", d.short()));
            }
            Some(d.clone())
        }
        (None, Some(b64)) => {
            let bytes =
                base64::engine::general_purpose::STANDARD.decode(b64).map_err(|e| format!("image_base64: {e}"))?;
            Some(cache.put(&bytes).map_err(|e| e.to_string())?)
        }
        (None, None) => None,
    };
    let (depth, blob) = match &input.depth {
        None => (DepthMap::Constant(defaults.plane_depth), None),
        Some(DepthRef::Constant(d)) => (DepthMap::Constant(*d), None),
        Some(DepthRef::Blob(d)) => {
            let bytes = cache.get(d).ok_or_else(|| format!("depth blob {} has not been uploaded", d.short()))?;
            (DepthMap::Grid(decode_depth_blob(&bytes)?), Some(d.clone()))
        }
    };
    let frame = CameraFrame {
        image,
        width: input.width,
        height: input.height,
        intrinsics: input.intrinsics.unwrap_or_else(|| defaults.intrinsics(input.width, input.height)),
        pose: input.pose.unwrap_or_else(Pose::identity),
        depth,
        timestamp: input.timestamp,
    };
    frame.validate().map_err(|e| e.to_string())?;
    Ok((frame, blob))
}
