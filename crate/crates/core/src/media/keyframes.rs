use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{AssetCache, AssetKind, AssetRef, MediaError};

/// Decodes video bytes into timed still frames.
pub trait VideoDecoder: Send + Sync {
    /// Clip length in seconds.
    fn duration(&self, clip: &[u8]) -> Result<f64, MediaError>;
    /// Encoded image for the frame shown at `t` seconds.
    fn frame_at(&self, clip: &[u8], t: f64) -> Result<Vec<u8>, MediaError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClipFrame {
    t: f64,
    /// Base64 image bytes.
    image: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Clip {
    duration: f64,
    frames: Vec<ClipFrame>,
}

/// Decodes pre-split clips stored as JSON:
/// `{"duration": 10.0, "frames": [{"t": 0.0, "image": "<base64>"}]}`.
/// A request at time `t` returns the last frame at or before `t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixtureClipDecoder;

impl FixtureClipDecoder {
    pub fn encode(duration: f64, frames: &[(f64, &[u8])]) -> Vec<u8> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let clip =
            Clip { duration, frames: frames.iter().map(|(t, b)| ClipFrame { t: *t, image: b64.encode(b) }).collect() };
        serde_json::to_vec(&clip).expect("clips serialize")
    }

    fn parse(clip: &[u8]) -> Result<Clip, MediaError> {
        let c: Clip = serde_json::from_slice(clip).map_err(|e| MediaError::DecodeError(e.to_string()))?;
        if c.duration.is_nan() || c.duration < 0.0 || c.frames.is_empty() {
            return Err(MediaError::DecodeError("clip has no frames or a negative duration".into()));
        }
        Ok(c)
    }
}

impl VideoDecoder for FixtureClipDecoder {
    fn duration(&self, clip: &[u8]) -> Result<f64, MediaError> {
        Ok(Self::parse(clip)?.duration)
    }

    fn frame_at(&self, clip: &[u8], t: f64) -> Result<Vec<u8>, MediaError> {
        let c = Self::parse(clip)?;
        let frame = c.frames.iter().rev().find(|f| f.t <= t + 1e-9).unwrap_or(&c.frames[0]);
        base64::engine::general_purpose::STANDARD
            .decode(&frame.image)
            .map_err(|e| MediaError::DecodeError(e.to_string()))
    }
}

/// `n` timestamps spread evenly over `[0, duration]`, first at 0 and last at
/// `duration`; a single frame sits at the midpoint.
pub fn keyframe_times(duration: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![duration / 2.0],
        _ => (0..n).map(|i| i as f64 * duration / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub timestamp: f64,
    pub asset: AssetRef,
}

pub fn extract_keyframes(
    video: &AssetRef,
    n: usize,
    decoder: &dyn VideoDecoder,
    cache: &AssetCache,
) -> Result<Vec<Keyframe>, MediaError> {
    let clip = cache
        .get(&video.digest)
        .ok_or_else(|| MediaError::DecodeError(format!("clip {} not cached", video.digest.short())))?;
    let duration = decoder.duration(&clip)?;
    keyframe_times(duration, n)
        .into_iter()
        .map(|t| {
            let bytes = decoder.frame_at(&clip, t)?;
            let digest = cache.put(&bytes).map_err(|e| MediaError::Io(e.to_string()))?;
            let mut asset = AssetRef::new(digest, AssetKind::Keyframe);
            asset.parent = Some(video.digest.clone());
            asset.step_index = video.step_index;
            Ok(Keyframe { timestamp: t, asset })
        })
        .collect()
}
