use std::collections::BTreeMap;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AssetCache, AssetKind, AssetRef, MediaError};
use crate::digest::Digest;
use crate::spatial::{NormBox, NORM_MAX};

/// Closed polygons in normalized `[0, 1000]` image coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskShape {
    pub polygons: Vec<Vec<[i64; 2]>>,
}

impl MaskShape {
    pub fn from_box(b: &NormBox) -> Self {
        let [x0, y0, x1, y1] = b.coords();
        MaskShape { polygons: vec![vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]] }
    }

    fn check(&self) -> Result<(), MediaError> {
        if self.polygons.is_empty() {
            return Err(MediaError::InvalidMask("no polygons".into()));
        }
        for (i, poly) in self.polygons.iter().enumerate() {
            if poly.len() < 3 {
                return Err(MediaError::InvalidMask(format!("polygon {i} has {} vertices", poly.len())));
            }
            if poly.iter().flatten().any(|c| !(0..=NORM_MAX).contains(c)) {
                return Err(MediaError::InvalidMask(format!("polygon {i} leaves [0, 1000]")));
            }
        }
        Ok(())
    }

    /// Bounding box of all vertices.
    pub fn bounds(&self) -> Option<NormBox> {
        let pts = self.polygons.iter().flatten();
        let (mut x0, mut y0, mut x1, mut y1) = (NORM_MAX, NORM_MAX, 0, 0);
        let mut any = false;
        for [x, y] in pts {
            any = true;
            x0 = x0.min(*x);
            y0 = y0.min(*y);
            x1 = x1.max(*x);
            y1 = y1.max(*y);
        }
        any.then(|| NormBox::new(x0, y0, x1, y1).ok()).flatten()
    }
}

pub trait SegmentationBackend: Send + Sync {
    fn segment(&self, image: &Digest, bytes: &[u8], label: &str) -> Result<MaskShape, MediaError>;
}

/// Returns a label's configured box as a rectangle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockSegmentation {
    /// Lowercased label to box.
    pub boxes: BTreeMap<String, NormBox>,
}

impl MockSegmentation {
    pub fn new(boxes: impl IntoIterator<Item = (String, NormBox)>) -> Self {
        MockSegmentation { boxes: boxes.into_iter().map(|(k, v)| (k.trim().to_lowercase(), v)).collect() }
    }
}

impl SegmentationBackend for MockSegmentation {
    fn segment(&self, _image: &Digest, _bytes: &[u8], label: &str) -> Result<MaskShape, MediaError> {
        self.boxes
            .get(&label.trim().to_lowercase())
            .map(MaskShape::from_box)
            .ok_or_else(|| MediaError::NoObjectFound(label.to_string()))
    }
}

/// `POST {digest, image: <base64>, label}` answered by `{polygons: [[[x, y]...]]}`;
/// an empty polygon list means the object was not found.
pub struct HttpSegmentation {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpSegmentation {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpSegmentation { endpoint: endpoint.into(), agent }
    }
}

impl SegmentationBackend for HttpSegmentation {
    fn segment(&self, image: &Digest, bytes: &[u8], label: &str) -> Result<MaskShape, MediaError> {
        let body = json!({
            "digest": image,
            "image": base64::engine::general_purpose::STANDARD.encode(bytes),
            "label": label,
        });
        let unavailable = |e: ureq::Error| MediaError::SegmentationUnavailable(e.to_string());
        let shape: MaskShape = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(unavailable)?
            .body_mut()
            .read_json()
            .map_err(unavailable)?;
        if shape.polygons.is_empty() {
            return Err(MediaError::NoObjectFound(label.to_string()));
        }
        Ok(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub asset: AssetRef,
    pub shape: MaskShape,
}

/// Segments `label` in `image` and caches the mask (as JSON) under its own
/// digest, parented to the image.
pub fn segment(
    image: &AssetRef,
    label: &str,
    backend: &dyn SegmentationBackend,
    cache: &AssetCache,
) -> Result<Mask, MediaError> {
    let bytes =
        cache.get(&image.digest).ok_or_else(|| MediaError::Io(format!("image {} not cached", image.digest.short())))?;
    let shape = backend.segment(&image.digest, &bytes, label)?;
    shape.check()?;
    let encoded = serde_json::to_vec(&shape).expect("masks serialize");
    let digest = cache.put(&encoded).map_err(|e| MediaError::Io(e.to_string()))?;
    let mut asset = AssetRef::new(digest, AssetKind::Mask);
    asset.parent = Some(image.digest.clone());
    asset.step_index = image.step_index;
    Ok(Mask { asset, shape })
}
