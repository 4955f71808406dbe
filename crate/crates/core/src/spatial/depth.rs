use serde::{Deserialize, Serialize};

use super::{CameraFrame, NormBox, SpatialError, NORM_MAX};

/// Row-major metric Z-depth samples covering the whole image. Values `<= 0`
/// or non-finite are holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMap {
    /// A fronto-parallel plane at a fixed Z-depth.
    Constant(f64),
    Grid(DepthGrid),
}

fn valid(d: f64) -> Option<f64> {
    (d.is_finite() && d > 0.0).then_some(d)
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 0 { (values[mid - 1] + values[mid]) / 2.0 } else { values[mid] })
}

impl DepthGrid {
    fn cell(&self, px: f64, py: f64, width: u32, height: u32) -> (u32, u32) {
        let scale = |p: f64, img: u32, grid: u32| -> u32 {
            let c = (p / f64::from(img) * f64::from(grid)).floor();
            if c.is_nan() || c < 0.0 {
                0
            } else {
                (c as u32).min(grid - 1)
            }
        };
        (scale(px, width, self.width), scale(py, height, self.height))
    }

    fn at(&self, cx: u32, cy: u32) -> f64 {
        self.data[(cy * self.width + cx) as usize]
    }
}

impl DepthMap {
    pub(crate) fn check(&self) -> Result<(), SpatialError> {
        match self {
            DepthMap::Constant(_) => Ok(()),
            DepthMap::Grid(g) => {
                if g.width == 0 || g.height == 0 || g.data.len() != (g.width * g.height) as usize {
                    Err(SpatialError::InvalidFrame(format!(
                        "depth grid {}x{} has {} samples",
                        g.width,
                        g.height,
                        g.data.len()
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Valid Z-depth at pixel `(px, py)` of a `width` x `height` image.
    pub fn sample(&self, px: f64, py: f64, width: u32, height: u32) -> Option<f64> {
        match self {
            DepthMap::Constant(d) => valid(*d),
            DepthMap::Grid(g) => {
                let (cx, cy) = g.cell(px, py, width, height);
                valid(g.at(cx, cy))
            }
        }
    }

    /// Median of valid depths inside `b`; for a zero-area box, the 5x5 pixel
    /// neighborhood around `(px, py)`.
    pub(crate) fn fallback(&self, frame: &CameraFrame, b: &NormBox, px: f64, py: f64) -> Option<f64> {
        let (w, h) = (frame.width, frame.height);
        let samples: Vec<f64> = match self {
            DepthMap::Constant(d) => valid(*d).into_iter().collect(),
            DepthMap::Grid(_) if b.is_degenerate() => (-2..=2)
                .flat_map(|dy| (-2..=2).map(move |dx| (f64::from(dx), f64::from(dy))))
                .filter_map(|(dx, dy)| self.sample(px + dx, py + dy, w, h))
                .collect(),
            DepthMap::Grid(g) => {
                let [x0, y0, x1, y1] = b.coords();
                let span = |lo: i64, hi: i64, n: u32| {
                    let lo_c = (lo as f64 / NORM_MAX as f64 * f64::from(n)).floor() as u32;
                    let hi_c = (hi as f64 / NORM_MAX as f64 * f64::from(n)).ceil() as u32;
                    let lo_c = lo_c.min(n - 1);
                    lo_c..hi_c.clamp(lo_c + 1, n)
                };
                let xs = span(x0, x1, g.width);
                span(y0, y1, g.height)
                    .flat_map(|cy| xs.clone().map(move |cx| (cx, cy)))
                    .filter_map(|(cx, cy)| valid(g.at(cx, cy)))
                    .collect()
            }
        };
        median(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{unproject, AnchorConfidence, Intrinsics, Pose};
    use super::*;

    fn frame_with(grid: DepthGrid) -> CameraFrame {
        CameraFrame {
            image: None,
            width: 10,
            height: 10,
            intrinsics: Intrinsics { fx: 10.0, fy: 10.0, cx: 5.0, cy: 5.0 },
            pose: Pose::identity(),
            depth: DepthMap::Grid(grid),
            timestamp: 1.5,
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn hole_at_center_uses_box_median() {
        // 10x10 grid at 2.0 m, with a hole at the center cell (5,5) and one
        // nearer sample inside the box.
        let mut data = vec![2.0; 100];
        data[5 * 10 + 5] = 0.0;
        data[4 * 10 + 4] = 1.0;
        let frame = frame_with(DepthGrid { width: 10, height: 10, data });
        let b = NormBox::new(400, 400, 600, 600).unwrap();
        let a = unproject(&frame, 550.0, 550.0, b).unwrap();
        // Box cells x,y in 4..6: samples {1.0, 2.0, 2.0} (hole excluded) -> median 2.0.
        assert_eq!(a.confidence, AnchorConfidence::DepthFallback);
        assert!((a.position.z - 2.0).abs() < 1e-12);
        assert_eq!(a.frame_timestamp, 1.5);
    }

    #[test]
    fn all_holes_is_an_error() {
        let frame = frame_with(DepthGrid { width: 10, height: 10, data: vec![f64::NAN; 100] });
        let b = NormBox::new(100, 100, 300, 300).unwrap();
        assert!(matches!(unproject(&frame, 200.0, 200.0, b), Err(SpatialError::NoDepthAvailable(_))));
    }

    #[test]
    fn degenerate_box_samples_neighborhood() {
        let mut data = vec![-1.0; 100];
        data[5 * 10 + 7] = 3.0; // two pixels right of the center
        let frame = frame_with(DepthGrid { width: 10, height: 10, data });
        let b = NormBox::new(500, 500, 500, 500).unwrap();
        let a = unproject(&frame, 500.0, 500.0, b).unwrap();
        assert_eq!(a.confidence, AnchorConfidence::DepthFallback);
        assert!((a.position.z - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_size_mismatch_is_invalid() {
        let frame = frame_with(DepthGrid { width: 10, height: 10, data: vec![1.0; 99] });
        assert!(frame.validate().is_err());
    }
}
