//! Pre-task media: search queries, retrieval, relevance filtering, keyframes,
//! segmentation masks and the content-addressed asset cache.

mod cache;
mod keyframes;
mod queries;
mod relevance;
mod retrieve;
mod segment;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{AssetCache, AssetKind, AssetRef};
pub use keyframes::{extract_keyframes, keyframe_times, FixtureClipDecoder, Keyframe, VideoDecoder};
pub use queries::{build_queries, goal_phrase};
pub use relevance::{filter_relevance, GatewayScorer, RelevanceJudgment, RelevanceResult, Scorer, FAILED_SCORE};
pub use retrieve::{retrieve, HttpSearchProvider, OfflineProvider, RetrievalProvider, RetrievedItem};
pub use segment::{segment, HttpSegmentation, Mask, MaskShape, MockSegmentation, SegmentationBackend};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediaError {
    #[error("retrieval provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no results for query {0:?}")]
    EmptyResults(String),
    #[error("cannot decode clip: {0}")]
    DecodeError(String),
    #[error("segmentation service unavailable: {0}")]
    SegmentationUnavailable(String),
    #[error("no {0:?} found in image")]
    NoObjectFound(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("asset storage: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediaConfig {
    pub threshold: f64,
    pub max_results: usize,
    pub keyframes: usize,
}

impl Default for MediaConfig {
    fn default() -> Self {
        MediaConfig { threshold: 0.5, max_results: 8, keyframes: 5 }
    }
}

/// Media for one original step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMedia {
    pub step_index: usize,
    pub query: String,
    pub kept: Vec<RelevanceJudgment>,
    pub judgments: Vec<RelevanceJudgment>,
    pub used_keyframes: bool,
}

impl StepMedia {
    pub fn top(&self) -> Option<&AssetRef> {
        self.kept.first().map(|j| &j.asset)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrefetchReport {
    pub steps: Vec<StepMedia>,
    pub warnings: Vec<String>,
}

/// The pluggable media backends plus the shared cache.
#[derive(Clone)]
pub struct MediaServices {
    pub provider: Arc<dyn RetrievalProvider>,
    pub decoder: Arc<dyn VideoDecoder>,
    pub segmenter: Arc<dyn SegmentationBackend>,
    pub cache: Arc<AssetCache>,
    pub config: MediaConfig,
}

impl MediaServices {
    /// Offline services: no retrieval results, fixture clips, mock masks.
    pub fn offline(cache: Arc<AssetCache>) -> Self {
        MediaServices {
            provider: Arc::new(OfflineProvider::empty()),
            decoder: Arc::new(FixtureClipDecoder),
            segmenter: Arc::new(MockSegmentation::default()),
            cache,
            config: MediaConfig::default(),
        }
    }

    fn fetch(&self, query: &str, warnings: &mut Vec<String>) -> Vec<AssetRef> {
        match retrieve(query, self.provider.as_ref(), &self.cache, self.config.max_results) {
            Ok(a) => a,
            Err(e) => {
                tracing::info!(query, error = %e, "retrieval failed; continuing without media");
                warnings.push(e.to_string());
                Vec::new()
            }
        }
    }

    /// Reference images for the goal query, attached to the planning prompt.
    pub fn goal_images(&self, goal: &str, warnings: &mut Vec<String>) -> Vec<AssetRef> {
        let mut assets = self.fetch(goal.trim(), warnings);
        assets.retain(|a| a.kind == AssetKind::Image);
        assets
    }

    /// Retrieves and filters media for each step. A step left with no kept
    /// image falls back to keyframes of its retrieved clips.
    pub fn prefetch_steps(&self, goal: &str, steps: &[String], scorer: &dyn Scorer) -> PrefetchReport {
        let mut report = PrefetchReport::default();
        let queries = build_queries(goal, steps);
        for (i, (step, query)) in steps.iter().zip(queries.iter().skip(1)).enumerate() {
            let mut assets = self.fetch(query, &mut report.warnings);
            for a in &mut assets {
                a.step_index = Some(i);
            }
            let (images, clips): (Vec<_>, Vec<_>) = assets.into_iter().partition(|a| a.kind == AssetKind::Image);
            let mut result = filter_relevance(&images, goal, step, self.config.threshold, scorer);
            let mut used_keyframes = false;
            if result.kept.is_empty() && !clips.is_empty() {
                let mut frames = Vec::new();
                for clip in &clips {
                    match extract_keyframes(clip, self.config.keyframes, self.decoder.as_ref(), &self.cache) {
                        Ok(k) => frames.extend(k.into_iter().map(|k| k.asset)),
                        Err(e) => report.warnings.push(e.to_string()),
                    }
                }
                frames.dedup_by(|a, b| a.digest == b.digest);
                let from_frames = filter_relevance(&frames, goal, step, self.config.threshold, scorer);
                used_keyframes = true;
                result.judgments.extend(from_frames.judgments);
                result.kept = from_frames.kept;
            }
            report.steps.push(StepMedia {
                step_index: i,
                query: query.clone(),
                kept: result.kept,
                judgments: result.judgments,
                used_keyframes,
            });
        }
        report
    }

    pub fn segment(&self, image: &AssetRef, label: &str) -> Result<Mask, MediaError> {
        segment(image, label, self.segmenter.as_ref(), &self.cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::RelevanceAnswer;

    struct ByKind;

    impl Scorer for ByKind {
        fn score(&self, asset: &AssetRef, _: &str, _: &str) -> Result<RelevanceAnswer, String> {
            let score = if asset.kind == AssetKind::Keyframe { 0.8 } else { 0.1 };
            Ok(RelevanceAnswer { score, reason: String::new() })
        }
    }

    #[test]
    fn keyframes_when_no_image_survives() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("weak.png"), b"weak image").unwrap();
        let clip = FixtureClipDecoder::encode(4.0, &[(0.0, b"k0"), (2.0, b"k2")]);
        std::fs::write(dir.path().join("clip.json"), clip).unwrap();
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"queries": {"Fold the hull a paper boat": [{"path": "weak.png"}, {"path": "clip.json", "kind": "VideoClip"}]}}"#,
        )
        .unwrap();
        let mut media = MediaServices::offline(Arc::new(AssetCache::in_memory()));
        media.provider = Arc::new(OfflineProvider::from_manifest(&dir.path().join("manifest.json")).unwrap());
        media.config.keyframes = 3;
        let report = media.prefetch_steps("Fold a paper boat", &["Fold the hull".into(), "Float it".into()], &ByKind);
        let s0 = &report.steps[0];
        assert!(s0.used_keyframes);
        // Frames at 0, 2 and 4 s; the last two decode to the same bytes.
        assert_eq!(s0.kept.len(), 2);
        assert!(s0.kept.iter().all(|j| j.asset.kind == AssetKind::Keyframe));
        assert!(report.steps[1].kept.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }
}
