use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::AssetRef;
use crate::gateway::Gateway;
use crate::prompt::{parse_relevance_answer, RelevanceAnswer, TemplateSet};

/// Score used for assets whose scoring call failed; never kept.
pub const FAILED_SCORE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub asset: AssetRef,
    pub score: f64,
    pub reason: String,
}

/// Scores how well an asset illustrates a step.
pub trait Scorer {
    fn score(&self, asset: &AssetRef, goal: &str, step: &str) -> Result<RelevanceAnswer, String>;
}

/// Scores through the relevance prompt and the model gateway.
pub struct GatewayScorer<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
}

impl Scorer for GatewayScorer<'_> {
    fn score(&self, asset: &AssetRef, goal: &str, step: &str) -> Result<RelevanceAnswer, String> {
        let prompt = self.templates.render_relevance_prompt(goal, step, &asset.digest);
        let reply = self.gateway.call(&prompt).map_err(|e| e.to_string())?;
        parse_relevance_answer(&reply.text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelevanceResult {
    /// Assets at or above the threshold, best first, ties by digest.
    pub kept: Vec<RelevanceJudgment>,
    /// Every judgment in input order, including failures at [`FAILED_SCORE`].
    pub judgments: Vec<RelevanceJudgment>,
}

pub fn filter_relevance(
    assets: &[AssetRef],
    goal: &str,
    step: &str,
    threshold: f64,
    scorer: &dyn Scorer,
) -> RelevanceResult {
    let judgments: Vec<RelevanceJudgment> = assets
        .iter()
        .map(|a| match scorer.score(a, goal, step) {
            Ok(r) => RelevanceJudgment { asset: a.clone(), score: r.score, reason: r.reason },
            Err(e) => {
                tracing::warn!(asset = %a.digest.short(), error = %e, "relevance scoring failed");
                RelevanceJudgment { asset: a.clone(), score: FAILED_SCORE, reason: e }
            }
        })
        .collect();
    let mut kept: Vec<RelevanceJudgment> =
        judgments.iter().filter(|j| j.score != FAILED_SCORE && j.score >= threshold).cloned().collect();
    kept.sort_by(|a, b| {
        b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.asset.digest.cmp(&b.asset.digest))
    });
    RelevanceResult { kept, judgments }
}
