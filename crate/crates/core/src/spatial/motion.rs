use serde::{Deserialize, Serialize};

use super::{anchor_box, guidance_axis_to_world, CameraFrame, RotationCue3D, SpatialError, WorldAnchor};
use crate::plan::{VizSpec, WaypointKind};
use crate::prompt::{LocalizationAnswer, TransformKind};

/// A motion cue resolved into world space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "motion", rename_all = "snake_case")]
pub enum Motion {
    Rotation(RotationCue3D),
    Translation { start: WorldAnchor, end: WorldAnchor },
}

/// Turns a localization answer into a rotation cue or a start/end anchor pair
/// according to the spec's motion flag.
///
/// For translations the start box is the `starttarget` entry, else the
/// `object` entry named like the spec's target waypoint, else the first
/// `object` entry.
pub fn resolve_motion(
    spec: &VizSpec,
    answer: &LocalizationAnswer,
    frame: &CameraFrame,
) -> Result<Motion, SpatialError> {
    match (spec.needs_rotation, spec.needs_translation, answer) {
        (true, false, LocalizationAnswer::Rotation(r)) => Ok(Motion::Rotation(RotationCue3D {
            pivot: anchor_box(frame, r.pos)?,
            axis: guidance_axis_to_world(frame, r.axis),
            direction: r.direction,
        })),
        (false, true, LocalizationAnswer::Transform(t)) => {
            let target = spec.waypoint(WaypointKind::Target).map(|w| w.object_name.trim());
            let start = t
                .first(TransformKind::StartTarget)
                .or_else(|| {
                    t.entries.iter().find(|e| {
                        e.kind == TransformKind::Object && target.is_some_and(|n| e.name.trim().eq_ignore_ascii_case(n))
                    })
                })
                .or_else(|| t.first(TransformKind::Object))
                .ok_or(SpatialError::MissingStartTarget)?;
            let end = t.first(TransformKind::EndTarget).ok_or(SpatialError::MissingEndTarget)?;
            Ok(Motion::Translation { start: anchor_box(frame, start.pos)?, end: anchor_box(frame, end.pos)? })
        }
        (true, false, _) | (false, true, _) => Err(SpatialError::AnswerMismatch),
        _ => Err(SpatialError::NoMotion),
    }
}
