//! Parsers for the model's answers. Localization answers are read in relaxed
//! JSON syntax because their templates show unquoted keys.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PromptError;
use crate::plan::extract::{locate_json, locate_json_items, Syntax};
use crate::plan::schema::{Field, Obj, Violation};
use crate::plan::{parse_viz_value, validate_viz, VizSpec};
use crate::spatial::{GuidanceAxis, NormBox, RotationDirection, NORM_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationAnswer {
    pub name: String,
    pub pos: NormBox,
    pub axis: GuidanceAxis,
    pub direction: RotationDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    StartTarget,
    EndTarget,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformEntry {
    pub kind: TransformKind,
    pub name: String,
    pub pos: NormBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformAnswer {
    pub entries: Vec<TransformEntry>,
}

impl TransformAnswer {
    pub fn first(&self, kind: TransformKind) -> Option<&TransformEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "answer", rename_all = "snake_case")]
pub enum LocalizationAnswer {
    Rotation(RotationAnswer),
    Transform(TransformAnswer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceAnswer {
    pub score: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceReply {
    pub answer: String,
    pub updated_viz: Option<VizSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubStepDraft {
    pub instruction: String,
    pub check: String,
    pub viz: Option<VizSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubPlanDraft {
    pub substeps: Vec<SubStepDraft>,
}

/// What the verifier concluded about the current scene.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub success: bool,
    /// What still needs checking; ignored downstream when `success` is true.
    pub check: String,
    pub next_hint: String,
    /// On failure: a visualization differing from the one the step was
    /// shown with.
    pub revised_viz: Option<VizSpec>,
    /// On success: the visualization proposed for the next step.
    pub next_viz: Option<VizSpec>,
}

impl VerificationOutcome {
    pub fn passed() -> Self {
        VerificationOutcome {
            success: true,
            check: String::new(),
            next_hint: String::new(),
            revised_viz: None,
            next_viz: None,
        }
    }
}

fn root_obj(value: &Value) -> Result<Obj<'_>, PromptError> {
    value.as_object().map(Obj::root).ok_or_else(|| Violation::new("$", "expected a JSON object").into())
}

fn parse_box(field: &Field<'_>) -> Result<NormBox, PromptError> {
    let items = field.items()?;
    if items.len() != 4 {
        return Err(Violation::new(
            field.path.clone(),
            format!("expected [x_min, y_min, x_max, y_max], found {} values", items.len()),
        )
        .into());
    }
    let mut c = [0i64; 4];
    for (slot, item) in c.iter_mut().zip(&items) {
        *slot = item.int_in(0, NORM_MAX)?;
    }
    NormBox::try_from(c).map_err(|e| Violation::new(field.path.clone(), e.to_string()).into())
}

fn enum_token(field: &Field<'_>) -> Result<String, PromptError> {
    Ok(field.str()?.trim().to_ascii_lowercase())
}

/// Parses `{name, pos: [x_min, y_min, x_max, y_max], rotation: [axis, direction]}`.
pub fn parse_rotation_answer(raw: &str) -> Result<RotationAnswer, PromptError> {
    let value = locate_json(raw, Syntax::Relaxed)?;
    let obj = root_obj(&value)?;
    let name = obj.req("name")?.str()?.to_string();
    let pos = parse_box(&obj.req("pos")?)?;
    let rot = obj.req("rotation")?;
    let parts = rot.items()?;
    if parts.len() != 2 {
        return Err(Violation::new(rot.path, "expected [axis, direction]").into());
    }
    let axis = match enum_token(&parts[0])?.as_str() {
        "x" => GuidanceAxis::X,
        "y" => GuidanceAxis::Y,
        "z" => GuidanceAxis::Z,
        _ => return Err(Violation::new(parts[0].path.clone(), "axis must be X, Y or Z").into()),
    };
    let direction = match enum_token(&parts[1])?.as_str() {
        "positive" => RotationDirection::Positive,
        "negative" => RotationDirection::Negative,
        _ => return Err(Violation::new(parts[1].path.clone(), "direction must be Positive or Negative").into()),
    };
    Ok(RotationAnswer { name, pos, axis, direction })
}

/// Parses one or more `{type, name, pos}` items, preserving their order.
pub fn parse_transform_answer(raw: &str) -> Result<TransformAnswer, PromptError> {
    let items = locate_json_items(raw, Syntax::Relaxed)?;
    if items.is_empty() {
        return Err(Violation::new("$", "expected at least one position item").into());
    }
    let entries = items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = Field::new(item, format!("[{i}]")).obj()?;
            let ty = obj.req("type")?;
            let kind = match enum_token(&ty)?.as_str() {
                "starttarget" => TransformKind::StartTarget,
                "endtarget" => TransformKind::EndTarget,
                "object" => TransformKind::Object,
                other => {
                    return Err(Violation::new(
                        ty.path,
                        format!("invalid type {other:?}; expected starttarget|endtarget|object"),
                    )
                    .into())
                }
            };
            let name = obj.req("name")?.str()?.to_string();
            let pos = parse_box(&obj.req("pos")?)?;
            Ok(TransformEntry { kind, name, pos })
        })
        .collect::<Result<Vec<_>, PromptError>>()?;
    Ok(TransformAnswer { entries })
}

pub fn parse_relevance_answer(raw: &str) -> Result<RelevanceAnswer, PromptError> {
    let value = locate_json(raw, Syntax::Relaxed)?;
    let obj = root_obj(&value)?;
    let score_field = obj.req("score")?;
    let score =
        score_field.value.as_f64().ok_or_else(|| Violation::new(score_field.path.clone(), "expected number"))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(PromptError::OutOfRange { path: score_field.path, value: score });
    }
    let reason = match obj.opt("reason") {
        Some(f) => f.str()?.to_string(),
        None => String::new(),
    };
    Ok(RelevanceAnswer { score, reason })
}

fn checked_viz(value: &Value, path: &str) -> Result<VizSpec, PromptError> {
    let viz = parse_viz_value(value, path)?;
    let report = validate_viz(&viz);
    if report.is_empty() {
        Ok(viz)
    } else {
        Err(PromptError::InvalidViz(report))
    }
}

pub fn parse_voice_reply(raw: &str) -> Result<VoiceReply, PromptError> {
    let value = locate_json(raw, Syntax::Strict)?;
    let obj = root_obj(&value)?;
    let answer = obj.req("answer")?.str()?.to_string();
    let updated_viz = match obj.opt("updatedViz") {
        Some(f) => Some(checked_viz(f.value, &f.path)?),
        None => None,
    };
    Ok(VoiceReply { answer, updated_viz })
}

pub fn parse_subplan_draft(raw: &str) -> Result<SubPlanDraft, PromptError> {
    let value = locate_json(raw, Syntax::Strict)?;
    let obj = root_obj(&value)?;
    let substeps = obj
        .req("substeps")?
        .items()?
        .iter()
        .map(|item| {
            let s = item.obj()?;
            let instruction = s.req("instruction")?.str()?.trim().to_string();
            if instruction.is_empty() {
                return Err(Violation::new(format!("{}.instruction", item.path), "empty").into());
            }
            let check = match s.opt("check") {
                Some(f) => f.str()?.to_string(),
                None => String::new(),
            };
            let viz = match s.opt("viz") {
                Some(f) => Some(checked_viz(f.value, &f.path)?),
                None => None,
            };
            Ok(SubStepDraft { instruction, check, viz })
        })
        .collect::<Result<Vec<_>, PromptError>>()?;
    Ok(SubPlanDraft { substeps })
}

/// Parses a verification answer: either a full planner document or a bare
/// `plannerResponse`. A returned viz that differs from `shown` and passes
/// validation becomes `revised_viz`; an invalid one is discarded.
pub fn parse_verification_response(raw: &str, shown: Option<&VizSpec>) -> Result<VerificationOutcome, PromptError> {
    let value = locate_json(raw, Syntax::Strict)?;
    let root = root_obj(&value)?;
    let obj = match root.opt("plannerResponse") {
        Some(f) => f.obj()?,
        None => root,
    };
    let success = obj.req("success")?.bool()?;
    let text = |key: &str| -> Result<String, PromptError> {
        Ok(match obj.opt(key) {
            Some(f) => f.str()?.to_string(),
            None => String::new(),
        })
    };
    let check = text("check")?;
    let next_hint = text("next")?;
    let viz = match obj.opt("viz") {
        Some(f) => match checked_viz(f.value, &f.path) {
            Ok(v) if Some(&v) != shown => Some(v),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(error = %e, "discarding invalid viz in verification answer");
                None
            }
        },
        None => None,
    };
    let (revised_viz, next_viz) = if success { (None, viz) } else { (viz, None) };
    Ok(VerificationOutcome { success, check, next_hint, revised_viz, next_viz })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ObjectViz, ViolationCode};

    #[test]
    fn rotation_example() {
        let raw = r#"{name: "knob", pos: [450, 520, 560, 640], rotation: ["Z", "Positive"]}"#;
        let a = parse_rotation_answer(raw).unwrap();
        assert_eq!(a.name, "knob");
        assert_eq!(a.pos.coords(), [450, 520, 560, 640]);
        assert_eq!(a.axis, GuidanceAxis::Z);
        assert_eq!(a.direction, RotationDirection::Positive);
    }

    #[test]
    fn rotation_inverted_box_is_schema_violation() {
        let raw = r#"{"name": "knob", "pos": [600, 100, 400, 200], "rotation": ["Z", "Negative"]}"#;
        assert!(matches!(
            parse_rotation_answer(raw),
            Err(PromptError::SchemaViolation { path, .. }) if path == "pos"
        ));
    }

    #[test]
    fn rotation_bounds() {
        let full = r#"{"name": "", "pos": [0, 0, 1000, 1000], "rotation": ["x", "negative"]}"#;
        assert_eq!(parse_rotation_answer(full).unwrap().pos, NormBox::full());
        let over = r#"{"name": "", "pos": [0, 0, 1001, 1000], "rotation": ["X", "Positive"]}"#;
        assert_eq!(parse_rotation_answer(over), Err(PromptError::OutOfRange { path: "pos[2]".into(), value: 1001.0 }));
        let neg = r#"{"name": "", "pos": [-1, 0, 10, 10], "rotation": ["X", "Positive"]}"#;
        assert!(matches!(parse_rotation_answer(neg), Err(PromptError::OutOfRange { .. })));
        let frac = r#"{"name": "", "pos": [0.5, 0, 10, 10], "rotation": ["X", "Positive"]}"#;
        assert!(matches!(parse_rotation_answer(frac), Err(PromptError::SchemaViolation { .. })));
        let axis = r#"{"name": "", "pos": [0, 0, 10, 10], "rotation": ["W", "Positive"]}"#;
        assert!(matches!(parse_rotation_answer(axis), Err(PromptError::SchemaViolation { .. })));
    }

    #[test]
    fn transform_single_entry() {
        let raw = r#"{type: "endtarget", name: "glass", pos: [700, 300, 860, 520]}"#;
        let a = parse_transform_answer(raw).unwrap();
        assert_eq!(a.entries.len(), 1);
        assert_eq!(a.entries[0].kind, TransformKind::EndTarget);
        assert_eq!(a.entries[0].pos.coords(), [700, 300, 860, 520]);
    }

    #[test]
    fn transform_bad_kind() {
        let raw = r#"{"type": "midtarget", "name": "glass", "pos": [700, 300, 860, 520]}"#;
        assert!(matches!(
            parse_transform_answer(raw),
            Err(PromptError::SchemaViolation { path, .. }) if path == "[0].type"
        ));
    }

    #[test]
    fn transform_two_entries_keep_order() {
        let raw = "Here you go:\n{type: \"starttarget\", name: \"milk jug\", pos: [100, 120, 220, 400]}\n\
                   {type: \"endtarget\", name: \"glass\", pos: [700, 300, 860, 520]}.";
        let a = parse_transform_answer(raw).unwrap();
        let kinds: Vec<_> = a.entries.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![TransformKind::StartTarget, TransformKind::EndTarget]);
        let arr = r#"[{"type":"object","name":"a","pos":[1,2,3,4]},{"type":"endtarget","name":"b","pos":[5,6,7,8]}]"#;
        assert_eq!(parse_transform_answer(arr).unwrap().entries.len(), 2);
    }

    #[test]
    fn relevance_bounds() {
        let a = parse_relevance_answer(r#"{"score": 0.75, "reason": "shows the fold"}"#).unwrap();
        assert_eq!(a.score, 0.75);
        assert!(matches!(parse_relevance_answer(r#"{"score": 1.5}"#), Err(PromptError::OutOfRange { .. })));
    }

    #[test]
    fn verification_bare_and_wrapped() {
        let shown = VizSpec::outline("paper square");
        let bare = r#"{"next": "", "check": "", "success": true,
            "viz": {"objectViz": "Outline", "actionViz": null, "waypoints": [{"type": "target", "objectName": "paper square"}]}}"#;
        let o = parse_verification_response(bare, Some(&shown)).unwrap();
        assert!(o.success);
        assert_eq!(o.revised_viz, None);

        let wrapped = r#"```json
{"goal": "g", "steps": ["a"], "plannerResponse": {"next": "a", "check": "is the crease sharp?", "success": false,
 "viz": {"objectViz": "ShapePreview", "actionViz": null, "waypoints": [{"type": "target", "objectName": "paper square"}]}}}
```"#;
        let o = parse_verification_response(wrapped, Some(&shown)).unwrap();
        assert!(!o.success);
        assert_eq!(o.check, "is the crease sharp?");
        assert_eq!(o.revised_viz.unwrap().object_viz, ObjectViz::ShapePreview);
    }

    #[test]
    fn verification_needs_success() {
        assert!(matches!(
            parse_verification_response(r#"{"check": ""}"#, None),
            Err(PromptError::SchemaViolation { path, .. }) if path == "success"
        ));
        assert_eq!(
            parse_verification_response("true", None).unwrap_err(),
            PromptError::SchemaViolation { path: "$".into(), reason: "expected a JSON object".into() }
        );
    }

    #[test]
    fn voice_reply_validates_viz() {
        let r = parse_voice_reply(r#"{"answer": "Fold the top corner down.", "updatedViz": null}"#).unwrap();
        assert_eq!(r.updated_viz, None);
        let bad = r#"{"answer": "x", "updatedViz": {"objectViz": "Outline", "actionViz": "Arrow",
            "actionType": ["translation"], "needsTranslation": true,
            "waypoints": [{"type": "target", "objectName": "corner"}]}}"#;
        match parse_voice_reply(bad) {
            Err(PromptError::InvalidViz(v)) => assert_eq!(v[0].code, ViolationCode::MissingEndTarget),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn subplan_draft() {
        let raw = r#"{"substeps": [
            {"instruction": "Align the corners", "check": "corners meet", "viz": {"objectViz": "Outline", "actionViz": null, "waypoints": [{"type": "target", "objectName": "paper corner"}]}},
            {"instruction": "Press the crease", "check": "crease visible"}]}"#;
        let d = parse_subplan_draft(raw).unwrap();
        assert_eq!(d.substeps.len(), 2);
        assert!(d.substeps[0].viz.is_some() && d.substeps[1].viz.is_none());
    }
}
