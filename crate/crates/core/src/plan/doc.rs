//! The planner document exchanged with the model: camelCase JSON with a goal,
//! the ordered step list and a `plannerResponse` describing the next step.

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::extract::{locate_json, ExtractError, Syntax};
use super::schema::{Checked, Field, Obj, Violation};
use super::viz::{object_name_problem, ActionViz, ObjectViz, ViolationCode, VizSpec, Waypoint, WaypointKind};

/// Separator between a step and one of its sub-steps in `next`
/// ("Heat the pot / set to medium heat").
pub const SUBSTEP_SEPARATOR: &str = " / ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no JSON object found in model output")]
    NoJsonFound,
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("`next` ({0:?}) matches no step and no \"step / substep\" pattern")]
    AmbiguousNext(String),
}

impl From<Violation> for PlanError {
    fn from(v: Violation) -> Self {
        PlanError::SchemaViolation { path: v.path, reason: v.reason }
    }
}

impl From<ExtractError> for PlanError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::NoJsonFound => PlanError::NoJsonFound,
            ExtractError::Malformed(reason) => PlanError::SchemaViolation { path: "$".into(), reason },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerResponse {
    pub next: String,
    pub check: String,
    pub success: bool,
    pub viz: VizSpec,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerResponseDoc {
    pub goal: String,
    pub steps: Vec<String>,
    pub response: PlannerResponse,
    pub extra: Map<String, Value>,
}

const DOC_KEYS: [&str; 3] = ["goal", "steps", "plannerResponse"];
const RESPONSE_KEYS: [&str; 4] = ["next", "check", "success", "viz"];
const VIZ_KEYS: [&str; 6] = ["objectViz", "actionViz", "actionType", "needsTranslation", "needsRotation", "waypoints"];
const WAYPOINT_KEYS: [&str; 2] = ["type", "objectName"];

/// Where `next` points inside a step list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NextRef<'a> {
    pub step_index: usize,
    pub substep: Option<&'a str>,
}

/// Resolves `next` against `steps`: either an exact step or
/// `"<step> / <substep>"`.
pub fn resolve_next<'a>(steps: &[String], next: &'a str) -> Option<NextRef<'a>> {
    let next_t = next.trim();
    if let Some(i) = steps.iter().position(|s| s.trim() == next_t) {
        return Some(NextRef { step_index: i, substep: None });
    }
    steps.iter().enumerate().find_map(|(i, s)| {
        let rest = next_t.strip_prefix(s.trim())?.strip_prefix(SUBSTEP_SEPARATOR)?;
        (!rest.trim().is_empty()).then_some(NextRef { step_index: i, substep: Some(rest) })
    })
}

/// Extracts and validates a planner document from raw model output.
pub fn parse_plan_document(raw: &str) -> Result<PlannerResponseDoc, PlanError> {
    let value = locate_json(raw, Syntax::Strict)?;
    let doc = PlannerResponseDoc::from_value(&value)?;
    if resolve_next(&doc.steps, &doc.response.next).is_none() {
        return Err(PlanError::AmbiguousNext(doc.response.next.clone()));
    }
    Ok(doc)
}

impl PlannerResponseDoc {
    /// Schema validation without the `next` resolution check.
    pub fn from_value(value: &Value) -> Result<Self, PlanError> {
        let root = Field::new(value, "");
        let obj = root.obj().map_err(|v| Violation::new("$", v.reason))?;
        let goal = obj.req("goal")?.str()?.to_string();
        let steps =
            obj.req("steps")?.items()?.iter().map(|f| f.str().map(str::to_string)).collect::<Checked<Vec<_>>>()?;
        let response = parse_planner_response(&obj.req("plannerResponse")?.obj()?, true)?;
        Ok(PlannerResponseDoc { goal, steps, response, extra: obj.extras(&DOC_KEYS) })
    }

    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("goal".into(), json!(self.goal));
        map.insert("steps".into(), json!(self.steps));
        map.insert("plannerResponse".into(), self.response.to_value());
        map.extend(self.extra.clone());
        Value::Object(map)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("JSON values always serialize")
    }

    pub fn next_ref(&self) -> Option<NextRef<'_>> {
        resolve_next(&self.steps, &self.response.next)
    }
}

impl PlannerResponse {
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("next".into(), json!(self.next));
        map.insert("check".into(), json!(self.check));
        map.insert("success".into(), json!(self.success));
        map.insert("viz".into(), viz_to_value(&self.viz));
        map.extend(self.extra.clone());
        Value::Object(map)
    }
}

/// Parses a `plannerResponse` object. With `require_next` false (verification
/// answers), a missing `next` is read as empty.
pub(crate) fn parse_planner_response(obj: &Obj<'_>, require_next: bool) -> Checked<PlannerResponse> {
    let next = match (obj.opt("next"), require_next) {
        (Some(f), _) => f.str()?.to_string(),
        (None, true) => return Err(obj.req("next").err().expect("next is absent")),
        (None, false) => String::new(),
    };
    let check = match obj.opt("check") {
        Some(f) => f.str()?.to_string(),
        None => String::new(),
    };
    let success = obj.req("success")?.bool()?;
    let viz = parse_viz(&obj.req("viz")?)?;
    Ok(PlannerResponse { next, check, success, viz, extra: obj.extras(&RESPONSE_KEYS) })
}

pub(crate) fn parse_viz(field: &Field<'_>) -> Checked<VizSpec> {
    let obj = field.obj()?;
    let ov = obj.req("objectViz")?;
    let object_viz = match ov.str()? {
        "Outline" => ObjectViz::Outline,
        "ShapePreview" => ObjectViz::ShapePreview,
        other => {
            return Err(Violation::new(ov.path, format!("invalid objectViz {other:?}; expected Outline|ShapePreview")))
        }
    };
    let action_viz = match obj.opt("actionViz") {
        None => None,
        Some(f) => match f.str()? {
            "null" => None,
            "Arrow" => Some(ActionViz::Arrow),
            "Gesture" => Some(ActionViz::Gesture),
            "Tool" => Some(ActionViz::Tool),
            other => {
                return Err(Violation::new(
                    f.path,
                    format!("invalid actionViz {other:?}; expected Arrow|Gesture|Tool|null"),
                ))
            }
        },
    };
    let action_types = match obj.opt("actionType") {
        None => Vec::new(),
        Some(f) => f
            .items()?
            .iter()
            .map(|t| {
                let token = t.str()?.trim().to_lowercase();
                if token.is_empty() {
                    Err(Violation::new(t.path.clone(), "empty actionType token"))
                } else {
                    Ok(token)
                }
            })
            .collect::<Checked<Vec<_>>>()?,
    };
    let flag = |key: &str| -> Checked<bool> { obj.opt(key).map_or(Ok(false), |f| f.bool()) };
    let needs_translation = flag("needsTranslation")?;
    let needs_rotation = flag("needsRotation")?;
    let waypoints = obj.req("waypoints")?.items()?.iter().map(parse_waypoint).collect::<Checked<Vec<_>>>()?;
    Ok(VizSpec {
        object_viz,
        action_viz,
        action_types,
        needs_translation,
        needs_rotation,
        waypoints,
        extra: obj.extras(&VIZ_KEYS),
    })
}

fn parse_waypoint(field: &Field<'_>) -> Checked<Waypoint> {
    let obj = field.obj()?;
    let ty = obj.req("type")?;
    let kind = WaypointKind::parse(ty.str()?).ok_or_else(|| {
        Violation::new(
            ty.path.clone(),
            format!("invalid waypoint type {:?}; expected target|endtarget|starttarget|object", ty.value),
        )
    })?;
    let name_field = obj.req("objectName")?;
    let object_name = name_field.str()?.to_string();
    match object_name_problem(&object_name) {
        Some(ViolationCode::BannedObjectName) => {
            return Err(Violation::new(name_field.path, format!("ambiguous objectName {object_name:?} is not allowed")))
        }
        Some(_) => return Err(Violation::new(name_field.path, "objectName is empty")),
        None => {}
    }
    Ok(Waypoint { kind, object_name, extra: obj.extras(&WAYPOINT_KEYS) })
}

pub fn viz_to_value(viz: &VizSpec) -> Value {
    let mut map = Map::new();
    map.insert("objectViz".into(), json!(viz.object_viz.as_str()));
    map.insert("actionViz".into(), viz.action_viz.map_or(Value::Null, |a| json!(a.as_str())));
    map.insert("actionType".into(), json!(viz.action_types));
    map.insert("needsTranslation".into(), json!(viz.needs_translation));
    map.insert("needsRotation".into(), json!(viz.needs_rotation));
    let waypoints = viz
        .waypoints
        .iter()
        .map(|w| {
            let mut m = Map::new();
            m.insert("type".into(), json!(w.kind.as_str()));
            m.insert("objectName".into(), json!(w.object_name));
            m.extend(w.extra.clone());
            Value::Object(m)
        })
        .collect();
    map.insert("waypoints".into(), Value::Array(waypoints));
    map.extend(viz.extra.clone());
    Value::Object(map)
}

/// Parses a standalone viz object (e.g. a revised or voice-updated spec).
pub fn parse_viz_value(value: &Value, path: &str) -> Result<VizSpec, PlanError> {
    Ok(parse_viz(&Field::new(value, path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const GAS_KNOB: &str = include_str!("../../tests/data/gas_knob.json");

    #[test]
    fn gas_knob_example() {
        let doc = parse_plan_document(GAS_KNOB).unwrap();
        assert_eq!(doc.goal, "Turn the gas knob to medium heat");
        assert_eq!(doc.steps.len(), 2);
        let viz = &doc.response.viz;
        assert_eq!(viz.object_viz, ObjectViz::Outline);
        assert_eq!(viz.action_viz, Some(ActionViz::Arrow));
        assert_eq!(viz.action_types, vec!["rotation"]);
        assert!(viz.needs_rotation && !viz.needs_translation);
        assert_eq!(viz.waypoints, vec![Waypoint::new(WaypointKind::Target, "silver gas knob")]);
        assert_eq!(doc.next_ref().unwrap().step_index, 1);
    }

    #[test]
    fn fenced_document_is_identical() {
        let fenced = format!("```json\n{GAS_KNOB}\n```");
        assert_eq!(parse_plan_document(&fenced), parse_plan_document(GAS_KNOB));
        let prose = format!("Sure! Here is the plan:\n{GAS_KNOB}\nLet me know.");
        assert_eq!(parse_plan_document(&prose), parse_plan_document(GAS_KNOB));
    }

    #[test]
    fn banned_object_name_path() {
        let raw = GAS_KNOB.replace("silver gas knob", "area");
        match parse_plan_document(&raw) {
            Err(PlanError::SchemaViolation { path, .. }) => {
                assert_eq!(path, "plannerResponse.viz.waypoints[0].objectName")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn substep_next_and_ambiguous_next() {
        let raw = GAS_KNOB.replace(
            "\"next\": \"Turn the gas knob clockwise to medium position\"",
            "\"next\": \"Locate the gas knob / look below the pot\"",
        );
        let doc = parse_plan_document(&raw).unwrap();
        let next = doc.next_ref().unwrap();
        assert_eq!((next.step_index, next.substep), (0, Some("look below the pot")));

        let raw = GAS_KNOB
            .replace("\"next\": \"Turn the gas knob clockwise to medium position\"", "\"next\": \"Boil water\"");
        assert_eq!(parse_plan_document(&raw), Err(PlanError::AmbiguousNext("Boil water".into())));
    }

    #[test]
    fn enum_and_type_violations() {
        let cases = [
            ("\"Outline\"", "\"Box\"", "plannerResponse.viz.objectViz"),
            ("\"Arrow\"", "\"Laser\"", "plannerResponse.viz.actionViz"),
            ("\"type\": \"target\"", "\"type\": \"midtarget\"", "plannerResponse.viz.waypoints[0].type"),
            ("\"success\": false", "\"success\": \"no\"", "plannerResponse.success"),
            ("\"objectViz\"", "\"objectVis\"", "plannerResponse.viz.objectViz"),
        ];
        for (from, to, want) in cases {
            match parse_plan_document(&GAS_KNOB.replacen(from, to, 1)) {
                Err(PlanError::SchemaViolation { path, .. }) => assert_eq!(path, want, "{to}"),
                other => panic!("{to}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn null_action_viz_forms() {
        for form in ["null", "\"null\""] {
            let raw = GAS_KNOB.replace("\"Arrow\"", form);
            assert_eq!(parse_plan_document(&raw).unwrap().response.viz.action_viz, None);
        }
        let raw = GAS_KNOB.replace("\"actionViz\": \"Arrow\",", "");
        assert_eq!(parse_plan_document(&raw).unwrap().response.viz.action_viz, None);
    }

    #[test]
    fn extras_survive_round_trip() {
        let raw = GAS_KNOB
            .replace("\"goal\":", "\"stepDomains\": [{\"referent\": \"Real\", \"action\": \"Real\"}], \"goal\":");
        let doc = parse_plan_document(&raw).unwrap();
        assert!(doc.extra.contains_key("stepDomains"));
        let again = parse_plan_document(&doc.to_json_pretty()).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn not_an_object() {
        assert!(matches!(parse_plan_document("[1, 2]"), Err(PlanError::SchemaViolation { .. })));
        assert_eq!(parse_plan_document("nothing here"), Err(PlanError::NoJsonFound));
    }
}
