use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Object names the planner must never use because they do not identify
/// anything localizable.
pub const BANNED_OBJECT_NAMES: [&str; 2] = ["prompt", "area"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaypointKind {
    Target,
    EndTarget,
    StartTarget,
    Object,
}

impl WaypointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WaypointKind::Target => "target",
            WaypointKind::EndTarget => "endtarget",
            WaypointKind::StartTarget => "starttarget",
            WaypointKind::Object => "object",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "target" => Some(WaypointKind::Target),
            "endtarget" => Some(WaypointKind::EndTarget),
            "starttarget" => Some(WaypointKind::StartTarget),
            "object" => Some(WaypointKind::Object),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub kind: WaypointKind,
    pub object_name: String,
    /// Unknown keys carried through unchanged.
    pub extra: Map<String, Value>,
}

impl Waypoint {
    pub fn new(kind: WaypointKind, object_name: impl Into<String>) -> Self {
        Waypoint { kind, object_name: object_name.into(), extra: Map::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectViz {
    Outline,
    ShapePreview,
}

impl ObjectViz {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectViz::Outline => "Outline",
            ObjectViz::ShapePreview => "ShapePreview",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionViz {
    Arrow,
    Gesture,
    Tool,
}

impl ActionViz {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionViz::Arrow => "Arrow",
            ActionViz::Gesture => "Gesture",
            ActionViz::Tool => "Tool",
        }
    }
}

/// Per-step visualization choice: how to show the object and how to show the
/// action, plus the named localization targets.
#[derive(Debug, Clone, PartialEq)]
pub struct VizSpec {
    pub object_viz: ObjectViz,
    pub action_viz: Option<ActionViz>,
    /// Open vocabulary of lowercase tokens. Only `translation` and `rotation`
    /// carry engine semantics; the rest select overlay assets.
    pub action_types: Vec<String>,
    pub needs_translation: bool,
    pub needs_rotation: bool,
    pub waypoints: Vec<Waypoint>,
    pub extra: Map<String, Value>,
}

impl VizSpec {
    pub fn outline(target: &str) -> Self {
        VizSpec {
            object_viz: ObjectViz::Outline,
            action_viz: None,
            action_types: Vec::new(),
            needs_translation: false,
            needs_rotation: false,
            waypoints: vec![Waypoint::new(WaypointKind::Target, target)],
            extra: Map::new(),
        }
    }

    pub fn waypoint(&self, kind: WaypointKind) -> Option<&Waypoint> {
        self.waypoints.iter().find(|w| w.kind == kind)
    }

    pub fn has_waypoint(&self, kind: WaypointKind) -> bool {
        self.waypoint(kind).is_some()
    }

    /// The object the step operates on: the first `target`, else the first
    /// waypoint of any kind.
    pub fn primary_object(&self) -> Option<&str> {
        self.waypoint(WaypointKind::Target).or_else(|| self.waypoints.first()).map(|w| w.object_name.as_str())
    }

    /// True when the shape preview is animated along the motion instead of
    /// drawing an arrow.
    pub fn animates_preview(&self) -> bool {
        self.object_viz == ObjectViz::ShapePreview && self.action_viz == Some(ActionViz::Arrow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    MissingTarget,
    MissingEndTarget,
    ConflictingMotion,
    EmptyObjectName,
    BannedObjectName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VizViolation {
    pub code: ViolationCode,
    pub detail: String,
}

pub(crate) fn object_name_problem(name: &str) -> Option<ViolationCode> {
    let norm = name.trim().to_lowercase();
    if norm.is_empty() {
        Some(ViolationCode::EmptyObjectName)
    } else if BANNED_OBJECT_NAMES.contains(&norm.as_str()) {
        Some(ViolationCode::BannedObjectName)
    } else {
        None
    }
}

/// Checks the structural rules a visualization spec must satisfy. An empty
/// report means the spec is valid.
pub fn validate_viz(spec: &VizSpec) -> Vec<VizViolation> {
    let mut report = Vec::new();
    let mut push = |code, detail: String| report.push(VizViolation { code, detail });

    for (i, w) in spec.waypoints.iter().enumerate() {
        if let Some(code) = object_name_problem(&w.object_name) {
            push(code, format!("waypoints[{i}].objectName = {:?}", w.object_name));
        }
    }
    if !spec.has_waypoint(WaypointKind::Target) {
        push(ViolationCode::MissingTarget, "no waypoint of type \"target\"".into());
    }
    if spec.needs_translation && spec.needs_rotation {
        push(ViolationCode::ConflictingMotion, "needsTranslation and needsRotation are both true".into());
    }
    if spec.action_viz == Some(ActionViz::Arrow)
        && spec.needs_translation
        && !spec.has_waypoint(WaypointKind::EndTarget)
    {
        push(ViolationCode::MissingEndTarget, "Arrow translation needs an \"endtarget\" waypoint".into());
    }
    report
}
