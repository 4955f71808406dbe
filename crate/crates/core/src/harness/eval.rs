//! Folds recorded session logs and per-step labels into the step-quality
//! table and the per-type localization table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::digest::Digest;
use crate::prompt::PromptKind;
use crate::session::{EventBody, SessionEvent};

/// Correctness marks for one planned step. Guidance components that do not
/// apply to the step are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepLabel {
    pub session: String,
    pub step: usize,
    pub text_instruction: bool,
    pub visual_type: bool,
    pub key_component: bool,
    pub image_relevance: bool,
    pub verification: bool,
    #[serde(default)]
    pub target_config_preview: Option<bool>,
    #[serde(default)]
    pub motion: Option<bool>,
    #[serde(default)]
    pub static_object: Option<bool>,
    #[serde(default)]
    pub action: Option<bool>,
}

impl StepLabel {
    /// A step is correct overall when every mark that applies is correct.
    pub fn all_correct(&self) -> bool {
        self.text_instruction
            && self.visual_type
            && self.key_component
            && self.image_relevance
            && self.verification
            && [self.target_config_preview, self.motion, self.static_object, self.action]
                .iter()
                .all(|m| m.unwrap_or(true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LocalizationType {
    TargetConfigPreview,
    Translation,
    Rotation,
    StaticObject,
    Tool,
    Gesture,
}

impl LocalizationType {
    fn prompt(self) -> PromptKind {
        match self {
            LocalizationType::Rotation => PromptKind::RotationLocalize,
            _ => PromptKind::TransformLocalize,
        }
    }
}

/// Ground truth for one localization call, addressed by the event that
/// logged it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallLabel {
    pub session: String,
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: LocalizationType,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_hash: Option<Digest>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default)]
    pub steps: Vec<StepLabel>,
    #[serde(default)]
    pub localization: Vec<CallLabel>,
}

impl Labels {
    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Labels(format!("{}: {e}", path.display())))
    }
}

/// `correct / total` as a percentage in tenths, rounded half away from zero.
pub fn percent_tenths(correct: u64, total: u64) -> Option<u64> {
    (total > 0).then(|| (2 * correct * 1000 + total) / (2 * total))
}

fn fmt_tenths(t: Option<u64>) -> String {
    match t {
        Some(t) => format!("{}.{}%", t / 10, t % 10),
        None => "-".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub metric: String,
    pub total: u64,
    pub correct: u64,
    /// Percentage rounded to one decimal; `None` for an empty row.
    pub percentage: Option<f64>,
}

impl CountRow {
    fn new(metric: &str, correct: u64, total: u64) -> Self {
        CountRow {
            metric: metric.into(),
            total,
            correct,
            percentage: percent_tenths(correct, total).map(|t| t as f64 / 10.0),
        }
    }

    pub fn percent_text(&self) -> String {
        fmt_tenths(percent_tenths(self.correct, self.total))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub calls: u64,
    pub correct: u64,
    pub accuracy: Option<f64>,
    /// Mean latency in seconds over the calls that reported one.
    pub latency: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct Acc {
    calls: u64,
    correct: u64,
    latency_sum: f64,
    timed: u64,
}

impl Acc {
    fn add(&mut self, correct: bool, latency: Option<f64>) {
        self.calls += 1;
        self.correct += u64::from(correct);
        if let Some(l) = latency {
            self.latency_sum += l;
            self.timed += 1;
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.calls += o.calls;
        self.correct += o.correct;
        self.latency_sum += o.latency_sum;
        self.timed += o.timed;
    }

    fn cell(&self) -> Cell {
        Cell {
            calls: self.calls,
            correct: self.correct,
            accuracy: percent_tenths(self.correct, self.calls).map(|t| t as f64 / 10.0),
            latency: (self.timed > 0).then(|| self.latency_sum / self.timed as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub name: String,
    /// Component rows are indented under their group.
    pub component: bool,
    /// One cell per profile, in `LocalizationTable::profiles` order.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTable {
    pub profiles: Vec<String>,
    pub rows: Vec<TypeRow>,
}

impl LocalizationTable {
    pub fn row(&self, name: &str) -> Option<&TypeRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn cell(&self, row: &str, profile: &str) -> Option<&Cell> {
        let i = self.profiles.iter().position(|p| p == profile)?;
        self.row(row)?.cells.get(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub steps: Vec<CountRow>,
    pub localization: LocalizationTable,
}

const GROUPS: [(&str, &[(&str, LocalizationType)]); 4] = [
    ("Target Config Preview", &[("2D Box", LocalizationType::TargetConfigPreview)]),
    ("Motion", &[("Translation Info", LocalizationType::Translation), ("Rotation Info", LocalizationType::Rotation)]),
    ("Static Object", &[("2D Box", LocalizationType::StaticObject)]),
    ("Action", &[("Tool", LocalizationType::Tool), ("Gesture", LocalizationType::Gesture)]),
];

struct LoggedCall {
    kind: PromptKind,
    context_hash: Digest,
    profile: String,
    latency: Option<f64>,
}

/// Builds both tables. Every planned step and localization call in the logs
/// must have exactly one label and every label must match a logged item.
pub fn eval_report(logs: &[Vec<SessionEvent>], labels: &Labels) -> Result<EvalReport, HarnessError> {
    let mismatch = |m: String| HarnessError::LabelMismatch(m);
    let mut steps: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut calls: BTreeMap<(String, u64), LoggedCall> = BTreeMap::new();
    for (i, log) in logs.iter().enumerate() {
        let session = log
            .iter()
            .find_map(|e| match &e.body {
                EventBody::SessionStarted { session_id, .. } => Some(session_id.clone()),
                _ => None,
            })
            .ok_or_else(|| mismatch(format!("log {i} has no SessionStarted event")))?;
        for e in log {
            match &e.body {
                EventBody::PlanReady { steps: s, .. } => {
                    steps.extend(s.iter().map(|v| (session.clone(), v.index)));
                }
                EventBody::ModelCalled { prompt, context_hash, profile, latency, error: None, .. }
                    if matches!(prompt, PromptKind::RotationLocalize | PromptKind::TransformLocalize) =>
                {
                    calls.insert(
                        (session.clone(), e.seq),
                        LoggedCall {
                            kind: *prompt,
                            context_hash: context_hash.clone(),
                            profile: profile.clone().unwrap_or_default(),
                            latency: *latency,
                        },
                    );
                }
                _ => {}
            }
        }
    }

    let mut step_labels: BTreeMap<(String, usize), &StepLabel> = BTreeMap::new();
    for l in &labels.steps {
        let key = (l.session.clone(), l.step);
        if !steps.contains(&key) {
            return Err(mismatch(format!("label for step {} of {} matches no logged step", l.step, l.session)));
        }
        if step_labels.insert(key, l).is_some() {
            return Err(mismatch(format!("step {} of {} is labeled twice", l.step, l.session)));
        }
    }
    if let Some((s, i)) = steps.iter().find(|k| !step_labels.contains_key(*k)) {
        return Err(mismatch(format!("step {i} of {s} has no label")));
    }

    let mut profiles: Vec<String> = Vec::new();
    let mut leaves: BTreeMap<(String, LocalizationType), Acc> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for l in &labels.localization {
        let key = (l.session.clone(), l.seq);
        let call = calls.get(&key).ok_or_else(|| {
            mismatch(format!("label for event {} of {} matches no localization call", l.seq, l.session))
        })?;
        if !seen.insert(key) {
            return Err(mismatch(format!("event {} of {} is labeled twice", l.seq, l.session)));
        }
        if call.kind != l.kind.prompt() {
            return Err(mismatch(format!(
                "event {} of {}: {:?} label on a {} call",
                l.seq,
                l.session,
                l.kind,
                call.kind.as_str()
            )));
        }
        if l.context_hash.as_ref().is_some_and(|h| *h != call.context_hash) {
            return Err(mismatch(format!("event {} of {}: context hash differs", l.seq, l.session)));
        }
        if !profiles.contains(&call.profile) {
            profiles.push(call.profile.clone());
        }
        leaves.entry((call.profile.clone(), l.kind)).or_default().add(l.correct, call.latency);
    }
    if let Some((s, q)) = calls.keys().find(|k| !seen.contains(*k)) {
        return Err(mismatch(format!("localization call at event {q} of {s} has no label")));
    }
    profiles.sort();

    Ok(EvalReport { steps: step_rows(step_labels.values().copied()), localization: type_table(&profiles, &leaves) })
}

/// Reads one mark off a label; `None` when the mark does not apply.
type Mark = fn(&StepLabel) -> Option<bool>;

fn step_rows<'a>(labels: impl Iterator<Item = &'a StepLabel> + Clone) -> Vec<CountRow> {
    let count = |f: Mark| labels.clone().filter_map(f).fold((0, 0), |(c, t), ok| (c + u64::from(ok), t + 1));
    let rows: [(&str, Mark); 10] = [
        ("TextInstruction", |l| Some(l.text_instruction)),
        ("VisualType", |l| Some(l.visual_type)),
        ("Key Component", |l| Some(l.key_component)),
        ("Image Relevance", |l| Some(l.image_relevance)),
        ("Verification", |l| Some(l.verification)),
        ("Target Config Preview", |l| l.target_config_preview),
        ("Motion", |l| l.motion),
        ("Static Object", |l| l.static_object),
        ("Action", |l| l.action),
        ("Total", |l| Some(l.all_correct())),
    ];
    rows.iter()
        .map(|(name, f)| {
            let (c, t) = count(*f);
            CountRow::new(name, c, t)
        })
        .collect()
}

fn type_table(profiles: &[String], leaves: &BTreeMap<(String, LocalizationType), Acc>) -> LocalizationTable {
    let mut rows = Vec::new();
    let mut totals = vec![Acc::default(); profiles.len()];
    for (group, parts) in GROUPS {
        let mut group_acc = vec![Acc::default(); profiles.len()];
        let mut part_rows = Vec::new();
        for (part, ty) in parts {
            let mut cells = Vec::new();
            for (i, p) in profiles.iter().enumerate() {
                let leaf = leaves.get(&(p.clone(), *ty)).cloned().unwrap_or_default();
                group_acc[i].merge(&leaf);
                cells.push(leaf.cell());
            }
            part_rows.push(TypeRow { name: (*part).into(), component: true, cells });
        }
        for (t, g) in totals.iter_mut().zip(&group_acc) {
            t.merge(g);
        }
        rows.push(TypeRow { name: group.into(), component: false, cells: group_acc.iter().map(Acc::cell).collect() });
        rows.extend(part_rows);
    }
    rows.push(TypeRow { name: "Total".into(), component: false, cells: totals.iter().map(Acc::cell).collect() });
    LocalizationTable { profiles: profiles.to_vec(), rows }
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24}{:>7}{:>9}{:>12}", "Metric", "Total", "Correct", "Percentage");
        for r in &self.steps {
            let _ = writeln!(out, "{:<24}{:>7}{:>9}{:>12}", r.metric, r.total, r.correct, r.percent_text());
        }
        out.push('\n');
        let t = &self.localization;
        let _ = write!(out, "{:<26}", "Type / Component");
        for p in &t.profiles {
            let _ = write!(out, "{:>13}{:>13}", format!("Acc.({p})"), format!("Lat.({p})"));
        }
        out.push('\n');
        for r in &t.rows {
            let name = if r.component { format!("  {}", r.name) } else { r.name.clone() };
            let _ = write!(out, "{name:<26}");
            for c in &r.cells {
                let lat = c.latency.map_or("-".to_string(), |l| format!("{l:.2}"));
                let _ = write!(out, "{:>13}{:>13}", fmt_tenths(percent_tenths(c.correct, c.calls)), lat);
            }
            out.push('\n');
        }
        out
    }

    pub fn step_row(&self, metric: &str) -> Option<&CountRow> {
        self.steps.iter().find(|r| r.metric == metric)
    }
}
