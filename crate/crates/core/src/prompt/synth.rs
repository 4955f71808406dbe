use super::PromptError;
use crate::plan::schema::{Field, Violation};
use crate::plan::{
    classify_step, resolve_next, validate_viz, DomainTag, PlanWarning, PlannerResponseDoc, StepStatus, StepType,
    TaskPlan,
};

/// Reads the optional top-level `stepDomains` array: one
/// `{"referent": "Real|Virtual", "action": "Real|Virtual"}` per step.
pub fn domain_tags_from_doc(doc: &PlannerResponseDoc) -> Result<Option<Vec<(DomainTag, DomainTag)>>, PromptError> {
    let Some(value) = doc.extra.get("stepDomains").filter(|v| !v.is_null()) else {
        return Ok(None);
    };
    let field = Field::new(value, "stepDomains");
    let items = field.items()?;
    if items.len() != doc.steps.len() {
        return Err(
            Violation::new("stepDomains", format!("{} entries for {} steps", items.len(), doc.steps.len())).into()
        );
    }
    let tag = |f: Field<'_>| -> Result<DomainTag, PromptError> {
        match f.str()? {
            "Real" => Ok(DomainTag::Real),
            "Virtual" => Ok(DomainTag::Virtual),
            other => Err(Violation::new(f.path, format!("invalid domain {other:?}")).into()),
        }
    };
    items
        .iter()
        .map(|item| {
            let obj = item.obj()?;
            Ok((tag(obj.req("referent")?)?, tag(obj.req("action")?)?))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

/// Builds a task plan from a planner document. Steps before the planner's
/// `next` are taken as already done; the `next` step holds the document's
/// viz and becomes the activation candidate.
///
/// Without domain tags every step defaults to R2R and is flagged.
pub fn synthesize_plan(
    doc: &PlannerResponseDoc,
    domain_tags: Option<&[(DomainTag, DomainTag)]>,
) -> Result<TaskPlan, PromptError> {
    let next = resolve_next(&doc.steps, &doc.response.next)
        .ok_or_else(|| PromptError::AmbiguousNext(doc.response.next.clone()))?;
    if let Some(tags) = domain_tags {
        if tags.len() != doc.steps.len() {
            return Err(
                Violation::new("stepDomains", format!("{} entries for {} steps", tags.len(), doc.steps.len())).into()
            );
        }
    }
    let report = validate_viz(&doc.response.viz);
    if !report.is_empty() {
        return Err(PromptError::InvalidViz(report));
    }

    let mut plan = TaskPlan::new(doc.goal.trim());
    for (i, instruction) in doc.steps.iter().enumerate() {
        let step_type = match domain_tags {
            Some(tags) => classify_step(tags[i].0, tags[i].1),
            None => {
                plan.warnings.push(PlanWarning::StepTypeDefaulted { index: i });
                StepType::R2R
            }
        };
        let rule = if i == next.step_index && !doc.response.check.trim().is_empty() {
            doc.response.check.trim()
        } else {
            instruction.trim()
        };
        plan.push_original(instruction.trim(), step_type, rule);
    }
    for step in &mut plan.steps[..next.step_index] {
        step.status = StepStatus::Completed;
    }
    plan.steps[next.step_index].viz = Some(doc.response.viz.clone());
    plan.active_index = Some(next.step_index);
    plan.check_size();
    Ok(plan)
}
