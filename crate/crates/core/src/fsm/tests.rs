use proptest::prelude::*;

use super::*;
use crate::plan::{ActionViz, ObjectViz, StepType};

fn plan(n: usize) -> TaskPlan {
    let mut p = TaskPlan::new("Fold a paper crane");
    for i in 0..n {
        let idx = p.push_original(format!("step {i}"), StepType::V2R, format!("check {i}"));
        p.steps[idx].viz = Some(VizSpec::outline("paper square"));
    }
    p
}

fn fsm(n: usize) -> GuidanceFsm {
    let mut f = GuidanceFsm::new(plan(n), FailurePolicy::default());
    f.start().unwrap();
    f
}

fn fail(check: &str) -> VerificationOutcome {
    VerificationOutcome { success: false, check: check.into(), ..VerificationOutcome::passed() }
}

fn drafts(n: usize) -> Vec<SubStepDraft> {
    (0..n).map(|i| SubStepDraft { instruction: format!("sub {i}"), check: String::new(), viz: None }).collect()
}

fn verify(f: &mut GuidanceFsm, o: &VerificationOutcome) -> OutcomeEffects {
    f.begin_verification().unwrap();
    f.apply_outcome(o).unwrap()
}

#[test]
fn success_advances_in_order() {
    let mut f = fsm(3);
    assert_eq!(f.cursor_index(), Some(0));
    assert_eq!(f.upcoming(), Some(1));
    let e = verify(&mut f, &VerificationOutcome::passed());
    assert_eq!((e.cue, e.completed.clone(), e.activated), (AudioCueKind::Correct, vec![0], Some(1)));
    verify(&mut f, &VerificationOutcome::passed());
    let e = verify(&mut f, &VerificationOutcome::passed());
    assert!(e.finished);
    assert_eq!(f.cursor_index(), None);
    assert!(f.is_finished());
}

#[test]
fn out_of_order_activation_is_rejected() {
    let mut f = fsm(3);
    assert_eq!(f.activate(2), Err(FsmError::OutOfOrderActivation { index: 2 }));
    assert_eq!(f.activate(0), Err(FsmError::OutOfOrderActivation { index: 0 }));
    let mut idle = GuidanceFsm::new(plan(3), FailurePolicy::default());
    assert_eq!(idle.activate(1), Err(FsmError::OutOfOrderActivation { index: 1 }));
    idle.activate(0).unwrap();
}

#[test]
fn outcome_requires_awaiting_verification() {
    let mut f = fsm(2);
    assert!(matches!(f.apply_outcome(&VerificationOutcome::passed()), Err(FsmError::WrongStatus { .. })));
    f.begin_verification().unwrap();
    assert!(matches!(f.begin_verification(), Err(FsmError::WrongStatus { .. })));
    f.abort_verification();
    assert_eq!(f.plan().steps[0].status, StepStatus::Active);
}

#[test]
fn revise_then_subplan_then_revise() {
    let mut f = fsm(3);
    let e = verify(&mut f, &fail("corners are not aligned"));
    assert_eq!(e.cue, AudioCueKind::Error);
    let Some(RevisionAction::ReviseViz(v)) = e.action else { panic!("{e:?}") };
    assert_eq!(v.object_viz, ObjectViz::ShapePreview);
    assert_eq!(f.pending_check(f.plan().steps[0].id), "corners are not aligned");
    f.apply_revision(0, v).unwrap();

    let e = verify(&mut f, &fail(""));
    assert_eq!(e.action, Some(RevisionAction::InvokeSubPlan));
    let r = f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(2) }).unwrap();
    assert_eq!(r, 1..3);
    assert_eq!(f.plan().steps.len(), 5);
    assert_eq!(f.cursor_index(), Some(1));
    assert_eq!(f.plan().steps[0].status, StepStatus::Active);
    f.check_invariants().unwrap();

    // A failing substep only ever revises.
    for _ in 0..3 {
        let e = verify(&mut f, &fail("again"));
        assert!(matches!(e.action, Some(RevisionAction::ReviseViz(_))));
    }
    verify(&mut f, &VerificationOutcome::passed());
    let e = verify(&mut f, &VerificationOutcome::passed());
    assert_eq!(e.completed, vec![2, 0]);
    assert_eq!(e.activated, Some(3));

    let id0 = f.plan().steps[0].id;
    let st = f.failure_state(id0);
    assert_eq!((st.failure_count, st.revision_cursor, st.subplan_used), (2, 1, true));
}

#[test]
fn third_failure_of_parent_revises() {
    let mut f = fsm(2);
    verify(&mut f, &fail(""));
    verify(&mut f, &fail(""));
    // The engine may decline to splice (e.g. sub-plan call failed); the next
    // failure is still a sub-plan request until one is used.
    let e = verify(&mut f, &fail(""));
    assert_eq!(e.action, Some(RevisionAction::InvokeSubPlan));
    f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(2) }).unwrap();
    f.skip(1).unwrap();
    f.skip(2).unwrap();
    assert_eq!(f.plan().steps[0].status, StepStatus::Completed);
    assert_eq!(f.cursor_index(), Some(3));
}

#[test]
fn subplan_bounds_and_parent() {
    let mut f = fsm(3);
    assert_eq!(f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(6) }), Err(FsmError::SubPlanTooLarge(6)));
    assert_eq!(f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(1) }), Err(FsmError::SubPlanTooSmall(1)));
    assert_eq!(
        f.splice_subplan(SubPlan { parent_index: 1, substeps: drafts(2) }),
        Err(FsmError::WrongParent { got: 1 })
    );
    f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(5) }).unwrap();
    // Substeps cannot spawn their own sub-plan, and the parent is no longer
    // the cursor.
    assert_eq!(
        f.splice_subplan(SubPlan { parent_index: 1, substeps: drafts(2) }),
        Err(FsmError::WrongParent { got: 1 })
    );
    assert_eq!(
        f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(2) }),
        Err(FsmError::WrongParent { got: 0 })
    );
    assert_eq!(f.plan().original_count(), 3);
}

#[test]
fn splice_keeps_original_ids_and_order() {
    let mut f = fsm(4);
    verify(&mut f, &VerificationOutcome::passed());
    let before = f.plan().original_ids();
    f.splice_subplan(SubPlan { parent_index: 1, substeps: drafts(3) }).unwrap();
    assert_eq!(f.plan().original_ids(), before);
    let origins: Vec<_> = f.plan().steps.iter().map(|s| s.origin).collect();
    assert_eq!(
        origins,
        vec![
            StepOrigin::Original,
            StepOrigin::Original,
            StepOrigin::SubStep(1),
            StepOrigin::SubStep(1),
            StepOrigin::SubStep(1),
            StepOrigin::Original,
            StepOrigin::Original,
        ]
    );
    // Substeps inherit the parent's viz when the draft has none.
    assert_eq!(f.plan().steps[2].viz, f.plan().steps[1].viz);
    assert_eq!(f.plan().steps[2].verification_rule, "sub 0");
}

#[test]
fn skip_future_and_current() {
    let mut f = fsm(4);
    let e = f.skip(2).unwrap();
    assert_eq!((e.skipped, e.activated), (vec![2], None));
    assert_eq!(f.cursor_index(), Some(0));
    verify(&mut f, &VerificationOutcome::passed());
    let e = f.skip(1).unwrap();
    assert_eq!(e.activated, Some(3));
    assert_eq!(f.skip(1), Err(FsmError::AlreadyDone(1)));
    let e = f.skip(3).unwrap();
    assert!(e.finished);
}

#[test]
fn skipping_parent_skips_substeps() {
    let mut f = fsm(2);
    verify(&mut f, &fail(""));
    verify(&mut f, &fail(""));
    f.splice_subplan(SubPlan { parent_index: 0, substeps: drafts(3) }).unwrap();
    verify(&mut f, &VerificationOutcome::passed());
    let e = f.skip(0).unwrap();
    assert_eq!(e.skipped, vec![0, 2, 3]);
    assert_eq!(e.activated, Some(4));
    assert_eq!(f.plan().steps[1].status, StepStatus::Completed);
    f.check_invariants().unwrap();
}

#[test]
fn success_viz_goes_to_next_step() {
    let mut p = plan(2);
    p.steps[1].viz = None;
    let mut f = GuidanceFsm::new(p, FailurePolicy::default());
    f.start().unwrap();
    let mut next = VizSpec::outline("paper crane");
    next.action_viz = Some(ActionViz::Gesture);
    let o = VerificationOutcome { next_viz: Some(next.clone()), ..VerificationOutcome::passed() };
    verify(&mut f, &o);
    assert_eq!(f.plan().steps[1].viz, Some(next));
}

#[test]
fn revision_uses_model_viz_when_given() {
    let mut f = fsm(2);
    let mut v = VizSpec::outline("crease");
    v.object_viz = ObjectViz::ShapePreview;
    let o = VerificationOutcome { revised_viz: Some(v.clone()), ..fail("") };
    let e = verify(&mut f, &o);
    assert_eq!(e.action, Some(RevisionAction::ReviseViz(v)));
}

#[test]
fn disabled_subplan_only_revises() {
    let mut f = GuidanceFsm::new(plan(2), FailurePolicy { subplan_at: 2, allow_subplan: false });
    f.start().unwrap();
    for _ in 0..4 {
        let e = verify(&mut f, &fail(""));
        assert!(matches!(e.action, Some(RevisionAction::ReviseViz(_))));
    }
}

#[derive(Debug, Clone)]
enum Op {
    Pass,
    Fail,
    SubPlan(usize),
    Skip(usize),
    Activate(usize),
    FireFuture(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => Just(Op::Pass),
        4 => Just(Op::Fail),
        2 => (0usize..8).prop_map(Op::SubPlan),
        1 => (0usize..20).prop_map(Op::Skip),
        1 => (0usize..20).prop_map(Op::Activate),
        1 => (0usize..20).prop_map(Op::FireFuture),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn random_walks_keep_invariants(n in 1usize..8, ops in proptest::collection::vec(op(), 0..40)) {
        let mut f = fsm(n);
        let ids = f.plan().original_ids();
        for o in ops {
            let before: Vec<(StepId, StepStatus)> = f.plan().steps.iter().map(|s| (s.id, s.status)).collect();
            match o {
                Op::Pass | Op::Fail => {
                    if f.begin_verification().is_ok() {
                        let out = if matches!(o, Op::Pass) { VerificationOutcome::passed() } else { fail("x") };
                        let e = f.apply_outcome(&out).unwrap();
                        if let Some(RevisionAction::ReviseViz(v)) = e.action {
                            f.apply_revision(e.index, v).unwrap();
                        }
                    }
                }
                Op::SubPlan(k) => {
                    if let Some(c) = f.cursor_index() {
                        let r = f.splice_subplan(SubPlan { parent_index: c, substeps: drafts(k) });
                        if r.is_ok() {
                            prop_assert!((MIN_SUBSTEPS..=MAX_SUBSTEPS).contains(&k));
                        }
                    }
                }
                Op::Skip(i) => { let _ = f.skip(i); }
                Op::Activate(i) => { let _ = f.activate(i); }
                Op::FireFuture(i) => {
                    // Pre-satisfying a future step is a skip-like completion.
                    if f.plan().steps.get(i).is_some_and(|s| s.status == StepStatus::Pending) {
                        let _ = f.skip(i);
                    }
                }
            }
            prop_assert!(f.check_invariants().is_ok(), "{:?}", f.check_invariants());
            prop_assert_eq!(f.plan().original_ids(), ids.clone());
            // Done statuses are monotone.
            for (id, st) in before {
                if st.is_done() {
                    let now = f.plan().steps.iter().find(|s| s.id == id).unwrap().status;
                    prop_assert_eq!(now, st);
                }
            }
            // Nothing after the cursor's owner has been worked on.
            if let Some(c) = f.cursor_index() {
                let owner = f.plan().owning_original(c).unwrap();
                for s in &f.plan().steps[..owner] {
                    prop_assert!(s.status.is_done(), "step {} before cursor not done", s.index);
                }
            }
        }
    }
}
