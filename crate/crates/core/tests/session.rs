mod support;

use std::io::Write;
use std::sync::Arc;

use support::*;
use xrguide_core::fsm::AudioCueKind;
use xrguide_core::gateway::{Gateway, ProfileRouting, ReplayPool, ScriptedTransport};
use xrguide_core::media::AssetCache;
use xrguide_core::plan::StepStatus;
use xrguide_core::prompt::PromptKind;
use xrguide_core::render::DirectiveKind;
use xrguide_core::session::{
    read_event_log, replay_session, ClientMessage, Envelope, ErrorCode, EventBody, EventLog, Phase, ServerMessage,
    SessionEngine, SessionError, SessionHub,
};

fn batch_kinds(m: &ServerMessage) -> Vec<DirectiveKind> {
    match m {
        ServerMessage::DirectiveBatch(b) => b.kinds(),
        other => panic!("expected a directive batch, got {other:?}"),
    }
}

#[test]
fn coffee_session_records_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(AssetCache::with_dir(dir.path().join("blobs")).unwrap());
    let fixture = dir.path().join("calls.jsonl");
    let log_path = dir.path().join("session.jsonl");
    let gw = record_gateway(coffee_script(), Arc::clone(&cache), &fixture);
    let services = services(Arc::clone(&cache));
    let mut engine = SessionEngine::new("coffee", gw, Arc::clone(&services), EventLog::create(&log_path).unwrap());

    let mut replies = Vec::new();
    for (seq, msg) in coffee_messages().into_iter().enumerate() {
        replies.push(engine.handle(Envelope::new("coffee", seq as u64, msg)));
    }

    assert_eq!(types(&replies[0]), ["PlanReady"]);
    assert_eq!(
        batch_kinds(&replies[1][0].message),
        [DirectiveKind::StatePanel, DirectiveKind::Outline, DirectiveKind::ArrowTranslation]
    );
    // First failure: error cue, then a revised batch (arrow rotated to gesture).
    assert_eq!(types(&replies[2]), ["VerificationResult", "AudioCue", "DirectiveBatch"]);
    assert_eq!(replies[2][1].message, ServerMessage::AudioCue { cue: AudioCueKind::Error });
    let revised = batch_kinds(&replies[2][2].message);
    assert!(revised.contains(&DirectiveKind::GestureOverlay), "{revised:?}");
    assert!(!revised.contains(&DirectiveKind::ArrowTranslation));
    // Success: the verifier's viz becomes step 1's guidance.
    assert_eq!(types(&replies[3]), ["VerificationResult", "AudioCue", "DirectiveBatch"]);
    assert_eq!(
        batch_kinds(&replies[3][2].message),
        [DirectiveKind::StatePanel, DirectiveKind::Outline, DirectiveKind::GestureOverlay]
    );
    assert!(replies[4].is_empty());
    // Step 2 has no viz of its own: the whole view is outlined, no model call.
    assert_eq!(types(&replies[5]), ["VerificationResult", "AudioCue", "DirectiveBatch"]);
    assert_eq!(types(&replies[6]), ["VerificationResult", "AudioCue", "TaskComplete"]);
    assert_eq!(engine.phase(), Phase::Done);

    let statuses: Vec<_> = engine.plan().unwrap().steps.iter().map(|s| s.status).collect();
    assert_eq!(statuses, [StepStatus::Completed; 3]);
    let signal_calls = engine.events().iter().filter(|e| matches!(e.body, EventBody::ModelCalled { .. })).count();
    assert_eq!(signal_calls, 7, "the signal completes step 2 without a model call");

    // Server seq numbers increase across replies.
    let seqs: Vec<u64> = replies.iter().flatten().map(|m| m.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));

    let events = read_event_log(&log_path).unwrap();
    assert_eq!(events, engine.events());
    let pool = Arc::new(ReplayPool::from_file(&fixture).unwrap());
    let replayed = replay_session(&events, Gateway::replay(pool, ProfileRouting::offline()), Arc::clone(&services))
        .expect("replay matches");
    let batches = |evs: &[xrguide_core::session::SessionEvent]| -> Vec<String> {
        evs.iter()
            .filter_map(|e| match &e.body {
                EventBody::DirectiveBatchSent { batch } => Some(serde_json::to_string(batch).unwrap()),
                _ => None,
            })
            .collect()
    };
    assert_eq!(batches(replayed.events()), batches(&events));
    assert_eq!(replayed.engine.plan(), engine.plan());

    // A fixture set missing the last verification diverges.
    let mut records = ReplayPool::from_file(&fixture).unwrap().records().to_vec();
    records.retain(|r| r.kind != PromptKind::DuringTask || !r.response_text.contains("\"success\": true}"));
    let short = Gateway::replay(Arc::new(ReplayPool::new(records)), ProfileRouting::offline())
        .with_matching(xrguide_core::gateway::ReplayMatch::Exact);
    assert!(matches!(replay_session(&events, short, services), Err(SessionError::FixtureMismatch { .. })));

    // A truncated log is corrupt at the cut line.
    let text = std::fs::read_to_string(&log_path).unwrap();
    let cut = dir.path().join("cut.jsonl");
    let lines: Vec<&str> = text.lines().collect();
    let mut f = std::fs::File::create(&cut).unwrap();
    for l in &lines[..4] {
        writeln!(f, "{l}").unwrap();
    }
    write!(f, "{}", &lines[4][..lines[4].len() / 2]).unwrap();
    drop(f);
    assert_eq!(read_event_log(&cut), Err(SessionError::LogCorrupt { line: 5 }));
}

fn offline_engine(replies: Vec<xrguide_core::gateway::ScriptedReply>) -> SessionEngine {
    let cache = Arc::new(AssetCache::in_memory());
    let gw = Gateway::live(Arc::new(ScriptedTransport::new(replies)), ProfileRouting::offline(), Arc::clone(&cache));
    SessionEngine::new("t", gw, services(cache), EventLog::in_memory())
}

#[test]
fn verify_without_frame_and_duplicate_seq() {
    let mut e = offline_engine(coffee_script());
    e.handle(Envelope::new("t", 1, ClientMessage::StartTask { prompt: GOAL.into() }));
    let before = e.plan().cloned();
    let r = e.handle(Envelope::new("t", 2, ClientMessage::VerifyRequest));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::NoFrame, .. }));
    assert_eq!(e.plan().cloned(), before);

    let r = e.handle(Envelope::new("t", 2, ClientMessage::VerifyRequest));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::OutOfOrderSeq, .. }));
    assert!(matches!(e.events().last().unwrap().body, EventBody::Error { code: ErrorCode::OutOfOrderSeq, .. }));
}

#[test]
fn voice_query_before_plan_is_queued() {
    let mut script = coffee_script();
    script.push(reply(PromptKind::VoiceAnswer, r#"{"answer": "Use the big mug.", "updatedViz": null}"#));
    let mut e = offline_engine(script);
    let r = e.handle(Envelope::new("t", 1, ClientMessage::VoiceQuery { text: "Which mug?".into() }));
    assert_eq!(types(&r), ["QueryQueued"]);
    let r = e.handle(Envelope::new("t", 2, ClientMessage::StartTask { prompt: GOAL.into() }));
    assert_eq!(types(&r), ["PlanReady", "Answer"]);
    assert_eq!(r[1].message, ServerMessage::Answer { text: "Use the big mug.".into() });
}

#[test]
fn voice_can_replace_viz() {
    let mut script = coffee_script();
    script.insert(
        2,
        reply(
            PromptKind::VoiceAnswer,
            r#"{"answer": "Slide it right.", "updatedViz": {"objectViz": "Outline", "actionViz": "Tool",
               "actionType": ["drag"], "waypoints": [{"type": "target", "objectName": "mug"}]}}"#,
        ),
    );
    script
        .insert(3, reply(PromptKind::TransformLocalize, r#"{"type": "object", "name": "mug", "pos": [1, 1, 50, 50]}"#));
    let mut e = offline_engine(script);
    e.handle(Envelope::new("t", 1, ClientMessage::StartTask { prompt: GOAL.into() }));
    e.handle(Envelope::new("t", 2, ClientMessage::FrameUpdate(frame("a"))));
    let r = e.handle(Envelope::new("t", 3, ClientMessage::VoiceQuery { text: "Where to?".into() }));
    assert_eq!(types(&r), ["Answer", "DirectiveBatch"]);
    assert_eq!(
        batch_kinds(&r[1].message),
        [DirectiveKind::StatePanel, DirectiveKind::Outline, DirectiveKind::ToolOverlay]
    );
}

#[test]
fn skip_and_end_session() {
    let mut e = offline_engine(coffee_script());
    e.handle(Envelope::new("t", 1, ClientMessage::StartTask { prompt: GOAL.into() }));
    let r = e.handle(Envelope::new("t", 2, ClientMessage::SkipStep { index: 0, reason: "done already".into() }));
    assert_eq!(types(&r), ["StepsSkipped"]);
    assert_eq!(e.plan().unwrap().steps[0].status, StepStatus::Skipped);
    assert_eq!(e.plan().unwrap().active_index, Some(1));
    let r = e.handle(Envelope::new("t", 3, ClientMessage::SkipStep { index: 0, reason: String::new() }));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::InvalidStep, .. }));
    let r = e.handle(Envelope::new("t", 4, ClientMessage::EndSession));
    assert_eq!(types(&r), ["SessionClosed"]);
    let r = e.handle(Envelope::new("t", 5, ClientMessage::VerifyRequest));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::SessionClosed, .. }));
}

#[test]
fn bad_plan_keeps_session_alive() {
    let mut script = vec![reply(PromptKind::InitialPlan, r#"{"goal": "x", "steps": []}"#)];
    script.extend(coffee_script());
    let mut e = offline_engine(script);
    let r = e.handle(Envelope::new("t", 1, ClientMessage::StartTask { prompt: GOAL.into() }));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::PlanFailed, .. }));
    assert_eq!(e.phase(), Phase::New);
    let r = e.handle(Envelope::new("t", 2, ClientMessage::StartTask { prompt: GOAL.into() }));
    assert_eq!(types(&r), ["PlanReady"]);
}

#[test]
fn replay_miss_fails_the_session() {
    let gw = Gateway::replay(Arc::new(ReplayPool::new(Vec::new())), ProfileRouting::offline());
    let cache = Arc::new(AssetCache::in_memory());
    let mut e = SessionEngine::new("t", gw, services(cache), EventLog::in_memory());
    let r = e.handle(Envelope::new("t", 1, ClientMessage::StartTask { prompt: GOAL.into() }));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::ReplayMiss, .. }));
    assert_eq!(e.phase(), Phase::Failed);
}

#[test]
fn hub_sessions_are_isolated() {
    let cache = Arc::new(AssetCache::in_memory());
    let gw_cache = Arc::clone(&cache);
    let factory = move |_: &str| -> Result<Gateway, _> {
        Ok(Gateway::live(
            Arc::new(ScriptedTransport::new(coffee_script())),
            ProfileRouting::offline(),
            Arc::clone(&gw_cache),
        ))
    };
    let hub = Arc::new(SessionHub::new(services(cache), Arc::new(factory)));
    let r = hub.handle(Envelope::new("nobody", 1, ClientMessage::VerifyRequest));
    assert!(matches!(r[0].message, ServerMessage::Error { code: ErrorCode::UnknownSession, .. }));

    let threads: Vec<_> = ["a", "b", "c", "d"]
        .into_iter()
        .map(|id| {
            let hub = Arc::clone(&hub);
            std::thread::spawn(move || {
                let mut kinds = Vec::new();
                for (seq, msg) in coffee_messages().into_iter().enumerate() {
                    kinds.extend(types(&hub.handle(Envelope::new(id, seq as u64, msg))));
                }
                kinds
            })
        })
        .collect();
    let results: Vec<Vec<String>> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(hub.session_ids(), ["a", "b", "c", "d"]);
    for id in hub.session_ids() {
        assert_eq!(hub.session(&id).unwrap().lock().phase(), Phase::Done);
    }
    let r = hub.handle(Envelope::new("", 1, ClientMessage::StartTask { prompt: GOAL.into() }));
    assert_eq!(r[0].session_id, "s0000");
}
