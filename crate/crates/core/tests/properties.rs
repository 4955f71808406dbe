use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use xrguide_core::plan::{parse_plan_document, PlanError};
use xrguide_core::prompt::{parse_rotation_answer, parse_transform_answer, PromptError, TransformKind};
use xrguide_core::spatial::{
    guidance_axis_to_world, unproject_with_depth, CameraFrame, DepthMap, GuidanceAxis, Intrinsics, Pose,
    RotationDirection,
};

const GAS_KNOB: &str = include_str!("data/gas_knob.json");

#[test]
fn gas_knob_round_trips_exactly() {
    let original: Value = serde_json::from_str(GAS_KNOB).unwrap();
    let doc = parse_plan_document(GAS_KNOB).unwrap();
    assert_eq!(doc.to_value(), original);
    let again = parse_plan_document(&doc.to_json_pretty()).unwrap();
    assert_eq!(again, doc);
}

#[test]
fn localization_answers_round_trip() {
    let raw = r#"{name: "silver gas knob", pos: [450, 520, 560, 640], rotation: ["Z", "Positive"]}"#;
    let a = parse_rotation_answer(raw).unwrap();
    let axis = match a.axis {
        GuidanceAxis::X => "X",
        GuidanceAxis::Y => "Y",
        GuidanceAxis::Z => "Z",
    };
    let dir = match a.direction {
        RotationDirection::Positive => "Positive",
        RotationDirection::Negative => "Negative",
    };
    let wire = json!({"name": a.name, "pos": a.pos, "rotation": [axis, dir]});
    assert_eq!(parse_rotation_answer(&wire.to_string()).unwrap(), a);

    let raw = r#"{type: "starttarget", name: "milk jug", pos: [100, 400, 250, 600]}
                 {type: "endtarget", name: "glass", pos: [700, 300, 860, 520]}"#;
    let t = parse_transform_answer(raw).unwrap();
    let wire: Vec<Value> = t
        .entries
        .iter()
        .map(|e| {
            let kind = match e.kind {
                TransformKind::StartTarget => "starttarget",
                TransformKind::EndTarget => "endtarget",
                TransformKind::Object => "object",
            };
            json!({"type": kind, "name": e.name, "pos": e.pos})
        })
        .collect();
    assert_eq!(parse_transform_answer(&Value::Array(wire).to_string()).unwrap(), t);
}

/// Edits that each make the gas-knob document invalid.
fn mutate(rng: &mut ChaCha8Rng) -> (String, String) {
    let mut v: Value = serde_json::from_str(GAS_KNOB).unwrap();
    let which = rng.gen_range(0..16);
    let label = match which {
        0 => {
            v.as_object_mut().unwrap().remove("goal");
            "drop goal"
        }
        1 => {
            v.as_object_mut().unwrap().remove("steps");
            "drop steps"
        }
        2 => {
            v.as_object_mut().unwrap().remove("plannerResponse");
            "drop plannerResponse"
        }
        3 => {
            v["plannerResponse"].as_object_mut().unwrap().remove("success");
            "drop success"
        }
        4 => {
            v["plannerResponse"].as_object_mut().unwrap().remove("viz");
            "drop viz"
        }
        5 => {
            v["plannerResponse"]["viz"].as_object_mut().unwrap().remove("objectViz");
            "drop objectViz"
        }
        6 => {
            v["goal"] = json!(rng.gen_range(0..1000));
            "numeric goal"
        }
        7 => {
            v["steps"] = json!("one long step");
            "string steps"
        }
        8 => {
            v["plannerResponse"]["success"] = json!("yes");
            "string success"
        }
        9 => {
            v["plannerResponse"]["viz"]["objectViz"] = json!("Hologram");
            "bad objectViz"
        }
        10 => {
            v["plannerResponse"]["viz"]["actionViz"] = json!("Laser");
            "bad actionViz"
        }
        11 => {
            v["plannerResponse"]["viz"]["waypoints"][0]["type"] = json!("middle");
            "bad waypoint type"
        }
        12 => {
            let name = ["prompt", "Area", " AREA ", "Prompt"][rng.gen_range(0..4)];
            v["plannerResponse"]["viz"]["waypoints"][0]["objectName"] = json!(name);
            "banned object name"
        }
        13 => {
            v["plannerResponse"]["next"] = json!(format!("step {}", rng.gen_range(10..99)));
            "unknown next"
        }
        14 => {
            v["plannerResponse"]["viz"]["waypoints"] = json!({});
            "object waypoints"
        }
        _ => {
            let text = v.to_string();
            let cut = rng.gen_range(1..text.len() / 2);
            return (text[..cut].to_string(), format!("truncated at {cut}"));
        }
    };
    (v.to_string(), label.to_string())
}

#[test]
fn fuzzed_documents_fail_with_typed_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..100 {
        let (text, label) = mutate(&mut rng);
        let result = catch_unwind(AssertUnwindSafe(|| parse_plan_document(&text)));
        match result {
            Ok(Err(PlanError::NoJsonFound | PlanError::SchemaViolation { .. } | PlanError::AmbiguousNext(_))) => {}
            Ok(Ok(_)) => panic!("mutation {i} ({label}) was accepted"),
            Err(_) => panic!("mutation {i} ({label}) panicked"),
        }
    }
}

#[test]
fn fuzzed_answers_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = r#"{name: "knob", pos: [450, 520, 560, 640], rotation: ["Z", "Positive"]}"#.as_bytes();
    for _ in 0..100 {
        let mut bytes = base.to_vec();
        for _ in 0..rng.gen_range(1..4) {
            let at = rng.gen_range(0..bytes.len());
            bytes[at] = rng.gen_range(b' '..=b'~');
        }
        let text = String::from_utf8(bytes).unwrap();
        let r = catch_unwind(|| parse_rotation_answer(&text));
        assert!(
            matches!(
                r,
                Ok(Ok(_))
                    | Ok(Err(PromptError::SchemaViolation { .. }
                        | PromptError::OutOfRange { .. }
                        | PromptError::NoJsonFound))
            ),
            "{text}: {r:?}"
        );
    }
}

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -std::f64::consts::PI..std::f64::consts::PI,
        prop::array::uniform3(-5.0f64..5.0),
    )
        .prop_filter("non-zero axis", |(a, _, _)| a.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|(axis, angle, t)| {
            let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle);
            Pose { rotation: *r.matrix(), translation: Vector3::from(t) }
        })
}

fn frame(width: u32, height: u32, k: Intrinsics, pose: Pose) -> CameraFrame {
    CameraFrame { image: None, width, height, intrinsics: k, pose, depth: DepthMap::Constant(1.0), timestamp: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_round_trip(
        pose in pose_strategy(),
        f in 200.0f64..1500.0,
        aspect in 0.8f64..1.25,
        c in (0.3f64..0.7, 0.3f64..0.7),
        uv in (0.0f64..1000.0, 0.0f64..1000.0),
        depth in 0.1f64..10.0,
    ) {
        let (w, h) = (640u32, 480u32);
        let k = Intrinsics { fx: f, fy: f * aspect, cx: c.0 * w as f64, cy: c.1 * h as f64 };
        let fr = frame(w, h, k, pose);
        let p = unproject_with_depth(&fr, uv.0, uv.1, depth);
        let (u, v, z) = fr.project(&p).unwrap();
        prop_assert!((z - depth).abs() < 1e-9);
        let back = unproject_with_depth(&fr, u, v, z);
        prop_assert!((back - p).norm() < 1e-6, "error {}", (back - p).norm());
    }

    #[test]
    fn guidance_axes_are_right_handed(pose in pose_strategy()) {
        let k = Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0 };
        let fr = frame(640, 480, k, pose);
        let x = guidance_axis_to_world(&fr, GuidanceAxis::X);
        let y = guidance_axis_to_world(&fr, GuidanceAxis::Y);
        let z = guidance_axis_to_world(&fr, GuidanceAxis::Z);
        for a in [x, y, z] {
            prop_assert!((a.norm() - 1.0).abs() < 1e-9);
        }
        prop_assert!(x.dot(&y).abs() < 1e-9 && y.dot(&z).abs() < 1e-9 && z.dot(&x).abs() < 1e-9);
        prop_assert!((x.cross(&y) - z).norm() < 1e-9);
    }

    #[test]
    fn normalized_coordinates_are_resolution_independent(
        pose in pose_strategy(),
        scale in 0.25f64..4.0,
        uv in (0.0f64..1000.0, 0.0f64..1000.0),
        depth in 0.1f64..10.0,
    ) {
        let k = Intrinsics { fx: 600.0, fy: 600.0, cx: 320.0, cy: 240.0 };
        let a = frame(640, 480, k, pose);
        let (w, h) = ((640.0 * scale).round(), (480.0 * scale).round());
        let (sx, sy) = (w / 640.0, h / 480.0);
        let ks = Intrinsics { fx: 600.0 * sx, fy: 600.0 * sy, cx: 320.0 * sx, cy: 240.0 * sy };
        let b = frame(w as u32, h as u32, ks, pose);
        let pa = unproject_with_depth(&a, uv.0, uv.1, depth);
        let pb = unproject_with_depth(&b, uv.0, uv.1, depth);
        prop_assert!((pa - pb).norm() < 1e-9);
    }
}

#[test]
fn principal_ray_is_exact() {
    let k = Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0 };
    let fr = frame(640, 480, k, Pose::identity());
    assert_eq!(unproject_with_depth(&fr, 500.0, 500.0, 2.0), Vector3::new(0.0, 0.0, 2.0));
}
