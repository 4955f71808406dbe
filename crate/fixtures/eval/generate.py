"""Writes the evaluation fixture: eight task logs (51 planned steps), two
localization logs (one per model profile) and the matching labels file.

Usage: python3 generate.py [OUT_DIR]
"""
import hashlib
import json
import os
import sys

OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))

TASKS = [
    ("battery", "How do I change the battery in a game controller?", 7),
    ("airpods", "How do I connect AirPods to a Windows computer?", 6),
    ("egg", "How do I cook an egg?", 7),
    ("tea", "How do I brew loose leaf tea?", 6),
    ("bike", "How do I inflate a bike tire?", 6),
    ("slides", "How do I add a transition in a slide deck?", 7),
    ("plant", "How do I repot a plant?", 6),
    ("printer", "How do I replace a printer cartridge?", 6),
]
STEPS = sum(n for _, _, n in TASKS)
assert STEPS == 51

# Incorrect steps per metric; every failure falls on one of the last 13 steps
# so the conjunction (all applicable marks correct) holds for 38 steps.
FAILS = {"textInstruction": 6, "visualType": 10, "keyComponent": 5, "imageRelevance": 12, "verification": 9}
GUIDANCE_FAILS = {"targetConfigPreview": 2, "motion": 4, "staticObject": 6, "action": 5}
FAILING = list(range(38, 51))


def digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


def event(seq, kind, payload, client_seq=None):
    e = {"seq": seq, "timestamp": seq * 0.5}
    if client_seq is not None:
        e["client_seq"] = client_seq
    e.update({"kind": kind, "payload": payload})
    return e


def applicable(i):
    # ShapePreview steps preview the target configuration, the rest outline a
    # static object; arrows carry motion, overlays carry the action.
    tcp = i % 4 == 0
    motion = i % 2 == 1 and i != 49
    action = i % 3 != 0 and i != 50
    return {"targetConfigPreview": tcp, "motion": motion, "staticObject": not tcp, "action": action}


def step_labels():
    labels = []
    for i in range(STEPS):
        lab = {k: True for k in FAILS}
        for k, ok in applicable(i).items():
            lab[k] = True if ok else None
        labels.append(lab)
    cursor = 0
    for k, n in list(FAILS.items()) + list(GUIDANCE_FAILS.items()):
        placed = 0
        tries = 0
        while placed < n:
            i = FAILING[cursor % len(FAILING)]
            cursor += 1
            tries += 1
            assert tries < 200, k
            if labels[i][k] is True:
                labels[i][k] = False
                placed += 1
    for i in FAILING:
        assert any(v is False for v in labels[i].values()), i
    return labels


def write_jsonl(path, events):
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps(e, separators=(",", ":")) + "\n")


def task_logs(labels, logs_dir):
    out = []
    i = 0
    for session, prompt, n in TASKS:
        steps = []
        for k in range(n):
            text = f"{session} step {k + 1}"
            steps.append({
                "id": k, "index": k, "instruction": text, "verification_rule": text,
                "step_type": "R2R", "status": "Active" if k == 0 else "Pending",
                "origin": {"kind": "Original"},
            })
        events = [
            event(0, "SessionStarted", {"session_id": session, "prompt": prompt}, 1),
            event(1, "ModelCalled", {"prompt": "InitialPlan", "context_hash": digest(session), "profile": "pro",
                                     "latency": 20.0, "response": None, "error": None}, 1),
            event(2, "PlanReady", {"goal": prompt, "steps": steps, "active_index": 0, "warnings": []}, 1),
        ]
        write_jsonl(os.path.join(logs_dir, f"{session}.jsonl"), events)
        for k in range(n):
            lab = {"session": session, "step": k}
            lab.update({key: v for key, v in labels[i].items() if v is not None})
            out.append(lab)
            i += 1
    return out


# Calls per localization type and the mean latency of each type in seconds.
PROFILES = {
    "flash": {
        "TargetConfigPreview": (1, 1, 2.8456),
        "Translation": (11, 7, 2.8144),
        "Rotation": (2, 1, 3.6456),
        "StaticObject": (1, 1, 3.8256),
        "Tool": (15, 6, 4.6456),
        "Gesture": (7, 6, 2.6756),
    },
    "pro": {
        "TargetConfigPreview": (1, 1, 20.8344),
        "Translation": (35, 29, 16.1856),
        "Rotation": (36, 36, 20.2256),
        "StaticObject": (2, 2, 23.2944),
        "Tool": (101, 67, 28.7244),
        "Gesture": (101, 71, 19.8944),
    },
}


def jitter(n):
    """Zero-sum offsets so each type's mean is exact."""
    offs = []
    for k in range(n // 2):
        d = 0.1 * (1 + k % 3)
        offs += [d, -d]
    if n % 2:
        offs.append(0.0)
    return offs


def localization_logs(logs_dir):
    out = []
    for profile, types in PROFILES.items():
        session = f"loc-{profile}"
        events = [event(0, "SessionStarted", {"session_id": session, "prompt": "localization benchmark"}, 1)]
        seq = 1
        for ty, (calls, correct, mean) in types.items():
            for k, off in enumerate(jitter(calls)):
                h = digest(f"{session}:{seq}")
                kind = "RotationLocalize" if ty == "Rotation" else "TransformLocalize"
                events.append(event(seq, "ModelCalled", {
                    "prompt": kind, "context_hash": h, "profile": profile,
                    "latency": round(mean + off, 4), "response": None, "error": None}))
                out.append({"session": session, "seq": seq, "type": ty, "correct": k < correct, "contextHash": h})
                seq += 1
        write_jsonl(os.path.join(logs_dir, f"{session}.jsonl"), events)
    return out


def main():
    logs_dir = os.path.join(OUT, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    labels = {"steps": task_logs(step_labels(), logs_dir), "localization": localization_logs(logs_dir)}
    with open(os.path.join(OUT, "labels.json"), "w") as f:
        json.dump(labels, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
