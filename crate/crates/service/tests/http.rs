mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use arena_core::Track;
use common::server::{boot, choices, Server};
use serde_json::{json, Value};

fn open_arena(s: &Server, who: &str, track: &str, size: usize) -> String {
    let r = s.post("/v1/sessions", Some(who), &json!({ "mode": "arena", "track": track, "size": size }));
    assert_eq!(r.status, 200, "{}", r.text());
    r.json()["session_id"].as_str().unwrap().to_string()
}

fn health(s: &Server) -> Value {
    s.get("/v1/health", None).json()
}

#[test]
fn partial_vote_is_rejected_without_state_change() {
    let (_dir, s) = boot(&[(Track::TextTo3d, 6, 4)]);
    let session = open_arena(&s, "ann-1", "text_to_3d", 3);
    let battle = s.get(&format!("/v1/sessions/{session}/next"), Some("ann-1")).json();
    let before = health(&s);

    let mut three = choices("left_better");
    let obj = three.as_object_mut().unwrap();
    obj.remove("geo_tex_coherence");
    obj.remove("prompt_alignment");
    let r = s.post(
        "/v1/votes",
        Some("ann-1"),
        &json!({ "session_id": session, "pair_id": battle["pair_id"], "choices": three }),
    );
    assert_eq!(r.status, 400);
    let err = r.json();
    assert_eq!(err["code"], "invalid");
    assert_eq!(err["field"], "choices");
    assert!(err["message"].as_str().unwrap().contains("prompt_alignment"));
    assert_eq!(health(&s), before);

    // An unknown dimension name is malformed, also without effect.
    let mut odd = choices("tie");
    odd.as_object_mut().unwrap().insert("colour".into(), json!("tie"));
    let r = s.post("/v1/votes", Some("ann-1"), &json!({ "session_id": session, "pair_id": battle["pair_id"], "choices": odd }));
    assert_eq!((r.status, r.json()["code"].clone()), (400, json!("malformed")));
    assert_eq!(health(&s), before);

    let ok = s.post(
        "/v1/votes",
        Some("ann-1"),
        &json!({ "session_id": session, "pair_id": battle["pair_id"], "choices": choices("left_better") }),
    );
    assert_eq!(ok.status, 200);
    assert_eq!(ok.json()["seq_no"], before["last_seq"].as_u64().unwrap() + 1);
}

#[test]
fn concurrent_voters_get_distinct_consecutive_seqs() {
    let (_dir, s) = boot(&[(Track::TextTo3d, 30, 5), (Track::ImageTo3d, 20, 4)]);
    let s = Arc::new(s);
    let voters = 12;
    let per = 15;
    let sessions: Vec<(String, String)> = (0..voters)
        .map(|i| {
            let who = format!("voter-{i}");
            let track = if i % 2 == 0 { "text_to_3d" } else { "image_to_3d" };
            let session = open_arena(&s, &who, track, per);
            (who, session)
        })
        .collect();
    let start = health(&s)["last_seq"].as_u64().unwrap();

    let handles: Vec<_> = sessions
        .into_iter()
        .map(|(who, session)| {
            let s = Arc::clone(&s);
            std::thread::spawn(move || {
                let mut seqs = Vec::new();
                for k in 0..per {
                    let b = s.get(&format!("/v1/sessions/{session}/next"), Some(&who)).json();
                    let c = ["left_better", "right_better", "tie", "both_bad"][k % 4];
                    let r = s.post(
                        "/v1/votes",
                        Some(&who),
                        &json!({ "session_id": session, "pair_id": b["pair_id"], "choices": choices(c) }),
                    );
                    assert_eq!(r.status, 200, "{}", r.text());
                    seqs.push(r.json()["seq_no"].as_u64().unwrap());
                }
                let done = s.get(&format!("/v1/sessions/{session}/next"), Some(&who));
                assert_eq!((done.status, done.json()["code"].clone()), (410, json!("session_complete")));
                seqs
            })
        })
        .collect();
    let mut all: Vec<u64> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    all.sort_unstable();
    let expected: Vec<u64> = (start + 1..=start + (voters * per) as u64).collect();
    assert_eq!(all, expected);

    let h = health(&s);
    assert_eq!(h["last_seq"].as_u64().unwrap(), start + (voters * per) as u64);
    assert_eq!(h["leaderboard_version"].as_u64().unwrap(), (voters * per) as u64);
    let v = s.get("/v1/leaderboard/verify", None);
    assert_eq!(v.status, 200, "{}", v.text());
}

#[test]
fn reveal_only_after_vote() {
    let (_dir, s) = boot(&[(Track::ImageTo3d, 4, 3)]);
    let session = open_arena(&s, "ann-r", "image_to_3d", 2);
    let b = s.get(&format!("/v1/sessions/{session}/next"), Some("ann-r")).json();
    let pair = b["pair_id"].as_str().unwrap();

    let denied = s.get(&format!("/v1/sessions/{session}/reveal/{pair}"), Some("ann-r"));
    assert_eq!((denied.status, denied.json()["code"].clone()), (403, json!("denied")));
    assert!(!denied.text().contains("i-g0"));

    let other = s.get(&format!("/v1/sessions/{session}/next"), Some("someone-else"));
    assert_eq!(other.status, 403);

    let r = s.post("/v1/votes", Some("ann-r"), &json!({ "session_id": session, "pair_id": pair, "choices": choices("tie") }));
    assert_eq!(r.status, 200);
    let shown = s.get(&format!("/v1/sessions/{session}/reveal/{pair}"), Some("ann-r")).json();
    let gens: BTreeSet<&str> =
        [&shown["left"]["generator_id"], &shown["right"]["generator_id"]].iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(gens.len(), 2);
    assert!(gens.iter().all(|g| g.starts_with("i-g")));
}

#[test]
fn battles_are_anonymous_and_renders_resolve() {
    let (_dir, s) = boot(&[(Track::ImageTo3d, 5, 3)]);
    let session = open_arena(&s, "ann-a", "image_to_3d", 3);
    let r = s.get(&format!("/v1/sessions/{session}/next"), Some("ann-a"));
    let text = r.text();
    for needle in ["i-g0", "Model I", ".mp4", "ip-0"] {
        assert!(!text.contains(needle), "battle leaks {needle}: {text}");
    }
    let b = r.json();
    assert_eq!(b["position"], 1);
    assert_eq!(b["total"], 3);
    let handle = b["left_renders"]["rgb"].as_str().unwrap();
    let file = s.get(handle, None);
    assert_eq!(file.status, 200);
    assert_eq!(file.headers["content-type"], "video/mp4");
    assert!(file.body.ends_with(b"frame data"));

    let image = s.get(b["prompt"]["image"].as_str().unwrap(), None);
    assert_eq!((image.status, image.headers["content-type"].to_str().unwrap()), (200, "image/png"));

    let bad_view = s.get(&handle.replace("/rgb", "/depth"), None);
    assert_eq!((bad_view.status, bad_view.json()["field"].clone()), (400, json!("view")));
}

#[test]
fn structured_errors() {
    let (_dir, s) = boot(&[(Track::TextTo3d, 4, 3)]);
    let r = s.get("/v1/sessions/nope/next", Some("x"));
    assert_eq!((r.status, r.json()["code"].clone()), (404, json!("not_found")));

    let r = s.post("/v1/sessions", None, &json!({ "mode": "arena", "track": "text_to_3d" }));
    assert_eq!((r.status, r.json()["field"].clone()), (400, json!("x-annotator-id")));

    let r = s.post("/v1/sessions", Some("x"), &json!({ "mode": "arena", "track": "sound_to_3d" }));
    assert_eq!((r.status, r.json()["code"].clone()), (400, json!("malformed")));

    let r = s.post("/v1/sessions", Some("x"), &json!({ "mode": "pack", "pack_id": "pack-9999" }));
    assert_eq!(r.status, 404);

    let session = open_arena(&s, "x", "text_to_3d", 2);
    let r = s.post(
        "/v1/votes",
        Some("x"),
        &json!({ "session_id": session, "pair_id": "arena-0-000", "choices": choices("tie") }),
    );
    assert_eq!((r.status, r.json()["field"].clone()), (400, json!("pair_id")));

    let r = s.get("/v1/leaderboard?dimension=colour", None);
    assert_eq!((r.status, r.json()["field"].clone()), (400, json!("dimension")));

    let r = s.get("/v1/no/such/thing", None);
    assert_eq!((r.status, r.json()["code"].clone()), (404, json!("not_found")));
}

#[test]
fn scores_reports_and_catalog_growth() {
    let (dir, s) = boot(&[(Track::TextTo3d, 3, 3)]);
    let score = json!({
        "asset_id": "tp-0000.t-g01",
        "annotator_id": "rater-1",
        "raw_scores": { "geo_plausibility": 7, "geo_details": 6, "tex_quality": 5, "geo_tex_coherence": 7, "prompt_alignment": 8 },
        "ranges": {
            "geo_plausibility": { "lo": 0, "hi": 9 }, "geo_details": { "lo": 0, "hi": 9 }, "tex_quality": { "lo": 0, "hi": 9 },
            "geo_tex_coherence": { "lo": 0, "hi": 9 }, "prompt_alignment": { "lo": 0, "hi": 9 }
        },
        "timestamp": 1
    });
    let r = s.post("/v1/scores", Some("rater-2"), &score);
    assert_eq!((r.status, r.json()["field"].clone()), (400, json!("annotator_id")));
    let r = s.post("/v1/scores", Some("rater-1"), &score);
    assert_eq!(r.status, 200, "{}", r.text());

    let report = s.get("/v1/reports/validation", None).json();
    assert_eq!(report["final_dimension_scores"], 5);
    let text = s.get("/v1/reports/validation?format=text", None).text();
    assert!(text.contains("rater-1"));
    let metrics = s.get("/v1/reports/metrics", None).json();
    assert_eq!(metrics["alignment"]["rows"], json!([]));

    let mut bigger = common::manifest(&[(Track::TextTo3d, 5, 3)]);
    bigger.version = 1;
    let r = s.post("/v1/admin/catalog", None, &serde_json::to_value(&bigger).unwrap());
    assert_eq!(r.status, 200);
    assert_eq!(r.json()["appended"], 2 + 2 * 3);
    drop(dir);
}

#[test]
fn restart_resumes_from_log() {
    let (dir, mut s) = boot(&[(Track::TextTo3d, 6, 4)]);
    let session = open_arena(&s, "ann-z", "text_to_3d", 4);
    for _ in 0..2 {
        let b = s.get(&format!("/v1/sessions/{session}/next"), Some("ann-z")).json();
        s.post("/v1/votes", Some("ann-z"), &json!({ "session_id": session, "pair_id": b["pair_id"], "choices": choices("left_better") }));
    }
    let before = health(&s);
    s.kill();
    let s = Server::start(
        &dir.path().join("events.log"),
        &[("ARENA_CATALOG", &dir.path().join("catalog.json")), ("ARENA_RENDER_ROOT", Path::new("."))],
    );
    assert_eq!(health(&s), before);
    let b = s.get(&format!("/v1/sessions/{session}/next"), Some("ann-z")).json();
    assert_eq!(b["position"], 3);
}
