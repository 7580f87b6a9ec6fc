mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use common::{chat_reply, user_text, MockServer};
use guided_rrt::env::{Env, Point2, Rect};
use guided_rrt::oracle::{DirectionOracle, OracleError, OracleQuery, PromptMode, RemoteOracle};
use guided_rrt::planner::{PlannerConfig, Tree};
use guided_rrt::snapshot::SceneView;
use guided_rrt::vlm_planner::CompassDirection;
use guided_rrt::{plan_vlm_rrt, PlanStatus};

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
    Rect::new(x0, y0, x1, y1).unwrap()
}

fn env() -> Env {
    Env::new(
        rect(0.0, 0.0, 500.0, 500.0),
        rect(20.0, 20.0, 40.0, 40.0),
        rect(400.0, 400.0, 420.0, 420.0),
        vec![rect(200.0, 150.0, 260.0, 300.0)],
    )
    .unwrap()
}

fn ask(oracle: &RemoteOracle) -> Result<guided_rrt::oracle::OracleAnswer, OracleError> {
    let env = env();
    let tree = Tree::new(env.initial_position());
    let scene = SceneView::lazy(&env, &tree, Some(0), 128);
    let history = [(Point2::new(30.0, 30.0), CompassDirection::NE)];
    oracle.answer(&OracleQuery {
        scene: &scene,
        query_point: env.initial_position(),
        goal_centroid: env.goal_centroid(),
        history: &history,
    })
}

/// Replies according to the prompt style it detects in the request.
fn mode_aware(_: usize, req: &serde_json::Value) -> (u16, String) {
    let text = user_text(req);
    let reply = if text.contains("Worked examples") {
        "Judging by the examples, the open side is north-east.\nDIRECTION: NE"
    } else if text.contains("Reason step by step") {
        "1. One obstacle east of the leaf, DIRECTION: E looks blocked.\n2. Goal is up and right.\n3. Going over the top works.\nDIRECTION: N\nThat is my answer."
    } else {
        "DIRECTION: SE"
    };
    (200, chat_reply(reply))
}

#[test]
fn all_prompt_modes_round_trip() {
    let server = MockServer::start(mode_aware);
    for (mode, expected) in [
        (PromptMode::ZeroShot, CompassDirection::SE),
        (PromptMode::FewShot, CompassDirection::NE),
        (PromptMode::CoT, CompassDirection::N),
    ] {
        let mut cfg = server.config();
        cfg.mode = mode;
        let a = ask(&RemoteOracle::new(cfg)).unwrap();
        assert_eq!(a.direction, expected, "{mode}");
        assert_eq!(a.prompt_mode, Some(mode));
        assert!(a.raw_response.contains("DIRECTION:"));
    }
    let reqs = server.requests();
    assert_eq!(reqs.len(), 3);
    for r in &reqs {
        assert_eq!(r["model"], "mock-vision");
        assert_eq!(r["messages"][0]["role"], "system");
        assert_eq!(r["messages"][1]["role"], "user");
        let text = user_text(r);
        assert!(text.trim_end().ends_with(&guided_rrt::oracle::answer_instruction()));
        assert!(text.contains("at (30.0, 30.0): NE"), "history is rendered");
        let url = r["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        let b64 = url.strip_prefix("data:image/png;base64,").expect("png data url");
        let png = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
}

#[test]
fn last_direction_in_prose_wins() {
    let server = MockServer::start(|_, _| {
        (
            200,
            chat_reply("Going west is blocked. Having weighed it, direction: e -- the corridor is open.\nThanks!"),
        )
    });
    assert_eq!(
        ask(&RemoteOracle::new(server.config())).unwrap().direction,
        CompassDirection::E
    );
}

#[test]
fn garbage_three_times_is_parse_error() {
    let server = MockServer::start(|_, _| (200, chat_reply("I am not sure, maybe up-ish?")));
    let err = ask(&RemoteOracle::new(server.config())).unwrap_err();
    assert!(matches!(err, OracleError::Parse(_)), "{err:?}");
    let temps: Vec<f64> = server
        .requests()
        .iter()
        .map(|r| r["temperature"].as_f64().unwrap())
        .collect();
    assert_eq!(temps, [0.0, 0.7, 0.7]);
}

#[test]
fn server_errors_exhaust_as_transport() {
    let server = MockServer::start(|_, _| (500, "boom".into()));
    let err = ask(&RemoteOracle::new(server.config())).unwrap_err();
    assert!(
        matches!(err, OracleError::Transport(ref m) if m.contains("500")),
        "{err:?}"
    );
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn rate_limit_then_success() {
    let server = MockServer::start(|i, _| {
        if i == 0 {
            (429, r#"{"error":"slow down"}"#.into())
        } else {
            (200, chat_reply("DIRECTION: NW"))
        }
    });
    assert_eq!(
        ask(&RemoteOracle::new(server.config())).unwrap().direction,
        CompassDirection::NW
    );
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn missing_key_is_rejected_by_server() {
    let server = MockServer::start(|_, _| (200, chat_reply("DIRECTION: N")));
    let mut cfg = server.config();
    cfg.api_key = None;
    cfg.max_attempts = 1;
    assert!(matches!(ask(&RemoteOracle::new(cfg)), Err(OracleError::Transport(m)) if m.contains("401")));
}

#[test]
fn malformed_body_is_transport_error() {
    let server = MockServer::start(|_, _| (200, r#"{"choices": []}"#.into()));
    let mut cfg = server.config();
    cfg.max_attempts = 1;
    assert!(matches!(ask(&RemoteOracle::new(cfg)), Err(OracleError::Transport(_))));
}

#[test]
fn in_flight_requests_are_capped() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (l, p) = (Arc::clone(&live), Arc::clone(&peak));
    let server = MockServer::start(move |_, _| {
        let now = l.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40));
        l.fetch_sub(1, Ordering::SeqCst);
        (200, chat_reply("DIRECTION: S"))
    });
    let mut cfg = server.config();
    cfg.max_in_flight = 2;
    let oracle = RemoteOracle::new(cfg);
    std::thread::scope(|s| {
        for _ in 0..6 {
            s.spawn(|| assert_eq!(ask(&oracle).unwrap().direction, CompassDirection::S));
        }
    });
    assert_eq!(server.requests().len(), 6);
    assert!(peak.load(Ordering::SeqCst) <= 2, "peak {}", peak.load(Ordering::SeqCst));
}

#[test]
fn planner_degrades_to_uniform_when_oracle_keeps_failing() {
    let server = MockServer::start(|_, _| (200, chat_reply("no idea")));
    let oracle = RemoteOracle::new(server.config());
    let cfg = PlannerConfig {
        gamma: 1.0,
        max_iterations: 4,
        ..Default::default()
    };
    let plan = plan_vlm_rrt(&env(), &cfg, &oracle);
    assert_eq!(plan.status, PlanStatus::IterationLimit);
    assert_eq!(plan.iterations_used, 4);
    assert_eq!(plan.vlm_queries, 4);
    assert_eq!(plan.oracle_failures, 4);
    assert!(plan.tree_size > 1, "uniform fallback still grows the tree");
    assert_eq!(server.requests().len(), 12);
}
