use std::fmt::Write as _;

use serde::Serialize;

use super::{OracleQuery, PromptMode, HISTORY_LIMIT};
use crate::env::{Point2, Rect};
use crate::snapshot::{color_name, legend};
use crate::vlm_planner::CompassDirection;

/// A fully rendered request for a vision-chat model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    #[serde(skip)]
    pub image_png: Vec<u8>,
}

/// A worked example shown to the model in few-shot mode. The answers are
/// checked against [`super::GeometricOracle`] with a 30 m ray in the tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExample {
    pub title: &'static str,
    pub leaf: Point2,
    pub goal: Point2,
    pub obstacles: Vec<Rect>,
    pub answer: CompassDirection,
}

fn r(a: f64, b: f64, c: f64, d: f64) -> Rect {
    Rect::new(a, b, c, d).expect("exemplar rect")
}

pub fn few_shot_examples() -> Vec<FewShotExample> {
    use CompassDirection::*;
    let p = Point2::new;
    vec![
        FewShotExample {
            title: "open field, goal straight ahead",
            leaf: p(100.0, 100.0),
            goal: p(300.0, 100.0),
            obstacles: vec![],
            answer: E,
        },
        FewShotExample {
            title: "open field, goal on a diagonal",
            leaf: p(100.0, 100.0),
            goal: p(250.0, 260.0),
            obstacles: vec![],
            answer: NE,
        },
        FewShotExample {
            title: "single obstacle in front of the leaf",
            leaf: p(100.0, 100.0),
            goal: p(300.0, 180.0),
            obstacles: vec![r(110.0, 40.0, 140.0, 115.0)],
            answer: NE,
        },
        FewShotExample {
            title: "narrow corridor between two obstacles",
            leaf: p(100.0, 100.0),
            goal: p(300.0, 100.0),
            obstacles: vec![r(108.0, 60.0, 160.0, 96.0), r(108.0, 104.0, 160.0, 140.0)],
            answer: E,
        },
        FewShotExample {
            title: "several obstacles, detour to the south",
            leaf: p(200.0, 200.0),
            goal: p(320.0, 170.0),
            obstacles: vec![
                r(204.0, 185.0, 240.0, 260.0),
                r(150.0, 210.0, 230.0, 260.0),
                r(250.0, 120.0, 270.0, 160.0),
            ],
            answer: SE,
        },
    ]
}

fn fmt_point(p: Point2) -> String {
    format!("({:.1}, {:.1})", p.x, p.y)
}

fn token_list() -> String {
    CompassDirection::ALL.map(|d| d.token()).join(", ")
}

const SYSTEM: &str = "You are the navigation assistant of a firefighting drone. \
You look at a top-down map of the operating area and advise in which compass \
direction a motion planner should grow its exploration tree so that it reaches \
the goal region quickly while staying clear of obstacles. North is up and east \
is to the right in the image.";

/// Output-format clause; every prompt ends with it.
pub fn answer_instruction() -> String {
    format!(
        "Finish your reply with one final line of the form DIRECTION: <TOKEN>, \
         where <TOKEN> is exactly one of {}.",
        token_list()
    )
}

pub fn build_prompt(q: &OracleQuery<'_>, mode: PromptMode) -> Prompt {
    let snap = q.scene.snapshot();
    let mut u = String::new();

    u.push_str("Task: pick the single compass direction in which the tree should grow from the selected leaf node. ");
    u.push_str("Prefer directions that bring the tree closer to the goal region without running into obstacles.\n\n");

    u.push_str("Map legend:\n");
    for (role, rgb) in legend() {
        let _ = writeln!(u, "- {}: {}", color_name(rgb), role.describe());
    }

    let (qx, qy) = snap.pixel_index(q.query_point);
    let (gx, gy) = snap.pixel_index(q.goal_centroid);
    let _ = write!(
        u,
        "\nCurrent state:\n- image size: {} x {} pixels\n- selected leaf: {} m, pixel ({qx}, {qy})\n- goal center: {} m, pixel ({gx}, {gy})\n",
        snap.width,
        snap.height,
        fmt_point(q.query_point),
        fmt_point(q.goal_centroid),
    );
    let recent = &q.history[q.history.len().saturating_sub(HISTORY_LIMIT)..];
    if recent.is_empty() {
        u.push_str("- previous advice: none\n");
    } else {
        u.push_str("- previous advice (oldest first):\n");
        for (p, d) in recent {
            let _ = writeln!(u, "  - at {}: {}", fmt_point(*p), d.token());
        }
    }
    let _ = writeln!(u, "\nLegal direction tokens: {}.", token_list());

    match mode {
        PromptMode::ZeroShot => {}
        PromptMode::FewShot => {
            u.push_str("\nWorked examples (coordinates in meters, obstacles as x-range times y-range):\n");
            for (k, ex) in few_shot_examples().iter().enumerate() {
                let obstacles = if ex.obstacles.is_empty() {
                    "none".to_string()
                } else {
                    ex.obstacles
                        .iter()
                        .map(|o| o.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                let _ = write!(
                    u,
                    "\nExample {} ({}):\nselected leaf {}; goal center {}; obstacles: {}.\nAnswer: {}\n",
                    k + 1,
                    ex.title,
                    fmt_point(ex.leaf),
                    fmt_point(ex.goal),
                    obstacles,
                    ex.answer.token(),
                );
            }
        }
        PromptMode::CoT => {
            u.push_str("\nReason step by step before answering:\n");
            u.push_str("1. Obstacle identification: list the obstacles near the selected leaf and where they are.\n");
            u.push_str("2. Relative position analysis: describe where the goal lies relative to the leaf.\n");
            u.push_str("3. Path feasibility evaluation: for the candidate directions, say whether a short move is blocked and which one makes the most progress.\n");
        }
    }

    u.push('\n');
    u.push_str(&answer_instruction());

    Prompt {
        system: SYSTEM.to_string(),
        user: u,
        image_png: snap.to_png(),
    }
}
