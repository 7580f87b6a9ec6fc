//! Direction oracles: anything that, given the current scene and a query
//! point, names the compass direction the tree should grow in.
//!
//! Four implementations share one trait so the planner cannot tell them
//! apart: a white-box geometric oracle (ground truth for tests and benches),
//! a noisy wrapper around it, a tape replayer, and a remote vision-chat
//! client. [`RecordingOracle`] wraps any of them and captures a session that
//! [`ReplayOracle`] can play back.

mod prompt;
mod remote;

use std::io::{BufRead, Write};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{clip_segment, Point2, Rect};
use crate::snapshot::SceneView;
pub use crate::vlm_planner::CompassDirection;

pub use prompt::{answer_instruction, build_prompt, few_shot_examples, FewShotExample, Prompt};
pub use remote::{RemoteConfig, RemoteConfigError, RemoteOracle};

/// Maximum number of past (point, direction) pairs quoted in a prompt.
pub const HISTORY_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    #[serde(rename = "cot")]
    CoT,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::ZeroShot, PromptMode::FewShot, PromptMode::CoT];
}

impl std::str::FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "zeroshot" => Ok(PromptMode::ZeroShot),
            "fewshot" => Ok(PromptMode::FewShot),
            "cot" => Ok(PromptMode::CoT),
            _ => Err(format!("unknown prompt mode `{s}` (zero-shot, few-shot, cot)")),
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::FewShot => "few-shot",
            PromptMode::CoT => "cot",
        })
    }
}

/// Everything an oracle may look at for one decision.
#[derive(Debug)]
pub struct OracleQuery<'a> {
    pub scene: &'a SceneView<'a>,
    /// The selected leaf.
    pub query_point: Point2,
    pub goal_centroid: Point2,
    /// Earlier (point, answer) pairs of this run, oldest first.
    pub history: &'a [(Point2, CompassDirection)],
}

impl OracleQuery<'_> {
    /// Stable fingerprint of the non-image part of the query.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |p: Point2| {
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
        };
        put(self.query_point);
        put(self.goal_centroid);
        for (p, _) in self.history {
            put(*p);
        }
        for (_, d) in self.history {
            h.update(d.token().as_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub direction: CompassDirection,
    pub raw_response: String,
    /// Seconds.
    pub latency: f64,
    /// Prompting regime, for language-model oracles.
    pub prompt_mode: Option<PromptMode>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("could not parse a direction from the response: {0:?}")]
    Parse(String),
    #[error("rate limited: {0}")]
    RateLimit(String),
    #[error("replay tape exhausted after {0} answers")]
    TapeExhausted(usize),
}

pub trait DirectionOracle: Send + Sync {
    fn answer(&self, query: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError>;
}

impl<T: DirectionOracle + ?Sized> DirectionOracle for &T {
    fn answer(&self, query: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        (**self).answer(query)
    }
}

impl<T: DirectionOracle + ?Sized> DirectionOracle for Box<T> {
    fn answer(&self, query: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        (**self).answer(query)
    }
}

fn direction_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Two-letter tokens first so the alternation behaves like a longest match.
    RE.get_or_init(|| Regex::new(r"(?i)DIRECTION:\s*(NE|NW|SE|SW|N|E|S|W)").expect("valid regex"))
}

/// Extracts the last `DIRECTION: <TOKEN>` occurrence (case-insensitive).
pub fn parse_direction(text: &str) -> Result<CompassDirection, OracleError> {
    direction_regex()
        .captures_iter(text)
        .last()
        .and_then(|c| c[1].parse().ok())
        .ok_or_else(|| OracleError::Parse(text.chars().take(200).collect()))
}

/// White-box oracle: marches a ray of fixed length in each of the eight
/// compass directions and picks the one whose farthest collision-free point
/// makes the most progress toward the goal.
#[derive(Debug, Clone)]
pub struct GeometricOracle {
    obstacles: Vec<Rect>,
    ray_length: f64,
}

impl GeometricOracle {
    pub fn new(obstacles: &[Rect], ray_length: f64) -> Self {
        GeometricOracle {
            obstacles: obstacles.to_vec(),
            ray_length,
        }
    }

    /// Farthest point along the ray before the first obstacle contact.
    pub fn ray_reach(&self, from: Point2, direction: CompassDirection) -> Point2 {
        let end = from + Point2::from_polar(self.ray_length, direction.to_angle());
        let t = self
            .obstacles
            .iter()
            .filter_map(|o| clip_segment(from, end, o).map(|(t0, _)| t0))
            .fold(1.0_f64, f64::min);
        from + (end - from) * t
    }

    /// Progress score of every direction, in [`CompassDirection::ALL`] order.
    pub fn scores(&self, from: Point2, goal: Point2) -> [f64; 8] {
        let base = from.dist(goal);
        CompassDirection::ALL.map(|d| base - self.ray_reach(from, d).dist(goal))
    }

    pub fn decide(&self, from: Point2, goal: Point2) -> CompassDirection {
        let scores = self.scores(from, goal);
        let mut best = 0;
        for k in 1..8 {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        CompassDirection::ALL[best]
    }
}

impl DirectionOracle for GeometricOracle {
    fn answer(&self, q: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        let started = Instant::now();
        let direction = self.decide(q.query_point, q.goal_centroid);
        Ok(OracleAnswer {
            direction,
            raw_response: format!("DIRECTION: {direction}"),
            latency: started.elapsed().as_secs_f64(),
            prompt_mode: None,
        })
    }
}

/// Geometric oracle that lies with probability `p_wrong`, answering uniformly
/// among the seven other directions.
#[derive(Debug)]
pub struct NoisyOracle {
    inner: GeometricOracle,
    p_wrong: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl NoisyOracle {
    pub fn new(inner: GeometricOracle, p_wrong: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&p_wrong), "p_wrong must be a probability");
        NoisyOracle {
            inner,
            p_wrong,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn p_wrong(&self) -> f64 {
        self.p_wrong
    }
}

impl DirectionOracle for NoisyOracle {
    fn answer(&self, q: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        let mut a = self.inner.answer(q)?;
        let mut rng = self.rng.lock().expect("noisy oracle rng poisoned");
        let u: f64 = rng.random();
        if u < self.p_wrong {
            let others: Vec<CompassDirection> = CompassDirection::ALL
                .into_iter()
                .filter(|&d| d != a.direction)
                .collect();
            a.direction = others[rng.random_range(0..others.len())];
            a.raw_response = format!("DIRECTION: {}", a.direction);
        }
        Ok(a)
    }
}

/// Plays back a recorded list of answers in order. Recorded failures replay
/// as transport errors so the planner takes the same fallback branch.
#[derive(Debug)]
pub struct ReplayOracle {
    tape: Vec<Result<OracleAnswer, String>>,
    cursor: Mutex<usize>,
}

impl ReplayOracle {
    pub fn new(tape: Vec<OracleAnswer>) -> Self {
        ReplayOracle {
            tape: tape.into_iter().map(Ok).collect(),
            cursor: Mutex::new(0),
        }
    }

    pub fn from_session(entries: &[SessionEntry]) -> Self {
        let tape = entries
            .iter()
            .map(|e| match (&e.answer, &e.error) {
                (Some(a), _) => Ok(a.clone()),
                (None, err) => Err(err.clone().unwrap_or_default()),
            })
            .collect();
        ReplayOracle {
            tape,
            cursor: Mutex::new(0),
        }
    }

    pub fn remaining(&self) -> usize {
        self.tape.len() - *self.cursor.lock().expect("cursor poisoned")
    }
}

impl DirectionOracle for ReplayOracle {
    fn answer(&self, _q: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        let mut cur = self.cursor.lock().expect("cursor poisoned");
        let a = self
            .tape
            .get(*cur)
            .cloned()
            .ok_or(OracleError::TapeExhausted(self.tape.len()))?;
        *cur += 1;
        a.map_err(|e| OracleError::Transport(format!("recorded failure: {e}")))
    }
}

/// One line of a recorded oracle session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub query: String,
    pub query_point: Point2,
    pub goal_centroid: Point2,
    /// Absent when the call failed.
    pub answer: Option<OracleAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Captures every answer of the wrapped oracle, failures included.
pub struct RecordingOracle<O> {
    inner: O,
    log: Mutex<Vec<SessionEntry>>,
}

impl<O: DirectionOracle> RecordingOracle<O> {
    pub fn new(inner: O) -> Self {
        RecordingOracle {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<SessionEntry> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn into_entries(self) -> Vec<SessionEntry> {
        self.log.into_inner().expect("log poisoned")
    }
}

impl<O: DirectionOracle> DirectionOracle for RecordingOracle<O> {
    fn answer(&self, q: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        let out = self.inner.answer(q);
        self.log.lock().expect("log poisoned").push(SessionEntry {
            query: q.digest(),
            query_point: q.query_point,
            goal_centroid: q.goal_centroid,
            answer: out.as_ref().ok().cloned(),
            error: out.as_ref().err().map(ToString::to_string),
        });
        out
    }
}

pub fn write_session<W: Write>(mut w: W, entries: &[SessionEntry]) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_session<R: BufRead>(r: R) -> std::io::Result<Vec<SessionEntry>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}
