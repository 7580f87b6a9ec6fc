#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use guided_rrt::oracle::RemoteConfig;
use serde_json::{json, Value};

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server that answers every POST with the handler's
/// `(status, body)` and keeps the parsed request bodies.
pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Value>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                let log = Arc::clone(&log);
                thread::spawn(move || serve(stream, handler.as_ref(), &log));
            }
        });
        MockServer { url, requests }
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }

    pub fn config(&self) -> RemoteConfig {
        let mut cfg = RemoteConfig::new(self.url.clone(), "mock-vision");
        cfg.api_key = Some("test-key".into());
        cfg.timeout = Duration::from_secs(10);
        cfg.rate_limit_backoff = Duration::from_millis(10);
        cfg
    }
}

/// Serves one request per connection (`Connection: close`).
fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Value>>) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut writer = stream;
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut length = 0usize;
    let mut authorized = false;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 {
            return;
        }
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (name, value) = h.split_once(':').unwrap_or((h, ""));
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap_or(0),
            "authorization" => authorized = value.trim() == "Bearer test-key",
            _ => {}
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let index = {
        let mut l = log.lock().unwrap();
        l.push(request.clone());
        l.len() - 1
    };
    let (status, reply) = if authorized {
        handler(index, &request)
    } else {
        (401, "missing bearer token".into())
    };
    let response = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
    let _ = writer.write_all(response.as_bytes());
    let _ = writer.flush();
}

/// Chat-completions body carrying `content` as the assistant message.
pub fn chat_reply(content: &str) -> String {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

/// The text part of the user message in a request body.
pub fn user_text(request: &Value) -> String {
    request["messages"][1]["content"][0]["text"]
        .as_str()
        .unwrap_or_default()
        .to_string()
}

/// Slow exact reference for small strictly convex QPs: try every working set
/// of at most `n` rows, solve the equality-constrained problem by a dense KKT
/// system and keep the best primal-feasible point.
pub fn enumerate_qp(qp: &guided_rrt::tracker::Qp) -> (nalgebra::DVector<f64>, f64) {
    use nalgebra::{DMatrix, DVector};
    let (n, m) = (qp.dim(), qp.rows());
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut subset: Vec<usize> = Vec::new();
    fn visit(
        start: usize,
        subset: &mut Vec<usize>,
        n: usize,
        m: usize,
        qp: &guided_rrt::tracker::Qp,
        best: &mut Option<(DVector<f64>, f64)>,
    ) {
        let k = subset.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.f));
        for (r, &row) in subset.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = qp.g[(row, j)];
                kkt[(j, n + r)] = qp.g[(row, j)];
            }
            rhs[n + r] = qp.bound[row];
        }
        if let Some(sol) = kkt.lu().solve(&rhs) {
            let u = sol.rows(0, n).into_owned();
            let slack = &qp.bound - &qp.g * &u;
            if slack.iter().all(|&s| s >= -1e-9) {
                let obj = qp.objective(&u);
                if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                    *best = Some((u, obj));
                }
            }
        }
        if k == n {
            return;
        }
        for i in start..m {
            subset.push(i);
            visit(i + 1, subset, n, m, qp, best);
            subset.pop();
        }
    }
    visit(0, &mut subset, n, m, qp, &mut best);
    best.expect("u = 0 is feasible, so some working set is")
}

/// Random strictly convex QP with `u = 0` strictly feasible.
pub fn random_qp<R: rand::Rng>(rng: &mut R, n: usize, m: usize) -> guided_rrt::tracker::Qp {
    use nalgebra::{DMatrix, DVector};
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
    let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let bound = DVector::from_fn(m, |_, _| rng.random_range(0.2..3.0));
    guided_rrt::tracker::Qp {
        h,
        f,
        constant: 0.0,
        g,
        bound,
    }
}
