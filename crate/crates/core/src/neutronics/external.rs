//! Line-delimited JSON protocol for out-of-process evaluators.
//!
//! Each request is one JSON object on its own line:
//!
//! ```text
//! {"id": 0, "layout": "ffff...\n...", "fidelity": "high", "seed": 1}
//! ```
//!
//! and the evaluator answers each request, in order, with one line:
//!
//! ```text
//! {"id": 0, "k_eff": 1.05, "fq": 1.31, "fdh": 1.18, "pin_power": [264 floats]}
//! ```
//!
//! `pin_power` lists the fuel-bearing cells in raster order. A worker may
//! instead answer `{"id": 0, "error": "..."}`; that, a malformed line, or the
//! process exiting all count as a failed evaluation for that request.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::lattice::{LatticeLayout, FREE_CELLS};

use super::{EvalRequest, Evaluator, FidelityTier, NeutronicsError, NeutronicsResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: u64,
    pub layout: String,
    pub fidelity: FidelityTier,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResult {
    pub id: u64,
    pub k_eff: f64,
    pub fq: f64,
    pub fdh: f64,
    pub pin_power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub id: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireResponse {
    Ok(WireResult),
    Err(WireError),
}

impl WireResult {
    pub fn from_result(id: u64, res: &NeutronicsResult) -> Self {
        WireResult {
            id,
            k_eff: res.k_eff,
            fq: res.fq,
            fdh: res.fdh,
            pin_power: res.pin_power.clone(),
        }
    }

    pub fn into_result(self) -> Result<NeutronicsResult, NeutronicsError> {
        if self.pin_power.len() != FREE_CELLS {
            return Err(NeutronicsError::External(format!(
                "response {} has {} pin powers, expected {FREE_CELLS}",
                self.id,
                self.pin_power.len()
            )));
        }
        let finite = [self.k_eff, self.fq, self.fdh]
            .iter()
            .chain(&self.pin_power)
            .all(|v| v.is_finite());
        if !finite || self.k_eff <= 0.0 {
            return Err(NeutronicsError::External(format!(
                "response {} carries non-finite or non-positive values",
                self.id
            )));
        }
        Ok(NeutronicsResult {
            k_eff: self.k_eff,
            fq: self.fq,
            fdh: self.fdh,
            pin_power: self.pin_power,
        })
    }
}

/// Parses one response line and checks it answers request `expected_id`.
pub fn parse_response(line: &str, expected_id: u64) -> Result<NeutronicsResult, NeutronicsError> {
    let resp: WireResponse = serde_json::from_str(line.trim_end())
        .map_err(|e| NeutronicsError::External(format!("malformed response line: {e}")))?;
    match resp {
        WireResponse::Ok(r) if r.id == expected_id => r.into_result(),
        WireResponse::Ok(r) => Err(NeutronicsError::External(format!(
            "response id {} does not match request id {expected_id}",
            r.id
        ))),
        WireResponse::Err(e) => Err(NeutronicsError::External(format!(
            "worker reported error for request {expected_id}: {}",
            e.error
        ))),
    }
}

/// Worker side of the protocol: answers requests from `input` until EOF.
/// Returns the number of requests handled.
pub fn serve<R, W, E>(input: R, mut output: W, evaluator: &E) -> io::Result<usize>
where
    R: BufRead,
    W: Write,
    E: Evaluator + ?Sized,
{
    let mut handled = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        handled += 1;
        let response = match serde_json::from_str::<WireRequest>(&line) {
            Err(e) => WireResponse::Err(WireError {
                id: None,
                error: format!("malformed request: {e}"),
            }),
            Ok(req) => match LatticeLayout::deserialize(&req.layout) {
                Err(e) => WireResponse::Err(WireError {
                    id: Some(req.id),
                    error: e.to_string(),
                }),
                Ok(layout) => match evaluator.evaluate(&layout, req.fidelity, req.seed) {
                    Ok(res) => WireResponse::Ok(WireResult::from_result(req.id, &res)),
                    Err(e) => WireResponse::Err(WireError {
                        id: Some(req.id),
                        error: e.to_string(),
                    }),
                },
            },
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(handled)
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
    dead: Option<String>,
}

/// Client for a worker process started with `sh -c <command>`.
pub struct ExternalEvaluator {
    command: String,
    session: Mutex<Session>,
}

impl ExternalEvaluator {
    pub fn spawn(command: &str) -> io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(ExternalEvaluator {
            command: command.to_string(),
            session: Mutex::new(Session {
                child,
                stdin,
                stdout,
                next_id: 0,
                dead: None,
            }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(
        &self,
        layout: &LatticeLayout,
        tier: FidelityTier,
        seed: u64,
    ) -> Result<NeutronicsResult, NeutronicsError> {
        self.evaluate_batch(&[EvalRequest { layout, tier, seed }])
            .pop()
            .expect("one result per request")
    }

    fn evaluate_batch(
        &self,
        requests: &[EvalRequest<'_>],
    ) -> Vec<Result<NeutronicsResult, NeutronicsError>> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let session = &mut *guard;
        if let Some(reason) = &session.dead {
            let msg = format!("worker unavailable: {reason}");
            return requests
                .iter()
                .map(|_| Err(NeutronicsError::External(msg.clone())))
                .collect();
        }
        let first_id = session.next_id;
        session.next_id += requests.len() as u64;
        let lines: Vec<String> = requests
            .iter()
            .enumerate()
            .map(|(i, r)| {
                serde_json::to_string(&WireRequest {
                    id: first_id + i as u64,
                    layout: r.layout.serialize().into_string(),
                    fidelity: r.tier,
                    seed: r.seed,
                })
                .expect("request serializes")
            })
            .collect();

        let Some(stdin) = session.stdin.as_mut() else {
            session.dead = Some("stdin closed".into());
            return requests
                .iter()
                .map(|_| Err(NeutronicsError::External("stdin closed".into())))
                .collect();
        };
        let stdout = &mut session.stdout;
        // Writing on a separate thread keeps a worker that answers eagerly from
        // filling its stdout pipe while we are still blocked on its stdin.
        let (write_result, results) = std::thread::scope(|scope| {
            let writer = scope.spawn(move || -> io::Result<()> {
                for line in &lines {
                    stdin.write_all(line.as_bytes())?;
                    stdin.write_all(b"\n")?;
                }
                stdin.flush()
            });
            let mut results = Vec::with_capacity(requests.len());
            let mut buf = String::new();
            for i in 0..requests.len() {
                buf.clear();
                let id = first_id + i as u64;
                match stdout.read_line(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(_) => results.push(parse_response(&buf, id)),
                }
            }
            (writer.join().expect("writer thread"), results)
        });

        let mut results = results;
        if results.len() < requests.len() || write_result.is_err() {
            let status = session
                .child
                .try_wait()
                .ok()
                .flatten()
                .map(|s| s.to_string())
                .unwrap_or_else(|| "still running".into());
            let reason = match write_result {
                Err(e) => format!("write failed ({e}); worker {status}"),
                Ok(()) => format!("worker exited early ({status})"),
            };
            while results.len() < requests.len() {
                results.push(Err(NeutronicsError::External(reason.clone())));
            }
            session.dead = Some(reason);
        }
        results
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        let session = self.session.get_mut().unwrap_or_else(|p| p.into_inner());
        session.stdin.take();
        let _ = session.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::random_layout;
    use crate::neutronics::BuiltinEvaluator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(seed: u64) -> LatticeLayout {
        random_layout(16, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn serve_answers_requests_in_order() {
        let ev = BuiltinEvaluator::default();
        let mut input = String::new();
        for id in 0..3u64 {
            let req = WireRequest {
                id,
                layout: layout(id).serialize().into_string(),
                fidelity: FidelityTier::Low,
                seed: id + 1,
            };
            input.push_str(&serde_json::to_string(&req).unwrap());
            input.push('\n');
        }
        input.push_str("not json\n");
        let mut out = Vec::new();
        let n = serve(input.as_bytes(), &mut out, &ev).unwrap();
        assert_eq!(n, 4);
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        for id in 0..3u64 {
            let got = parse_response(lines[id as usize], id).unwrap();
            let want = ev.evaluate(&layout(id), FidelityTier::Low, id + 1).unwrap();
            assert_eq!(got, want);
        }
        assert!(parse_response(lines[3], 3).is_err());
    }

    #[test]
    fn parse_rejects_bad_responses() {
        assert!(parse_response("{", 0).is_err());
        let short = r#"{"id": 0, "k_eff": 1.0, "fq": 1.0, "fdh": 1.0, "pin_power": [1.0]}"#;
        assert!(parse_response(short, 0).is_err());
        let pp = vec![1.0; FREE_CELLS];
        let ok = serde_json::to_string(&WireResult {
            id: 5,
            k_eff: 1.1,
            fq: 1.2,
            fdh: 1.1,
            pin_power: pp,
        })
        .unwrap();
        assert!(parse_response(&ok, 5).is_ok());
        assert!(parse_response(&ok, 4).is_err());
    }

    #[test]
    fn failing_worker_fails_each_request() {
        let ev = ExternalEvaluator::spawn("exit 3").unwrap();
        let l = layout(1);
        assert!(matches!(
            ev.evaluate(&l, FidelityTier::High, 1),
            Err(NeutronicsError::External(_))
        ));
        assert!(ev.evaluate(&l, FidelityTier::High, 1).is_err());
    }

    #[test]
    fn malformed_worker_line_is_a_failure() {
        let ev = ExternalEvaluator::spawn("read line; echo garbage; cat > /dev/null").unwrap();
        let err = ev.evaluate(&layout(2), FidelityTier::High, 1).unwrap_err();
        assert!(err.to_string().contains("malformed"), "{err}");
    }
}
