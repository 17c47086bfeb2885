//! Out-of-process token scorers.
//!
//! A scorer speaks line-delimited JSON over TCP or over a child process's
//! standard streams. Each request is answered by exactly one response:
//!
//! ```text
//! -> {"id": "t1", "reference": "a cute dog", "tokens": ["a", "cute", "dog"]}
//! <- {"id": "t1", "token_probs": [0.1, 0.05, 0.7]}
//! ```
//!
//! Requests are sent in batches; responses within a batch may arrive in any
//! order and are matched back by id.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::tokenize::{tokenize, SubwordVocab};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub reference: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub token_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerEndpoint {
    /// `host:port`
    Tcp(String),
    /// Program and arguments; the scorer reads stdin and writes stdout.
    Command(Vec<String>),
}

impl std::str::FromStr for ScorerEndpoint {
    type Err = Error;

    /// `tcp://host:port` or `cmd:program arg ...`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            Ok(ScorerEndpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::invalid("empty scorer command"));
            }
            Ok(ScorerEndpoint::Command(argv))
        } else {
            Err(Error::invalid(format!(
                "scorer endpoint `{s}` must start with tcp:// or cmd:"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExternalScorer {
    pub endpoint: ScorerEndpoint,
    pub timeout: Duration,
    /// Requests in flight per round trip.
    pub batch_size: usize,
    pub vocab: Option<SubwordVocab>,
}

impl ExternalScorer {
    pub fn new(endpoint: ScorerEndpoint) -> Self {
        ExternalScorer {
            endpoint,
            timeout: Duration::from_secs(30),
            batch_size: 32,
            vocab: None,
        }
    }
}

trait Connection {
    fn send(&mut self, line: &str) -> Result<()>;
    fn recv(&mut self, timeout: Duration) -> Result<String>;
}

struct TcpConnection {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl Connection for TcpConnection {
    fn send(&mut self, line: &str) -> Result<()> {
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .map_err(|e| Error::Transport(e.to_string()))
    }

    fn recv(&mut self, timeout: Duration) -> Result<String> {
        self.reader
            .get_ref()
            .set_read_timeout(Some(timeout))
            .map_err(|e| Error::Transport(e.to_string()))?;
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(Error::Transport("scorer closed the connection".into())),
            Ok(_) => Ok(line),
            Err(e) => Err(Error::Transport(e.to_string())),
        }
    }
}

struct ProcessConnection {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
}

impl Connection for ProcessConnection {
    fn send(&mut self, line: &str) -> Result<()> {
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Transport(e.to_string()))
    }

    fn recv(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Transport(e.to_string())),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(Error::Transport("scorer timed out".into())),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(Error::Transport("scorer process exited".into())),
        }
    }
}

impl Drop for ProcessConnection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn connect(endpoint: &ScorerEndpoint, timeout: Duration) -> Result<Box<dyn Connection>> {
    match endpoint {
        ScorerEndpoint::Tcp(addr) => {
            let addrs: Vec<_> = std::net::ToSocketAddrs::to_socket_addrs(addr.as_str())
                .map_err(|e| Error::Transport(format!("{addr}: {e}")))?
                .collect();
            let first = addrs
                .first()
                .ok_or_else(|| Error::Transport(format!("{addr}: no address")))?;
            let stream =
                TcpStream::connect_timeout(first, timeout).map_err(|e| Error::Transport(format!("{addr}: {e}")))?;
            let reader = stream.try_clone().map_err(|e| Error::Transport(e.to_string()))?;
            Ok(Box::new(TcpConnection {
                writer: stream,
                reader: BufReader::new(reader),
            }))
        }
        ScorerEndpoint::Command(argv) => {
            let mut child = Command::new(&argv[0])
                .args(&argv[1..])
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Transport(format!("{}: {e}", argv[0])))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            Ok(Box::new(ProcessConnection {
                child,
                stdin,
                lines: rx,
            }))
        }
    }
}

/// Score `(id, text)` pairs; returns per-token probabilities in input order.
pub fn score_via_external(scorer: &ExternalScorer, texts: &[(String, String)]) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let mut conn = connect(&scorer.endpoint, scorer.timeout)?;
    let requests: Vec<ScoreRequest> = texts
        .iter()
        .map(|(id, text)| ScoreRequest {
            id: id.clone(),
            reference: text.clone(),
            tokens: tokenize(text, scorer.vocab.as_ref())
                .content_tokens()
                .into_iter()
                .map(str::to_string)
                .collect(),
        })
        .collect();

    let mut out: Vec<Option<Vec<f64>>> = vec![None; requests.len()];
    for (chunk_no, chunk) in requests.chunks(scorer.batch_size.max(1)).enumerate() {
        let base = chunk_no * scorer.batch_size.max(1);
        let mut pending: HashMap<&str, usize> = HashMap::with_capacity(chunk.len());
        for (k, req) in chunk.iter().enumerate() {
            if pending.insert(req.id.as_str(), base + k).is_some() {
                return Err(Error::invalid(format!("duplicate text id `{}`", req.id)));
            }
            conn.send(&serde_json::to_string(req)?)?;
        }
        while !pending.is_empty() {
            let line = conn.recv(scorer.timeout)?;
            let resp: ScoreResponse =
                serde_json::from_str(line.trim()).map_err(|e| Error::Transport(format!("malformed response: {e}")))?;
            let slot = pending
                .remove(resp.id.as_str())
                .ok_or_else(|| Error::Transport(format!("unexpected response id `{}`", resp.id)))?;
            let expected = requests[slot].tokens.len();
            if resp.token_probs.len() != expected {
                return Err(Error::ScorerValidation {
                    id: resp.id,
                    message: format!(
                        "expected {expected} token probabilities, got {}",
                        resp.token_probs.len()
                    ),
                });
            }
            if let Some(bad) = resp.token_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::ScorerValidation {
                    id: resp.id,
                    message: format!("probability {bad} outside [0, 1]"),
                });
            }
            out[slot] = Some(resp.token_probs);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every slot answered")).collect())
}
