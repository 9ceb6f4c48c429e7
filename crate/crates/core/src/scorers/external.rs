//! Line-protocol adapter for external risk scorers.
//!
//! The adapter spawns a process and exchanges one request per line on its
//! standard input/output: the request is one canonical observation JSON, the
//! reply is one decimal in `[0,1]`. Requests are serialized (one in flight).
//! A timeout kills the process, since a late reply would desynchronize every
//! later exchange.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("failed to spawn external scorer `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o with external scorer failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("external scorer did not reply within {0} ms")]
    Timeout(u64),
    #[error("external scorer reply `{0}` is not a decimal")]
    Malformed(String),
    #[error("external scorer reply {0} is outside [0,1]")]
    OutOfRange(f64),
    #[error("external scorer process is no longer usable")]
    Closed,
}

struct Inner {
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<std::io::Result<String>>,
    dead: bool,
}

/// Handle to a spawned external scorer. Shareable across threads; scoring is
/// serialized through an internal lock.
pub struct ExternalScorer {
    inner: Mutex<Inner>,
    timeout_ms: u64,
    command: Vec<String>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("command", &self.command)
            .field("timeout_ms", &self.timeout_ms)
            .finish()
    }
}

impl ExternalScorer {
    /// Spawn the scorer process and attach the reply reader.
    pub fn spawn(command: &[String], timeout_ms: u64) -> Result<Self, ExternalError> {
        let (program, args) = command.split_first().ok_or_else(|| ExternalError::Spawn {
            command: String::new(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| ExternalError::Spawn {
                command: command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");
        let (sender, replies) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if sender.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalScorer {
            inner: Mutex::new(Inner {
                child,
                stdin: Some(stdin),
                replies,
                dead: false,
            }),
            timeout_ms,
            command: command.to_vec(),
        })
    }

    /// Send one observation line and wait for one decimal reply.
    pub fn score_line(&self, observation: &str) -> Result<f64, ExternalError> {
        let mut inner = self.inner.lock().expect("external scorer lock poisoned");
        if inner.dead {
            return Err(ExternalError::Closed);
        }
        let stdin = inner.stdin.as_mut().ok_or(ExternalError::Closed)?;
        stdin.write_all(observation.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()?;
        match inner
            .replies
            .recv_timeout(Duration::from_millis(self.timeout_ms))
        {
            Ok(Ok(reply)) => {
                let trimmed = reply.trim();
                let value: f64 = trimmed
                    .parse()
                    .map_err(|_| ExternalError::Malformed(trimmed.to_owned()))?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(ExternalError::OutOfRange(value));
                }
                Ok(value)
            }
            Ok(Err(io_err)) => {
                inner.dead = true;
                let _ = inner.child.kill();
                Err(ExternalError::Io(io_err))
            }
            Err(RecvTimeoutError::Timeout) => {
                // A late reply would pair with the wrong request from here on.
                inner.dead = true;
                let _ = inner.child.kill();
                Err(ExternalError::Timeout(self.timeout_ms))
            }
            Err(RecvTimeoutError::Disconnected) => {
                inner.dead = true;
                let _ = inner.child.kill();
                Err(ExternalError::Closed)
            }
        }
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(mut inner) = self.inner.lock() {
            inner.stdin.take();
            let _ = inner.child.kill();
            let _ = inner.child.wait();
        }
    }
}
