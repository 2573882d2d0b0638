//! Line-delimited JSON over a child process's standard streams.
//!
//! Arrays travel as tensor files in a private scratch directory; messages
//! carry their paths. Denoise request:
//! `{"kind":"denoise","t":..,"strength":..,"input":"<file with x_t, x_masked[, depth]>"}`,
//! response `{"output":"<file with x>"}`. Estimate request:
//! `{"kind":"estimate","input":"<file with candidate>"}`, response
//! `{"joints":[63 numbers]}`. Either response may instead be `{"error":".."}`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::denoiser::{DenoiseRequest, DenoiserOracle};
use super::strength::PoseEstimator;
use super::DeoccluderError;
use crate::geometry::PointSet3;
use crate::tensor::{self, FeatureTensor};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

static SCRATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    dead: bool,
}

/// A running helper process answering one JSON request per line.
pub struct ProcessBridge {
    conn: Mutex<Connection>,
    timeout: Duration,
    scratch: PathBuf,
    requests: AtomicU64,
}

impl ProcessBridge {
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, String> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start `{program}`: {e}"))?;
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
        let scratch = std::env::temp_dir().join(format!(
            "hopekit-bridge-{}-{}",
            std::process::id(),
            SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&scratch).map_err(|e| e.to_string())?;
        Ok(Self {
            conn: Mutex::new(Connection {
                child,
                stdin,
                lines: rx,
                dead: false,
            }),
            timeout,
            scratch,
            requests: AtomicU64::new(0),
        })
    }

    fn scratch_file(&self, stem: &str) -> PathBuf {
        let n = self.requests.fetch_add(1, Ordering::Relaxed);
        self.scratch.join(format!("{stem}-{n}.bin"))
    }

    /// Sends one request and waits for its response line.
    pub fn request(&self, message: &Value) -> Result<Value, String> {
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| "bridge lock poisoned".to_string())?;
        if conn.dead {
            return Err("helper process already failed".into());
        }
        let line = format!("{message}\n");
        if let Err(e) = conn
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| conn.stdin.flush())
        {
            conn.dead = true;
            return Err(format!("write to helper: {e}"));
        }
        let reply = match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                conn.dead = true;
                return Err(format!("read from helper: {e}"));
            }
            Err(RecvTimeoutError::Timeout) => {
                conn.dead = true;
                let _ = conn.child.kill();
                return Err(format!("helper timed out after {:?}", self.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                conn.dead = true;
                return Err("helper closed its output".into());
            }
        };
        drop(conn);
        let value: Value =
            serde_json::from_str(&reply).map_err(|e| format!("bad helper response: {e}"))?;
        if let Some(err) = value.get("error") {
            return Err(format!("helper error: {err}"));
        }
        Ok(value)
    }
}

impl Drop for ProcessBridge {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            let _ = conn.child.kill();
            let _ = conn.child.wait();
        }
        let _ = std::fs::remove_dir_all(&self.scratch);
    }
}

fn path_field(value: &Value, key: &str) -> Result<PathBuf, String> {
    value
        .get(key)
        .and_then(Value::as_str)
        .map(PathBuf::from)
        .ok_or_else(|| format!("response lacks `{key}`"))
}

/// Denoiser served by an external process.
pub struct ProcessDenoiser {
    bridge: ProcessBridge,
}

impl ProcessDenoiser {
    pub fn spawn(
        program: &str,
        args: &[String],
        timeout: Duration,
    ) -> Result<Self, DeoccluderError> {
        Ok(Self {
            bridge: ProcessBridge::spawn(program, args, timeout)
                .map_err(DeoccluderError::DenoiserFailure)?,
        })
    }

    fn call(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, String> {
        let input = self.bridge.scratch_file("denoise");
        let mut named: Vec<(&str, &FeatureTensor)> = vec![("x_t", r.x_t), ("x_masked", r.x_masked)];
        if let Some(d) = r.depth {
            named.push(("depth", d));
        }
        tensor::save_tensors(&input, &named).map_err(|e| e.to_string())?;
        let reply = self.bridge.request(&json!({
            "kind": "denoise",
            "t": r.t,
            "strength": r.strength,
            "input": input.to_string_lossy(),
        }));
        let _ = std::fs::remove_file(&input);
        let output = path_field(&reply?, "output")?;
        tensor::load_tensor(&output, "x").map_err(|e| e.to_string())
    }
}

impl DenoiserOracle for ProcessDenoiser {
    fn propose(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError> {
        let x = self.call(r).map_err(DeoccluderError::DenoiserFailure)?;
        if x.shape() != r.x_t.shape() {
            return Err(DeoccluderError::ShapeMismatch {
                expected: r.x_t.shape().to_vec(),
                got: x.shape().to_vec(),
            });
        }
        Ok(x)
    }
}

/// Hand-joint estimator served by an external process.
pub struct ProcessEstimator {
    bridge: ProcessBridge,
}

impl ProcessEstimator {
    pub fn spawn(
        program: &str,
        args: &[String],
        timeout: Duration,
    ) -> Result<Self, DeoccluderError> {
        Ok(Self {
            bridge: ProcessBridge::spawn(program, args, timeout)
                .map_err(DeoccluderError::EstimatorFailure)?,
        })
    }

    /// Estimates joints for a candidate already stored on disk.
    pub fn estimate_file(&self, input: &Path) -> Result<PointSet3, DeoccluderError> {
        let reply = self
            .bridge
            .request(&json!({"kind": "estimate", "input": input.to_string_lossy()}))
            .map_err(DeoccluderError::EstimatorFailure)?;
        let joints: Vec<f64> = reply
            .get("joints")
            .and_then(|j| serde_json::from_value(j.clone()).ok())
            .ok_or_else(|| DeoccluderError::EstimatorFailure("response lacks `joints`".into()))?;
        PointSet3::from_flat(&joints).map_err(|e| DeoccluderError::EstimatorFailure(e.to_string()))
    }
}

impl PoseEstimator for ProcessEstimator {
    fn estimate(&self, candidate: &FeatureTensor) -> Result<PointSet3, DeoccluderError> {
        let input = self.bridge.scratch_file("candidate");
        tensor::save_tensors(&input, &[("candidate", candidate)])
            .map_err(|e| DeoccluderError::EstimatorFailure(e.to_string()))?;
        let result = self.estimate_file(&input);
        let _ = std::fs::remove_file(&input);
        result
    }
}
