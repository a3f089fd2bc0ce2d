//! Client side of the external-evaluator wire protocol.
//!
//! Newline-delimited JSON records over a child process's stdio or a TCP
//! stream. Requests carry a correlation id; responses may arrive in any
//! order and are routed back to the waiting caller by id.
//!
//! ```text
//! -> {"v":1,"id":7,"arch":["IBConv_K3_E1", ...]}
//! <- {"v":1,"id":7,"acc":0.7312}
//! <- {"v":1,"id":7,"error":"unknown op"}
//! ```
//!
//! Control directives use a `cmd` field (`hello`, `train`, `finetune`,
//! `rebind`, `restore`) and are acknowledged with `{"v":1,"id":N,"ok":true}`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::space::Architecture;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Spawn `command[0]` with the remaining elements as arguments.
    Child { command: Vec<String> },
    Tcp { addr: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub transport: Transport,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Response {
    pub v: u64,
    pub id: u64,
    #[serde(default)]
    pub acc: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub ok: Option<bool>,
}

type Pending = Arc<Mutex<HashMap<u64, Sender<Response>>>>;

pub struct ExternalClient {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    fatal: Arc<Mutex<Option<String>>>,
    next_id: AtomicU64,
    timeout: Duration,
    max_retries: u32,
    child: Option<Child>,
    reader: Option<JoinHandle<()>>,
}

impl ExternalClient {
    pub fn connect(cfg: &ExternalConfig) -> Result<Self> {
        let timeout = Duration::from_millis(cfg.timeout_ms);
        match &cfg.transport {
            Transport::Child { command } => {
                let (program, args) = command
                    .split_first()
                    .ok_or_else(|| Error::Config("external evaluator command is empty".into()))?;
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::io(program, e))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let mut client = Self::from_streams(stdout, stdin, timeout, cfg.max_retries);
                client.child = Some(child);
                Ok(client)
            }
            Transport::Tcp { addr } => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::Protocol(format!("connect {addr}: {e}")))?;
                let read_half = stream
                    .try_clone()
                    .map_err(|e| Error::Protocol(format!("clone {addr}: {e}")))?;
                Ok(Self::from_streams(read_half, stream, timeout, cfg.max_retries))
            }
        }
    }

    /// Wires a client over arbitrary byte streams.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
        max_retries: u32,
    ) -> Self {
        let pending: Pending = Arc::new(Mutex::new(HashMap::new()));
        let fatal = Arc::new(Mutex::new(None));
        let handle = {
            let pending = Arc::clone(&pending);
            let fatal = Arc::clone(&fatal);
            std::thread::spawn(move || read_loop(reader, pending, fatal))
        };
        ExternalClient {
            writer: Mutex::new(Box::new(writer)),
            pending,
            fatal,
            next_id: AtomicU64::new(1),
            timeout,
            max_retries,
            child: None,
            reader: Some(handle),
        }
    }

    fn check_fatal(&self) -> Result<()> {
        match &*self.fatal.lock().expect("fatal lock") {
            Some(msg) => Err(Error::Protocol(msg.clone())),
            None => Ok(()),
        }
    }

    fn send_once(&self, mut body: Value) -> Result<Option<Response>> {
        self.check_fatal()?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        body["v"] = json!(PROTOCOL_VERSION);
        body["id"] = json!(id);
        let (tx, rx): (Sender<Response>, Receiver<Response>) = mpsc::channel();
        self.pending.lock().expect("pending lock").insert(id, tx);
        let line = format!("{body}\n");
        {
            let mut w = self.writer.lock().expect("writer lock");
            if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
                self.pending.lock().expect("pending lock").remove(&id);
                return Err(Error::Protocol(format!("write failed: {e}")));
            }
        }
        match rx.recv_timeout(self.timeout) {
            Ok(resp) => Ok(Some(resp)),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending lock").remove(&id);
                self.check_fatal()?;
                Ok(None)
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.check_fatal()?;
                Err(Error::Protocol("evaluator closed the connection".into()))
            }
        }
    }

    /// Sends `body`, retrying on timeout up to the configured budget.
    pub fn request(&self, body: Value) -> Result<Response> {
        for _ in 0..=self.max_retries {
            if let Some(resp) = self.send_once(body.clone())? {
                return Ok(resp);
            }
        }
        Err(Error::Protocol(format!(
            "no response after {} attempts",
            self.max_retries + 1
        )))
    }

    pub fn accuracy(&self, arch: &Architecture) -> Result<f64> {
        let resp = self
            .request(json!({ "arch": arch.choices }))
            .map_err(|e| Error::Evaluator {
                arch: arch.choices.clone(),
                message: e.to_string(),
            })?;
        match (resp.acc, resp.error) {
            (_, Some(message)) => Err(Error::Evaluator {
                arch: arch.choices.clone(),
                message,
            }),
            (Some(acc), None) if (0.0..=1.0).contains(&acc) => Ok(acc),
            (Some(acc), None) => Err(Error::Evaluator {
                arch: arch.choices.clone(),
                message: format!("accuracy {acc} outside [0, 1]"),
            }),
            (None, None) => Err(Error::Evaluator {
                arch: arch.choices.clone(),
                message: "response carries neither acc nor error".into(),
            }),
        }
    }

    /// Sends a control directive and waits for its acknowledgement.
    pub fn directive(&self, cmd: &str, mut fields: Value) -> Result<()> {
        fields["cmd"] = json!(cmd);
        let resp = self.request(fields)?;
        if let Some(message) = resp.error {
            return Err(Error::Protocol(format!("`{cmd}` rejected: {message}")));
        }
        if resp.ok != Some(true) {
            return Err(Error::Protocol(format!("`{cmd}` not acknowledged")));
        }
        Ok(())
    }
}

impl Drop for ExternalClient {
    fn drop(&mut self) {
        if let Ok(mut w) = self.writer.lock() {
            let _ = w.write_all(b"{\"v\":1,\"id\":0,\"cmd\":\"shutdown\"}\n");
            let _ = w.flush();
        }
        if let Some(mut child) = self.child.take() {
            // Closing stdin lets a well-behaved evaluator exit on its own.
            *self.writer.lock().expect("writer lock") = Box::new(std::io::sink());
            if child.wait_timeout_ms(500).is_none() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
        // The reader thread exits when the stream closes; don't block on it.
        drop(self.reader.take());
    }
}

trait WaitTimeout {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<std::process::ExitStatus>;
}

impl WaitTimeout for Child {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<std::process::ExitStatus> {
        let deadline = std::time::Instant::now() + Duration::from_millis(ms);
        loop {
            if let Ok(Some(status)) = self.try_wait() {
                return Some(status);
            }
            if std::time::Instant::now() >= deadline {
                return None;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }
}

fn read_loop(reader: impl Read, pending: Pending, fatal: Arc<Mutex<Option<String>>>) {
    let set_fatal = |msg: String| {
        log::error!("evaluator protocol fault: {msg}");
        *fatal.lock().expect("fatal lock") = Some(msg);
        // Dropping the senders wakes every waiter.
        pending.lock().expect("pending lock").clear();
    };
    for line in BufReader::new(reader).lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                set_fatal(format!("read failed: {e}"));
                return;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let resp: Response = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("ignoring malformed evaluator line `{line}`: {e}");
                continue;
            }
        };
        if resp.v != PROTOCOL_VERSION {
            set_fatal(format!(
                "protocol version mismatch: evaluator speaks v{}, engine speaks v{PROTOCOL_VERSION}",
                resp.v
            ));
            return;
        }
        let waiter = pending.lock().expect("pending lock").remove(&resp.id);
        match waiter {
            Some(tx) => {
                let _ = tx.send(resp);
            }
            None => log::warn!("response for unknown or expired id {}", resp.id),
        }
    }
    pending.lock().expect("pending lock").clear();
}
