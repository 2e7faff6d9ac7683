//! Live telemetry: frame schema and the WebSocket streaming server.
//!
//! The simulation emits [`TelemetryFrame`] snapshots at a fixed cadence.
//! [`TelemetryServer`] fans them out to any number of WebSocket clients
//! as UTF-8 JSON text frames. The handoff is a bounded channel written
//! with `try_send`: a slow or absent client costs the simulation nothing,
//! frames are simply dropped toward clients. Metric recording never goes
//! through this path, so results are identical with or without viewers.

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tungstenite::protocol::WebSocket;
use tungstenite::Message;

use crate::protocol::TrackedValue;

/// One node's row in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameNode {
    pub id: u32,
    pub role: String,
    /// `[x, y, z]` in meters.
    pub position: [f64; 3],
    /// CSS color used by viewers to distinguish roles.
    pub color: String,
}

/// Point-in-time snapshot of the running simulation.
///
/// Serialized as JSON with a stable schema:
///
/// ```json
/// {
///   "type": "frame",
///   "simulation_time": 12.0,
///   "nodes": [{"id": 0, "role": "ground_station",
///              "position": [0.0, 0.0, 0.0], "color": "#d62728"}],
///   "tracked_variables": {"0": {"collected": 18.0}}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    #[serde(rename = "type")]
    pub kind: String,
    /// Seconds of simulation time.
    pub simulation_time: f64,
    pub nodes: Vec<FrameNode>,
    /// Per-node (keyed by decimal node id) name-to-value map of the
    /// variables protocols marked for tracking.
    pub tracked_variables: BTreeMap<String, BTreeMap<String, TrackedValue>>,
}

impl TelemetryFrame {
    pub const KIND: &'static str = "frame";
}

#[derive(Debug, Error)]
pub enum TelemetryServerError {
    #[error("telemetry port already in use: {0}")]
    PortInUse(io::Error),
    #[error("telemetry server i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Cloneable handle that feeds frames to the server. Dropping every
/// handle shuts the broadcast down once the queue drains.
#[derive(Clone)]
pub struct FrameSender {
    tx: SyncSender<String>,
}

impl FrameSender {
    /// Serializes and enqueues a frame. Never blocks: if the queue is
    /// full the frame is dropped toward clients.
    pub fn send(&self, frame: &TelemetryFrame) {
        let text = match serde_json::to_string(frame) {
            Ok(text) => text,
            Err(_) => return,
        };
        match self.tx.try_send(text) {
            Ok(()) | Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {}
        }
    }
}

type ClientList = Arc<Mutex<Vec<WebSocket<TcpStream>>>>;

/// WebSocket fan-out server for telemetry frames.
pub struct TelemetryServer {
    addr: SocketAddr,
    sender: FrameSender,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl TelemetryServer {
    /// Binds `127.0.0.1:port` (use port 0 for an OS-assigned port) and
    /// starts the accept and broadcast threads.
    pub fn start(port: u16) -> Result<TelemetryServer, TelemetryServerError> {
        let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| {
            if e.kind() == io::ErrorKind::AddrInUse {
                TelemetryServerError::PortInUse(e)
            } else {
                TelemetryServerError::Io(e)
            }
        })?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;

        let clients: ClientList = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = sync_channel::<String>(256);

        let accept_clients = Arc::clone(&clients);
        let accept_stop = Arc::clone(&stop);
        let acceptor = std::thread::spawn(move || accept_loop(listener, accept_clients, accept_stop));

        let broadcast_stop = Arc::clone(&stop);
        let broadcaster = std::thread::spawn(move || broadcast_loop(rx, clients, broadcast_stop));

        Ok(TelemetryServer {
            addr,
            sender: FrameSender { tx },
            stop,
            threads: vec![acceptor, broadcaster],
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    pub fn sender(&self) -> FrameSender {
        self.sender.clone()
    }

    /// Stops accepting, closes clients and joins the server threads.
    pub fn shutdown(self) {
        // Drop does the work; the broadcast loop notices the stop flag on
        // its next timeout tick.
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for handle in self.threads.drain(..) {
            let _ = handle.join();
        }
    }
}

fn accept_loop(listener: TcpListener, clients: ClientList, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                // handshake on a blocking stream; writes get a timeout so a
                // wedged client cannot stall the broadcaster forever
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let _ = stream.set_write_timeout(Some(Duration::from_secs(1)));
                if let Ok(ws) = tungstenite::accept(stream) {
                    clients.lock().unwrap().push(ws);
                }
            }
            Err(ref e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(_) => break,
        }
    }
}

fn broadcast_loop(rx: Receiver<String>, clients: ClientList, stop: Arc<AtomicBool>) {
    loop {
        match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(text) => {
                let mut clients = clients.lock().unwrap();
                // drop clients whose connection failed
                clients.retain_mut(|ws| ws.send(Message::text(text.clone())).is_ok());
            }
            Err(std::sync::mpsc::RecvTimeoutError::Timeout) => {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
            }
            Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => break,
        }
    }
    let mut clients = clients.lock().unwrap();
    for ws in clients.iter_mut() {
        let _ = ws.close(None);
    }
    clients.clear();
}
