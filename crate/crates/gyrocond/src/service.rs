//! Live command service.
//!
//! One kernel thread owns the simulation and advances it paced to wall
//! time. Connections talk to it only through a command queue; each
//! connection receives tap frames over its own bounded broadcast channel,
//! which drops the oldest frames when the client falls behind.

use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc as std_mpsc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::sync::{broadcast, mpsc, oneshot};

use gyrocond_core::supervisor::CaptureRequest;
use gyrocond_core::{RateInput, RegisterFile, SimConfig, Simulation, TapId};

use crate::config::ScenarioConfig;
use crate::protocol::{
    self, codes, f64_arg, parse_request, str_arg, tap_arg, u64_arg, Frame, ProtocolError, Request,
    Response,
};
use crate::scenarios;

pub const INDEX_HTML: &str = include_str!("../assets/index.html");

/// Largest frame rate per subscription.
pub const FRAME_RATE_HZ: f64 = 50.0;
/// Frames buffered per connection before the oldest are dropped.
pub const FRAME_QUEUE: usize = 16;
/// Samples per second a subscription delivers when no decimation is given.
const DEFAULT_STREAM_HZ: f64 = 1000.0;
/// Kernel falls back to real time when it lags by more than this.
const MAX_LAG: Duration = Duration::from_millis(100);

type Reply = oneshot::Sender<Response>;

enum Command {
    Request {
        req: Request,
        client: u64,
        frames: broadcast::Sender<Frame>,
        reply: Reply,
    },
    Disconnect {
        client: u64,
    },
}

struct Subscription {
    decimation: u32,
    handle: usize,
    frames: broadcast::Sender<Frame>,
}

struct Kernel {
    sim: Simulation,
    subs: BTreeMap<(u64, TapId), Subscription>,
    capture: Option<(Value, Reply)>,
}

impl Kernel {
    fn new(cfg: SimConfig) -> Result<Self, gyrocond_core::sim::SimError> {
        Ok(Self {
            sim: Simulation::new(cfg)?,
            subs: BTreeMap::new(),
            capture: None,
        })
    }

    fn status(&self) -> Value {
        json!({
            "status": self.sim.status(),
            "status_bits": self.sim.status().bits(),
            "time_s": self.sim.time(),
            "clip_flags": self.sim.clip_flags().0,
            "halted": self.sim.halted().map(|e| e.to_string()),
        })
    }

    /// Sends what every subscription has collected.
    fn flush_frames(&mut self) {
        let now = self.sim.time();
        for (&(_, tap), sub) in &self.subs {
            let data = self.sim.drain_probe(sub.handle);
            if data.is_empty() {
                continue;
            }
            let fs = tap.rate().hz() / sub.decimation as f64;
            let (scale, offset) = self.sim.tap_encoding(tap);
            let codes = data
                .iter()
                .map(|v| ((v - offset) / scale).round().clamp(-32768.0, 32767.0) as i16)
                .collect();
            // No receiver just means the client is gone.
            let _ = sub.frames.send(Frame {
                v: protocol::VERSION,
                event: "frame".into(),
                tap,
                t: now - data.len() as f64 / fs,
                fs,
                scale,
                offset,
                codes,
                dropped: 0,
            });
        }
    }

    /// Re-creates every subscription's probe. Callers flush first so no
    /// collected samples are lost.
    fn rebuild_probes(&mut self) {
        self.sim.clear_probes();
        for (&(_, tap), sub) in self.subs.iter_mut() {
            sub.handle = self.sim.probe(tap, sub.decimation);
        }
    }

    fn disconnect(&mut self, client: u64) {
        if self.subs.keys().any(|&(c, _)| c == client) {
            self.flush_frames();
            self.subs.retain(|&(c, _), _| c != client);
            self.rebuild_probes();
        }
    }

    fn finish_capture(&mut self) {
        if self.capture.is_none() {
            return;
        }
        if let Some(trace) = self.sim.take_capture() {
            let (id, reply) = self.capture.take().expect("pending capture");
            let _ = reply.send(Response::ok(id, json!(trace)));
        }
    }

    fn handle(&mut self, req: Request, client: u64, frames: broadcast::Sender<Frame>, reply: Reply) {
        let id = req.id.clone();
        if req.op == "capture" {
            match self.start_capture(&req.args) {
                Ok(()) => self.capture = Some((id, reply)),
                Err(e) => {
                    let _ = reply.send(Response::err(id, e));
                }
            }
            return;
        }
        let out = match self.dispatch(&req, client, frames) {
            Ok(v) => Response::ok(id, v),
            Err(e) => Response::err(id, e),
        };
        let _ = reply.send(out);
    }

    fn start_capture(&mut self, args: &Value) -> Result<(), ProtocolError> {
        if self.capture.is_some() {
            return Err(ProtocolError::new(codes::BUSY, "a capture is already running"));
        }
        let tap = tap_arg(args)?;
        let count = u64_arg(args, "count")?.ok_or_else(|| ProtocolError::bad_args("missing `count`"))?;
        let decimation = u64_arg(args, "decimation")?.unwrap_or(1);
        let req = CaptureRequest {
            tap,
            count: count.try_into().unwrap_or(usize::MAX),
            decimation: u32::try_from(decimation)
                .map_err(|_| ProtocolError::bad_args("`decimation` too large"))?,
        };
        self.sim.start_capture(req)?;
        Ok(())
    }

    fn dispatch(
        &mut self,
        req: &Request,
        client: u64,
        frames: broadcast::Sender<Frame>,
    ) -> Result<Value, ProtocolError> {
        let args = &req.args;
        match req.op.as_str() {
            "get_status" => Ok(self.status()),
            "read_reg" => {
                let name = str_arg(args, "name")?;
                let value = self.sim.read_register(name)?;
                Ok(json!({"name": name, "value": value}))
            }
            "write_reg" => {
                let name = str_arg(args, "name")?;
                let value = match (u64_arg(args, "value"), f64_arg(args, "real")?) {
                    (Ok(Some(v)), None) => {
                        u32::try_from(v).map_err(|_| ProtocolError::new(codes::WIDTH, "value exceeds 32 bits"))?
                    }
                    (_, Some(r)) => (r as f32).to_bits(),
                    _ => return Err(ProtocolError::bad_args("need integer `value` or number `real`")),
                };
                self.sim.write_register(name, value)?;
                let back = self.sim.read_register(name)?;
                Ok(json!({"name": name, "value": back}))
            }
            "selfcheck" => {
                let seed = u64_arg(args, "seed")?.unwrap_or(1);
                Ok(json!(self.sim.selfcheck(seed)?))
            }
            "subscribe_tap" => {
                let tap = tap_arg(args)?;
                let default = (tap.rate().hz() / DEFAULT_STREAM_HZ).ceil().max(1.0) as u64;
                let decimation = u64_arg(args, "decimation")?.unwrap_or(default);
                if decimation == 0 || decimation > u32::MAX as u64 {
                    return Err(ProtocolError::bad_args("`decimation` must be in 1..2^32"));
                }
                self.flush_frames();
                self.subs.insert(
                    (client, tap),
                    Subscription {
                        decimation: decimation as u32,
                        handle: 0,
                        frames,
                    },
                );
                self.rebuild_probes();
                Ok(json!({
                    "tap": tap,
                    "decimation": decimation,
                    "fs": tap.rate().hz() / decimation as f64,
                    "unit": tap.unit(),
                }))
            }
            "unsubscribe_tap" => {
                let tap = tap_arg(args)?;
                self.flush_frames();
                let was = self.subs.remove(&(client, tap)).is_some();
                self.rebuild_probes();
                Ok(json!({"tap": tap, "subscribed": was}))
            }
            "set_environment" => {
                let rate = f64_arg(args, "rate_dps")?;
                let temp = f64_arg(args, "temperature")?;
                if let Some(r) = rate {
                    self.sim.set_rate(RateInput::DegPerSec(r))?;
                }
                if let Some(t) = temp {
                    if !(-55.0..=150.0).contains(&t) {
                        return Err(ProtocolError::bad_args("temperature outside [-55, 150] °C"));
                    }
                    let r = RateInput::RadPerSec(self.sim.gyro().state.omega_z);
                    self.sim.set_environment(r, t)?;
                }
                Ok(json!({"rate_dps": self.sim.gyro().state.omega_z.to_degrees(), "temperature": self.sim.gyro().state.temp}))
            }
            "reset" => {
                if let Some((id, reply)) = self.capture.take() {
                    let _ = reply.send(Response::err(id, ProtocolError::new(codes::BUSY, "capture aborted by reset")));
                }
                self.flush_frames();
                self.sim.reset()?;
                self.rebuild_probes();
                Ok(self.status())
            }
            op => Err(ProtocolError::new(codes::UNKNOWN_OP, format!("unknown op `{op}`"))),
        }
    }

    /// Runs until every sender is gone.
    fn run(mut self, rx: std_mpsc::Receiver<Command>) {
        let tick = Duration::from_secs_f64(1.0 / gyrocond_core::dsp::chain::FS_FAST);
        let frame_period = Duration::from_secs_f64(1.0 / FRAME_RATE_HZ);
        let mut base = Instant::now();
        let mut base_ticks = self.sim.ticks();
        let mut next_frame = base + frame_period;
        loop {
            loop {
                match rx.try_recv() {
                    Ok(Command::Request { req, client, frames, reply }) => {
                        self.handle(req, client, frames, reply)
                    }
                    Ok(Command::Disconnect { client }) => self.disconnect(client),
                    Err(std_mpsc::TryRecvError::Empty) => break,
                    Err(std_mpsc::TryRecvError::Disconnected) => return,
                }
            }
            let now = Instant::now();
            let target = base_ticks + (now - base).as_nanos() as u64 / tick.as_nanos() as u64;
            let behind = target.saturating_sub(self.sim.ticks());
            if behind as f64 * tick.as_secs_f64() > MAX_LAG.as_secs_f64() {
                base = now;
                base_ticks = self.sim.ticks();
            }
            // Small chunks keep capture replies and commands prompt.
            let mut budget = behind.min(250 * 20);
            while budget > 0 && self.sim.halted().is_none() {
                let n = budget.min(250);
                if self.sim.run_ticks(n).is_err() {
                    break;
                }
                budget -= n;
                self.finish_capture();
            }
            self.finish_capture();
            if now >= next_frame {
                self.flush_frames();
                next_frame = now + frame_period;
            }
            match rx.recv_timeout(Duration::from_millis(1)) {
                Ok(Command::Request { req, client, frames, reply }) => self.handle(req, client, frames, reply),
                Ok(Command::Disconnect { client }) => self.disconnect(client),
                Err(std_mpsc::RecvTimeoutError::Timeout) => {}
                Err(std_mpsc::RecvTimeoutError::Disconnected) => return,
            }
        }
    }
}

/// Handle to the kernel thread; cheap to clone.
#[derive(Clone)]
pub struct KernelHandle {
    tx: std_mpsc::Sender<Command>,
}

impl KernelHandle {
    pub fn spawn(cfg: SimConfig) -> anyhow::Result<Self> {
        let kernel = Kernel::new(cfg)?;
        let (tx, rx) = std_mpsc::channel();
        std::thread::Builder::new()
            .name("gyrocond-kernel".into())
            .spawn(move || kernel.run(rx))?;
        Ok(Self { tx })
    }
}

static NEXT_CLIENT: AtomicU64 = AtomicU64::new(1);

/// Protocol state of one connection, independent of the transport.
pub struct Session {
    kernel: KernelHandle,
    client: u64,
    seen: HashSet<String>,
    frames: broadcast::Sender<Frame>,
    out: mpsc::UnboundedSender<String>,
}

impl Session {
    /// Returns the session and the receiver of every outgoing line
    /// (responses and frames).
    pub fn new(kernel: KernelHandle) -> (Self, mpsc::UnboundedReceiver<String>) {
        let (out, out_rx) = mpsc::unbounded_channel();
        let (frames, mut frames_rx) = broadcast::channel::<Frame>(FRAME_QUEUE);
        let fwd = out.clone();
        tokio::spawn(async move {
            let mut dropped = 0u64;
            loop {
                match frames_rx.recv().await {
                    Ok(mut f) => {
                        f.dropped = std::mem::take(&mut dropped);
                        if fwd.send(f.to_line()).is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::debug!(frames = n, "stream subscriber lagged");
                        dropped += n;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        });
        let client = NEXT_CLIENT.fetch_add(1, Ordering::Relaxed);
        (
            Self {
                kernel,
                client,
                seen: HashSet::new(),
                frames,
                out,
            },
            out_rx,
        )
    }

    /// Handles one incoming line. Every request gets exactly one response,
    /// possibly later (captures, scenarios).
    pub fn handle_line(&mut self, line: &str) {
        if line.trim().is_empty() {
            return;
        }
        let req = match parse_request(line) {
            Ok(r) => r,
            Err(resp) => {
                let _ = self.out.send(resp.to_line());
                return;
            }
        };
        let key = req.id.to_string();
        if !self.seen.insert(key) {
            let _ = self.out.send(
                Response::err(
                    req.id.clone(),
                    ProtocolError::new(codes::DUPLICATE_ID, "id already used on this connection"),
                )
                .to_line(),
            );
            return;
        }
        let out = self.out.clone();
        match req.op.as_str() {
            "get_manifest" => {
                let _ = out.send(Response::ok(req.id, manifest()).to_line());
            }
            "run_scenario" => {
                tokio::spawn(async move {
                    let id = req.id.clone();
                    let resp = match tokio::task::spawn_blocking(move || run_scenario(&req.args)).await {
                        Ok(Ok(v)) => Response::ok(id, v),
                        Ok(Err(e)) => Response::err(id, e),
                        Err(e) => Response::err(id, ProtocolError::new(codes::INTERNAL, e.to_string())),
                    };
                    let _ = out.send(resp.to_line());
                });
            }
            _ => {
                let (reply, rx) = oneshot::channel();
                let id = req.id.clone();
                let cmd = Command::Request {
                    req,
                    client: self.client,
                    frames: self.frames.clone(),
                    reply,
                };
                if self.kernel.tx.send(cmd).is_err() {
                    let _ = out.send(
                        Response::err(id, ProtocolError::new(codes::INTERNAL, "kernel stopped")).to_line(),
                    );
                    return;
                }
                tokio::spawn(async move {
                    let resp = rx.await.unwrap_or_else(|_| {
                        Response::err(id, ProtocolError::new(codes::INTERNAL, "kernel dropped the request"))
                    });
                    let _ = out.send(resp.to_line());
                });
            }
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.kernel.tx.send(Command::Disconnect { client: self.client });
    }
}

/// Register manifest plus tap and op catalogues.
pub fn manifest() -> Value {
    let taps: Vec<Value> = TapId::ALL
        .iter()
        .map(|t| json!({"name": t.name(), "rate_hz": t.rate().hz(), "unit": t.unit()}))
        .collect();
    json!({
        "v": protocol::VERSION,
        "registers": RegisterFile::default().manifest(),
        "taps": taps,
        "ops": protocol::OPS,
    })
}

fn run_scenario(args: &Value) -> Result<Value, ProtocolError> {
    let cfg: ScenarioConfig = serde_json::from_value(args.clone())
        .map_err(|e| ProtocolError::bad_args(e.to_string()))?;
    let out = scenarios::run(&cfg).map_err(|e| ProtocolError::new(codes::SCENARIO_FAILED, e.to_string()))?;
    Ok(json!({
        "report": out.report,
        "traces": out.traces.iter().map(|t| t.tap.name()).collect::<Vec<_>>(),
        "artifacts": out.artifacts.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
    }))
}

async fn index() -> impl IntoResponse {
    Html(INDEX_HTML)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(kernel): State<KernelHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| ws_session(socket, kernel))
}

async fn ws_session(socket: WebSocket, kernel: KernelHandle) {
    let (mut sink, mut stream) = socket.split();
    let (mut session, mut out_rx) = Session::new(kernel);
    let writer = tokio::spawn(async move {
        while let Some(line) = out_rx.recv().await {
            if sink.send(Message::Text(line.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => {
                for line in text.as_str().lines() {
                    session.handle_line(line);
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(session);
    writer.abort();
}

pub fn router(kernel: KernelHandle) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/index.html", get(index))
        .route("/ws", get(ws_upgrade))
        .with_state(kernel)
}

/// Serves NDJSON on a local stream socket.
pub async fn serve_unix(listener: tokio::net::UnixListener, kernel: KernelHandle) {
    loop {
        let stream = match listener.accept().await {
            Ok((stream, _)) => stream,
            Err(e) => {
                tracing::warn!("socket accept failed: {e}");
                continue;
            }
        };
        let kernel = kernel.clone();
        tokio::spawn(async move {
            let (read, mut write) = stream.into_split();
            let (mut session, mut out_rx) = Session::new(kernel);
            let writer = tokio::spawn(async move {
                while let Some(mut line) = out_rx.recv().await {
                    line.push('\n');
                    if write.write_all(line.as_bytes()).await.is_err() {
                        break;
                    }
                }
            });
            let mut lines = BufReader::new(read).lines();
            while let Ok(Some(line)) = lines.next_line().await {
                session.handle_line(&line);
            }
            drop(session);
            writer.abort();
        });
    }
}

pub struct ServeOptions {
    pub host: String,
    pub port: u16,
    pub socket: Option<PathBuf>,
    pub sim: SimConfig,
}

/// A bound but not yet running server.
pub struct Server {
    listener: tokio::net::TcpListener,
    unix: Option<tokio::net::UnixListener>,
    kernel: KernelHandle,
}

impl Server {
    pub async fn bind(opts: ServeOptions) -> anyhow::Result<Self> {
        let kernel = KernelHandle::spawn(opts.sim)?;
        let listener = tokio::net::TcpListener::bind((opts.host.as_str(), opts.port)).await?;
        let unix = match opts.socket {
            Some(p) => {
                if p.exists() {
                    std::fs::remove_file(&p)?;
                }
                Some(tokio::net::UnixListener::bind(p)?)
            }
            None => None,
        };
        Ok(Self {
            listener,
            unix,
            kernel,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> anyhow::Result<()> {
        if let Some(u) = self.unix {
            tokio::spawn(serve_unix(u, self.kernel.clone()));
        }
        axum::serve(self.listener, router(self.kernel)).await?;
        Ok(())
    }
}

pub async fn serve(opts: ServeOptions, on_ready: impl FnOnce(SocketAddr)) -> anyhow::Result<()> {
    let server = Server::bind(opts).await?;
    on_ready(server.local_addr()?);
    server.run().await
}
