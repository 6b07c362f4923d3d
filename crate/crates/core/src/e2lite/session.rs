//! Connection handling for both ends of the link.
//!
//! The gNB side listens; the xApp connects and subscribes per cell. Every
//! connection has a reader thread that decodes frames and an optional
//! heartbeat thread that also watches the peer's liveness.

use std::collections::HashMap;
use std::io;
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::codec::{
    decode_payload, read_frame, write_message, Body, CodecError, ControlAckBody, ControlBody, E2Message,
    ErrorBody, ErrorCode, HeartbeatBody, SubscribeBody,
};
use crate::model::{AlgorithmParams, Centroid, VerdictKind, WindowKpm};
use crate::xapp::{ControlLoop, ControlReply, LoopError, XappLogic};

/// Cell id used for link-level messages such as heartbeats.
pub const LINK_CELL: u32 = 0;

#[derive(Debug, Clone, Copy)]
pub struct LinkConfig {
    /// `None` disables heartbeats and the liveness watchdog.
    pub heartbeat_interval: Option<Duration>,
    pub heartbeat_loss: Duration,
    /// How long the gNB waits for the Control answering an Indication.
    pub control_timeout: Duration,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            heartbeat_interval: Some(Duration::from_secs(1)),
            heartbeat_loss: Duration::from_secs(3),
            control_timeout: Duration::from_secs(10),
        }
    }
}

impl LinkConfig {
    /// No heartbeats; for batch runs where both ends are driven as fast as
    /// possible.
    pub fn batch() -> Self {
        LinkConfig { heartbeat_interval: None, ..LinkConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum E2Error {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("peer replied {code:?}: {message}")]
    Rejected { code: ErrorCode, message: String },
    #[error("connection closed")]
    Disconnected,
    #[error("timed out waiting for the peer")]
    Timeout,
}

struct Link {
    role: &'static str,
    writer: Mutex<TcpStream>,
    next_seq: Mutex<HashMap<u32, u64>>,
    last_seen: Mutex<Instant>,
    degraded: AtomicBool,
    closed: AtomicBool,
}

impl Link {
    fn new(role: &'static str, stream: &TcpStream) -> io::Result<Arc<Link>> {
        stream.set_nodelay(true)?;
        Ok(Arc::new(Link {
            role,
            writer: Mutex::new(stream.try_clone()?),
            next_seq: Mutex::new(HashMap::new()),
            last_seen: Mutex::new(Instant::now()),
            degraded: AtomicBool::new(false),
            closed: AtomicBool::new(false),
        }))
    }

    fn send(&self, cell_id: u32, body: Body) -> Result<(), E2Error> {
        if self.is_closed() {
            return Err(E2Error::Disconnected);
        }
        // Sequence numbers are assigned under the writer lock so that they
        // hit the wire in order.
        let mut w = self.writer.lock().expect("writer lock");
        let seq = {
            let mut seqs = self.next_seq.lock().expect("seq lock");
            let s = seqs.entry(cell_id).or_insert(1);
            let out = *s;
            *s += 1;
            out
        };
        write_message(&mut *w, &E2Message::new(cell_id, seq, body)).map_err(|e| {
            self.closed.store(true, Ordering::SeqCst);
            e.into()
        })
    }

    fn send_error(&self, cell_id: u32, code: ErrorCode, message: impl Into<String>) {
        let message = message.into();
        tracing::debug!(role = self.role, cell_id, ?code, %message, "sending error");
        let _ = self.send(cell_id, Body::Error(ErrorBody { code, message }));
    }

    fn touch(&self) {
        *self.last_seen.lock().expect("liveness lock") = Instant::now();
        if self.degraded.swap(false, Ordering::SeqCst) {
            tracing::info!(role = self.role, "peer heartbeat restored");
        }
    }

    fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        if let Ok(w) = self.writer.lock() {
            let _ = w.shutdown(Shutdown::Both);
        }
    }
}

/// Reads frames until the stream ends, answering undecodable ones with an
/// Error and handing the rest to `handle`.
fn spawn_reader<F>(link: Arc<Link>, mut stream: TcpStream, mut handle: F) -> JoinHandle<()>
where
    F: FnMut(E2Message) + Send + 'static,
{
    thread::spawn(move || {
        let mut last_seq: HashMap<u32, u64> = HashMap::new();
        loop {
            let frame = match read_frame(&mut stream) {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(CodecError::FrameTooLarge(n)) => {
                    // The stream cannot be resynchronised past an oversized frame.
                    link.send_error(LINK_CELL, ErrorCode::FrameTooLarge, format!("{n} bytes"));
                    break;
                }
                Err(e) => {
                    if !link.is_closed() {
                        tracing::debug!(role = link.role, error = %e, "read failed");
                    }
                    break;
                }
            };
            link.touch();
            match decode_payload(&frame) {
                Ok(msg) => {
                    let prev = last_seq.insert(msg.cell_id, msg.seq);
                    if prev.is_some_and(|p| msg.seq <= p) {
                        tracing::warn!(role = link.role, cell_id = msg.cell_id, seq = msg.seq, "sequence number went backwards");
                    }
                    handle(msg)
                }
                Err(e) => {
                    let cell = match &e {
                        CodecError::UnsupportedVersion { cell_id, .. } => *cell_id,
                        _ => LINK_CELL,
                    };
                    if let Some(code) = e.reply_code() {
                        link.send_error(cell, code, e.to_string());
                    }
                }
            }
        }
        link.closed.store(true, Ordering::SeqCst);
    })
}

fn spawn_heartbeat(link: Arc<Link>, cfg: LinkConfig) -> Option<JoinHandle<()>> {
    let interval = cfg.heartbeat_interval?;
    Some(thread::spawn(move || {
        let tick = interval.min(Duration::from_millis(100));
        let mut next_beat = Instant::now();
        while !link.is_closed() {
            if Instant::now() >= next_beat {
                if link.send(LINK_CELL, Body::Heartbeat(HeartbeatBody {})).is_err() {
                    break;
                }
                next_beat += interval;
            }
            let silent = link.last_seen.lock().expect("liveness lock").elapsed();
            if silent > cfg.heartbeat_loss && !link.degraded.swap(true, Ordering::SeqCst) {
                tracing::warn!(role = link.role, silent_ms = silent.as_millis() as u64, "peer heartbeat lost, link degraded");
            }
            thread::sleep(tick);
        }
    }))
}

struct CellSlot {
    window_ms: u64,
    subscribed: bool,
    controls: Option<Sender<ControlBody>>,
    receiver: Option<Receiver<ControlBody>>,
}

struct GnbShared {
    link: Arc<Link>,
    cells: Mutex<HashMap<u32, CellSlot>>,
    subscribed: Condvar,
}

/// gNB end of one xApp connection, serving a fixed set of cells.
pub struct GnbEndpoint {
    shared: Arc<GnbShared>,
    cfg: LinkConfig,
    threads: Vec<JoinHandle<()>>,
}

impl GnbEndpoint {
    pub fn accept(listener: &TcpListener, cells: &[(u32, u64)], cfg: LinkConfig) -> io::Result<GnbEndpoint> {
        let (stream, peer) = listener.accept()?;
        tracing::info!(%peer, "xApp connected");
        GnbEndpoint::new(stream, cells, cfg)
    }

    /// `cells` lists (cell_id, window_ms) pairs this gNB hosts.
    pub fn new(stream: TcpStream, cells: &[(u32, u64)], cfg: LinkConfig) -> io::Result<GnbEndpoint> {
        let link = Link::new("gnb", &stream)?;
        let slots = cells
            .iter()
            .map(|&(id, window_ms)| {
                let (tx, rx) = mpsc::channel();
                (id, CellSlot { window_ms, subscribed: false, controls: Some(tx), receiver: Some(rx) })
            })
            .collect();
        let shared = Arc::new(GnbShared { link: link.clone(), cells: Mutex::new(slots), subscribed: Condvar::new() });

        let s = shared.clone();
        let mut threads = vec![spawn_reader(link.clone(), stream, move |msg| s.on_message(msg))];
        // Wake anyone blocked on a subscription or a control once the reader ends.
        let s = shared.clone();
        let reader = threads.pop().expect("reader thread");
        threads.push(thread::spawn(move || {
            let _ = reader.join();
            let mut cells = s.cells.lock().expect("cells lock");
            for slot in cells.values_mut() {
                slot.controls = None;
            }
            s.subscribed.notify_all();
        }));
        threads.extend(spawn_heartbeat(link, cfg));
        Ok(GnbEndpoint { shared, cfg, threads })
    }

    pub fn is_subscribed(&self, cell_id: u32) -> bool {
        self.shared.cells.lock().expect("cells lock").get(&cell_id).is_some_and(|c| c.subscribed)
    }

    pub fn wait_for_subscription(&self, cell_id: u32, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut cells = self.shared.cells.lock().expect("cells lock");
        loop {
            if cells.get(&cell_id).is_some_and(|c| c.subscribed) {
                return true;
            }
            let now = Instant::now();
            if now >= deadline || self.shared.link.is_closed() {
                return false;
            }
            cells = self.shared.subscribed.wait_timeout(cells, deadline - now).expect("cells lock").0;
        }
    }

    /// The control loop for one cell, to hand to the simulator. Each cell's
    /// loop can be taken once.
    pub fn control_loop(&self, cell_id: u32) -> Option<RemoteXapp> {
        let receiver = self.shared.cells.lock().expect("cells lock").get_mut(&cell_id)?.receiver.take()?;
        Some(RemoteXapp { shared: self.shared.clone(), cell_id, receiver, timeout: self.cfg.control_timeout })
    }

    pub fn is_degraded(&self) -> bool {
        self.shared.link.degraded.load(Ordering::SeqCst)
    }

    pub fn is_closed(&self) -> bool {
        self.shared.link.is_closed()
    }

    pub fn shutdown(mut self) {
        self.shared.link.close();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for GnbEndpoint {
    fn drop(&mut self) {
        self.shared.link.close();
    }
}

impl GnbShared {
    fn on_message(&self, msg: E2Message) {
        let cell = msg.cell_id;
        match msg.body {
            Body::Subscribe(_) => {
                let mut cells = self.cells.lock().expect("cells lock");
                match cells.get_mut(&cell) {
                    None => self.link.send_error(cell, ErrorCode::UnknownCell, format!("cell {cell} is not served here")),
                    Some(slot) if slot.subscribed => {
                        self.link.send_error(cell, ErrorCode::DuplicateSubscription, format!("cell {cell} already subscribed"))
                    }
                    Some(slot) => {
                        slot.subscribed = true;
                        let window_ms = slot.window_ms;
                        drop(cells);
                        tracing::info!(cell_id = cell, window_ms, "subscription accepted");
                        let _ = self.link.send(cell, Body::SubscribeAck(SubscribeBody { window_ms }));
                        self.subscribed.notify_all();
                    }
                }
            }
            Body::Control(control) => {
                let cells = self.cells.lock().expect("cells lock");
                match cells.get(&cell) {
                    Some(slot) if slot.subscribed => {
                        if let Some(tx) = &slot.controls {
                            let _ = tx.send(control);
                        }
                    }
                    _ => self.link.send_error(cell, ErrorCode::UnknownCell, format!("no subscription for cell {cell}")),
                }
            }
            Body::Heartbeat(_) => {}
            Body::Error(e) => tracing::warn!(cell_id = cell, code = ?e.code, message = %e.message, "xApp reported an error"),
            other => self.link.send_error(
                cell,
                ErrorCode::UnknownType,
                format!("{:?} is not accepted by the gNB", other.msg_type()),
            ),
        }
    }
}

/// Per-cell control loop that forwards windows to a remote xApp and waits
/// for its Control in lockstep.
pub struct RemoteXapp {
    shared: Arc<GnbShared>,
    cell_id: u32,
    receiver: Receiver<ControlBody>,
    timeout: Duration,
}

impl ControlLoop for RemoteXapp {
    fn on_indication(&mut self, kpm: &WindowKpm) -> Result<Option<ControlReply>, LoopError> {
        let link = &self.shared.link;
        if link.is_closed() {
            return Err(LoopError::Disconnected("xApp connection closed".into()));
        }
        let subscribed = self.shared.cells.lock().expect("cells lock").get(&self.cell_id).is_some_and(|c| c.subscribed);
        if !subscribed {
            return Ok(None);
        }
        link.send(self.cell_id, Body::Indication(kpm.clone()))
            .map_err(|e| LoopError::Disconnected(e.to_string()))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Err(LoopError::Timeout(kpm.window_id));
            }
            match self.receiver.recv_timeout(deadline - now) {
                Ok(c) if c.window_id == kpm.window_id => {
                    return Ok(Some(ControlReply { window_id: c.window_id, verdict: c.verdict, centroids: c.centroids }))
                }
                Ok(c) => tracing::warn!(cell_id = self.cell_id, got = c.window_id, want = kpm.window_id, "dropping stale control"),
                Err(RecvTimeoutError::Timeout) => return Err(LoopError::Timeout(kpm.window_id)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(LoopError::Disconnected("xApp connection closed".into()))
                }
            }
        }
    }

    fn on_control_applied(&mut self, window_id: u64, blocklist_size: usize) -> Result<(), LoopError> {
        self.shared
            .link
            .send(self.cell_id, Body::ControlAck(ControlAckBody { window_id, blocklist_size }))
            .map_err(|e| LoopError::Disconnected(e.to_string()))
    }
}

/// What the xApp saw, for logging and tests.
#[derive(Debug, Clone, PartialEq)]
pub enum XappEvent {
    Indication { cell_id: u32, seq: u64, window_id: u64, n3: u32 },
    Verdict { cell_id: u32, window_id: u64, kind: VerdictKind, centroids: Vec<Centroid> },
    ControlSent { cell_id: u32, window_id: u64, centroids: usize },
    Ack { cell_id: u32, window_id: u64, blocklist_size: usize },
    PeerError { cell_id: u32, code: ErrorCode, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct XappStats {
    pub indications: u64,
    pub detections: u64,
    pub controls: u64,
}

/// xApp end of the link.
pub struct XappClient {
    link: Arc<Link>,
    inbox: Receiver<E2Message>,
    threads: Vec<JoinHandle<()>>,
    logic: HashMap<u32, XappLogic>,
}

impl XappClient {
    pub fn connect<A: ToSocketAddrs>(addr: A, cfg: LinkConfig) -> io::Result<XappClient> {
        let stream = TcpStream::connect(addr)?;
        let link = Link::new("xapp", &stream)?;
        let (tx, inbox) = mpsc::channel();
        let mut threads = vec![spawn_reader(link.clone(), stream, move |msg| {
            if !matches!(msg.body, Body::Heartbeat(_)) {
                let _ = tx.send(msg);
            }
        })];
        threads.extend(spawn_heartbeat(link.clone(), cfg));
        Ok(XappClient { link, inbox, threads, logic: HashMap::new() })
    }

    pub fn is_degraded(&self) -> bool {
        self.link.degraded.load(Ordering::SeqCst)
    }

    /// Subscribe to a cell's window reports; detection for the cell runs with
    /// `params`. Returns the gNB's window length.
    pub fn subscribe(&mut self, cell_id: u32, params: AlgorithmParams, timeout: Duration) -> Result<u64, E2Error> {
        self.link.send(cell_id, Body::Subscribe(SubscribeBody { window_ms: params.window_ms }))?;
        let deadline = Instant::now() + timeout;
        loop {
            let msg = self.next_message(deadline.saturating_duration_since(Instant::now()))?.ok_or(E2Error::Timeout)?;
            match msg.body {
                Body::SubscribeAck(ack) if msg.cell_id == cell_id => {
                    self.logic.insert(cell_id, XappLogic::new(params));
                    return Ok(ack.window_ms);
                }
                Body::Error(e) if msg.cell_id == cell_id => {
                    return Err(E2Error::Rejected { code: e.code, message: e.message })
                }
                other => tracing::debug!(?other, "ignored while subscribing"),
            }
        }
    }

    /// Send a Control outside the indication loop.
    pub fn send_control(&self, cell_id: u32, control: ControlBody) -> Result<(), E2Error> {
        self.link.send(cell_id, Body::Control(control))
    }

    /// Next non-heartbeat message; `Ok(None)` on timeout.
    pub fn next_message(&self, timeout: Duration) -> Result<Option<E2Message>, E2Error> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(E2Error::Disconnected),
        }
    }

    /// Answer indications until the gNB hangs up or `stop` is set.
    pub fn serve<F: FnMut(&XappEvent)>(&mut self, stop: &AtomicBool, mut observe: F) -> Result<XappStats, E2Error> {
        let mut stats = XappStats::default();
        while !stop.load(Ordering::Relaxed) {
            let msg = match self.next_message(Duration::from_millis(100)) {
                Ok(Some(m)) => m,
                Ok(None) => continue,
                Err(E2Error::Disconnected) => break,
                Err(e) => return Err(e),
            };
            let cell_id = msg.cell_id;
            match msg.body {
                Body::Indication(kpm) => {
                    stats.indications += 1;
                    observe(&XappEvent::Indication { cell_id, seq: msg.seq, window_id: kpm.window_id, n3: kpm.n3 });
                    let Some(logic) = self.logic.get_mut(&cell_id) else {
                        tracing::warn!(cell_id, "indication for a cell we did not subscribe to");
                        continue;
                    };
                    let reply = match logic.handle(&kpm) {
                        Ok(r) => r,
                        Err(e) => {
                            self.link.send_error(cell_id, ErrorCode::MalformedBody, e.to_string());
                            continue;
                        }
                    };
                    if reply.verdict.kind == VerdictKind::AttackDetected {
                        stats.detections += 1;
                    }
                    observe(&XappEvent::Verdict {
                        cell_id,
                        window_id: reply.window_id,
                        kind: reply.verdict.kind,
                        centroids: reply.centroids.clone(),
                    });
                    let n = reply.centroids.len();
                    let window_id = reply.window_id;
                    self.link.send(
                        cell_id,
                        Body::Control(ControlBody { window_id, verdict: reply.verdict, centroids: reply.centroids }),
                    )?;
                    stats.controls += 1;
                    observe(&XappEvent::ControlSent { cell_id, window_id, centroids: n });
                }
                Body::ControlAck(ack) => observe(&XappEvent::Ack {
                    cell_id,
                    window_id: ack.window_id,
                    blocklist_size: ack.blocklist_size,
                }),
                Body::Error(e) => observe(&XappEvent::PeerError { cell_id, code: e.code, message: e.message }),
                other => tracing::debug!(?other, "ignored"),
            }
        }
        Ok(stats)
    }

    pub fn close(mut self) {
        self.link.close();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for XappClient {
    fn drop(&mut self) {
        self.link.close();
    }
}
