//! Off-game chat gateway.
//!
//! A [`ChatConnector`] opens connections to some chat service; every message
//! arriving on a connection becomes a Discord-platform turn and the NPC reply
//! goes back to the originating channel. Lost connections are reopened with
//! exponential backoff. Messages of one author are handled in arrival order;
//! different authors are handled concurrently.
//!
//! Two connectors ship in-tree: [`LoopbackConnector`] for tests and
//! [`TcpJsonlConnector`], which speaks JSON lines to a bridge process that
//! fronts the real chat service.

use std::collections::HashMap;
use std::future::Future;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio::task::JoinSet;

use super::{InboundMessage, Orchestrator};
use crate::domain::{Platform, UserId};

/// Sent instead of a reply when a turn fails. Never carries error details.
pub const UNAVAILABLE_NOTICE: &str =
    "Sorry, I can't answer right now. Please try again in a moment.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatEvent {
    pub channel_id: String,
    pub author_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboundChat {
    pub channel_id: String,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("chat connection failed: {0}")]
    Connect(String),
    #[error("chat connection lost: {0}")]
    Disconnected(String),
}

#[async_trait]
pub trait ChatConnection: Send {
    /// Next inbound message. `Ok(None)` means the peer closed the stream.
    async fn recv(&mut self) -> Result<Option<ChatEvent>, GatewayError>;

    async fn send(&mut self, message: &OutboundChat) -> Result<(), GatewayError>;
}

#[async_trait]
pub trait ChatConnector: Send + Sync {
    async fn connect(&self) -> Result<Box<dyn ChatConnection>, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(60),
        }
    }
}

impl Backoff {
    /// Delay before reconnect attempt `attempt` (0-based): base × 2^attempt, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(31));
        self.base.saturating_mul(factor).min(self.cap)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatewayReport {
    pub received: usize,
    pub replied: usize,
    pub failed: usize,
    pub connections: usize,
}

/// Handles one author's messages strictly in order.
async fn author_worker(
    orch: Arc<Orchestrator>,
    user: UserId,
    mut inbox: mpsc::UnboundedReceiver<ChatEvent>,
    outbox: mpsc::UnboundedSender<(OutboundChat, bool)>,
) {
    while let Some(event) = inbox.recv().await {
        let msg = match InboundMessage::new(user.as_str(), Platform::Discord, &event.text) {
            Ok(msg) => msg,
            Err(e) => {
                tracing::debug!(user = %user, error = %e, "ignoring invalid chat message");
                continue;
            }
        };
        let (text, ok) = match orch.handle_message(msg).await {
            Ok(reply) => (reply.content, true),
            Err(e) => {
                tracing::warn!(user = %user, error = %e, "chat turn failed");
                (UNAVAILABLE_NOTICE.to_string(), false)
            }
        };
        let out = OutboundChat {
            channel_id: event.channel_id,
            text,
        };
        if outbox.send((out, ok)).is_err() {
            break;
        }
    }
}

struct Dispatcher {
    orch: Arc<Orchestrator>,
    authors: HashMap<UserId, mpsc::UnboundedSender<ChatEvent>>,
    workers: JoinSet<()>,
    outbox: mpsc::UnboundedSender<(OutboundChat, bool)>,
}

impl Dispatcher {
    fn dispatch(&mut self, event: ChatEvent) -> bool {
        let user = match UserId::new(event.author_id.as_str()) {
            Ok(user) => user,
            Err(e) => {
                tracing::debug!(error = %e, "ignoring chat message with unusable author id");
                return false;
            }
        };
        let inbox = self.authors.entry(user.clone()).or_insert_with(|| {
            let (tx, rx) = mpsc::unbounded_channel();
            self.workers.spawn(author_worker(
                Arc::clone(&self.orch),
                user,
                rx,
                self.outbox.clone(),
            ));
            tx
        });
        inbox.send(event).is_ok()
    }
}

/// Runs the adapter loop until `shutdown` resolves. In-flight turns finish
/// and their replies are delivered on the live connection, if there is one.
pub async fn run_gateway(
    connector: Arc<dyn ChatConnector>,
    orchestrator: Arc<Orchestrator>,
    backoff: Backoff,
    shutdown: impl Future<Output = ()> + Send,
) -> GatewayReport {
    tokio::pin!(shutdown);
    let (outbox, mut replies) = mpsc::unbounded_channel();
    let mut dispatcher = Dispatcher {
        orch: orchestrator,
        authors: HashMap::new(),
        workers: JoinSet::new(),
        outbox,
    };
    let mut report = GatewayReport::default();
    // Reply that could not be delivered because the connection dropped.
    let mut pending: Option<OutboundChat> = None;
    let mut attempt = 0u32;
    let mut connection: Option<Box<dyn ChatConnection>> = None;

    'outer: loop {
        let conn = match connection.as_mut() {
            Some(conn) => conn,
            None => {
                let connect = connector.connect();
                tokio::select! {
                    _ = &mut shutdown => break 'outer,
                    result = connect => match result {
                        Ok(conn) => {
                            attempt = 0;
                            report.connections += 1;
                            tracing::info!(connections = report.connections, "chat gateway connected");
                            connection.insert(conn)
                        }
                        Err(e) => {
                            let delay = backoff.delay(attempt);
                            attempt = attempt.saturating_add(1);
                            tracing::warn!(error = %e, ?delay, "chat gateway connect failed");
                            tokio::select! {
                                _ = &mut shutdown => break 'outer,
                                _ = tokio::time::sleep(delay) => continue 'outer,
                            }
                        }
                    }
                }
            }
        };

        if let Some(out) = pending.take() {
            if let Err(e) = conn.send(&out).await {
                tracing::warn!(error = %e, "chat gateway lost connection while sending");
                pending = Some(out);
                connection = None;
                continue;
            }
        }

        enum Step {
            Reply(OutboundChat, bool),
            Event(Result<Option<ChatEvent>, GatewayError>),
        }
        let step = tokio::select! {
            _ = &mut shutdown => break 'outer,
            Some((out, ok)) = replies.recv() => Step::Reply(out, ok),
            event = conn.recv() => Step::Event(event),
        };
        let lost = match step {
            Step::Reply(out, ok) => {
                if ok {
                    report.replied += 1
                } else {
                    report.failed += 1
                }
                match conn.send(&out).await {
                    Ok(()) => None,
                    Err(e) => {
                        pending = Some(out);
                        Some(e.to_string())
                    }
                }
            }
            Step::Event(Ok(Some(event))) => {
                report.received += 1;
                dispatcher.dispatch(event);
                None
            }
            Step::Event(Ok(None)) => Some("peer closed the stream".to_string()),
            Step::Event(Err(e)) => Some(e.to_string()),
        };
        if let Some(reason) = lost {
            tracing::warn!(%reason, "chat gateway disconnected");
            connection = None;
            let delay = backoff.delay(attempt);
            attempt = attempt.saturating_add(1);
            tokio::select! {
                _ = &mut shutdown => break 'outer,
                _ = tokio::time::sleep(delay) => {}
            }
        }
    }

    // Let in-flight turns finish, then deliver what we can.
    let Dispatcher {
        authors,
        mut workers,
        outbox,
        ..
    } = dispatcher;
    drop(authors);
    drop(outbox);
    while workers.join_next().await.is_some() {}
    let mut leftovers: Vec<OutboundChat> = pending.into_iter().collect();
    while let Ok((out, ok)) = replies.try_recv() {
        if ok {
            report.replied += 1
        } else {
            report.failed += 1
        }
        leftovers.push(out);
    }
    if let Some(conn) = connection.as_mut() {
        for out in &leftovers {
            if let Err(e) = conn.send(out).await {
                tracing::warn!(error = %e, "dropping reply at shutdown");
                break;
            }
        }
    } else if !leftovers.is_empty() {
        tracing::warn!(
            count = leftovers.len(),
            "gateway stopped while disconnected; replies not delivered"
        );
    }
    report
}

enum LoopbackInbound {
    Message(ChatEvent),
    Disconnect,
}

struct LoopbackShared {
    inbound: tokio::sync::Mutex<mpsc::UnboundedReceiver<LoopbackInbound>>,
    outbound: mpsc::UnboundedSender<OutboundChat>,
    connects: AtomicUsize,
    refuse: AtomicUsize,
}

/// In-process chat service for tests: inject messages, read replies, drop
/// the connection on demand.
pub struct LoopbackConnector {
    shared: Arc<LoopbackShared>,
}

pub struct LoopbackHandle {
    inbound: mpsc::UnboundedSender<LoopbackInbound>,
    outbound: mpsc::UnboundedReceiver<OutboundChat>,
    shared: Arc<LoopbackShared>,
}

pub fn loopback() -> (LoopbackConnector, LoopbackHandle) {
    let (in_tx, in_rx) = mpsc::unbounded_channel();
    let (out_tx, out_rx) = mpsc::unbounded_channel();
    let shared = Arc::new(LoopbackShared {
        inbound: tokio::sync::Mutex::new(in_rx),
        outbound: out_tx,
        connects: AtomicUsize::new(0),
        refuse: AtomicUsize::new(0),
    });
    (
        LoopbackConnector {
            shared: Arc::clone(&shared),
        },
        LoopbackHandle {
            inbound: in_tx,
            outbound: out_rx,
            shared,
        },
    )
}

impl LoopbackHandle {
    pub fn say(&self, channel_id: &str, author_id: &str, text: &str) {
        let _ = self.inbound.send(LoopbackInbound::Message(ChatEvent {
            channel_id: channel_id.into(),
            author_id: author_id.into(),
            text: text.into(),
        }));
    }

    /// Drops the live connection once it has read everything queued before.
    pub fn disconnect(&self) {
        let _ = self.inbound.send(LoopbackInbound::Disconnect);
    }

    /// Makes the next `n` connect attempts fail.
    pub fn refuse_connects(&self, n: usize) {
        self.shared.refuse.store(n, Ordering::SeqCst);
    }

    pub fn connects(&self) -> usize {
        self.shared.connects.load(Ordering::SeqCst)
    }

    pub async fn next_reply(&mut self) -> Option<OutboundChat> {
        self.outbound.recv().await
    }
}

struct LoopbackConnection {
    shared: Arc<LoopbackShared>,
}

#[async_trait]
impl ChatConnector for LoopbackConnector {
    async fn connect(&self) -> Result<Box<dyn ChatConnection>, GatewayError> {
        let refused = self
            .shared
            .refuse
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if refused {
            return Err(GatewayError::Connect("loopback refused".into()));
        }
        self.shared.connects.fetch_add(1, Ordering::SeqCst);
        Ok(Box::new(LoopbackConnection {
            shared: Arc::clone(&self.shared),
        }))
    }
}

#[async_trait]
impl ChatConnection for LoopbackConnection {
    async fn recv(&mut self) -> Result<Option<ChatEvent>, GatewayError> {
        match self.shared.inbound.lock().await.recv().await {
            Some(LoopbackInbound::Message(event)) => Ok(Some(event)),
            Some(LoopbackInbound::Disconnect) => {
                Err(GatewayError::Disconnected("loopback dropped".into()))
            }
            None => Ok(None),
        }
    }

    async fn send(&mut self, message: &OutboundChat) -> Result<(), GatewayError> {
        self.shared
            .outbound
            .send(message.clone())
            .map_err(|_| GatewayError::Disconnected("loopback reader gone".into()))
    }
}

/// Connects to a bridge process over TCP. Inbound lines are [`ChatEvent`]
/// JSON objects, outbound lines are [`OutboundChat`] JSON objects.
#[derive(Debug, Clone)]
pub struct TcpJsonlConnector {
    pub address: String,
}

struct TcpJsonlConnection {
    reader: tokio::io::Lines<BufReader<OwnedReadHalf>>,
    writer: OwnedWriteHalf,
}

#[async_trait]
impl ChatConnector for TcpJsonlConnector {
    async fn connect(&self) -> Result<Box<dyn ChatConnection>, GatewayError> {
        let stream = TcpStream::connect(&self.address)
            .await
            .map_err(|e| GatewayError::Connect(format!("{}: {e}", self.address)))?;
        let (read, write) = stream.into_split();
        Ok(Box::new(TcpJsonlConnection {
            reader: BufReader::new(read).lines(),
            writer: write,
        }))
    }
}

#[async_trait]
impl ChatConnection for TcpJsonlConnection {
    async fn recv(&mut self) -> Result<Option<ChatEvent>, GatewayError> {
        loop {
            let line = self
                .reader
                .next_line()
                .await
                .map_err(|e| GatewayError::Disconnected(e.to_string()))?;
            let Some(line) = line else { return Ok(None) };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(event) => return Ok(Some(event)),
                Err(e) => tracing::warn!(error = %e, "skipping malformed bridge line"),
            }
        }
    }

    async fn send(&mut self, message: &OutboundChat) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(message).expect("outbound chat serializes");
        line.push(b'\n');
        self.writer
            .write_all(&line)
            .await
            .map_err(|e| GatewayError::Disconnected(e.to_string()))
    }
}
