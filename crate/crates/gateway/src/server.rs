//! HTTP + WebSocket front end.
//!
//! One std thread owns the [`Session`]. Clients enqueue commands on its
//! channel and await a oneshot reply; the thread publishes serialized
//! state through a watch channel that every connection forwards.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{oneshot, watch};

use vbarrier_core::scenario::LoadedScenario;
use vbarrier_core::sim::SimError;

use crate::protocol::{CommandMessage, ErrorCode, ResponseMessage, ServerMessage};
use crate::session::Session;

/// Broadcast period (20 Hz).
pub const BROADCAST_PERIOD: Duration = Duration::from_millis(50);
/// Upper bound on sim steps per loop iteration when catching up.
const MAX_CATCHUP_STEPS: u32 = 50;

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>vbarrier</title></head>
<body><h1>vbarrier gateway</h1>
<p>No client bundle configured. Connect a WebSocket client to <code>/ws</code>.</p>
</body></html>
";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Envelope {
    msg: CommandMessage,
    reply: oneshot::Sender<ResponseMessage>,
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Envelope>,
    state: watch::Receiver<Arc<str>>,
    static_dir: Option<Arc<PathBuf>>,
}

struct SimThread {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for SimThread {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn publish(session: &Session, tx: &watch::Sender<Arc<str>>) {
    let json = ServerMessage::State(session.state_message()).to_json();
    tx.send_replace(json.into());
}

fn sim_loop(
    mut session: Session,
    commands: mpsc::Receiver<Envelope>,
    state_tx: watch::Sender<Arc<str>>,
    stop: Arc<AtomicBool>,
) {
    let dt = session.dt();
    let mut last = Instant::now();
    let mut next_publish = last + BROADCAST_PERIOD;
    let mut budget = 0.0_f64;
    while !stop.load(Ordering::Relaxed) {
        loop {
            match commands.try_recv() {
                Ok(env) => {
                    log::debug!("command {}", env.msg.command.name());
                    let resp = session.handle_command(env.msg);
                    publish(&session, &state_tx);
                    let _ = env.reply.send(resp);
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        let now = Instant::now();
        let wall = now.duration_since(last).as_secs_f64();
        last = now;
        if session.paused() || session.sim().finished() {
            budget = 0.0;
        } else {
            // speed scales wall-clock pacing only; each step is still dt
            budget += wall * session.speed();
            let mut n = 0;
            while budget >= dt && n < MAX_CATCHUP_STEPS {
                session.step();
                budget -= dt;
                n += 1;
            }
            if n == MAX_CATCHUP_STEPS {
                budget = 0.0;
            }
        }
        if now >= next_publish {
            publish(&session, &state_tx);
            next_publish += BROADCAST_PERIOD;
            if next_publish < now {
                next_publish = now + BROADCAST_PERIOD;
            }
        }
        thread::sleep(Duration::from_millis(1));
    }
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    router: Router,
    _sim: SimThread,
}

impl Server {
    /// Loads the scenario into a paused session and binds `addr`.
    pub async fn bind(
        loaded: LoadedScenario,
        addr: SocketAddr,
        static_dir: Option<PathBuf>,
    ) -> Result<Self, ServeError> {
        let session = Session::new(loaded)?;
        let listener = TcpListener::bind(addr).await.map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr),
            _ => ServeError::Bind { addr, source: e },
        })?;
        let initial: Arc<str> = ServerMessage::State(session.state_message()).to_json().into();
        let (state_tx, state_rx) = watch::channel(initial);
        let (cmd_tx, cmd_rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let stop = stop.clone();
            thread::Builder::new()
                .name("vbarrier-sim".into())
                .spawn(move || sim_loop(session, cmd_rx, state_tx, stop))?
        };
        let app = AppState {
            commands: cmd_tx,
            state: state_rx,
            static_dir: static_dir.map(Arc::new),
        };
        let router = Router::new()
            .route("/ws", get(ws_upgrade))
            .route("/", get(index))
            .route("/{*path}", get(static_file))
            .with_state(app);
        Ok(Self {
            listener,
            router,
            _sim: SimThread {
                stop,
                handle: Some(handle),
            },
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> std::io::Result<()> {
        self.run_until(std::future::pending()).await
    }

    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let Server {
            listener,
            router,
            _sim,
        } = self;
        axum::serve(listener, router)
            .with_graceful_shutdown(shutdown)
            .await?;
        drop(_sim);
        Ok(())
    }
}

async fn index(State(app): State<AppState>) -> Response {
    if let Some(dir) = &app.static_dir {
        if let Ok(body) = tokio::fs::read(dir.join("index.html")).await {
            return ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], body).into_response();
        }
    }
    Html(PLACEHOLDER_PAGE).into_response()
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(app): State<AppState>, Path(path): Path<String>) -> Response {
    let Some(dir) = &app.static_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let rel = std::path::Path::new(&path);
    let safe = rel
        .components()
        .all(|c| matches!(c, std::path::Component::Normal(_)));
    if !safe {
        return StatusCode::NOT_FOUND.into_response();
    }
    let full = dir.join(rel);
    match tokio::fs::read(&full).await {
        Ok(body) => ([(header::CONTENT_TYPE, content_type(&full))], body).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client_session(socket, app))
}

async fn submit(app: &AppState, msg: CommandMessage) -> ResponseMessage {
    let request_id = msg.request_id.clone();
    let (reply, rx) = oneshot::channel();
    if app.commands.send(Envelope { msg, reply }).is_err() {
        return ResponseMessage::error(request_id, ErrorCode::Internal, "simulation stopped");
    }
    rx.await.unwrap_or_else(|_| {
        ResponseMessage::error(request_id, ErrorCode::Internal, "simulation stopped")
    })
}

async fn client_session(socket: WebSocket, app: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = tokio::sync::mpsc::unbounded_channel::<String>();
    let mut state_rx = app.state.clone();

    let writer = tokio::spawn(async move {
        let first = state_rx.borrow_and_update().clone();
        if sink.send(Message::Text(first.as_ref().into())).await.is_err() {
            return;
        }
        loop {
            tokio::select! {
                changed = state_rx.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    let s = state_rx.borrow_and_update().clone();
                    if sink.send(Message::Text(s.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                out = out_rx.recv() => {
                    let Some(text) = out else { break };
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
            }
        }
        let _ = sink.close().await;
    });

    while let Some(Ok(msg)) = stream.next().await {
        let resp = match msg {
            Message::Text(text) => match CommandMessage::parse(text.as_str()) {
                Ok(cmd) => submit(&app, cmd).await,
                Err(r) => r,
            },
            Message::Binary(_) => ResponseMessage::error(
                serde_json::Value::Null,
                ErrorCode::Schema,
                "frames must be UTF-8 JSON text",
            ),
            Message::Close(_) => break,
            _ => continue,
        };
        if out_tx.send(ServerMessage::Response(resp).to_json()).is_err() {
            break;
        }
    }
    drop(out_tx);
    let _ = writer.await;
}
