//! Websocket teleoperation server. One session per connection; the
//! connection task owns the session, so the freshest command is applied
//! exactly once at each tick.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use catchform_core::teleop::{ClientMessage, ServerMessage, TeleopConfig, TeleopSession};
use catchform_core::Result;
use futures_util::{SinkExt, StreamExt};
use tokio::time::{interval, MissedTickBehavior};

pub struct ServeOptions {
    pub config: TeleopConfig,
    pub port: u16,
    pub out: PathBuf,
    pub headless: bool,
    /// Stop after this many seconds.
    pub duration: Option<f64>,
}

struct App {
    config: TeleopConfig,
    out: PathBuf,
    next_id: AtomicU64,
}

pub fn run(opts: ServeOptions) -> Result<()> {
    opts.config.validate()?;
    std::fs::create_dir_all(&opts.out)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(opts))
}

async fn serve(opts: ServeOptions) -> Result<()> {
    let app = Arc::new(App { config: opts.config.clone(), out: opts.out.clone(), next_id: AtomicU64::new(1) });
    let router = Router::new().route("/ws", get(upgrade)).route("/health", get(|| async { "ok" })).with_state(app);
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], opts.port))).await?;
    let addr = listener.local_addr()?;
    println!("listening on ws://{addr}/ws");
    if !opts.headless {
        println!("no UI is bundled with this binary; point a teleop client at the address above");
    }
    let duration = opts.duration;
    let stop = async move {
        match duration {
            Some(s) => tokio::time::sleep(Duration::from_secs_f64(s.max(0.0))).await,
            None => std::future::pending::<()>().await,
        }
    };
    axum::serve(listener, router).with_graceful_shutdown(stop).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> Response {
    ws.on_upgrade(move |socket| session(socket, app))
}

async fn session(socket: WebSocket, app: Arc<App>) {
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let (mut tx, mut rx) = socket.split();
    let mut s = match TeleopSession::open(id, app.config.clone()) {
        Ok(s) => s,
        Err(e) => {
            let _ = tx.send(Message::Text(ServerMessage::Error(e.to_string()).to_text().into())).await;
            return;
        }
    };
    if tx.send(Message::Text(ServerMessage::Hello(s.hello()).to_text().into())).await.is_err() {
        return;
    }
    let mut ticks = interval(Duration::from_secs_f64(catchform_core::policy::action::PERIOD));
    let mut stream = interval(Duration::from_secs_f64(1.0 / app.config.stream_hz));
    ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
    stream.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let mut saved = 0;
    loop {
        let mut out: Vec<Message> = Vec::new();
        tokio::select! {
            _ = ticks.tick() => {
                if let Err(e) = s.tick() {
                    out.push(Message::Text(ServerMessage::Error(e.to_string()).to_text().into()));
                }
            }
            _ = stream.tick() => {
                let p = s.state();
                let cue = s.cue_change(&p);
                out.push(Message::Binary(p.field_bytes().into()));
                out.insert(0, Message::Text(ServerMessage::State(p.clone()).to_text().into()));
                if let Some(c) = cue {
                    out.push(Message::Text(ServerMessage::Cue(c).to_text().into()));
                }
            }
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(t))) => {
                    let replies = ClientMessage::parse(t.as_str()).and_then(|m| s.handle(m));
                    match replies {
                        Ok(rs) => {
                            for r in rs {
                                out.push(Message::Text(r.to_text().into()));
                            }
                        }
                        Err(e) => out.push(Message::Text(ServerMessage::Error(e.to_string()).to_text().into())),
                    }
                    while saved < s.episodes().len() {
                        let path = app.out.join(format!("teleop_{id}_{saved:03}.cfep"));
                        if let Err(e) = s.episodes()[saved].write(&path) {
                            out.push(Message::Text(ServerMessage::Error(e.to_string()).to_text().into()));
                        }
                        saved += 1;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            }
        }
        for m in out {
            if tx.send(m).await.is_err() {
                s.close();
                return;
            }
        }
    }
    s.close();
}
