//! WebSocket session endpoint. Each connection gets its own session on a
//! wall clock; model jobs run on worker threads so frames, speech and
//! cancellation keep flowing while a call is in flight.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use base64::Engine;
use tungstenite::{Message, WebSocket};

use super::{ClientMessage, Clock, Job, JobOutput, Session, SessionError, WallClock};

/// Builds a deferred-mode session for a new connection.
pub type SessionFactory = dyn Fn(Arc<dyn Clock>) -> Result<Session, SessionError> + Send + Sync;

const POLL_INTERVAL: Duration = Duration::from_millis(20);

/// Accepts connections until `max_connections` have been served (forever
/// when `None`).
pub fn serve(listener: TcpListener, factory: Arc<SessionFactory>, max_connections: Option<usize>) {
    let mut handles = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        match stream {
            Ok(stream) => {
                let factory = factory.clone();
                handles.push(thread::spawn(move || {
                    if let Err(e) = handle_connection(stream, factory.as_ref()) {
                        tracing::warn!(error = %e, "session connection ended with an error");
                    }
                }));
            }
            Err(e) => tracing::warn!(error = %e, "accept failed"),
        }
        if max_connections.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn flush(ws: &mut WebSocket<TcpStream>, session: &mut Session) -> Result<(), tungstenite::Error> {
    for m in session.drain_messages() {
        ws.send(Message::text(m.to_json()))?;
    }
    Ok(())
}

fn apply(session: &mut Session, msg: ClientMessage) {
    match msg {
        ClientMessage::Frame { ts, image_b64 } => {
            match base64::engine::general_purpose::STANDARD.decode(image_b64.trim()) {
                Ok(bytes) => {
                    session.ingest_frame_bytes(ts, &bytes);
                }
                Err(e) => session.report_error(format!("Frame at {ts} is not valid base64: {e}")),
            }
        }
        ClientMessage::Utterance { text, .. } => {
            session.handle_utterance(&text);
        }
        ClientMessage::Command { name, .. } => {
            session.handle_command(name);
        }
    }
}

pub fn handle_connection(stream: TcpStream, factory: &SessionFactory) -> Result<(), tungstenite::Error> {
    let peer = stream.peer_addr().ok();
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => {
            tungstenite::Error::Io(std::io::Error::new(ErrorKind::Interrupted, "handshake interrupted"))
        }
    })?;
    ws.get_ref().set_read_timeout(Some(POLL_INTERVAL))?;
    tracing::info!(?peer, "session connected");

    let clock: Arc<dyn Clock> = Arc::new(WallClock::start());
    let mut session = match factory(clock) {
        Ok(s) => s,
        Err(e) => {
            ws.send(Message::text(
                serde_json::json!({"type": "event", "kind": "error", "text": e.to_string(),
                    "step_index": 0, "action_index": 0, "ts": 0.0})
                .to_string(),
            ))?;
            return ws.close(None);
        }
    };
    let (tx, rx) = mpsc::channel::<(Job, JobOutput)>();
    flush(&mut ws, &mut session)?;
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => match serde_json::from_str::<ClientMessage>(t.as_str()) {
                Ok(msg) => apply(&mut session, msg),
                Err(e) => session.report_error(format!("Unrecognized message: {e}")),
            },
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e),
        }
        session.poll();
        for job in session.take_jobs() {
            let executor = session.executor();
            let tx = tx.clone();
            thread::spawn(move || {
                let out = executor.run(&job);
                let _ = tx.send((job, out));
            });
        }
        while let Ok((job, out)) = rx.try_recv() {
            session.finish_job(job, out);
        }
        flush(&mut ws, &mut session)?;
    }
    tracing::info!(?peer, "session closed");
    Ok(())
}
