//! TCP gateway: one streaming session per connection, decisions to a
//! JSON-lines sink and the console.

use std::io::{BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{read_packet, DecisionEvent, SessionConfig, SessionState, StreamError, Verdict};
use crate::nn::ModelParams;

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    pub session: SessionConfig,
    /// JSON-lines decision log; no file sink when absent.
    pub log_path: Option<PathBuf>,
    /// Suppress the per-event console echo.
    pub quiet: bool,
}

/// One decision as written to the JSON-lines log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionLogLine {
    pub session_id: u64,
    pub window_index: u64,
    pub raw_verdict: Verdict,
    pub confidence: f64,
    pub smoothed_verdict: Verdict,
    pub sample_clock_s: f64,
}

type Sink = Arc<Mutex<Option<std::io::BufWriter<std::fs::File>>>>;

fn log_event(sink: &Sink, session_id: u64, event: &DecisionEvent, quiet: bool) {
    let line = DecisionLogLine {
        session_id,
        window_index: event.window_index,
        raw_verdict: event.raw.verdict,
        confidence: event.raw.confidence,
        smoothed_verdict: event.smoothed,
        sample_clock_s: event.sample_clock_s,
    };
    if !quiet {
        println!(
            "[session {session_id}] t={:.1}s window={} raw={:?} conf={:.3} smoothed={:?}",
            line.sample_clock_s, line.window_index, line.raw_verdict, line.confidence,
            line.smoothed_verdict
        );
    }
    if let Ok(mut guard) = sink.lock() {
        if let Some(w) = guard.as_mut() {
            if let Ok(json) = serde_json::to_string(&line) {
                let _ = writeln!(w, "{json}");
                let _ = w.flush();
            }
        }
    }
}

/// Reader that turns read timeouts into shutdown checks, so handler threads
/// stay joinable even when a client stops sending without disconnecting.
struct InterruptibleReader<'a> {
    stream: &'a TcpStream,
    shutdown: &'a AtomicBool,
}

impl Read for InterruptibleReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        loop {
            match (&mut &*self.stream).read(buf) {
                Err(e)
                    if matches!(
                        e.kind(),
                        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                    ) =>
                {
                    if self.shutdown.load(Ordering::Relaxed) {
                        return Ok(0); // behave like EOF so the session finalizes
                    }
                }
                other => return other,
            }
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    params: Arc<ModelParams>,
    config: &GatewayConfig,
    sink: Sink,
    shutdown: Arc<AtomicBool>,
) -> Result<(), StreamError> {
    stream.set_read_timeout(Some(Duration::from_millis(100)))?;
    let mut session = SessionState::new(params, config.session.clone())?;
    let mut reader =
        BufReader::new(InterruptibleReader { stream: &stream, shutdown: &shutdown });
    loop {
        match read_packet(&mut reader) {
            Ok(None) => break,
            Ok(Some(packet)) => {
                let session_id = packet.session_id;
                match session.session_step(&packet) {
                    Ok(events) => {
                        for event in &events {
                            log_event(&sink, session_id, event, config.quiet);
                        }
                    }
                    // the session already reset itself; keep the connection
                    Err(StreamError::SequenceRegression { last, got }) => {
                        eprintln!("[session {session_id}] sequence regression {last} -> {got}, session reset");
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        }
    }
    if let Ok(mut guard) = sink.lock() {
        if let Some(w) = guard.as_mut() {
            let _ = w.flush();
        }
    }
    Ok(())
}

/// Running gateway; dropping without [`GatewayHandle::shutdown`] detaches it.
pub struct GatewayHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting, wait for in-flight sessions to finalize.
    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind and serve until shutdown. Each connection owns an isolated session;
/// model parameters are shared read-only; per-connection decode errors close
/// only that connection.
pub fn gateway_serve(
    listen: &str,
    params: Arc<ModelParams>,
    config: GatewayConfig,
) -> Result<GatewayHandle, StreamError> {
    // fail fast on a model the session would reject, before binding
    SessionState::new(params.clone(), config.session.clone())?;
    let listener = TcpListener::bind(listen).map_err(StreamError::BindFailure)?;
    let addr = listener.local_addr().map_err(StreamError::BindFailure)?;
    listener.set_nonblocking(true)?;
    let sink: Sink = Arc::new(Mutex::new(match &config.log_path {
        Some(path) => Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => None,
    }));
    let shutdown = Arc::new(AtomicBool::new(false));
    let accept_shutdown = shutdown.clone();
    let accept_thread = std::thread::spawn(move || {
        let mut handlers: Vec<JoinHandle<()>> = Vec::new();
        while !accept_shutdown.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let params = params.clone();
                    let config = config.clone();
                    let sink = sink.clone();
                    let shutdown = accept_shutdown.clone();
                    handlers.push(std::thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, params, &config, sink, shutdown)
                        {
                            eprintln!("connection {peer} closed: {e}");
                        }
                    }));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    break;
                }
            }
        }
        for h in handlers {
            let _ = h.join();
        }
    });
    Ok(GatewayHandle { addr, shutdown, accept_thread: Some(accept_thread) })
}
