//! Line loops over stdio-like streams and TCP.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::{Result, ServeConfig, Service, Transport};

const POLL: Duration = Duration::from_millis(20);

/// Runs the service with its configured transport until shutdown.
pub fn serve(config: ServeConfig) -> Result<()> {
    let service = Service::new(config.session)?;
    match config.transport {
        Transport::Stdio => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_lines(service, stdin.lock(), stdout.lock())
        }
        Transport::Tcp(addr) => {
            let listener = TcpListener::bind(&addr)?;
            log::info!("listening on {}", listener.local_addr()?);
            serve_tcp(service, listener)
        }
    }
}

/// Answers one line per request until `shutdown` or end of input, then
/// checkpoints every session. Blank lines are ignored.
pub fn serve_lines<R: BufRead, W: Write>(mut service: Service, reader: R, mut writer: W) -> Result<()> {
    for line in reader.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                log::error!("input failed: {e}");
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let reply = service.handle_line(&line);
        if let Err(e) = writeln!(writer, "{}", reply.line).and_then(|()| writer.flush()) {
            log::error!("output failed: {e}");
            break;
        }
        if reply.shutdown {
            return Ok(());
        }
    }
    service.checkpoint_all()
}

/// Accepts connections until some client sends `shutdown`. Connections share
/// one service; each is served on its own thread.
pub fn serve_tcp(service: Service, listener: TcpListener) -> Result<()> {
    listener.set_nonblocking(true)?;
    let service = Arc::new(Mutex::new(service));
    let stop = Arc::new(AtomicBool::new(false));
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("connection from {peer}");
                let (service, stop) = (Arc::clone(&service), Arc::clone(&stop));
                workers.push(thread::spawn(move || {
                    if let Err(e) = handle_connection(stream, &service, &stop) {
                        log::warn!("connection from {peer} ended: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::error!("accept failed: {e}");
                stop.store(true, Ordering::SeqCst);
            }
        }
        workers.retain(|w| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
    let mut service = service.lock().unwrap_or_else(|p| p.into_inner());
    service.checkpoint_all()
}

fn handle_connection(stream: TcpStream, service: &Mutex<Service>, stop: &AtomicBool) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL * 5))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        // a read timeout may leave a partial line in `buf`; keep reading
        let eof = match reader.read_until(b'\n', &mut buf) {
            Ok(0) => true,
            Ok(_) if buf.ends_with(b"\n") => false,
            Ok(_) => continue,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e),
        };
        let line = String::from_utf8_lossy(&buf).into_owned();
        buf.clear();
        if !line.trim().is_empty() {
            let reply = service.lock().unwrap_or_else(|p| p.into_inner()).handle_line(&line);
            writeln!(writer, "{}", reply.line)?;
            writer.flush()?;
            if reply.shutdown {
                stop.store(true, Ordering::SeqCst);
                return Ok(());
            }
        }
        if eof {
            return Ok(());
        }
    }
}
