use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::protocol::handle_line;
use crate::system::TrueSystem;

/// How often an idle connection re-checks the shutdown flag.
const POLL: Duration = Duration::from_millis(100);

/// Stops a running [`Server`] from another thread.
#[derive(Clone, Debug)]
pub struct ShutdownHandle {
    flag: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.flag.store(true, Ordering::SeqCst);
        // Wake a blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
    }
}

/// Serves one connection at a time against a single [`TrueSystem`];
/// further connections queue in the listen backlog.
pub struct Server {
    listener: TcpListener,
    system: TrueSystem,
    flag: Arc<AtomicBool>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, system: TrueSystem) -> io::Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)?, system, flag: Arc::new(AtomicBool::new(false)) })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> io::Result<ShutdownHandle> {
        Ok(ShutdownHandle { flag: self.flag.clone(), addr: self.local_addr()? })
    }

    /// Run until shut down, then hand back the system state.
    pub fn serve(mut self) -> io::Result<TrueSystem> {
        log::info!("lab listening on {}", self.local_addr()?);
        for stream in self.listener.incoming() {
            if self.flag.load(Ordering::SeqCst) {
                break;
            }
            match stream {
                Ok(stream) => {
                    let peer = stream.peer_addr().ok();
                    if let Err(e) = serve_connection(stream, &mut self.system, &self.flag) {
                        log::warn!("connection {peer:?} ended with {e}");
                    }
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        Ok(self.system)
    }
}

fn serve_connection(stream: TcpStream, system: &mut TrueSystem, flag: &AtomicBool) -> io::Result<()> {
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => {
                if !buf.is_empty() {
                    respond(&mut writer, system, &buf)?;
                }
                return Ok(());
            }
            Ok(_) if buf.ends_with(b"\n") => {
                respond(&mut writer, system, &buf)?;
                buf.clear();
            }
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {
                if flag.load(Ordering::SeqCst) {
                    return Ok(());
                }
            }
            Err(e) => return Err(e),
        }
    }
}

fn respond(writer: &mut TcpStream, system: &mut TrueSystem, raw: &[u8]) -> io::Result<()> {
    let line = String::from_utf8_lossy(raw);
    let response = handle_line(system, &line);
    writer.write_all(response.to_line().as_bytes())?;
    writer.flush()
}
