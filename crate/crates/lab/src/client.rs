use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use nvdesign_core::{Datum, ExperimentConfig, ModelParameters};

use crate::error::LabError;
use crate::protocol::{Request, Response, Status, PROTOCOL_VERSION};
use crate::system::RunOutcome;
use crate::Lab;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Connection {
    fn open(addr: &SocketAddr) -> std::io::Result<Self> {
        let stream = TcpStream::connect_timeout(addr, CONNECT_TIMEOUT)?;
        stream.set_nodelay(true)?;
        Ok(Connection { writer: stream.try_clone()?, reader: BufReader::new(stream) })
    }

    fn exchange(&mut self, line: &str) -> std::io::Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "lab closed the connection"));
        }
        Ok(reply)
    }
}

/// Client side of the TCP lab. A transport failure triggers one reconnect
/// and resend before surfacing.
pub struct TcpLab {
    addr: SocketAddr,
    conn: Option<Connection>,
}

impl TcpLab {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, LabError> {
        let text = addr.to_socket_addrs().map(|mut a| a.next()).map_err(|source| LabError::Connect {
            addr: "<unresolved>".into(),
            source,
        })?;
        let addr = text.ok_or_else(|| LabError::Protocol("address resolved to nothing".into()))?;
        let conn = Connection::open(&addr).map_err(|source| LabError::Connect { addr: addr.to_string(), source })?;
        Ok(TcpLab { addr, conn: Some(conn) })
    }

    pub fn request(&mut self, request: &Request) -> Result<Response, LabError> {
        let line = request.to_line();
        let reply = match self.try_exchange(&line) {
            Ok(reply) => reply,
            Err(first) => {
                log::warn!("lab transport error ({first}); reconnecting once");
                self.conn = None;
                self.try_exchange(&line).map_err(LabError::Transport)?
            }
        };
        let response: Response =
            serde_json::from_str(&reply).map_err(|e| LabError::Protocol(format!("unparseable reply: {e}")))?;
        if response.v != PROTOCOL_VERSION {
            return Err(LabError::VersionMismatch { found: response.v, expected: PROTOCOL_VERSION });
        }
        if response.status == Status::Error {
            return Err(LabError::Rejected(response.error.unwrap_or_default()));
        }
        Ok(response)
    }

    fn try_exchange(&mut self, line: &str) -> std::io::Result<String> {
        if self.conn.is_none() {
            self.conn = Some(Connection::open(&self.addr)?);
        }
        let result = self.conn.as_mut().expect("just opened").exchange(line);
        if result.is_err() {
            self.conn = None;
        }
        result
    }

    pub fn ping(&mut self) -> Result<(), LabError> {
        self.request(&Request::Ping { seed_echo: None }).map(|_| ())
    }
}

impl Lab for TcpLab {
    fn run(&mut self, config: &ExperimentConfig) -> Result<RunOutcome, LabError> {
        let r = self.request(&Request::Run { config: *config, seed_echo: None })?;
        let datum = r.datum.ok_or_else(|| LabError::Protocol("run reply without datum".into()))?;
        Ok(RunOutcome { datum: datum.into(), cache_hit: r.cache_hit.unwrap_or(false) })
    }

    fn track(&mut self, reference_reps: u64) -> Result<Option<Datum>, LabError> {
        let r = self.request(&Request::Track { reference_reps, seed_echo: None })?;
        Ok(r.datum.map(Into::into))
    }

    fn reset(&mut self, truth: &ModelParameters, seed: u64) -> Result<(), LabError> {
        self.request(&Request::Reset { truth: *truth, seed, seed_echo: None }).map(|_| ())
    }
}
