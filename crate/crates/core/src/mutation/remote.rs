//! TCP client and server sides of the mutator wire protocol.

use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::mock::MockMutator;
use super::Mutator;
use crate::error::{CovrlError, Result};
use crate::protocol::{self, FinetuneReport, FinetuneRequest, InfillRequest, Request, Response};

const IO_TIMEOUT: Duration = Duration::from_secs(120);

/// A connection to an external mutator service.
pub struct RemoteMutator {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl RemoteMutator {
    pub fn connect(addr: &str) -> Result<Self> {
        let sock = addr
            .to_socket_addrs()
            .map_err(CovrlError::Transport)?
            .next()
            .ok_or_else(|| CovrlError::config(format!("mutator address {addr:?} did not resolve")))?;
        let stream = TcpStream::connect_timeout(&sock, Duration::from_secs(10))
            .map_err(CovrlError::Transport)?;
        stream.set_nodelay(true).map_err(CovrlError::Transport)?;
        stream
            .set_read_timeout(Some(IO_TIMEOUT))
            .map_err(CovrlError::Transport)?;
        let reader = BufReader::new(stream.try_clone().map_err(CovrlError::Transport)?);
        Ok(RemoteMutator {
            reader,
            writer: BufWriter::new(stream),
        })
    }

    pub fn call(&mut self, req: &Request) -> Result<Response> {
        protocol::send(&mut self.writer, req)?;
        match protocol::receive(&mut self.reader)? {
            Some(Response::Error { message }) => Err(CovrlError::Protocol(message)),
            Some(resp) => Ok(resp),
            None => Err(CovrlError::Transport(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "mutator closed the connection",
            ))),
        }
    }
}

impl Mutator for RemoteMutator {
    fn infill(&mut self, req: &InfillRequest) -> Result<Vec<Vec<String>>> {
        match self.call(&Request::Infill(req.clone()))? {
            Response::Infill { id, fills } if id == req.id => Ok(fills),
            Response::Infill { id, .. } => Err(CovrlError::Protocol(format!(
                "reply id {id} does not match request {}",
                req.id
            ))),
            other => Err(unexpected("infill", &other)),
        }
    }

    fn finetune(&mut self, req: &FinetuneRequest) -> Result<FinetuneReport> {
        match self.call(&Request::Finetune(req.clone()))? {
            Response::Finetune(report) => Ok(report),
            other => Err(unexpected("finetune", &other)),
        }
    }

    fn ping(&mut self) -> Result<String> {
        match self.call(&Request::Ping)? {
            Response::Pong { model } => Ok(model),
            other => Err(unexpected("pong", &other)),
        }
    }
}

fn unexpected(wanted: &str, got: &Response) -> CovrlError {
    CovrlError::Protocol(format!("expected {wanted} reply, got {got:?}"))
}

/// Remote mutator with reconnect-once semantics: a transport failure
/// triggers one reconnect and retry; if that fails too, the mock mutator
/// serves the rest of the cycle.
pub struct ResilientMutator {
    addr: String,
    remote: Option<RemoteMutator>,
    fallback: MockMutator,
    degraded: bool,
    fallbacks: u64,
}

impl ResilientMutator {
    pub fn new(addr: impl Into<String>, fallback: MockMutator) -> Self {
        let addr = addr.into();
        let remote = match RemoteMutator::connect(&addr) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("mutator at {addr} unavailable ({e}); starting on the mock");
                None
            }
        };
        let degraded = remote.is_none();
        ResilientMutator {
            addr,
            remote,
            fallback,
            degraded,
            fallbacks: u64::from(degraded),
        }
    }

    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    /// Number of times the mock took over.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks
    }

    fn with_remote<T>(&mut self, mut op: impl FnMut(&mut RemoteMutator) -> Result<T>) -> Option<Result<T>> {
        if self.degraded {
            return None;
        }
        for attempt in 0..2 {
            if self.remote.is_none() {
                match RemoteMutator::connect(&self.addr) {
                    Ok(r) => self.remote = Some(r),
                    Err(e) => {
                        log::warn!("reconnect to {} failed: {e}", self.addr);
                        continue;
                    }
                }
            }
            let remote = self.remote.as_mut().expect("connected above");
            match op(remote) {
                Err(CovrlError::Transport(e)) => {
                    log::warn!("mutator transport error (attempt {}): {e}", attempt + 1);
                    self.remote = None;
                }
                other => return Some(other),
            }
        }
        log::warn!("mutator at {} lost; using the mock for the rest of the cycle", self.addr);
        self.degraded = true;
        self.fallbacks += 1;
        None
    }
}

impl Mutator for ResilientMutator {
    fn infill(&mut self, req: &InfillRequest) -> Result<Vec<Vec<String>>> {
        match self.with_remote(|r| r.infill(req)) {
            Some(res) => res,
            None => self.fallback.infill(req),
        }
    }

    fn finetune(&mut self, req: &FinetuneRequest) -> Result<FinetuneReport> {
        self.fallback.finetune(req)?;
        match self.with_remote(|r| r.finetune(req)) {
            Some(res) => res,
            None => Err(CovrlError::Transport(std::io::Error::new(
                std::io::ErrorKind::NotConnected,
                "finetune skipped: mutator unavailable",
            ))),
        }
    }

    fn ping(&mut self) -> Result<String> {
        match self.with_remote(|r| r.ping()) {
            Some(res) => res,
            None => self.fallback.ping(),
        }
    }

    fn begin_cycle(&mut self) {
        self.degraded = false;
    }
}

/// Answers one request with the given mutator.
pub fn handle_request(mutator: &mut dyn Mutator, req: Request) -> Response {
    let result = match req {
        Request::Infill(r) => mutator.infill(&r).map(|fills| Response::Infill { id: r.id, fills }),
        Request::Finetune(r) => mutator.finetune(&r).map(Response::Finetune),
        Request::Ping => mutator.ping().map(|model| Response::Pong { model }),
    };
    result.unwrap_or_else(|e| Response::Error {
        message: e.to_string(),
    })
}

/// Serves frames on one connection until the peer closes it. Malformed
/// payloads get an error reply and the connection stays open.
pub fn serve_connection(stream: TcpStream, mutator: &mut dyn Mutator) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let payload = match protocol::read_frame(&mut reader) {
            Ok(Some(p)) => p,
            Ok(None) => return Ok(()),
            Err(CovrlError::Protocol(message)) => {
                protocol::send(&mut writer, &Response::Error { message })?;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let resp = match protocol::decode_payload::<Request>(&payload) {
            Ok(req) => handle_request(mutator, req),
            Err(e) => Response::Error {
                message: e.to_string(),
            },
        };
        protocol::send(&mut writer, &resp)?;
    }
}

/// Accepts connections one at a time, forever (or until `max_connections`).
pub fn serve(listener: TcpListener, mutator: &mut dyn Mutator, max_connections: Option<usize>) -> Result<()> {
    let mut served = 0;
    for stream in listener.incoming() {
        let stream = stream?;
        if let Err(e) = serve_connection(stream, mutator) {
            log::warn!("mutator connection ended with error: {e}");
        }
        served += 1;
        if max_connections.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::DecodeOptions;
    use std::thread;

    fn spawn_mock(max: usize) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let mut mock = MockMutator::new(["a", "b"], 1, true);
            serve(listener, &mut mock, Some(max)).unwrap();
        });
        addr
    }

    #[test]
    fn remote_round_trip() {
        let addr = spawn_mock(1);
        let mut remote = RemoteMutator::connect(&addr).unwrap();
        assert_eq!(remote.ping().unwrap(), super::super::mock::MOCK_MODEL_ID);
        let fills = remote
            .infill(&InfillRequest {
                id: 3,
                masked_tokens: vec!["<extra_id_0>".into(), "<extra_id_1>".into()],
                slots: 2,
                decode: DecodeOptions::default(),
            })
            .unwrap();
        assert_eq!(fills.len(), 2);
    }

    #[test]
    fn resilient_falls_back_when_unreachable() {
        // Bind then drop to get a port nobody listens on.
        let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
        let mut m = ResilientMutator::new(addr, MockMutator::new(["z"], 2, false));
        assert!(m.is_degraded());
        let fills = m
            .infill(&InfillRequest {
                id: 1,
                masked_tokens: vec!["<extra_id_0>".into()],
                slots: 1,
                decode: DecodeOptions::default(),
            })
            .unwrap();
        assert_eq!(fills.len(), 1);
        assert!(m.finetune(&FinetuneRequest { cycle: 1, records: vec![], epochs: 1 }).is_err());
    }

    #[test]
    fn malformed_frame_keeps_connection() {
        use std::io::Write;
        let addr = spawn_mock(1);
        let mut stream = TcpStream::connect(&addr).unwrap();
        protocol::write_frame(&mut stream, b"{\"type\":\"bogus\"}").unwrap();
        let resp: Response = protocol::receive(&mut stream).unwrap().unwrap();
        assert!(matches!(resp, Response::Error { .. }));
        protocol::send(&mut stream, &Request::Ping).unwrap();
        stream.flush().unwrap();
        let resp: Response = protocol::receive(&mut stream).unwrap().unwrap();
        assert!(matches!(resp, Response::Pong { .. }));
    }
}
