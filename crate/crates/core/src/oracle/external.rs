//! Client side of the wire protocol, over a subprocess's stdio or TCP.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::protocol::{encode, Request, Response, PROTOCOL_VERSION};
use super::{check_symbols, validate_dist, Capabilities, Oracle, OracleError, Seq};
use crate::alphabet::Alphabet;

/// Per-request timeout used when none is configured.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    /// Shell command whose stdin/stdout speak the protocol.
    Subprocess(String),
    /// `host:port` of a listening server.
    Tcp(String),
}

impl Transport {
    fn describe(&self) -> String {
        match self {
            Transport::Subprocess(cmd) => format!("exec:{cmd}"),
            Transport::Tcp(addr) => format!("tcp:{addr}"),
        }
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
}

impl Connection {
    fn open(transport: &Transport, timeout: Duration) -> Result<Self, OracleError> {
        let unavailable = |e: std::io::Error| OracleError::Unavailable(format!("{}: {e}", transport.describe()));
        let (tx, rx) = mpsc::channel();
        match transport {
            Transport::Subprocess(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(unavailable)?;
                let stdout = child.stdout.take().expect("piped stdout");
                let stdin = child.stdin.take().expect("piped stdin");
                spawn_reader(BufReader::new(stdout), tx);
                Ok(Self { writer: Box::new(stdin), lines: rx, child: Some(child) })
            }
            Transport::Tcp(addr) => {
                let addrs: Vec<_> = addr.to_socket_addrs().map_err(unavailable)?.collect();
                let mut last = None;
                for a in addrs {
                    match TcpStream::connect_timeout(&a, timeout) {
                        Ok(stream) => {
                            let reader = stream.try_clone().map_err(unavailable)?;
                            spawn_reader(BufReader::new(reader), tx);
                            return Ok(Self { writer: Box::new(stream), lines: rx, child: None });
                        }
                        Err(e) => last = Some(e),
                    }
                }
                Err(unavailable(last.unwrap_or_else(|| std::io::Error::other("no address resolved"))))
            }
        }
    }

    fn request(&mut self, request: &Request, timeout: Duration) -> Result<Response, OracleError> {
        let line = encode(request);
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| OracleError::Unavailable(format!("write failed: {e}")))?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => serde_json::from_str::<Response>(&reply)
                .map_err(|e| OracleError::Protocol(format!("malformed response {reply:?}: {e}")))?
                .into_result(),
            Ok(Err(e)) => Err(OracleError::Unavailable(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(OracleError::Unavailable(format!("no answer within {timeout:?}"))),
            Err(RecvTimeoutError::Disconnected) => Err(OracleError::Unavailable("connection closed".into())),
        }
    }

    fn close(mut self, timeout: Duration) {
        let _ = self.request(&Request::Shutdown, timeout.min(Duration::from_secs(2)));
        drop(self.writer);
        if let Some(mut child) = self.child.take() {
            for _ in 0..20 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }

    fn abort(mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader<R: BufRead + Send + 'static>(reader: R, tx: mpsc::Sender<std::io::Result<String>>) {
    thread::spawn(move || {
        for line in reader.lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
}

/// Oracle served by an external process over the wire protocol.
///
/// Requests are serialized over one connection. A request that times out
/// leaves the stream in an unknown state, so the connection is torn down
/// and re-established (with a fresh handshake) before the next request.
pub struct ExternalOracle {
    transport: Transport,
    alphabet: Alphabet,
    supports_next_dist: bool,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
}

impl ExternalOracle {
    pub fn connect(transport: Transport, alphabet: Alphabet, timeout: Duration) -> Result<Self, OracleError> {
        let (conn, supports_next_dist) = handshake(&transport, &alphabet, timeout)?;
        Ok(Self { transport, alphabet, supports_next_dist, timeout, conn: Mutex::new(Some(conn)) })
    }

    /// Connects without a local alphabet, adopting `alphabet_size` numeric
    /// symbols advertised by the server.
    pub fn connect_discover(transport: Transport, timeout: Duration) -> Result<Self, OracleError> {
        let mut conn = Connection::open(&transport, timeout)?;
        let hello = conn.request(&Request::Hello { version: PROTOCOL_VERSION }, timeout);
        let hello = match hello {
            Ok(h) => h,
            Err(e) => {
                conn.abort();
                return Err(e);
            }
        };
        let size = hello
            .alphabet_size
            .filter(|&n| n > 0)
            .ok_or_else(|| OracleError::Protocol("hello response lacks alphabet_size".into()))?;
        let alphabet = Alphabet::numeric(size).expect("positive size");
        Ok(Self {
            transport,
            alphabet,
            supports_next_dist: hello.supports_next_dist.unwrap_or(false),
            timeout,
            conn: Mutex::new(Some(conn)),
        })
    }

    fn call(&self, request: &Request) -> Result<Response, OracleError> {
        let mut guard = self.conn.lock().unwrap();
        if guard.is_none() {
            let (conn, _) = handshake(&self.transport, &self.alphabet, self.timeout)?;
            *guard = Some(conn);
        }
        let result = guard.as_mut().expect("connection present").request(request, self.timeout);
        if matches!(result, Err(OracleError::Unavailable(_))) {
            if let Some(conn) = guard.take() {
                conn.abort();
            }
        }
        result
    }

    fn logprobs(&self, seqs: &[Seq]) -> Result<Vec<f64>, OracleError> {
        let response = self.call(&Request::Logprob { seqs: seqs.to_vec() })?;
        let lps = response.logprobs.ok_or_else(|| OracleError::Protocol("response lacks logprobs".into()))?;
        if lps.len() != seqs.len() {
            return Err(OracleError::Protocol(format!("{} logprobs for {} sequences", lps.len(), seqs.len())));
        }
        Ok(lps.into_iter().map(|lp| lp.0).collect())
    }

    fn dists(&self, prefixes: &[Seq]) -> Result<Vec<Vec<f64>>, OracleError> {
        let response = self.call(&Request::NextDist { prefixes: prefixes.to_vec() })?;
        let dists = response.dists.ok_or_else(|| OracleError::Protocol("response lacks dists".into()))?;
        if dists.len() != prefixes.len() {
            return Err(OracleError::Protocol(format!("{} dists for {} prefixes", dists.len(), prefixes.len())));
        }
        Ok(dists)
    }
}

fn handshake(transport: &Transport, alphabet: &Alphabet, timeout: Duration) -> Result<(Connection, bool), OracleError> {
    let mut conn = Connection::open(transport, timeout)?;
    let hello = match conn.request(&Request::Hello { version: PROTOCOL_VERSION }, timeout) {
        Ok(h) => h,
        Err(e) => {
            conn.abort();
            return Err(e);
        }
    };
    if hello.alphabet_size != Some(alphabet.len()) {
        conn.close(timeout);
        return Err(OracleError::Protocol(format!(
            "server alphabet size {:?} does not match local alphabet size {}",
            hello.alphabet_size,
            alphabet.len()
        )));
    }
    Ok((conn, hello.supports_next_dist.unwrap_or(false)))
}

fn checked_logprob(lp: f64) -> Result<f64, OracleError> {
    if lp.is_nan() {
        Err(OracleError::CorruptAnswer("NaN log-probability".into()))
    } else {
        Ok(lp)
    }
}

impl Oracle for ExternalOracle {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_next_dist: self.supports_next_dist, max_concurrent_queries: 1 }
    }

    fn identity(&self) -> String {
        self.transport.describe()
    }

    /// Sends the whole batch at once; if that fails as unavailable, each item
    /// is retried alone so one bad query cannot sink the others.
    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        let mut out: Vec<Result<f64, OracleError>> = seqs
            .iter()
            .map(|s| check_symbols(&self.alphabet, s).map(|_| 0.0))
            .collect();
        let valid: Vec<usize> = (0..seqs.len()).filter(|&i| out[i].is_ok()).collect();
        if valid.is_empty() {
            return out;
        }
        let batch: Vec<Seq> = valid.iter().map(|&i| seqs[i].clone()).collect();
        match self.logprobs(&batch) {
            Ok(lps) => {
                for (&i, lp) in valid.iter().zip(lps) {
                    out[i] = checked_logprob(lp);
                }
            }
            Err(e) if batch.len() > 1 && e.is_retryable() => {
                for (&i, seq) in valid.iter().zip(batch) {
                    out[i] = self.logprobs(&[seq]).and_then(|v| checked_logprob(v[0]));
                }
            }
            Err(e) => {
                for &i in &valid {
                    out[i] = Err(e.clone());
                }
            }
        }
        out
    }

    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        if !self.supports_next_dist {
            return prefixes.iter().map(|_| Err(OracleError::Capability("next_dist"))).collect();
        }
        if let Some(bad) = prefixes.iter().find_map(|p| check_symbols(&self.alphabet, p).err()) {
            return prefixes.iter().map(|_| Err(bad.clone())).collect();
        }
        if prefixes.is_empty() {
            return Vec::new();
        }
        match self.dists(prefixes) {
            Ok(dists) => dists.into_iter().map(|d| validate_dist(d, self.alphabet.len())).collect(),
            Err(e) => prefixes.iter().map(|_| Err(e.clone())).collect(),
        }
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Some(conn) = self.conn.get_mut().ok().and_then(Option::take) {
            conn.close(self.timeout);
        }
    }
}

#[cfg(test)]
mod tests {
    use std::net::TcpListener;

    use super::*;
    use crate::oracle::protocol::serve;
    use crate::oracle::{next_dist, string_prob, WaOracle};
    use crate::wa::fixtures::two_state;

    fn tcp_server() -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let oracle = WaOracle::new(two_state());
            for stream in listener.incoming() {
                let stream = stream.unwrap();
                let reader = BufReader::new(stream.try_clone().unwrap());
                let _ = serve(&oracle, reader, stream);
            }
        });
        addr
    }

    #[test]
    fn tcp_round_trip() {
        let addr = tcp_server();
        let oracle =
            ExternalOracle::connect(Transport::Tcp(addr), Alphabet::new(["a", "b"]).unwrap(), DEFAULT_TIMEOUT).unwrap();
        assert!(oracle.capabilities().supports_next_dist);
        let lp = string_prob(&oracle, &[0, 1]).unwrap();
        assert!((lp - (5.0f64 / 96.0).ln()).abs() < 1e-12);
        assert_eq!(string_prob(&oracle, &[]).unwrap(), f64::NEG_INFINITY);
        let d = next_dist(&oracle, &[0]).unwrap();
        assert!((d[2] - 1.0 / 16.0).abs() < 1e-12);
        assert!(matches!(string_prob(&oracle, &[3]), Err(OracleError::InvalidSymbol { .. })));
    }

    #[test]
    fn alphabet_mismatch_is_a_protocol_error() {
        let addr = tcp_server();
        let err = ExternalOracle::connect(Transport::Tcp(addr), Alphabet::numeric(4).unwrap(), DEFAULT_TIMEOUT)
            .err()
            .unwrap();
        assert!(matches!(err, OracleError::Protocol(_)));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let err = ExternalOracle::connect(Transport::Tcp(addr), Alphabet::numeric(2).unwrap(), Duration::from_secs(1))
            .err()
            .unwrap();
        assert!(matches!(err, OracleError::Unavailable(_)));
    }
}
