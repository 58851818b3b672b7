//! Live-network environment: plain-HTTP tracker announces, UDP KRPC, and the
//! wall clock.
//!
//! Peer exchange and chunk fetching require a full peer wire session, which
//! is outside this toolkit's scope; in the field those channels report
//! [`TransportError::Unsupported`] and enumeration proceeds via tracker and
//! DHT. HTTPS trackers are likewise not handled by the built-in minimal
//! client.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use crate::crawler::{SwarmEnv, TransportError};
use crate::dht::{decode_krpc, encode_krpc, KrpcMessage, NodeInfo};
use crate::metainfo::InfoHash;
use crate::tracker::{
    build_announce_url, parse_announce_response, AnnounceRequest, AnnounceResponse, PeerEndpoint,
    PexMessage,
};

/// Environment backed by real sockets.
pub struct FieldEnv {
    pub timeout: Duration,
    pub dht_bootstrap: Vec<NodeInfo>,
}

impl Default for FieldEnv {
    fn default() -> Self {
        FieldEnv {
            timeout: Duration::from_secs(10),
            dht_bootstrap: Vec::new(),
        }
    }
}

struct ParsedUrl {
    host: String,
    port: u16,
    path_and_query: String,
}

fn parse_http_url(url: &str) -> Result<ParsedUrl, TransportError> {
    let rest = url
        .strip_prefix("http://")
        .ok_or(TransportError::Unsupported("only plain http:// URLs"))?;
    let (authority, path) = match rest.find('/') {
        Some(idx) => (&rest[..idx], &rest[idx..]),
        None => (rest, "/"),
    };
    let (host, port) = match authority.rsplit_once(':') {
        Some((h, p)) => (
            h.to_string(),
            p.parse::<u16>()
                .map_err(|_| TransportError::Protocol(format!("bad port in {url}")))?,
        ),
        None => (authority.to_string(), 80),
    };
    if host.is_empty() {
        return Err(TransportError::Protocol(format!("no host in {url}")));
    }
    Ok(ParsedUrl {
        host,
        port,
        path_and_query: path.to_string(),
    })
}

/// Minimal HTTP/1.0 GET, returning the response body on status 200.
fn http_get(url: &str, timeout: Duration) -> Result<Vec<u8>, TransportError> {
    let parsed = parse_http_url(url)?;
    let addr = (parsed.host.as_str(), parsed.port)
        .to_socket_addrs()
        .map_err(|e| TransportError::Unreachable(e.to_string()))?
        .next()
        .ok_or_else(|| TransportError::Unreachable(format!("{} does not resolve", parsed.host)))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout)
        .map_err(|e| TransportError::Unreachable(e.to_string()))?;
    stream
        .set_read_timeout(Some(timeout))
        .and_then(|_| stream.set_write_timeout(Some(timeout)))
        .map_err(|e| TransportError::Protocol(e.to_string()))?;
    let request = format!(
        "GET {} HTTP/1.0\r\nHost: {}\r\nUser-Agent: up2p/0.1\r\nConnection: close\r\n\r\n",
        parsed.path_and_query, parsed.host
    );
    stream
        .write_all(request.as_bytes())
        .map_err(|e| TransportError::Unreachable(e.to_string()))?;
    let mut response = Vec::new();
    stream
        .read_to_end(&mut response)
        .map_err(|e| TransportError::Unreachable(e.to_string()))?;

    let header_end = response
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| TransportError::Protocol("no header terminator".into()))?;
    let head = String::from_utf8_lossy(&response[..header_end]);
    let status_line = head.lines().next().unwrap_or_default();
    let status = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse::<u16>().ok())
        .ok_or_else(|| TransportError::Protocol(format!("bad status line {status_line:?}")))?;
    if status != 200 {
        return Err(TransportError::Protocol(format!("HTTP status {status}")));
    }
    Ok(response[header_end + 4..].to_vec())
}

impl SwarmEnv for FieldEnv {
    fn announce(
        &self,
        tracker_url: &str,
        request: &AnnounceRequest,
    ) -> Result<AnnounceResponse, TransportError> {
        let url = build_announce_url(tracker_url, request)
            .map_err(|e| TransportError::Protocol(e.to_string()))?;
        let body = http_get(&url, self.timeout)?;
        parse_announce_response(&body).map_err(|e| TransportError::Protocol(e.to_string()))
    }

    fn dht_bootstrap(&self, _info_hash: &InfoHash) -> Vec<NodeInfo> {
        self.dht_bootstrap.clone()
    }

    fn dht_query(
        &self,
        node: PeerEndpoint,
        query: &KrpcMessage,
    ) -> Result<KrpcMessage, TransportError> {
        let socket = UdpSocket::bind("0.0.0.0:0")
            .map_err(|e| TransportError::Protocol(e.to_string()))?;
        socket
            .set_read_timeout(Some(self.timeout))
            .map_err(|e| TransportError::Protocol(e.to_string()))?;
        let target = SocketAddr::from((node.ip, node.port));
        socket
            .send_to(&encode_krpc(query), target)
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let mut buf = [0u8; 65_536];
        let (len, _) = socket.recv_from(&mut buf).map_err(|_| TransportError::Timeout)?;
        decode_krpc(&buf[..len]).map_err(|e| TransportError::Protocol(e.to_string()))
    }

    fn pex_exchange(
        &self,
        _info_hash: &InfoHash,
        _peer: PeerEndpoint,
    ) -> Result<PexMessage, TransportError> {
        Err(TransportError::Unsupported(
            "peer-exchange needs a wire session; not available in field mode",
        ))
    }

    fn fetch_chunk(
        &self,
        _peer: PeerEndpoint,
        _info_hash: &InfoHash,
        _chunk_index: u32,
    ) -> Result<Vec<u8>, TransportError> {
        Err(TransportError::Unsupported(
            "chunk fetch needs a wire session; not available in field mode",
        ))
    }

    fn fetch_torrent(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        http_get(url, self.timeout)
    }

    fn now_ms(&self) -> i64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }

    fn wait_secs(&self, seconds: u64) {
        std::thread::sleep(Duration::from_secs(seconds));
    }
}
