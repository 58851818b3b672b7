//! HTTP tracker announce building/parsing, the 6-byte compact peer codec, and
//! PEX payload handling. IPv4 only; the counting pipeline downstream is
//! IPv4-based.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bencode::{self, BencodeValue};
use crate::metainfo::InfoHash;

/// An IPv4 peer address as observed in a swarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PeerEndpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl PeerEndpoint {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        PeerEndpoint { ip, port }
    }

    /// Port-0 entries are recorded as sightings but cannot be contacted.
    pub fn is_usable(&self) -> bool {
        self.port != 0
    }

    pub fn to_compact(&self) -> [u8; 6] {
        let mut out = [0u8; 6];
        out[..4].copy_from_slice(&self.ip.octets());
        out[4..].copy_from_slice(&self.port.to_be_bytes());
        out
    }

    pub fn from_compact(bytes: &[u8; 6]) -> Self {
        PeerEndpoint {
            ip: Ipv4Addr::new(bytes[0], bytes[1], bytes[2], bytes[3]),
            port: u16::from_be_bytes([bytes[4], bytes[5]]),
        }
    }
}

impl fmt::Display for PeerEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnounceEvent {
    Started,
    Stopped,
    Completed,
}

impl AnnounceEvent {
    fn as_str(self) -> &'static str {
        match self {
            AnnounceEvent::Started => "started",
            AnnounceEvent::Stopped => "stopped",
            AnnounceEvent::Completed => "completed",
        }
    }
}

/// One announce to a tracker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnounceRequest {
    pub info_hash: InfoHash,
    pub peer_id: [u8; 20],
    pub port: u16,
    pub uploaded: u64,
    pub downloaded: u64,
    pub left: u64,
    pub numwant: u32,
    pub event: Option<AnnounceEvent>,
}

/// A tracker's answer: re-announce interval, seeder/leecher counts and a peer
/// sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnounceResponse {
    pub interval: u32,
    pub complete: u32,
    pub incomplete: u32,
    pub peers: Vec<PeerEndpoint>,
}

impl AnnounceResponse {
    /// The tracker's view of the swarm population.
    pub fn reported_population(&self) -> u32 {
        self.complete + self.incomplete
    }
}

/// Peers shared by a neighbour through peer exchange.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PexMessage {
    pub added: Vec<PeerEndpoint>,
    pub dropped: Vec<PeerEndpoint>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrackerError {
    #[error("invalid base URL: {0}")]
    InvalidBaseUrl(String),
    #[error("tracker failure: {0}")]
    TrackerFailure(String),
    #[error("malformed tracker data: {0}")]
    MalformedInput(String),
}

impl From<bencode::BencodeError> for TrackerError {
    fn from(e: bencode::BencodeError) -> Self {
        TrackerError::MalformedInput(e.to_string())
    }
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b'_' | b'~')
}

/// Percent-encode raw bytes for a query value; unreserved bytes pass through
/// literally.
fn percent_encode(bytes: &[u8], out: &mut String) {
    for &b in bytes {
        if is_unreserved(b) {
            out.push(b as char);
        } else {
            out.push('%');
            out.push_str(&format!("{b:02X}"));
        }
    }
}

/// Build the announce GET URL for `req` against an http(s) base URL.
pub fn build_announce_url(base: &str, req: &AnnounceRequest) -> Result<String, TrackerError> {
    let rest = base
        .strip_prefix("http://")
        .or_else(|| base.strip_prefix("https://"))
        .ok_or_else(|| TrackerError::InvalidBaseUrl(base.to_string()))?;
    if rest.is_empty() || rest.starts_with('/') {
        return Err(TrackerError::InvalidBaseUrl(base.to_string()));
    }
    let mut url = String::with_capacity(base.len() + 192);
    url.push_str(base);
    url.push(if base.contains('?') { '&' } else { '?' });
    url.push_str("info_hash=");
    percent_encode(req.info_hash.as_bytes(), &mut url);
    url.push_str("&peer_id=");
    percent_encode(&req.peer_id, &mut url);
    url.push_str(&format!(
        "&port={}&uploaded={}&downloaded={}&left={}&compact=1&numwant={}",
        req.port, req.uploaded, req.downloaded, req.left, req.numwant
    ));
    if let Some(event) = req.event {
        url.push_str("&event=");
        url.push_str(event.as_str());
    }
    Ok(url)
}

/// Encode endpoints into the 6-byte-per-peer compact form.
pub fn encode_compact_peers(peers: &[PeerEndpoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(peers.len() * 6);
    for peer in peers {
        out.extend_from_slice(&peer.to_compact());
    }
    out
}

/// Decode a compact peer string; the length must be a multiple of 6.
pub fn parse_compact_peers(bytes: &[u8]) -> Result<Vec<PeerEndpoint>, TrackerError> {
    if bytes.len() % 6 != 0 {
        return Err(TrackerError::MalformedInput(format!(
            "compact peer string length {} is not a multiple of 6",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(6)
        .map(|c| PeerEndpoint::from_compact(c.try_into().expect("chunk is 6 bytes")))
        .collect())
}

/// Parse a bencoded announce response. Both the compact peer string and the
/// non-compact list-of-dicts form are supported; a `failure reason` key maps
/// to [`TrackerError::TrackerFailure`].
pub fn parse_announce_response(bytes: &[u8]) -> Result<AnnounceResponse, TrackerError> {
    let decoded = bencode::decode(bytes)?;
    let root = decoded
        .value
        .as_dict()
        .ok_or_else(|| TrackerError::MalformedInput("response is not a dict".into()))?;

    if let Some(reason) = root.get(&b"failure reason"[..]) {
        let text = reason
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| "unreadable failure reason".into());
        return Err(TrackerError::TrackerFailure(text));
    }

    let interval = root
        .get(&b"interval"[..])
        .and_then(BencodeValue::as_integer)
        .filter(|n| *n > 0)
        .ok_or_else(|| TrackerError::MalformedInput("missing positive interval".into()))?
        as u32;
    let count_field = |key: &[u8]| -> Result<u32, TrackerError> {
        match root.get(key) {
            None => Ok(0),
            Some(v) => v
                .as_integer()
                .filter(|n| *n >= 0)
                .map(|n| n as u32)
                .ok_or_else(|| {
                    TrackerError::MalformedInput(format!(
                        "{} is not a non-negative integer",
                        String::from_utf8_lossy(key)
                    ))
                }),
        }
    };
    let complete = count_field(b"complete")?;
    let incomplete = count_field(b"incomplete")?;

    let peers = match root.get(&b"peers"[..]) {
        None => Vec::new(),
        Some(BencodeValue::Bytes(compact)) => parse_compact_peers(compact)?,
        Some(BencodeValue::List(entries)) => {
            let mut out = Vec::with_capacity(entries.len());
            for entry in entries {
                let ip: Ipv4Addr = entry
                    .get(b"ip")
                    .and_then(BencodeValue::as_str)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| {
                        TrackerError::MalformedInput("peer dict missing IPv4 ip".into())
                    })?;
                let port = entry
                    .get(b"port")
                    .and_then(BencodeValue::as_integer)
                    .filter(|p| (0..=u16::MAX as i64).contains(p))
                    .ok_or_else(|| {
                        TrackerError::MalformedInput("peer dict missing port".into())
                    })? as u16;
                out.push(PeerEndpoint::new(ip, port));
            }
            out
        }
        Some(_) => {
            return Err(TrackerError::MalformedInput(
                "peers is neither a compact string nor a list".into(),
            ))
        }
    };

    Ok(AnnounceResponse {
        interval,
        complete,
        incomplete,
        peers,
    })
}

/// Parse a PEX payload dict; missing `added`/`dropped` keys yield empty
/// lists. `added.f` flag bytes are accepted and ignored.
pub fn parse_pex_payload(bytes: &[u8]) -> Result<PexMessage, TrackerError> {
    let decoded = bencode::decode(bytes)?;
    let root = decoded
        .value
        .as_dict()
        .ok_or_else(|| TrackerError::MalformedInput("pex payload is not a dict".into()))?;
    let field = |key: &[u8]| -> Result<Vec<PeerEndpoint>, TrackerError> {
        match root.get(key) {
            None => Ok(Vec::new()),
            Some(v) => {
                let compact = v.as_bytes().ok_or_else(|| {
                    TrackerError::MalformedInput(format!(
                        "{} is not a compact string",
                        String::from_utf8_lossy(key)
                    ))
                })?;
                parse_compact_peers(compact)
            }
        }
    };
    Ok(PexMessage {
        added: field(b"added")?,
        dropped: field(b"dropped")?,
    })
}

/// Encode a PEX payload dict; used by the simulator's gossip channel.
pub fn encode_pex_payload(msg: &PexMessage) -> Vec<u8> {
    let mut entries = BTreeMap::new();
    entries.insert(
        b"added".to_vec(),
        BencodeValue::Bytes(encode_compact_peers(&msg.added)),
    );
    entries.insert(
        b"added.f".to_vec(),
        BencodeValue::Bytes(vec![0u8; msg.added.len()]),
    );
    entries.insert(
        b"dropped".to_vec(),
        BencodeValue::Bytes(encode_compact_peers(&msg.dropped)),
    );
    bencode::encode(&BencodeValue::Dict(entries))
}
