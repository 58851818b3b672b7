//! Kademlia-style DHT peer enumeration: 160-bit node IDs under the XOR
//! metric, the bencoded KRPC message carrier, and an iterative `get_peers`
//! crawl that walks toward an info-hash accumulating stored peer values.
//!
//! The crawl observes only: `get_peers` tokens are accepted and discarded,
//! and `announce_peer` is never sent, so the crawler leaves no presence in
//! the swarms it measures.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bencode::{self, BencodeValue};
use crate::crawler::TransportError;
use crate::metainfo::InfoHash;
use crate::tracker::{parse_compact_peers, PeerEndpoint};

/// 160-bit node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub [u8; 20]);

impl NodeId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Build an id whose low 64 bits are `n`; handy in tests.
    pub fn from_u64(n: u64) -> Self {
        let mut id = [0u8; 20];
        id[12..].copy_from_slice(&n.to_be_bytes());
        NodeId(id)
    }
}

/// XOR distance between two ids, compared big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distance(pub [u8; 20]);

impl Distance {
    /// Low 64 bits as an integer; only meaningful when the upper bits are
    /// zero (small test ids).
    pub fn low_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[12..].try_into().expect("8 bytes"))
    }
}

/// Bitwise XOR of the two ids, interpreted big-endian.
pub fn xor_distance(a: &NodeId, b: &NodeId) -> Distance {
    let mut out = [0u8; 20];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = a.0[i] ^ b.0[i];
    }
    Distance(out)
}

/// A DHT node: its id plus the UDP endpoint it answers on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeInfo {
    pub id: NodeId,
    pub endpoint: PeerEndpoint,
}

impl NodeInfo {
    /// 26-byte wire form: 20-byte id followed by the compact endpoint.
    pub fn to_compact(&self) -> [u8; 26] {
        let mut out = [0u8; 26];
        out[..20].copy_from_slice(&self.id.0);
        out[20..].copy_from_slice(&self.endpoint.to_compact());
        out
    }
}

/// Queries the crawl can issue or a simulated node can answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KrpcQuery {
    Ping { id: NodeId },
    FindNode { id: NodeId, target: NodeId },
    GetPeers { id: NodeId, info_hash: InfoHash },
}

/// Response payload: compact nodes, stored peer values, and an optional
/// write token (which this toolkit never uses).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KrpcResponse {
    pub id: NodeId,
    pub nodes: Vec<NodeInfo>,
    pub values: Vec<PeerEndpoint>,
    pub token: Option<Vec<u8>>,
}

impl Default for NodeId {
    fn default() -> Self {
        NodeId([0u8; 20])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KrpcBody {
    Query(KrpcQuery),
    Response(KrpcResponse),
    Error { code: i64, message: String },
}

/// One KRPC message; responses echo the transaction id of the query they
/// answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KrpcMessage {
    pub transaction_id: Vec<u8>,
    pub body: KrpcBody,
}

impl KrpcMessage {
    pub fn get_peers(transaction_id: Vec<u8>, id: NodeId, info_hash: InfoHash) -> Self {
        KrpcMessage {
            transaction_id,
            body: KrpcBody::Query(KrpcQuery::GetPeers { id, info_hash }),
        }
    }

    pub fn response(transaction_id: Vec<u8>, response: KrpcResponse) -> Self {
        KrpcMessage {
            transaction_id,
            body: KrpcBody::Response(response),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DhtError {
    #[error("crawl requires at least one bootstrap node")]
    NoBootstrap,
    #[error("malformed KRPC message: {0}")]
    MalformedInput(String),
}

impl From<bencode::BencodeError> for DhtError {
    fn from(e: bencode::BencodeError) -> Self {
        DhtError::MalformedInput(e.to_string())
    }
}

fn bytes_value(b: impl Into<Vec<u8>>) -> BencodeValue {
    BencodeValue::Bytes(b.into())
}

/// Encode a message into its bencoded wire form.
pub fn encode_krpc(msg: &KrpcMessage) -> Vec<u8> {
    let mut root = BTreeMap::new();
    root.insert(b"t".to_vec(), bytes_value(msg.transaction_id.clone()));
    match &msg.body {
        KrpcBody::Query(query) => {
            root.insert(b"y".to_vec(), bytes_value(&b"q"[..]));
            let (method, args) = match query {
                KrpcQuery::Ping { id } => {
                    let mut a = BTreeMap::new();
                    a.insert(b"id".to_vec(), bytes_value(id.0.to_vec()));
                    (&b"ping"[..], a)
                }
                KrpcQuery::FindNode { id, target } => {
                    let mut a = BTreeMap::new();
                    a.insert(b"id".to_vec(), bytes_value(id.0.to_vec()));
                    a.insert(b"target".to_vec(), bytes_value(target.0.to_vec()));
                    (&b"find_node"[..], a)
                }
                KrpcQuery::GetPeers { id, info_hash } => {
                    let mut a = BTreeMap::new();
                    a.insert(b"id".to_vec(), bytes_value(id.0.to_vec()));
                    a.insert(
                        b"info_hash".to_vec(),
                        bytes_value(info_hash.as_bytes().to_vec()),
                    );
                    (&b"get_peers"[..], a)
                }
            };
            root.insert(b"q".to_vec(), bytes_value(method));
            root.insert(b"a".to_vec(), BencodeValue::Dict(args));
        }
        KrpcBody::Response(resp) => {
            root.insert(b"y".to_vec(), bytes_value(&b"r"[..]));
            let mut r = BTreeMap::new();
            r.insert(b"id".to_vec(), bytes_value(resp.id.0.to_vec()));
            if !resp.nodes.is_empty() {
                let mut compact = Vec::with_capacity(resp.nodes.len() * 26);
                for node in &resp.nodes {
                    compact.extend_from_slice(&node.to_compact());
                }
                r.insert(b"nodes".to_vec(), bytes_value(compact));
            }
            if !resp.values.is_empty() {
                r.insert(
                    b"values".to_vec(),
                    BencodeValue::List(
                        resp.values
                            .iter()
                            .map(|p| bytes_value(p.to_compact().to_vec()))
                            .collect(),
                    ),
                );
            }
            if let Some(token) = &resp.token {
                r.insert(b"token".to_vec(), bytes_value(token.clone()));
            }
            root.insert(b"r".to_vec(), BencodeValue::Dict(r));
        }
        KrpcBody::Error { code, message } => {
            root.insert(b"y".to_vec(), bytes_value(&b"e"[..]));
            root.insert(
                b"e".to_vec(),
                BencodeValue::List(vec![
                    BencodeValue::Integer(*code),
                    bytes_value(message.as_bytes()),
                ]),
            );
        }
    }
    bencode::encode(&BencodeValue::Dict(root))
}

fn node_id_field(dict: &BTreeMap<Vec<u8>, BencodeValue>, key: &[u8]) -> Result<NodeId, DhtError> {
    let bytes = dict
        .get(key)
        .and_then(BencodeValue::as_bytes)
        .ok_or_else(|| {
            DhtError::MalformedInput(format!("missing {}", String::from_utf8_lossy(key)))
        })?;
    let arr: [u8; 20] = bytes.try_into().map_err(|_| {
        DhtError::MalformedInput(format!(
            "{} must be 20 bytes",
            String::from_utf8_lossy(key)
        ))
    })?;
    Ok(NodeId(arr))
}

/// Decode compact node info: 26 bytes per node.
pub fn parse_compact_nodes(bytes: &[u8]) -> Result<Vec<NodeInfo>, DhtError> {
    if bytes.len() % 26 != 0 {
        return Err(DhtError::MalformedInput(format!(
            "nodes length {} is not a multiple of 26",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(26)
        .map(|chunk| {
            let id = NodeId(chunk[..20].try_into().expect("20 bytes"));
            let endpoint =
                PeerEndpoint::from_compact(chunk[20..].try_into().expect("6 bytes"));
            NodeInfo { id, endpoint }
        })
        .collect())
}

/// Decode a bencoded KRPC message.
pub fn decode_krpc(bytes: &[u8]) -> Result<KrpcMessage, DhtError> {
    let decoded = bencode::decode(bytes)?;
    let root = decoded
        .value
        .as_dict()
        .ok_or_else(|| DhtError::MalformedInput("message is not a dict".into()))?;
    let transaction_id = root
        .get(&b"t"[..])
        .and_then(BencodeValue::as_bytes)
        .ok_or_else(|| DhtError::MalformedInput("missing transaction id".into()))?
        .to_vec();
    let kind = root
        .get(&b"y"[..])
        .and_then(BencodeValue::as_bytes)
        .ok_or_else(|| DhtError::MalformedInput("missing message kind".into()))?;

    let body = match kind {
        b"q" => {
            let method = root
                .get(&b"q"[..])
                .and_then(BencodeValue::as_bytes)
                .ok_or_else(|| DhtError::MalformedInput("query missing method".into()))?;
            let args = root
                .get(&b"a"[..])
                .and_then(BencodeValue::as_dict)
                .ok_or_else(|| DhtError::MalformedInput("query missing arguments".into()))?;
            let id = node_id_field(args, b"id")?;
            let query = match method {
                b"ping" => KrpcQuery::Ping { id },
                b"find_node" => KrpcQuery::FindNode {
                    id,
                    target: node_id_field(args, b"target")?,
                },
                b"get_peers" => {
                    let hash = node_id_field(args, b"info_hash")?;
                    KrpcQuery::GetPeers {
                        id,
                        info_hash: InfoHash(hash.0),
                    }
                }
                other => {
                    return Err(DhtError::MalformedInput(format!(
                        "unknown method {}",
                        String::from_utf8_lossy(other)
                    )))
                }
            };
            KrpcBody::Query(query)
        }
        b"r" => {
            let payload = root
                .get(&b"r"[..])
                .and_then(BencodeValue::as_dict)
                .ok_or_else(|| DhtError::MalformedInput("response missing payload".into()))?;
            let id = node_id_field(payload, b"id")?;
            let nodes = match payload.get(&b"nodes"[..]) {
                None => Vec::new(),
                Some(v) => parse_compact_nodes(v.as_bytes().ok_or_else(|| {
                    DhtError::MalformedInput("nodes is not a string".into())
                })?)?,
            };
            let values = match payload.get(&b"values"[..]) {
                None => Vec::new(),
                Some(v) => {
                    let list = v.as_list().ok_or_else(|| {
                        DhtError::MalformedInput("values is not a list".into())
                    })?;
                    let mut out = Vec::with_capacity(list.len());
                    for item in list {
                        let compact = item.as_bytes().ok_or_else(|| {
                            DhtError::MalformedInput("value entry is not a string".into())
                        })?;
                        out.extend(parse_compact_peers(compact).map_err(|e| {
                            DhtError::MalformedInput(e.to_string())
                        })?);
                    }
                    out
                }
            };
            let token = payload
                .get(&b"token"[..])
                .and_then(BencodeValue::as_bytes)
                .map(<[u8]>::to_vec);
            KrpcBody::Response(KrpcResponse {
                id,
                nodes,
                values,
                token,
            })
        }
        b"e" => {
            let err = root
                .get(&b"e"[..])
                .and_then(BencodeValue::as_list)
                .ok_or_else(|| DhtError::MalformedInput("error missing payload".into()))?;
            let code = err
                .first()
                .and_then(BencodeValue::as_integer)
                .ok_or_else(|| DhtError::MalformedInput("error missing code".into()))?;
            let message = err
                .get(1)
                .and_then(BencodeValue::as_str)
                .unwrap_or_default()
                .to_string();
            KrpcBody::Error { code, message }
        }
        other => {
            return Err(DhtError::MalformedInput(format!(
                "unknown message kind {}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    Ok(KrpcMessage {
        transaction_id,
        body,
    })
}

/// Anything that can deliver a KRPC query to a node and return its answer.
/// Implementations must be callable from the crawl's parallel query slots.
pub trait DhtTransport: Sync {
    fn send_query(
        &self,
        target: PeerEndpoint,
        query: &KrpcMessage,
    ) -> Result<KrpcMessage, TransportError>;
}

impl<F> DhtTransport for F
where
    F: Fn(PeerEndpoint, &KrpcMessage) -> Result<KrpcMessage, TransportError> + Sync,
{
    fn send_query(
        &self,
        target: PeerEndpoint,
        query: &KrpcMessage,
    ) -> Result<KrpcMessage, TransportError> {
        self(target, query)
    }
}

/// Bounds on one crawl.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrawlBudget {
    /// Stop after querying this many distinct endpoints.
    pub max_nodes: usize,
    /// Stop after this many lookup rounds.
    pub max_rounds: usize,
    /// Queries in flight per round.
    pub alpha: usize,
}

impl Default for CrawlBudget {
    fn default() -> Self {
        CrawlBudget {
            max_nodes: 10_000,
            max_rounds: 64,
            alpha: 3,
        }
    }
}

/// What a crawl found: stored peer values and every node actually queried.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrawlResult {
    pub peers: BTreeSet<PeerEndpoint>,
    pub visited_nodes: BTreeSet<NodeInfo>,
}

/// Iterative `get_peers` lookup. The frontier is ordered by XOR distance to
/// the info-hash (ties broken by lower IP, then lower port, for
/// reproducibility); up to `alpha` unvisited nodes are queried per round;
/// `values` accumulate into the peer set and `nodes` feed the frontier. No
/// endpoint is ever queried twice. Per-node transport failures skip the node.
pub fn crawl_swarm_dht<T>(
    info_hash: &InfoHash,
    bootstrap: &[NodeInfo],
    transport: &T,
    budget: &CrawlBudget,
) -> Result<CrawlResult, DhtError>
where
    T: DhtTransport + ?Sized,
{
    if bootstrap.is_empty() {
        return Err(DhtError::NoBootstrap);
    }
    let mut result = CrawlResult::default();
    if budget.max_nodes == 0 || budget.max_rounds == 0 || budget.alpha == 0 {
        return Ok(result);
    }

    let target = NodeId(*info_hash.as_bytes());
    // Frontier keyed by (distance, ip, port): BTreeMap iteration order is the
    // crawl order.
    let mut frontier: BTreeMap<(Distance, PeerEndpoint), NodeInfo> = BTreeMap::new();
    let mut enqueued: BTreeSet<PeerEndpoint> = BTreeSet::new();
    let mut visited: BTreeSet<PeerEndpoint> = BTreeSet::new();
    for node in bootstrap {
        if enqueued.insert(node.endpoint) {
            frontier.insert((xor_distance(&node.id, &target), node.endpoint), *node);
        }
    }

    let own_id = NodeId(*info_hash.as_bytes());
    let mut transaction = 0u32;

    for _ in 0..budget.max_rounds {
        if frontier.is_empty() || visited.len() >= budget.max_nodes {
            break;
        }
        let batch_size = budget
            .alpha
            .min(budget.max_nodes - visited.len())
            .min(frontier.len());
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            let Some((&key, _)) = frontier.iter().next() else {
                break;
            };
            let node = frontier.remove(&key).expect("key just observed");
            batch.push(node);
        }
        let queries: Vec<(NodeInfo, KrpcMessage)> = batch
            .into_iter()
            .map(|node| {
                transaction += 1;
                let msg = KrpcMessage::get_peers(
                    transaction.to_be_bytes().to_vec(),
                    own_id,
                    *info_hash,
                );
                (node, msg)
            })
            .collect();

        let responses = crate::crawler::fanout(&queries, budget.alpha, |(node, msg)| {
            transport.send_query(node.endpoint, msg)
        });

        for ((node, _), reply) in queries.iter().zip(responses) {
            visited.insert(node.endpoint);
            result.visited_nodes.insert(*node);
            let Ok(message) = reply else {
                continue; // per-node failure: skip, never fatal
            };
            if let KrpcBody::Response(resp) = message.body {
                result.peers.extend(resp.values);
                for found in resp.nodes {
                    if !visited.contains(&found.endpoint) && enqueued.insert(found.endpoint) {
                        frontier.insert(
                            (xor_distance(&found.id, &target), found.endpoint),
                            found,
                        );
                    }
                }
                // resp.token intentionally discarded: we never announce.
            }
        }
    }

    Ok(result)
}
