//! Deterministic in-process swarm environment.
//!
//! Implements the crawler's full environment interface — tracker, DHT, PEX,
//! chunk serving and a virtual clock — for desk-scale runs. Everything is
//! derived from `(config, seed, clock)`: replaying a run reproduces the exact
//! transport traffic, which is what makes investigations reproducible and the
//! acceptance suite exact.
//!
//! Swarm content is generated from the seed, and the matching `.torrent`
//! bytes are served under `sim://<name>` URLs, so piece hashes in the
//! metadata always agree with the chunks peers serve (except for configured
//! fake-block peers, which return garbage on purpose).

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bencode::{self, BencodeValue};
use crate::crawler::{SwarmEnv, TransportError};
use crate::dht::{xor_distance, KrpcBody, KrpcMessage, KrpcQuery, KrpcResponse, NodeId, NodeInfo};
use crate::metainfo::{self, InfoHash};
use crate::tracker::{AnnounceRequest, AnnounceResponse, PeerEndpoint, PexMessage};

/// One scripted population change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChurnEvent {
    pub at_virtual_second: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replace_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave_count: Option<u32>,
}

fn default_numwant_cap() -> u32 {
    200
}
fn default_announce_interval() -> u32 {
    1
}
fn default_content_size() -> u64 {
    65_536
}
fn default_piece_length() -> u64 {
    16_384
}

/// Parameters for one simulated swarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimSwarmConfig {
    pub name: String,
    pub peer_count: u32,
    #[serde(default = "default_numwant_cap")]
    pub numwant_cap: u32,
    #[serde(default = "default_announce_interval")]
    pub announce_interval_secs: u32,
    #[serde(default = "default_content_size")]
    pub content_size: u64,
    #[serde(default = "default_piece_length")]
    pub piece_length: u64,
    #[serde(default)]
    pub dht_node_count: u32,
    #[serde(default)]
    pub fake_block_peer_fraction: f64,
    #[serde(default)]
    pub churn_script: Vec<ChurnEvent>,
    /// Fixed info-hash for enumeration-only swarms; such swarms serve no
    /// content or metadata. Generated swarms compute theirs from the
    /// generated torrent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_info_hash: Option<InfoHash>,
    /// Inject a simulated timeout on every Nth transport call to this swarm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_every: Option<u64>,
}

impl SimSwarmConfig {
    pub fn new(name: impl Into<String>, peer_count: u32) -> Self {
        SimSwarmConfig {
            name: name.into(),
            peer_count,
            numwant_cap: default_numwant_cap(),
            announce_interval_secs: default_announce_interval(),
            content_size: default_content_size(),
            piece_length: default_piece_length(),
            dht_node_count: 0,
            fake_block_peer_fraction: 0.0,
            churn_script: Vec::new(),
            explicit_info_hash: None,
            timeout_every: None,
        }
    }
}

/// Root of a simulator JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub swarms: Vec<SimSwarmConfig>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("duplicate swarm {0}")]
    DuplicateSwarm(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone)]
struct SimPeer {
    endpoint: PeerEndpoint,
    seeder: bool,
    fake_block: bool,
}

struct SwarmState {
    cfg: SimSwarmConfig,
    info_hash: InfoHash,
    torrent_bytes: Option<Vec<u8>>,
    content: Option<Vec<u8>>,
    peers: Vec<SimPeer>,
    used_ips: BTreeSet<Ipv4Addr>,
    departed_recent: Vec<PeerEndpoint>,
    ring: Vec<usize>,
    cursor: usize,
    ring_version: u64,
    dht_nodes: Vec<NodeInfo>,
    churn_applied: usize,
    calls: u64,
    endpoint_rng: ChaCha8Rng,
}

struct SimState {
    seed: u64,
    clock_secs: u64,
    swarms: BTreeMap<InfoHash, SwarmState>,
    by_name: BTreeMap<String, InfoHash>,
    node_index: BTreeMap<PeerEndpoint, InfoHash>,
}

/// The environment handle. All transport methods serialize on one internal
/// lock, so the crawler may call them from parallel fan-out slots.
pub struct SimEnvironment {
    state: Mutex<SimState>,
}

fn sub_seed(seed: u64, label: &str, extra: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(extra);
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

fn seeded_bytes(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

/// Build the `.torrent` bytes for a generated swarm; used both by the sim and
/// by tests that need fixture torrents whose hashes match simulated content.
pub fn generate_torrent(name: &str, content: &[u8], piece_length: u64) -> Vec<u8> {
    let mut pieces = Vec::new();
    if piece_length > 0 {
        for chunk in content.chunks(piece_length.max(1) as usize) {
            pieces.extend_from_slice(&crate::digest::sha1_bytes(chunk));
        }
    }
    let mut info = BTreeMap::new();
    info.insert(
        b"length".to_vec(),
        BencodeValue::Integer(content.len() as i64),
    );
    info.insert(b"name".to_vec(), BencodeValue::Bytes(name.as_bytes().to_vec()));
    info.insert(
        b"piece length".to_vec(),
        BencodeValue::Integer(piece_length as i64),
    );
    info.insert(b"pieces".to_vec(), BencodeValue::Bytes(pieces));
    let mut root = BTreeMap::new();
    root.insert(
        b"announce".to_vec(),
        BencodeValue::Bytes(b"http://tracker.sim.invalid/announce".to_vec()),
    );
    root.insert(b"info".to_vec(), BencodeValue::Dict(info));
    bencode::encode(&BencodeValue::Dict(root))
}

/// Deterministic content for a generated swarm.
pub fn generate_content(seed: u64, name: &str, size: u64) -> Vec<u8> {
    seeded_bytes(sub_seed(seed, "content", name.as_bytes()), size as usize)
}

impl SwarmState {
    fn fresh_endpoint(&mut self) -> PeerEndpoint {
        loop {
            let ip = Ipv4Addr::new(
                10,
                self.endpoint_rng.gen(),
                self.endpoint_rng.gen(),
                self.endpoint_rng.gen(),
            );
            if self.used_ips.insert(ip) {
                let port = self.endpoint_rng.gen_range(1025..=65535);
                return PeerEndpoint::new(ip, port);
            }
        }
    }

    fn spawn_peer(&mut self, fake_block: bool) -> SimPeer {
        let endpoint = self.fresh_endpoint();
        let seeder = self.endpoint_rng.gen_bool(0.2);
        SimPeer {
            endpoint,
            seeder,
            fake_block,
        }
    }

    fn rebuild_ring(&mut self, seed: u64) {
        self.ring_version += 1;
        self.ring = (0..self.peers.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(
            seed,
            "ring",
            &[self.info_hash.0.as_slice(), &self.ring_version.to_le_bytes()].concat(),
        ));
        self.ring.shuffle(&mut rng);
        self.cursor = 0;
    }

    /// Serve the next `n` peers off the shuffled ring, reshuffling on wrap;
    /// every active peer is served within one full cycle.
    fn deal(&mut self, n: usize, seed: u64) -> Vec<PeerEndpoint> {
        if self.peers.is_empty() || n == 0 {
            return Vec::new();
        }
        let n = n.min(self.peers.len());
        let mut out = Vec::with_capacity(n);
        let mut picked = BTreeSet::new();
        while out.len() < n {
            if self.cursor >= self.ring.len() {
                self.rebuild_ring(seed);
            }
            let peer = &self.peers[self.ring[self.cursor]];
            self.cursor += 1;
            if picked.insert(peer.endpoint) {
                out.push(peer.endpoint);
            }
        }
        out
    }

    fn active_endpoints(&self) -> Vec<PeerEndpoint> {
        self.peers.iter().map(|p| p.endpoint).collect()
    }

    fn seeder_count(&self) -> u32 {
        self.peers.iter().filter(|p| p.seeder).count() as u32
    }

    fn find_peer(&self, endpoint: PeerEndpoint) -> Option<&SimPeer> {
        self.peers.iter().find(|p| p.endpoint == endpoint)
    }

    /// Apply scripted churn events whose time has come, in script order.
    fn apply_due_churn(&mut self, clock_secs: u64, seed: u64) {
        while self.churn_applied < self.cfg.churn_script.len() {
            let event = self.cfg.churn_script[self.churn_applied].clone();
            if event.at_virtual_second > clock_secs {
                break;
            }
            let event_tag = self.churn_applied as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(
                seed,
                "churn",
                &[self.info_hash.0.as_slice(), &event_tag.to_le_bytes()].concat(),
            ));
            // A replacement removes floor(fraction * N) peers and admits the
            // same number, keeping the population size fixed.
            let (remove_count, join_count) = match event.replace_fraction {
                Some(fraction) => {
                    let k = ((fraction * self.peers.len() as f64).floor() as usize)
                        .min(self.peers.len());
                    (k, k)
                }
                None => (
                    (event.leave_count.unwrap_or(0) as usize).min(self.peers.len()),
                    event.join_count.unwrap_or(0) as usize,
                ),
            };
            let mut departed = Vec::new();
            if remove_count > 0 {
                let victims = rand::seq::index::sample(&mut rng, self.peers.len(), remove_count);
                let mut indices: Vec<usize> = victims.into_iter().collect();
                indices.sort_unstable();
                for index in indices.into_iter().rev() {
                    departed.push(self.peers.swap_remove(index).endpoint);
                }
            }
            for _ in 0..join_count {
                let fake = self
                    .endpoint_rng
                    .gen_bool(self.cfg.fake_block_peer_fraction.clamp(0.0, 1.0));
                let peer = self.spawn_peer(fake);
                self.peers.push(peer);
            }
            if !departed.is_empty() {
                self.departed_recent = departed;
            }
            if remove_count > 0 || join_count > 0 {
                self.rebuild_ring(seed);
            }
            self.churn_applied += 1;
        }
    }
}

impl SimEnvironment {
    /// Construct the environment: peers drawn deterministically within
    /// 10.0.0.0/8, DHT nodes with seeded ids, content and torrents generated
    /// from the seed.
    pub fn build_sim(configs: &[SimSwarmConfig], seed: u64) -> Result<SimEnvironment, SimError> {
        let mut state = SimState {
            seed,
            clock_secs: 0,
            swarms: BTreeMap::new(),
            by_name: BTreeMap::new(),
            node_index: BTreeMap::new(),
        };
        for cfg in configs {
            if !(0.0..=1.0).contains(&cfg.fake_block_peer_fraction) {
                return Err(SimError::InvalidConfig(format!(
                    "fakeBlockPeerFraction {} outside [0, 1]",
                    cfg.fake_block_peer_fraction
                )));
            }
            for event in &cfg.churn_script {
                if let Some(f) = event.replace_fraction {
                    if !(0.0..=1.0).contains(&f) {
                        return Err(SimError::InvalidConfig(format!(
                            "replaceFraction {f} outside [0, 1]"
                        )));
                    }
                }
            }
            let mut script = cfg.churn_script.clone();
            script.sort_by_key(|e| e.at_virtual_second);

            let (info_hash, torrent_bytes, content) = match cfg.explicit_info_hash {
                Some(hash) => (hash, None, None),
                None => {
                    let content = generate_content(seed, &cfg.name, cfg.content_size);
                    let torrent = generate_torrent(&cfg.name, &content, cfg.piece_length);
                    let parsed = metainfo::parse_metainfo(&torrent)
                        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
                    (parsed.info_hash, Some(torrent), Some(content))
                }
            };
            if state.by_name.contains_key(&cfg.name) {
                return Err(SimError::DuplicateSwarm(cfg.name.clone()));
            }
            if state.swarms.contains_key(&info_hash) {
                return Err(SimError::DuplicateSwarm(info_hash.to_hex()));
            }

            let mut swarm = SwarmState {
                cfg: SimSwarmConfig {
                    churn_script: script,
                    ..cfg.clone()
                },
                info_hash,
                torrent_bytes,
                content,
                peers: Vec::new(),
                used_ips: BTreeSet::new(),
                departed_recent: Vec::new(),
                ring: Vec::new(),
                cursor: 0,
                ring_version: 0,
                dht_nodes: Vec::new(),
                churn_applied: 0,
                calls: 0,
                endpoint_rng: ChaCha8Rng::seed_from_u64(sub_seed(
                    seed,
                    "endpoints",
                    &info_hash.0,
                )),
            };

            let fake_count =
                (cfg.fake_block_peer_fraction * cfg.peer_count as f64).round() as u32;
            for i in 0..cfg.peer_count {
                let peer = swarm.spawn_peer(i < fake_count);
                swarm.peers.push(peer);
            }
            // Assignment order must not bias which endpoints are fake, so
            // shuffle the roles.
            let mut role_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "roles", &info_hash.0));
            let mut fakes: Vec<bool> = swarm.peers.iter().map(|p| p.fake_block).collect();
            fakes.shuffle(&mut role_rng);
            for (peer, fake) in swarm.peers.iter_mut().zip(fakes) {
                peer.fake_block = fake;
            }

            let mut id_rng =
                ChaCha8Rng::seed_from_u64(sub_seed(seed, "dht-ids", &info_hash.0));
            for _ in 0..cfg.dht_node_count {
                let mut id = [0u8; 20];
                id_rng.fill_bytes(&mut id);
                let endpoint = swarm.fresh_endpoint();
                let node = NodeInfo {
                    id: NodeId(id),
                    endpoint,
                };
                swarm.dht_nodes.push(node);
                state.node_index.insert(endpoint, info_hash);
            }

            swarm.rebuild_ring(seed);
            swarm.apply_due_churn(0, seed);
            state.by_name.insert(cfg.name.clone(), info_hash);
            state.swarms.insert(info_hash, swarm);
        }
        Ok(SimEnvironment {
            state: Mutex::new(state),
        })
    }

    pub fn from_config(config: &SimConfig) -> Result<SimEnvironment, SimError> {
        SimEnvironment::build_sim(&config.swarms, config.seed)
    }

    pub fn from_json(bytes: &[u8]) -> Result<SimEnvironment, SimError> {
        let config: SimConfig = serde_json::from_slice(bytes)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        SimEnvironment::from_config(&config)
    }

    /// Advance the virtual clock, firing scripted churn whose time arrives.
    pub fn advance_clock(&self, seconds: u64) {
        let mut state = self.state.lock().expect("sim lock");
        state.clock_secs += seconds;
        let clock = state.clock_secs;
        let seed = state.seed;
        for swarm in state.swarms.values_mut() {
            swarm.apply_due_churn(clock, seed);
        }
    }

    pub fn now_secs(&self) -> u64 {
        self.state.lock().expect("sim lock").clock_secs
    }

    /// The torrent bytes served under `sim://<name>`.
    pub fn torrent_bytes(&self, name: &str) -> Option<Vec<u8>> {
        let state = self.state.lock().expect("sim lock");
        let hash = state.by_name.get(name)?;
        state.swarms.get(hash).and_then(|s| s.torrent_bytes.clone())
    }

    pub fn info_hash_of(&self, name: &str) -> Option<InfoHash> {
        self.state.lock().expect("sim lock").by_name.get(name).copied()
    }

    /// Ground truth: the currently active peer set of a swarm, so tests can
    /// compute crawler recall exactly.
    pub fn ground_truth_peers(&self, info_hash: &InfoHash) -> BTreeSet<PeerEndpoint> {
        let state = self.state.lock().expect("sim lock");
        state
            .swarms
            .get(info_hash)
            .map(|s| s.peers.iter().map(|p| p.endpoint).collect())
            .unwrap_or_default()
    }

    pub fn reported_population(&self, info_hash: &InfoHash) -> u32 {
        let state = self.state.lock().expect("sim lock");
        state
            .swarms
            .get(info_hash)
            .map(|s| s.peers.len() as u32)
            .unwrap_or(0)
    }

    /// A deterministic subset of a peer's neighbour view, keyed off the seed,
    /// the peer and the clock; stateless so parallel queries stay
    /// reproducible.
    fn pex_added(
        swarm: &SwarmState,
        seed: u64,
        clock: u64,
        peer: PeerEndpoint,
    ) -> Vec<PeerEndpoint> {
        let mut key = Vec::new();
        key.extend_from_slice(&swarm.info_hash.0);
        key.extend_from_slice(&peer.ip.octets());
        key.extend_from_slice(&peer.port.to_le_bytes());
        key.extend_from_slice(&clock.to_le_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "pex", &key));
        let others: Vec<PeerEndpoint> = swarm
            .peers
            .iter()
            .map(|p| p.endpoint)
            .filter(|e| *e != peer)
            .collect();
        if others.is_empty() {
            return Vec::new();
        }
        let share = others.len().min(25);
        rand::seq::index::sample(&mut rng, others.len(), share)
            .into_iter()
            .map(|i| others[i])
            .collect()
    }
}

fn check_timeout(swarm: &mut SwarmState) -> Result<(), TransportError> {
    swarm.calls += 1;
    if let Some(every) = swarm.cfg.timeout_every {
        if every > 0 && swarm.calls % every == 0 {
            return Err(TransportError::Timeout);
        }
    }
    Ok(())
}

impl SwarmEnv for SimEnvironment {
    fn announce(
        &self,
        _tracker_url: &str,
        request: &AnnounceRequest,
    ) -> Result<AnnounceResponse, TransportError> {
        let mut state = self.state.lock().expect("sim lock");
        let seed = state.seed;
        let swarm = state
            .swarms
            .get_mut(&request.info_hash)
            .ok_or_else(|| TransportError::Unreachable("unknown swarm".into()))?;
        check_timeout(swarm)?;
        let want = request.numwant.min(swarm.cfg.numwant_cap) as usize;
        let peers = swarm.deal(want, seed);
        let complete = swarm.seeder_count();
        let incomplete = swarm.peers.len() as u32 - complete;
        Ok(AnnounceResponse {
            interval: swarm.cfg.announce_interval_secs.max(1),
            complete,
            incomplete,
            peers,
        })
    }

    fn dht_bootstrap(&self, info_hash: &InfoHash) -> Vec<NodeInfo> {
        let state = self.state.lock().expect("sim lock");
        state
            .swarms
            .get(info_hash)
            .map(|swarm| {
                let mut nodes = swarm.dht_nodes.clone();
                nodes.sort_by_key(|n| n.endpoint);
                nodes.truncate(3);
                nodes
            })
            .unwrap_or_default()
    }

    fn dht_query(
        &self,
        node: PeerEndpoint,
        query: &KrpcMessage,
    ) -> Result<KrpcMessage, TransportError> {
        let mut state = self.state.lock().expect("sim lock");
        let info_hash = *state
            .node_index
            .get(&node)
            .ok_or_else(|| TransportError::Unreachable("no DHT node at endpoint".into()))?;
        let swarm = state.swarms.get_mut(&info_hash).expect("indexed swarm");
        check_timeout(swarm)?;
        let queried = swarm
            .dht_nodes
            .iter()
            .find(|n| n.endpoint == node)
            .copied()
            .expect("node present in its swarm");

        let KrpcBody::Query(body) = &query.body else {
            return Err(TransportError::Protocol("expected a query".into()));
        };
        let response = match body {
            KrpcQuery::Ping { .. } => KrpcResponse {
                id: queried.id,
                ..KrpcResponse::default()
            },
            KrpcQuery::FindNode { target, .. } => KrpcResponse {
                id: queried.id,
                nodes: closest_nodes(&swarm.dht_nodes, target, 8, Some(queried.endpoint)),
                ..KrpcResponse::default()
            },
            KrpcQuery::GetPeers { info_hash: target, .. } => {
                let goal = NodeId(target.0);
                let holders = closest_nodes(&swarm.dht_nodes, &goal, 8, None);
                let is_holder =
                    *target == info_hash && holders.iter().any(|n| n.endpoint == node);
                if is_holder {
                    // Value holders answer with stored peers, not nodes.
                    KrpcResponse {
                        id: queried.id,
                        nodes: Vec::new(),
                        values: swarm.active_endpoints(),
                        token: Some(
                            sub_seed(state.seed, "token", &node.ip.octets())
                                .to_le_bytes()
                                .to_vec(),
                        ),
                    }
                } else {
                    KrpcResponse {
                        id: queried.id,
                        nodes: closest_nodes(&swarm.dht_nodes, &goal, 8, Some(queried.endpoint)),
                        ..KrpcResponse::default()
                    }
                }
            }
        };
        Ok(KrpcMessage::response(
            query.transaction_id.clone(),
            response,
        ))
    }

    fn pex_exchange(
        &self,
        info_hash: &InfoHash,
        peer: PeerEndpoint,
    ) -> Result<PexMessage, TransportError> {
        let mut state = self.state.lock().expect("sim lock");
        let seed = state.seed;
        let clock = state.clock_secs;
        let swarm = state
            .swarms
            .get_mut(info_hash)
            .ok_or_else(|| TransportError::Unreachable("unknown swarm".into()))?;
        check_timeout(swarm)?;
        if swarm.find_peer(peer).is_none() {
            return Err(TransportError::Unreachable(format!(
                "{peer} is not active in the swarm"
            )));
        }
        let added = SimEnvironment::pex_added(swarm, seed, clock, peer);
        let mut dropped = swarm.departed_recent.clone();
        dropped.truncate(25);
        Ok(PexMessage { added, dropped })
    }

    fn fetch_chunk(
        &self,
        peer: PeerEndpoint,
        info_hash: &InfoHash,
        chunk_index: u32,
    ) -> Result<Vec<u8>, TransportError> {
        let mut state = self.state.lock().expect("sim lock");
        let seed = state.seed;
        let swarm = state
            .swarms
            .get_mut(info_hash)
            .ok_or_else(|| TransportError::Unreachable("unknown swarm".into()))?;
        check_timeout(swarm)?;
        let sim_peer = swarm
            .find_peer(peer)
            .ok_or_else(|| TransportError::Unreachable(format!("{peer} is not active")))?
            .clone();
        let content = swarm
            .content
            .as_ref()
            .ok_or(TransportError::Unsupported("swarm serves no content"))?;
        let piece_length = swarm.cfg.piece_length.max(1);
        let start = chunk_index as u64 * piece_length;
        if start >= content.len() as u64 && !content.is_empty() {
            return Err(TransportError::Protocol(format!(
                "chunk {chunk_index} beyond content"
            )));
        }
        let end = (start + piece_length).min(content.len() as u64);
        let size = (end - start) as usize;
        if sim_peer.fake_block {
            // A fake-block peer serves deterministic garbage of the right
            // size.
            let mut key = Vec::new();
            key.extend_from_slice(&peer.ip.octets());
            key.extend_from_slice(&chunk_index.to_le_bytes());
            return Ok(seeded_bytes(sub_seed(seed, "fake-chunk", &key), size));
        }
        Ok(content[start as usize..end as usize].to_vec())
    }

    fn fetch_torrent(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let name = url
            .strip_prefix("sim://")
            .ok_or(TransportError::Unsupported("only sim:// URLs resolve here"))?;
        self.torrent_bytes(name)
            .ok_or_else(|| TransportError::Unreachable(format!("no sim swarm named {name}")))
    }

    fn now_ms(&self) -> i64 {
        (self.now_secs() * 1000) as i64
    }

    fn wait_secs(&self, seconds: u64) {
        self.advance_clock(seconds);
    }
}

fn closest_nodes(
    nodes: &[NodeInfo],
    target: &NodeId,
    k: usize,
    exclude: Option<PeerEndpoint>,
) -> Vec<NodeInfo> {
    let mut sorted: Vec<NodeInfo> = nodes
        .iter()
        .filter(|n| Some(n.endpoint) != exclude)
        .copied()
        .collect();
    sorted.sort_by_key(|n| (xor_distance(&n.id, target), n.endpoint));
    sorted.truncate(k);
    sorted
}
