//! The investigation engine: snapshot every configured swarm until the
//! collected peer set matches the tracker-reported population, repeat per
//! observation window, and write every sighting into the evidence log.
//!
//! All network access goes through [`SwarmEnv`], so the same engine runs
//! against live sockets or the in-process simulator unchanged. Swarms are
//! visited sequentially; within a snapshot, peer-exchange and DHT queries fan
//! out up to the configured concurrency with results merged in issue order,
//! which keeps simulated runs byte-reproducible.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::dht::{self, CrawlBudget, NodeInfo};
use crate::digest;
use crate::evidence::{EvidenceError, EvidenceKind, EvidenceLog};
use crate::metainfo::{self, InfoHash, TorrentMetainfo};
use crate::tracker::{AnnounceEvent, AnnounceRequest, AnnounceResponse, PeerEndpoint, PexMessage};

/// How a peer was discovered.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum DiscoverySource {
    Tracker,
    Dht,
    Pex,
}

/// One observation of an endpoint in a swarm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerSighting {
    pub ip: std::net::Ipv4Addr,
    pub port: u16,
    pub info_hash: InfoHash,
    pub timestamp_ms: i64,
    pub source: DiscoverySource,
}

impl PeerSighting {
    pub fn endpoint(&self) -> PeerEndpoint {
        PeerEndpoint::new(self.ip, self.port)
    }
}

/// The peer set collected in one enumeration pass over a swarm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwarmSnapshot {
    pub info_hash: InfoHash,
    pub started_at_ms: i64,
    pub completed_at_ms: i64,
    /// Deduplicated by (ip, port), in discovery order.
    pub sightings: Vec<PeerSighting>,
    pub tracker_reported_count: u32,
    pub converged: bool,
    pub announce_attempts: u32,
}

impl SwarmSnapshot {
    pub fn unique_peers(&self) -> usize {
        self.sightings.len()
    }

    pub fn peer_endpoints(&self) -> BTreeSet<PeerEndpoint> {
        self.sightings.iter().map(PeerSighting::endpoint).collect()
    }
}

fn default_window_seconds() -> u64 {
    86_400
}
fn default_numwant() -> u32 {
    200
}
fn default_concurrency() -> usize {
    4
}
fn default_max_announce_attempts() -> u32 {
    50
}
fn default_sources() -> BTreeSet<DiscoverySource> {
    [
        DiscoverySource::Tracker,
        DiscoverySource::Dht,
        DiscoverySource::Pex,
    ]
    .into()
}
fn default_peer_id_prefix() -> String {
    "-UP0001-".to_string()
}
fn default_case_id() -> String {
    "CASE-0001".to_string()
}
fn default_investigator() -> String {
    "unattributed".to_string()
}

/// Everything a run needs; loaded from JSON with the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InvestigationConfig {
    /// `.torrent` paths, or text files of torrent URLs (one per line, `#`
    /// comments allowed).
    pub torrent_sources: Vec<String>,
    pub snapshot_interval_seconds: u64,
    #[serde(default = "default_window_seconds")]
    pub window_seconds: u64,
    pub total_duration_seconds: u64,
    #[serde(default = "default_numwant")]
    pub numwant: u32,
    #[serde(default = "default_concurrency")]
    pub per_swarm_concurrency: usize,
    #[serde(default = "default_sources")]
    pub enabled_sources: BTreeSet<DiscoverySource>,
    #[serde(default = "default_max_announce_attempts")]
    pub max_announce_attempts: u32,
    /// Optional labels keyed by lowercase hex info-hash.
    #[serde(default)]
    pub category_labels: BTreeMap<String, String>,
    pub random_seed: u64,
    #[serde(default = "default_peer_id_prefix")]
    pub peer_id_prefix: String,
    /// Bytes reported as `left` in announces; defaults to the torrent size
    /// (a leecher posture).
    #[serde(default)]
    pub announce_left: Option<u64>,
    #[serde(default = "default_case_id")]
    pub case_id: String,
    #[serde(default = "default_investigator")]
    pub investigator: String,
}

impl InvestigationConfig {
    pub fn validate(&self) -> Result<(), CrawlerError> {
        if self.snapshot_interval_seconds == 0 {
            return Err(CrawlerError::InvalidConfig(
                "snapshotIntervalSeconds must be positive".into(),
            ));
        }
        if self.window_seconds < self.snapshot_interval_seconds {
            return Err(CrawlerError::InvalidConfig(
                "windowSeconds must be at least snapshotIntervalSeconds".into(),
            ));
        }
        if self.enabled_sources.is_empty() {
            return Err(CrawlerError::InvalidConfig(
                "at least one discovery source must be enabled".into(),
            ));
        }
        Ok(())
    }

    /// Announce identity: prefix bytes followed by seeded random bytes up to
    /// 20.
    pub fn peer_id(&self) -> [u8; 20] {
        let mut id = [0u8; 20];
        let prefix = self.peer_id_prefix.as_bytes();
        let n = prefix.len().min(20);
        id[..n].copy_from_slice(&prefix[..n]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.random_seed ^ 0x7065_6572);
        let mut tail = vec![0u8; 20 - n];
        rng.fill_bytes(&mut tail);
        id[n..].copy_from_slice(&tail);
        id
    }
}

/// Transport-level failures; per-peer ones are skipped, they never abort a
/// snapshot on their own.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unsupported in this environment: {0}")]
    Unsupported(&'static str),
}

/// The five capabilities an investigation needs from its surroundings:
/// tracker transport, DHT transport, PEX feed, chunk fetch, and a clock.
/// Implementations serialize internal state so calls may arrive from the
/// crawler's parallel fan-out.
pub trait SwarmEnv: Sync {
    fn announce(
        &self,
        tracker_url: &str,
        request: &AnnounceRequest,
    ) -> Result<AnnounceResponse, TransportError>;

    /// Entry nodes for DHT lookups of this info-hash.
    fn dht_bootstrap(&self, info_hash: &InfoHash) -> Vec<NodeInfo>;

    fn dht_query(
        &self,
        node: PeerEndpoint,
        query: &dht::KrpcMessage,
    ) -> Result<dht::KrpcMessage, TransportError>;

    fn pex_exchange(
        &self,
        info_hash: &InfoHash,
        peer: PeerEndpoint,
    ) -> Result<PexMessage, TransportError>;

    fn fetch_chunk(
        &self,
        peer: PeerEndpoint,
        info_hash: &InfoHash,
        chunk_index: u32,
    ) -> Result<Vec<u8>, TransportError>;

    /// Resolve a torrent URL from `torrentSources`.
    fn fetch_torrent(&self, url: &str) -> Result<Vec<u8>, TransportError>;

    fn now_ms(&self) -> i64;

    /// Politeness delay between announce attempts; wall sleep in the field,
    /// instant virtual-clock advance in simulation.
    fn wait_secs(&self, seconds: u64);
}

#[derive(Debug, Error)]
pub enum CrawlerError {
    #[error("no valid torrents among the configured sources")]
    NoValidTorrents,
    #[error("no discovery source yielded any response for {0}")]
    AllSourcesFailed(InfoHash),
    #[error("chunk index {index} out of range; torrent has {count} chunks")]
    IndexOutOfRange { index: u32, count: u64 },
    #[error("chunk fetch failed: {0}")]
    FetchFailed(TransportError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("torrent source {path}: {reason}")]
    Source { path: String, reason: String },
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

/// Run `f` over `items` with up to `concurrency` calls in flight, returning
/// outputs in item order regardless of completion order.
pub(crate) fn fanout<T, R, F>(items: &[T], concurrency: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    if concurrency <= 1 || items.len() == 1 {
        return items.iter().map(&f).collect();
    }
    let mut results: Vec<Option<R>> = Vec::new();
    results.resize_with(items.len(), || None);
    for (chunk_index, chunk) in items.chunks(concurrency).enumerate() {
        let base = chunk_index * concurrency;
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|item| scope.spawn(|| f(item)))
                .collect();
            for (offset, handle) in handles.into_iter().enumerate() {
                results[base + offset] = Some(handle.join().expect("fanout task panicked"));
            }
        });
    }
    results.into_iter().map(|r| r.expect("slot filled")).collect()
}

/// State shared by one snapshot pass.
struct SnapshotState {
    info_hash: InfoHash,
    sightings: Vec<PeerSighting>,
    seen: BTreeSet<PeerEndpoint>,
    reported: Option<u32>,
}

impl SnapshotState {
    fn merge(&mut self, peers: &[PeerEndpoint], source: DiscoverySource, now_ms: i64) {
        for peer in peers {
            if self.seen.insert(*peer) {
                self.sightings.push(PeerSighting {
                    ip: peer.ip,
                    port: peer.port,
                    info_hash: self.info_hash,
                    timestamp_ms: now_ms,
                    source,
                });
            }
        }
    }

    fn converged(&self) -> bool {
        match self.reported {
            Some(reported) => self.seen.len() as u64 >= reported as u64,
            None => false,
        }
    }
}

/// Enumerate one swarm until the unique peer count reaches the most recent
/// tracker-reported population or the attempt budget runs out. Every sighting
/// is appended to the evidence log before returning.
pub fn snapshot_swarm<E: SwarmEnv>(
    metainfo: &TorrentMetainfo,
    config: &InvestigationConfig,
    env: &E,
    log: &mut EvidenceLog,
    snapshot_index: u64,
) -> Result<SwarmSnapshot, CrawlerError> {
    config.validate()?;
    let started_at_ms = env.now_ms();
    let mut state = SnapshotState {
        info_hash: metainfo.info_hash,
        sightings: Vec::new(),
        seen: BTreeSet::new(),
        reported: None,
    };
    let tracker_enabled = config.enabled_sources.contains(&DiscoverySource::Tracker)
        && !metainfo.announce_urls.is_empty();
    let dht_enabled = config.enabled_sources.contains(&DiscoverySource::Dht);
    let pex_enabled = config.enabled_sources.contains(&DiscoverySource::Pex);

    let peer_id = config.peer_id();
    let left = config.announce_left.unwrap_or(metainfo.total_size);
    let mut announce_attempts = 0u32;
    let mut any_response = false;
    let mut dht_done = false;
    let mut pex_cursor = 0usize;
    let mut first_cycle = true;

    loop {
        let mut progressed = false;
        let mut interval = 1u64;

        announce_attempts += 1;
        if tracker_enabled {
            let request = AnnounceRequest {
                info_hash: metainfo.info_hash,
                peer_id,
                port: 6881,
                uploaded: 0,
                downloaded: 0,
                left,
                numwant: config.numwant,
                event: if first_cycle {
                    Some(AnnounceEvent::Started)
                } else {
                    None
                },
            };
            for url in &metainfo.announce_urls {
                match env.announce(url, &request) {
                    Ok(response) => {
                        any_response = true;
                        progressed = true;
                        interval = interval.max(response.interval as u64);
                        state.reported = Some(response.reported_population());
                        state.merge(&response.peers, DiscoverySource::Tracker, env.now_ms());
                        break; // first responsive tier member wins
                    }
                    Err(e) => {
                        log::debug!("announce to {url} failed: {e}");
                    }
                }
            }
            if state.converged() {
                break;
            }
        }

        if dht_enabled && !dht_done {
            dht_done = true;
            let bootstrap = env.dht_bootstrap(&metainfo.info_hash);
            if !bootstrap.is_empty() {
                let transport = |node: PeerEndpoint, query: &dht::KrpcMessage| {
                    env.dht_query(node, query)
                };
                let budget = CrawlBudget {
                    alpha: CrawlBudget::default().alpha.min(config.per_swarm_concurrency.max(1)),
                    ..CrawlBudget::default()
                };
                match dht::crawl_swarm_dht(&metainfo.info_hash, &bootstrap, &transport, &budget)
                {
                    Ok(result) => {
                        if !result.visited_nodes.is_empty() {
                            any_response = true;
                        }
                        progressed = progressed || !result.peers.is_empty();
                        let peers: Vec<PeerEndpoint> = result.peers.into_iter().collect();
                        state.merge(&peers, DiscoverySource::Dht, env.now_ms());
                    }
                    Err(e) => log::debug!("dht crawl failed: {e}"),
                }
            }
            if state.converged() {
                break;
            }
        }

        if pex_enabled && !state.sightings.is_empty() {
            let known: Vec<PeerEndpoint> = state
                .sightings
                .iter()
                .map(PeerSighting::endpoint)
                .filter(PeerEndpoint::is_usable)
                .collect();
            if !known.is_empty() {
                let batch: Vec<PeerEndpoint> = (0..config.per_swarm_concurrency.max(1))
                    .map(|i| known[(pex_cursor + i) % known.len()])
                    .collect();
                pex_cursor = (pex_cursor + batch.len()) % known.len();
                let replies = fanout(&batch, config.per_swarm_concurrency.max(1), |peer| {
                    env.pex_exchange(&metainfo.info_hash, *peer)
                });
                let now = env.now_ms();
                for reply in replies {
                    match reply {
                        Ok(message) => {
                            any_response = true;
                            progressed = progressed || !message.added.is_empty();
                            state.merge(&message.added, DiscoverySource::Pex, now);
                            // Dropped peers stay recorded; departure does not
                            // erase a sighting.
                        }
                        Err(e) => log::debug!("pex exchange failed: {e}"),
                    }
                }
            }
            if state.converged() {
                break;
            }
        }

        first_cycle = false;
        if announce_attempts >= config.max_announce_attempts {
            break;
        }
        if !tracker_enabled && !progressed {
            break; // nothing left to drive discovery forward
        }
        if tracker_enabled {
            // Politeness between announce rounds; the simulator advances its
            // virtual clock instantly.
            env.wait_secs(interval.max(1));
        }
    }

    if !any_response {
        return Err(CrawlerError::AllSourcesFailed(metainfo.info_hash));
    }

    let completed_at_ms = env.now_ms();
    let converged = state.converged();
    let snapshot = SwarmSnapshot {
        info_hash: metainfo.info_hash,
        started_at_ms,
        completed_at_ms,
        sightings: state.sightings,
        tracker_reported_count: state.reported.unwrap_or(0),
        converged,
        announce_attempts,
    };

    for sighting in &snapshot.sightings {
        log.append(
            EvidenceKind::Sighting,
            &json!({
                "ip": sighting.ip.to_string(),
                "port": sighting.port,
                "infoHash": sighting.info_hash.to_hex(),
                "ts": sighting.timestamp_ms,
                "source": sighting.source,
                "snapshot": snapshot_index,
            }),
            sighting.timestamp_ms,
        )?;
    }
    log.append(
        EvidenceKind::SnapshotSummary,
        &json!({
            "infoHash": snapshot.info_hash.to_hex(),
            "snapshot": snapshot_index,
            "startedAt": snapshot.started_at_ms,
            "completedAt": snapshot.completed_at_ms,
            "uniquePeers": snapshot.unique_peers() as u64,
            "trackerReportedCount": snapshot.tracker_reported_count,
            "converged": snapshot.converged,
            "announceAttempts": snapshot.announce_attempts,
        }),
        completed_at_ms,
    )?;

    Ok(snapshot)
}

/// Load every torrent referenced by the config's sources. A source is either
/// a `.torrent` file or a text file listing torrent URLs.
pub fn load_torrent_sources<E: SwarmEnv>(
    config: &InvestigationConfig,
    env: &E,
) -> Result<Vec<(TorrentMetainfo, Vec<u8>)>, CrawlerError> {
    let mut out = Vec::new();
    for source in &config.torrent_sources {
        let bytes = std::fs::read(source).map_err(|e| CrawlerError::Source {
            path: source.clone(),
            reason: e.to_string(),
        })?;
        match metainfo::parse_metainfo(&bytes) {
            Ok(mut parsed) => {
                apply_category(&mut parsed, config);
                out.push((parsed, bytes));
            }
            Err(_) => {
                // Not a torrent: treat as a URL list.
                let text =
                    String::from_utf8(bytes).map_err(|_| CrawlerError::Source {
                        path: source.clone(),
                        reason: "neither a torrent nor a UTF-8 URL list".into(),
                    })?;
                for line in text.lines() {
                    let url = line.trim();
                    if url.is_empty() || url.starts_with('#') {
                        continue;
                    }
                    let data = env
                        .fetch_torrent(url)
                        .map_err(|e| CrawlerError::Source {
                            path: url.to_string(),
                            reason: e.to_string(),
                        })?;
                    let mut parsed =
                        metainfo::parse_metainfo(&data).map_err(|e| CrawlerError::Source {
                            path: url.to_string(),
                            reason: e.to_string(),
                        })?;
                    apply_category(&mut parsed, config);
                    out.push((parsed, data));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(CrawlerError::NoValidTorrents);
    }
    Ok(out)
}

fn apply_category(parsed: &mut TorrentMetainfo, config: &InvestigationConfig) {
    parsed.category = config
        .category_labels
        .get(&parsed.info_hash.to_hex())
        .cloned();
}

/// Execute the full investigation: resolve sources, then for every window
/// and interval tick snapshot each swarm sequentially, recording config and
/// metainfo digests as the log's first records.
pub fn run_investigation<E: SwarmEnv>(
    config: &InvestigationConfig,
    env: &E,
) -> Result<EvidenceLog, CrawlerError> {
    config.validate()?;
    let torrents = load_torrent_sources(config, env)?;

    let mut log = EvidenceLog::new(&config.case_id, &config.investigator, env.now_ms());
    let config_value =
        serde_json::to_value(config).map_err(|e| EvidenceError::Serialization(e.to_string()))?;
    log.append(
        EvidenceKind::Config,
        &json!({"config": config_value, "seed": config.random_seed}),
        env.now_ms(),
    )?;
    for (torrent, raw) in &torrents {
        log.append(
            EvidenceKind::Metainfo,
            &json!({
                "infoHash": torrent.info_hash.to_hex(),
                "name": torrent.name_lossy(),
                "totalSize": torrent.total_size,
                "pieceLength": torrent.piece_length,
                "pieceCount": torrent.piece_count(),
                "fileCount": torrent.files.len(),
                "trackerCount": torrent.announce_urls.len(),
                "torrentSha256": digest::sha256_hex(raw),
                "category": torrent.category,
            }),
            env.now_ms(),
        )?;
    }

    let windows = (config.total_duration_seconds / config.window_seconds).max(1);
    let ticks = (config.window_seconds / config.snapshot_interval_seconds).max(1);
    let mut ordinals: BTreeMap<InfoHash, u64> = BTreeMap::new();

    for _window in 0..windows {
        for _tick in 0..ticks {
            let tick_started = env.now_ms();
            for (torrent, _) in &torrents {
                let ordinal = ordinals.entry(torrent.info_hash).or_insert(0);
                match snapshot_swarm(torrent, config, env, &mut log, *ordinal) {
                    Ok(snapshot) => {
                        log::info!(
                            "swarm {} snapshot {}: {} unique peers, reported {}, converged={}",
                            torrent.info_hash,
                            ordinal,
                            snapshot.unique_peers(),
                            snapshot.tracker_reported_count,
                            snapshot.converged
                        );
                    }
                    Err(CrawlerError::AllSourcesFailed(hash)) => {
                        log.append(
                            EvidenceKind::Note,
                            &json!({
                                "event": "all_sources_failed",
                                "infoHash": hash.to_hex(),
                                "snapshot": *ordinal,
                            }),
                            env.now_ms(),
                        )?;
                    }
                    Err(fatal) => return Err(fatal),
                }
                *ordinal += 1;
            }
            let consumed_secs = ((env.now_ms() - tick_started) / 1000).max(0) as u64;
            if consumed_secs < config.snapshot_interval_seconds {
                env.wait_secs(config.snapshot_interval_seconds - consumed_secs);
            }
        }
    }
    Ok(log)
}

/// Result of fetching one chunk from one peer and checking it against the
/// torrent's piece hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkVerification {
    pub verified: bool,
    pub digest_hex: String,
}

/// Download chunk `chunk_index` from `peer` and compare its SHA-1 against the
/// metadata's piece hash.
pub fn verify_peer_chunk<E: SwarmEnv>(
    peer: PeerEndpoint,
    metainfo: &TorrentMetainfo,
    chunk_index: u32,
    env: &E,
) -> Result<ChunkVerification, CrawlerError> {
    if chunk_index as u64 >= metainfo.piece_count() {
        return Err(CrawlerError::IndexOutOfRange {
            index: chunk_index,
            count: metainfo.piece_count(),
        });
    }
    let bytes = env
        .fetch_chunk(peer, &metainfo.info_hash, chunk_index)
        .map_err(CrawlerError::FetchFailed)?;
    let actual = digest::sha1_bytes(&bytes);
    let expected = metainfo.piece_hashes[chunk_index as usize];
    Ok(ChunkVerification {
        verified: actual == expected,
        digest_hex: hex::encode(actual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{SimEnvironment, SimSwarmConfig};
    use crate::tracker::PexMessage;
    use std::net::Ipv4Addr;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn test_config(sources: &[DiscoverySource]) -> InvestigationConfig {
        InvestigationConfig {
            torrent_sources: Vec::new(),
            snapshot_interval_seconds: 60,
            window_seconds: 60,
            total_duration_seconds: 60,
            numwant: 50,
            per_swarm_concurrency: 2,
            enabled_sources: sources.iter().copied().collect(),
            max_announce_attempts: 10,
            category_labels: BTreeMap::new(),
            random_seed: 7,
            peer_id_prefix: "-UP0001-".into(),
            announce_left: None,
            case_id: "TEST".into(),
            investigator: "tests".into(),
        }
    }

    fn sim_with(name: &str, peers: u32, seed: u64) -> (SimEnvironment, TorrentMetainfo) {
        let cfg = SimSwarmConfig::new(name, peers);
        let env = SimEnvironment::build_sim(&[cfg], seed).unwrap();
        let torrent = env.torrent_bytes(name).unwrap();
        let parsed = crate::metainfo::parse_metainfo(&torrent).unwrap();
        (env, parsed)
    }

    /// A tracker that always reports 100 peers but only ever serves the same
    /// fixed 50.
    struct LyingTracker {
        peers: Vec<PeerEndpoint>,
        clock: AtomicI64,
    }

    impl LyingTracker {
        fn new() -> Self {
            LyingTracker {
                peers: (0..50)
                    .map(|i| PeerEndpoint::new(Ipv4Addr::new(10, 0, 0, i as u8 + 1), 6881))
                    .collect(),
                clock: AtomicI64::new(0),
            }
        }
    }

    impl SwarmEnv for LyingTracker {
        fn announce(
            &self,
            _url: &str,
            _request: &AnnounceRequest,
        ) -> Result<AnnounceResponse, TransportError> {
            Ok(AnnounceResponse {
                interval: 1,
                complete: 10,
                incomplete: 90,
                peers: self.peers.clone(),
            })
        }
        fn dht_bootstrap(&self, _info_hash: &InfoHash) -> Vec<NodeInfo> {
            Vec::new()
        }
        fn dht_query(
            &self,
            _node: PeerEndpoint,
            _query: &crate::dht::KrpcMessage,
        ) -> Result<crate::dht::KrpcMessage, TransportError> {
            Err(TransportError::Timeout)
        }
        fn pex_exchange(
            &self,
            _info_hash: &InfoHash,
            _peer: PeerEndpoint,
        ) -> Result<PexMessage, TransportError> {
            Err(TransportError::Timeout)
        }
        fn fetch_chunk(
            &self,
            _peer: PeerEndpoint,
            _info_hash: &InfoHash,
            _chunk_index: u32,
        ) -> Result<Vec<u8>, TransportError> {
            Err(TransportError::Unsupported("no chunks"))
        }
        fn fetch_torrent(&self, _url: &str) -> Result<Vec<u8>, TransportError> {
            Err(TransportError::Unsupported("no torrents"))
        }
        fn now_ms(&self) -> i64 {
            self.clock.load(Ordering::SeqCst)
        }
        fn wait_secs(&self, seconds: u64) {
            self.clock
                .fetch_add(seconds as i64 * 1000, Ordering::SeqCst);
        }
    }

    /// Everything fails.
    struct DeadEnv;

    impl SwarmEnv for DeadEnv {
        fn announce(
            &self,
            _url: &str,
            _request: &AnnounceRequest,
        ) -> Result<AnnounceResponse, TransportError> {
            Err(TransportError::Timeout)
        }
        fn dht_bootstrap(&self, _info_hash: &InfoHash) -> Vec<NodeInfo> {
            Vec::new()
        }
        fn dht_query(
            &self,
            _node: PeerEndpoint,
            _query: &crate::dht::KrpcMessage,
        ) -> Result<crate::dht::KrpcMessage, TransportError> {
            Err(TransportError::Timeout)
        }
        fn pex_exchange(
            &self,
            _info_hash: &InfoHash,
            _peer: PeerEndpoint,
        ) -> Result<PexMessage, TransportError> {
            Err(TransportError::Timeout)
        }
        fn fetch_chunk(
            &self,
            _peer: PeerEndpoint,
            _info_hash: &InfoHash,
            _chunk_index: u32,
        ) -> Result<Vec<u8>, TransportError> {
            Err(TransportError::Timeout)
        }
        fn fetch_torrent(&self, _url: &str) -> Result<Vec<u8>, TransportError> {
            Err(TransportError::Timeout)
        }
        fn now_ms(&self) -> i64 {
            0
        }
        fn wait_secs(&self, _seconds: u64) {}
    }

    fn dummy_metainfo() -> TorrentMetainfo {
        let torrent = crate::simnet::generate_torrent("dummy", &[1u8; 64], 64);
        crate::metainfo::parse_metainfo(&torrent).unwrap()
    }

    #[test]
    fn lying_tracker_never_converges() {
        let env = LyingTracker::new();
        let config = test_config(&[DiscoverySource::Tracker]);
        let mut log = EvidenceLog::new("t", "t", 0);
        let snapshot = snapshot_swarm(&dummy_metainfo(), &config, &env, &mut log, 0).unwrap();
        assert!(!snapshot.converged);
        assert_eq!(snapshot.announce_attempts, config.max_announce_attempts);
        assert_eq!(snapshot.unique_peers(), 50);
        assert_eq!(snapshot.tracker_reported_count, 100);
    }

    #[test]
    fn all_sources_failed_is_typed() {
        let config = test_config(&[
            DiscoverySource::Tracker,
            DiscoverySource::Dht,
            DiscoverySource::Pex,
        ]);
        let mut log = EvidenceLog::new("t", "t", 0);
        match snapshot_swarm(&dummy_metainfo(), &config, &DeadEnv, &mut log, 0) {
            Err(CrawlerError::AllSourcesFailed(_)) => {}
            other => panic!("expected AllSourcesFailed, got {other:?}"),
        }
        assert!(log.is_empty(), "failed snapshots must not write sightings");
    }

    #[test]
    fn sightings_logged_once_in_collection_order() {
        let (env, metainfo) = sim_with("log-order", 120, 5);
        let config = test_config(&[DiscoverySource::Tracker]);
        let mut log = EvidenceLog::new("t", "t", 0);
        let snapshot = snapshot_swarm(&metainfo, &config, &env, &mut log, 0).unwrap();
        assert!(snapshot.converged);
        let logged = crate::analysis::extract_sightings(&log).unwrap();
        assert_eq!(logged.len(), snapshot.sightings.len());
        for (recorded, observed) in logged.iter().zip(&snapshot.sightings) {
            assert_eq!(&recorded.sighting, observed);
        }
    }

    #[test]
    fn snapshot_dedupes_by_endpoint() {
        let (env, metainfo) = sim_with("dedupe", 80, 9);
        let mut config = test_config(&[DiscoverySource::Tracker, DiscoverySource::Pex]);
        config.numwant = 30;
        let mut log = EvidenceLog::new("t", "t", 0);
        let snapshot = snapshot_swarm(&metainfo, &config, &env, &mut log, 0).unwrap();
        let brute: BTreeSet<PeerEndpoint> = snapshot
            .sightings
            .iter()
            .map(PeerSighting::endpoint)
            .collect();
        assert_eq!(brute.len(), snapshot.sightings.len());
    }

    #[test]
    fn convergence_soundness() {
        let (env, metainfo) = sim_with("sound", 200, 13);
        let config = test_config(&[DiscoverySource::Tracker]);
        let mut log = EvidenceLog::new("t", "t", 0);
        let snapshot = snapshot_swarm(&metainfo, &config, &env, &mut log, 0).unwrap();
        if snapshot.converged {
            assert!(
                snapshot.unique_peers() as u64 >= snapshot.tracker_reported_count as u64
            );
        }
    }

    #[test]
    fn two_swarms_one_window_two_snapshots() {
        let swarms = vec![
            SimSwarmConfig::new("first", 30),
            SimSwarmConfig::new("second", 40),
        ];
        let env = SimEnvironment::build_sim(&swarms, 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let urls = dir.path().join("u.txt");
        std::fs::write(&urls, "sim://first\nsim://second\n").unwrap();
        let mut config = test_config(&[DiscoverySource::Tracker]);
        config.torrent_sources = vec![urls.to_string_lossy().into_owned()];
        // interval == window == duration: exactly one tick.
        let log = run_investigation(&config, &env).unwrap();
        let summaries = log
            .records()
            .iter()
            .filter(|r| r.kind == EvidenceKind::SnapshotSummary)
            .count();
        assert_eq!(summaries, 2);
    }

    #[test]
    fn three_windows_scale_snapshot_count() {
        let swarms = vec![
            SimSwarmConfig::new("first", 10),
            SimSwarmConfig::new("second", 10),
        ];
        let env = SimEnvironment::build_sim(&swarms, 23).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let urls = dir.path().join("u.txt");
        std::fs::write(&urls, "sim://first\nsim://second\n").unwrap();
        let mut config = test_config(&[DiscoverySource::Tracker]);
        config.torrent_sources = vec![urls.to_string_lossy().into_owned()];
        config.snapshot_interval_seconds = 30;
        config.window_seconds = 90; // 3 ticks per window
        config.total_duration_seconds = 270; // 3 windows
        let log = run_investigation(&config, &env).unwrap();
        let summaries = log
            .records()
            .iter()
            .filter(|r| r.kind == EvidenceKind::SnapshotSummary)
            .count();
        assert_eq!(summaries, 3 * 2 * 3);
    }

    #[test]
    fn config_and_metainfo_head_the_log() {
        let env = SimEnvironment::build_sim(&[SimSwarmConfig::new("head", 5)], 29).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let urls = dir.path().join("u.txt");
        std::fs::write(&urls, "sim://head\n").unwrap();
        let mut config = test_config(&[DiscoverySource::Tracker]);
        config.torrent_sources = vec![urls.to_string_lossy().into_owned()];
        let log = run_investigation(&config, &env).unwrap();
        assert_eq!(log.records()[0].kind, EvidenceKind::Config);
        assert!(log.records()[0].payload.contains("\"seed\":7"));
        assert_eq!(log.records()[1].kind, EvidenceKind::Metainfo);
    }

    #[test]
    fn no_valid_torrents_is_an_error() {
        let env = SimEnvironment::build_sim(&[], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let urls = dir.path().join("u.txt");
        std::fs::write(&urls, "# nothing here\n").unwrap();
        let mut config = test_config(&[DiscoverySource::Tracker]);
        config.torrent_sources = vec![urls.to_string_lossy().into_owned()];
        match run_investigation(&config, &env) {
            Err(CrawlerError::NoValidTorrents) => {}
            other => panic!("expected NoValidTorrents, got {other:?}"),
        }
    }

    #[test]
    fn chunk_verification_against_sim() {
        let mut cfg = SimSwarmConfig::new("chunks", 12);
        cfg.fake_block_peer_fraction = 0.5;
        cfg.content_size = 50_000;
        cfg.piece_length = 16_384;
        let env = SimEnvironment::build_sim(&[cfg], 31).unwrap();
        let torrent = env.torrent_bytes("chunks").unwrap();
        let metainfo = crate::metainfo::parse_metainfo(&torrent).unwrap();
        let truth = env.ground_truth_peers(&metainfo.info_hash);

        let mut verified = 0;
        let mut fakes = 0;
        for peer in &truth {
            let outcome = verify_peer_chunk(*peer, &metainfo, 1, &env).unwrap();
            assert_eq!(outcome.digest_hex.len(), 40);
            if outcome.verified {
                verified += 1;
            } else {
                fakes += 1;
            }
        }
        assert_eq!(verified, 6);
        assert_eq!(fakes, 6);

        // Index equal to the chunk count is out of range.
        let beyond = metainfo.piece_count() as u32;
        match verify_peer_chunk(*truth.iter().next().unwrap(), &metainfo, beyond, &env) {
            Err(CrawlerError::IndexOutOfRange { index, count }) => {
                assert_eq!(index, beyond);
                assert_eq!(count, metainfo.piece_count());
            }
            other => panic!("expected IndexOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn peer_id_uses_prefix_and_is_stable() {
        let config = test_config(&[DiscoverySource::Tracker]);
        let id = config.peer_id();
        assert_eq!(&id[..8], b"-UP0001-");
        assert_eq!(id, config.peer_id());
        let mut other = config.clone();
        other.random_seed = 8;
        assert_ne!(id, other.peer_id());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut config = test_config(&[DiscoverySource::Tracker]);
        config.snapshot_interval_seconds = 0;
        assert!(matches!(
            config.validate(),
            Err(CrawlerError::InvalidConfig(_))
        ));
        let mut config = test_config(&[DiscoverySource::Tracker]);
        config.window_seconds = 10;
        assert!(matches!(
            config.validate(),
            Err(CrawlerError::InvalidConfig(_))
        ));
        let config = test_config(&[]);
        assert!(matches!(
            config.validate(),
            Err(CrawlerError::InvalidConfig(_))
        ));
    }
}
