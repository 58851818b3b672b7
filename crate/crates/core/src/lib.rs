//! Core library for investigating BitTorrent swarms.
//!
//! The pipeline mirrors how a swarm investigation actually runs:
//!
//! 1. parse `.torrent` metadata ([`metainfo`], on top of [`bencode`]),
//! 2. enumerate peers through trackers, the DHT and peer exchange
//!    ([`tracker`], [`dht`], [`crawler`]),
//! 3. record every observation in a hash-chained, append-only log
//!    ([`evidence`], [`digest`]),
//! 4. geolocate and analyse the collected population ([`geo`], [`analysis`]).
//!
//! Everything that talks to a network does so through the [`crawler::SwarmEnv`]
//! interface, so an investigation can run either against live sockets
//! ([`field`]) or against the deterministic in-process simulator ([`simnet`]).

pub mod analysis;
pub mod bencode;
pub mod crawler;
pub mod dht;
pub mod digest;
pub mod evidence;
pub mod field;
pub mod geo;
pub mod metainfo;
pub mod simnet;
pub mod tracker;

pub use metainfo::{InfoHash, TorrentMetainfo};
pub use tracker::PeerEndpoint;
