//! `.torrent` parsing: extract the fields an investigation needs, compute the
//! info-hash over the file's original byte span, and summarize collections of
//! metadata files.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bencode::{self, BencodeValue};
use crate::digest;

/// SHA-1 of a torrent's raw `info` dictionary bytes; the swarm's global
/// identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InfoHash(pub [u8; 20]);

impl InfoHash {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, MetainfoError> {
        let bytes = hex::decode(s).map_err(|_| MetainfoError::MalformedInput {
            reason: format!("bad info-hash hex: {s}"),
        })?;
        let arr: [u8; 20] = bytes.try_into().map_err(|_| MetainfoError::MalformedInput {
            reason: "info-hash must be 20 bytes".into(),
        })?;
        Ok(InfoHash(arr))
    }
}

impl fmt::Debug for InfoHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InfoHash({})", self.to_hex())
    }
}

impl fmt::Display for InfoHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for InfoHash {
    type Err = MetainfoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InfoHash::from_hex(s)
    }
}

impl Serialize for InfoHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for InfoHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        InfoHash::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// One file within a torrent; single-file torrents are modeled as one entry
/// whose path is the torrent name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntry {
    pub path: Vec<Vec<u8>>,
    pub length: u64,
}

/// Parsed `.torrent` content plus its info-hash; the unit of investigation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorrentMetainfo {
    pub info_hash: InfoHash,
    pub name: Vec<u8>,
    pub piece_length: u64,
    pub piece_hashes: Vec<[u8; 20]>,
    pub files: Vec<FileEntry>,
    /// Announce URLs flattened from `announce-list` tiers left to right with
    /// the top-level `announce` appended if absent; duplicates removed,
    /// order preserved.
    pub announce_urls: Vec<String>,
    pub total_size: u64,
    /// Investigation-supplied label; never read from the file itself.
    pub category: Option<String>,
}

impl TorrentMetainfo {
    pub fn name_lossy(&self) -> String {
        String::from_utf8_lossy(&self.name).into_owned()
    }

    pub fn piece_count(&self) -> u64 {
        self.piece_hashes.len() as u64
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetainfoError {
    #[error("malformed torrent: {reason}")]
    MalformedInput { reason: String },
    #[error("missing required field: {0}")]
    MissingField(&'static str),
    #[error("piece count mismatch: pieces holds {actual}, content implies {expected}")]
    PieceCountMismatch { expected: u64, actual: u64 },
    #[error("cannot summarize an empty collection")]
    EmptyCollection,
}

impl From<bencode::BencodeError> for MetainfoError {
    fn from(e: bencode::BencodeError) -> Self {
        MetainfoError::MalformedInput {
            reason: e.to_string(),
        }
    }
}

/// Parse a `.torrent` document. The info-hash is SHA-1 over the exact raw
/// bytes of the `info` dict as they appear in `input`, never a re-encoding,
/// so non-canonical files produce the hash the live network uses.
pub fn parse_metainfo(input: &[u8]) -> Result<TorrentMetainfo, MetainfoError> {
    let decoded = bencode::decode(input)?;
    let root = decoded
        .value
        .as_dict()
        .ok_or(MetainfoError::MalformedInput {
            reason: "top-level value is not a dict".into(),
        })?;

    let info = root
        .get(&b"info"[..])
        .ok_or(MetainfoError::MissingField("info"))?;
    let info_dict = info.as_dict().ok_or(MetainfoError::MalformedInput {
        reason: "info is not a dict".into(),
    })?;

    let span = bencode::value_span(input, &[b"info"])?
        .expect("info key present after successful decode");
    let info_hash = InfoHash(digest::sha1_bytes(&input[span]));

    let name = info_dict
        .get(&b"name"[..])
        .ok_or(MetainfoError::MissingField("name"))?
        .as_bytes()
        .ok_or(MetainfoError::MalformedInput {
            reason: "name is not a string".into(),
        })?
        .to_vec();

    let piece_length = info_dict
        .get(&b"piece length"[..])
        .ok_or(MetainfoError::MissingField("piece length"))?
        .as_integer()
        .filter(|n| *n > 0)
        .ok_or(MetainfoError::MalformedInput {
            reason: "piece length must be a positive integer".into(),
        })? as u64;

    let pieces = info_dict
        .get(&b"pieces"[..])
        .ok_or(MetainfoError::MissingField("pieces"))?
        .as_bytes()
        .ok_or(MetainfoError::MalformedInput {
            reason: "pieces is not a string".into(),
        })?;
    if pieces.len() % 20 != 0 {
        return Err(MetainfoError::MalformedInput {
            reason: format!("pieces length {} is not a multiple of 20", pieces.len()),
        });
    }
    let piece_hashes: Vec<[u8; 20]> = pieces
        .chunks_exact(20)
        .map(|c| c.try_into().expect("chunk is 20 bytes"))
        .collect();

    let files = parse_files(info_dict, &name)?;
    let total_size: u64 = files.iter().map(|f| f.length).sum();

    let expected = total_size.div_ceil(piece_length);
    if expected != piece_hashes.len() as u64 {
        return Err(MetainfoError::PieceCountMismatch {
            expected,
            actual: piece_hashes.len() as u64,
        });
    }

    let announce_urls = collect_announce_urls(root);

    Ok(TorrentMetainfo {
        info_hash,
        name,
        piece_length,
        piece_hashes,
        files,
        announce_urls,
        total_size,
        category: None,
    })
}

fn parse_files(
    info: &std::collections::BTreeMap<Vec<u8>, BencodeValue>,
    name: &[u8],
) -> Result<Vec<FileEntry>, MetainfoError> {
    if let Some(files) = info.get(&b"files"[..]) {
        let list = files.as_list().ok_or(MetainfoError::MalformedInput {
            reason: "files is not a list".into(),
        })?;
        if list.is_empty() {
            return Err(MetainfoError::MalformedInput {
                reason: "files list is empty".into(),
            });
        }
        let mut out = Vec::with_capacity(list.len());
        for entry in list {
            let length = entry
                .get(b"length")
                .and_then(BencodeValue::as_integer)
                .filter(|n| *n >= 0)
                .ok_or(MetainfoError::MalformedInput {
                    reason: "file entry missing non-negative length".into(),
                })? as u64;
            let path = entry
                .get(b"path")
                .and_then(BencodeValue::as_list)
                .ok_or(MetainfoError::MalformedInput {
                    reason: "file entry missing path list".into(),
                })?
                .iter()
                .map(|p| {
                    p.as_bytes()
                        .map(<[u8]>::to_vec)
                        .ok_or(MetainfoError::MalformedInput {
                            reason: "path component is not a string".into(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(FileEntry { path, length });
        }
        Ok(out)
    } else if let Some(length) = info.get(&b"length"[..]) {
        let length = length
            .as_integer()
            .filter(|n| *n >= 0)
            .ok_or(MetainfoError::MalformedInput {
                reason: "length must be a non-negative integer".into(),
            })? as u64;
        Ok(vec![FileEntry {
            path: vec![name.to_vec()],
            length,
        }])
    } else {
        Err(MetainfoError::MissingField("length or files"))
    }
}

fn collect_announce_urls(
    root: &std::collections::BTreeMap<Vec<u8>, BencodeValue>,
) -> Vec<String> {
    let mut urls = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |url: &str| {
        if seen.insert(url.to_string()) {
            urls.push(url.to_string());
        }
    };
    if let Some(tiers) = root.get(&b"announce-list"[..]).and_then(BencodeValue::as_list) {
        for tier in tiers {
            if let Some(entries) = tier.as_list() {
                for entry in entries {
                    if let Some(url) = entry.as_str() {
                        push(url);
                    }
                }
            }
        }
    }
    if let Some(url) = root.get(&b"announce"[..]).and_then(BencodeValue::as_str) {
        push(url);
    }
    urls
}

/// min / max / arithmetic mean of one metric over a collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStats {
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

fn metric_stats(values: impl Iterator<Item = u64>) -> MetricStats {
    let mut min = u64::MAX;
    let mut max = 0u64;
    let mut sum = 0u128;
    let mut count = 0u64;
    for v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v as u128;
        count += 1;
    }
    MetricStats {
        min,
        max,
        mean: sum as f64 / count as f64,
    }
}

/// The "breakdown" table over a set of torrents: content size, chunk size,
/// chunk count, file count and tracker count.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetainfoStats {
    pub content_size: MetricStats,
    pub chunk_size: MetricStats,
    pub chunk_count: MetricStats,
    pub file_count: MetricStats,
    pub tracker_count: MetricStats,
}

pub fn summarize(metainfos: &[TorrentMetainfo]) -> Result<MetainfoStats, MetainfoError> {
    if metainfos.is_empty() {
        return Err(MetainfoError::EmptyCollection);
    }
    Ok(MetainfoStats {
        content_size: metric_stats(metainfos.iter().map(|m| m.total_size)),
        chunk_size: metric_stats(metainfos.iter().map(|m| m.piece_length)),
        chunk_count: metric_stats(metainfos.iter().map(|m| m.piece_count())),
        file_count: metric_stats(metainfos.iter().map(|m| m.files.len() as u64)),
        tracker_count: metric_stats(metainfos.iter().map(|m| m.announce_urls.len() as u64)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bencode::BencodeValue;
    use std::collections::BTreeMap;

    fn bvalue_dict(entries: Vec<(&[u8], BencodeValue)>) -> BencodeValue {
        BencodeValue::Dict(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_vec(), v))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    /// Single-file torrent fixture: `name`, 40 bytes of content, 16-byte
    /// pieces (3 hashes), one announce URL.
    fn fixture_torrent() -> Vec<u8> {
        let content = [7u8; 40];
        let mut pieces = Vec::new();
        for chunk in content.chunks(16) {
            pieces.extend_from_slice(&digest::sha1_bytes(chunk));
        }
        let info = bvalue_dict(vec![
            (b"length", BencodeValue::Integer(40)),
            (b"name", BencodeValue::bytes(&b"a.bin"[..])),
            (b"piece length", BencodeValue::Integer(16)),
            (b"pieces", BencodeValue::Bytes(pieces)),
        ]);
        let root = bvalue_dict(vec![
            (b"announce", BencodeValue::bytes(&b"http://t.example/announce"[..])),
            (b"info", info),
        ]);
        bencode::encode(&root)
    }

    #[test]
    fn parses_single_file_fixture() {
        let torrent = fixture_torrent();
        let m = parse_metainfo(&torrent).unwrap();
        assert_eq!(m.name, b"a.bin");
        assert_eq!(m.total_size, 40);
        assert_eq!(m.piece_length, 16);
        assert_eq!(m.piece_count(), 3); // ceil(40/16)
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.announce_urls, vec!["http://t.example/announce"]);
    }

    #[test]
    fn info_hash_matches_raw_span_digest() {
        let torrent = fixture_torrent();
        let span = bencode::value_span(&torrent, &[b"info"]).unwrap().unwrap();
        let expected = digest::sha1_bytes(&torrent[span]);
        let m = parse_metainfo(&torrent).unwrap();
        assert_eq!(m.info_hash.0, expected);
    }

    #[test]
    fn info_hash_stable_across_reserialization() {
        let torrent = fixture_torrent();
        let m = parse_metainfo(&torrent).unwrap();
        // Decode and canonically re-encode the whole file, then re-parse.
        let reencoded = bencode::encode(&bencode::decode(&torrent).unwrap().value);
        let n = parse_metainfo(&reencoded).unwrap();
        assert_eq!(m.info_hash, n.info_hash);
    }

    #[test]
    fn non_canonical_info_dict_hashes_original_bytes() {
        // Keys of the info dict deliberately out of order; the hash must be
        // taken over these exact bytes.
        let content = [1u8; 8];
        let piece = digest::sha1_bytes(&content);
        let mut doc = Vec::new();
        doc.extend_from_slice(b"d4:infod");
        let info_start = doc.len() - 1;
        doc.extend_from_slice(b"4:name1:x");
        doc.extend_from_slice(b"6:lengthi8e");
        doc.extend_from_slice(b"12:piece lengthi8e");
        doc.extend_from_slice(b"6:pieces20:");
        doc.extend_from_slice(&piece);
        doc.push(b'e');
        let info_end = doc.len();
        doc.push(b'e');
        let m = parse_metainfo(&doc).unwrap();
        assert_eq!(m.info_hash.0, digest::sha1_bytes(&doc[info_start..info_end]));
    }

    #[test]
    fn rejects_pieces_not_multiple_of_20() {
        let info = bvalue_dict(vec![
            (b"length", BencodeValue::Integer(8)),
            (b"name", BencodeValue::bytes(&b"x"[..])),
            (b"piece length", BencodeValue::Integer(8)),
            (b"pieces", BencodeValue::Bytes(vec![0u8; 21])),
        ]);
        let root = bvalue_dict(vec![(b"info", info)]);
        assert!(matches!(
            parse_metainfo(&bencode::encode(&root)),
            Err(MetainfoError::MalformedInput { .. })
        ));
    }

    #[test]
    fn rejects_piece_count_mismatch() {
        let info = bvalue_dict(vec![
            (b"length", BencodeValue::Integer(100)),
            (b"name", BencodeValue::bytes(&b"x"[..])),
            (b"piece length", BencodeValue::Integer(16)),
            (b"pieces", BencodeValue::Bytes(vec![0u8; 40])), // 2 hashes, need 7
        ]);
        let root = bvalue_dict(vec![(b"info", info)]);
        assert_eq!(
            parse_metainfo(&bencode::encode(&root)),
            Err(MetainfoError::PieceCountMismatch {
                expected: 7,
                actual: 2
            })
        );
    }

    #[test]
    fn missing_fields_are_typed() {
        let root = bvalue_dict(vec![(b"announce", BencodeValue::bytes(&b"u"[..]))]);
        assert_eq!(
            parse_metainfo(&bencode::encode(&root)),
            Err(MetainfoError::MissingField("info"))
        );
    }

    #[test]
    fn announce_list_flattened_deduplicated() {
        let content = [3u8; 4];
        let piece = digest::sha1_bytes(&content);
        let info = bvalue_dict(vec![
            (b"length", BencodeValue::Integer(4)),
            (b"name", BencodeValue::bytes(&b"x"[..])),
            (b"piece length", BencodeValue::Integer(4)),
            (b"pieces", BencodeValue::Bytes(piece.to_vec())),
        ]);
        let tier = |urls: &[&str]| {
            BencodeValue::List(urls.iter().map(|u| BencodeValue::bytes(u.as_bytes())).collect())
        };
        let root = bvalue_dict(vec![
            (b"announce", BencodeValue::bytes(&b"http://a/ann"[..])),
            (
                b"announce-list",
                BencodeValue::List(vec![tier(&["http://b/ann", "http://a/ann"]), tier(&["http://c/ann"])]),
            ),
            (b"info", info),
        ]);
        let m = parse_metainfo(&bencode::encode(&root)).unwrap();
        assert_eq!(
            m.announce_urls,
            vec!["http://b/ann", "http://a/ann", "http://c/ann"]
        );
    }

    #[test]
    fn summarize_two_torrents() {
        let mut a = parse_metainfo(&fixture_torrent()).unwrap();
        let mut b = a.clone();
        a.total_size = 100;
        b.total_size = 300;
        let stats = summarize(&[a, b]).unwrap();
        assert_eq!(stats.content_size.min, 100);
        assert_eq!(stats.content_size.max, 300);
        assert_eq!(stats.content_size.mean, 200.0);
    }

    #[test]
    fn summarize_single_torrent_collapses() {
        let m = parse_metainfo(&fixture_torrent()).unwrap();
        let stats = summarize(std::slice::from_ref(&m)).unwrap();
        for s in [
            stats.content_size,
            stats.chunk_size,
            stats.chunk_count,
            stats.file_count,
            stats.tracker_count,
        ] {
            assert_eq!(s.min, s.max);
            assert_eq!(s.mean, s.min as f64);
        }
    }

    #[test]
    fn summarize_empty_errors() {
        assert_eq!(summarize(&[]), Err(MetainfoError::EmptyCollection));
    }

    #[test]
    fn summarize_matches_naive_fold() {
        let base = parse_metainfo(&fixture_torrent()).unwrap();
        let torrents: Vec<TorrentMetainfo> = (1..=100u64)
            .map(|i| {
                let mut t = base.clone();
                t.total_size = i * 13 % 977 + 1;
                t.piece_length = i % 7 + 1;
                t
            })
            .collect();
        let stats = summarize(&torrents).unwrap();
        let sizes: Vec<u64> = torrents.iter().map(|t| t.total_size).collect();
        assert_eq!(stats.content_size.min, *sizes.iter().min().unwrap());
        assert_eq!(stats.content_size.max, *sizes.iter().max().unwrap());
        let mean = sizes.iter().sum::<u64>() as f64 / sizes.len() as f64;
        assert!((stats.content_size.mean - mean).abs() < 1e-9);
    }
}
