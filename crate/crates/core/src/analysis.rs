//! Population, churn, geography and feasibility analytics over an evidence
//! log.
//!
//! Peer identity here is the IP address alone: ports stay in the evidence but
//! are ignored for population statistics, and every ratio is computed over
//! unique IPs so that duplicating sightings or shuffling their order changes
//! nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::crawler::{DiscoverySource, PeerSighting, SwarmSnapshot};
use crate::evidence::{EvidenceKind, EvidenceLog};
use crate::geo::GeoDatabase;
use crate::metainfo::InfoHash;

/// Country bucket for IPs with no database match; keeps totals conserved.
pub const UNRESOLVED_COUNTRY: &str = "--";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("the log holds no sightings")]
    EmptyLog,
    #[error("churn needs at least two snapshots of the swarm")]
    TooFewSnapshots,
    #[error("cell size must be positive and divide 360 evenly")]
    BadCellSize,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("evidence record {seq} is not readable: {reason}")]
    BadRecord { seq: u64, reason: String },
}

/// A sighting as reconstructed from the log, with the snapshot ordinal it was
/// collected in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedSighting {
    pub sighting: PeerSighting,
    pub snapshot_index: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SightingPayload {
    ip: Ipv4Addr,
    port: u16,
    info_hash: InfoHash,
    ts: i64,
    source: DiscoverySource,
    snapshot: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SummaryPayload {
    info_hash: InfoHash,
    snapshot: u64,
    started_at: i64,
    completed_at: i64,
    tracker_reported_count: u32,
    converged: bool,
    announce_attempts: u32,
}

/// Pull every sighting out of a log.
pub fn extract_sightings(log: &EvidenceLog) -> Result<Vec<LoggedSighting>, AnalysisError> {
    let mut out = Vec::new();
    for record in log.records() {
        if record.kind != EvidenceKind::Sighting {
            continue;
        }
        let payload: SightingPayload =
            serde_json::from_str(&record.payload).map_err(|e| AnalysisError::BadRecord {
                seq: record.seq,
                reason: e.to_string(),
            })?;
        out.push(LoggedSighting {
            sighting: PeerSighting {
                ip: payload.ip,
                port: payload.port,
                info_hash: payload.info_hash,
                timestamp_ms: payload.ts,
                source: payload.source,
            },
            snapshot_index: payload.snapshot,
        });
    }
    Ok(out)
}

/// Rebuild per-swarm snapshot series (ordered by snapshot ordinal) from the
/// log's sightings and summaries.
pub fn snapshots_from_log(
    log: &EvidenceLog,
) -> Result<BTreeMap<InfoHash, Vec<SwarmSnapshot>>, AnalysisError> {
    let sightings = extract_sightings(log)?;
    let mut grouped: BTreeMap<(InfoHash, u64), Vec<PeerSighting>> = BTreeMap::new();
    for s in sightings {
        grouped
            .entry((s.sighting.info_hash, s.snapshot_index))
            .or_default()
            .push(s.sighting);
    }
    let mut out: BTreeMap<InfoHash, Vec<SwarmSnapshot>> = BTreeMap::new();
    for record in log.records() {
        if record.kind != EvidenceKind::SnapshotSummary {
            continue;
        }
        let payload: SummaryPayload =
            serde_json::from_str(&record.payload).map_err(|e| AnalysisError::BadRecord {
                seq: record.seq,
                reason: e.to_string(),
            })?;
        let sightings = grouped
            .remove(&(payload.info_hash, payload.snapshot))
            .unwrap_or_default();
        out.entry(payload.info_hash).or_default().push(SwarmSnapshot {
            info_hash: payload.info_hash,
            started_at_ms: payload.started_at,
            completed_at_ms: payload.completed_at,
            sightings,
            tracker_reported_count: payload.tracker_reported_count,
            converged: payload.converged,
            announce_attempts: payload.announce_attempts,
        });
    }
    Ok(out)
}

/// The config recorded as the log's first record, for span/interval/labels.
#[derive(Debug, Clone, Default)]
pub struct LoggedConfig {
    pub snapshot_interval_seconds: u64,
    pub total_duration_seconds: u64,
    pub category_labels: BTreeMap<String, String>,
}

pub fn config_from_log(log: &EvidenceLog) -> Option<LoggedConfig> {
    let record = log
        .records()
        .iter()
        .find(|r| r.kind == EvidenceKind::Config)?;
    let value: Value = serde_json::from_str(&record.payload).ok()?;
    let config = value.get("config")?;
    let mut labels = BTreeMap::new();
    if let Some(map) = config.get("categoryLabels").and_then(Value::as_object) {
        for (k, v) in map {
            if let Some(text) = v.as_str() {
                labels.insert(k.clone(), text.to_string());
            }
        }
    }
    Some(LoggedConfig {
        snapshot_interval_seconds: config.get("snapshotIntervalSeconds")?.as_u64()?,
        total_duration_seconds: config.get("totalDurationSeconds")?.as_u64()?,
        category_labels: labels,
    })
}

/// Count of distinct IP addresses across all sightings; ports are ignored.
pub fn unique_ips(log: &EvidenceLog) -> u64 {
    let Ok(sightings) = extract_sightings(log) else {
        return 0;
    };
    sightings
        .iter()
        .map(|s| s.sighting.ip)
        .collect::<BTreeSet<_>>()
        .len() as u64
}

fn round_dp(value: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    (value * factor).round() / factor
}

/// Mean number of swarms each IP was seen in: distinct (ip, info-hash) pairs
/// over distinct IPs, two decimals.
pub fn avg_swarms_per_ip(log: &EvidenceLog) -> Result<f64, AnalysisError> {
    let sightings = extract_sightings(log)?;
    if sightings.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let pairs: BTreeSet<(Ipv4Addr, InfoHash)> = sightings
        .iter()
        .map(|s| (s.sighting.ip, s.sighting.info_hash))
        .collect();
    let ips: BTreeSet<Ipv4Addr> = sightings.iter().map(|s| s.sighting.ip).collect();
    Ok(round_dp(pairs.len() as f64 / ips.len() as f64, 2))
}

/// One row of the broadband comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BroadbandRow {
    pub country: String,
    pub unique_ips: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub broadband_subscribers: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent_of_broadband: Option<f64>,
}

/// Join per-country unique-IP counts with subscriber counts; the percentage
/// (two decimals) is omitted where no subscriber figure exists.
pub fn broadband_percentages(
    per_country_unique: &BTreeMap<String, u64>,
    subscribers: &BTreeMap<String, u64>,
) -> Vec<BroadbandRow> {
    per_country_unique
        .iter()
        .map(|(country, &count)| {
            let subs = subscribers.get(country).copied().filter(|s| *s > 0);
            BroadbandRow {
                country: country.clone(),
                unique_ips: count,
                broadband_subscribers: subs,
                percent_of_broadband: subs
                    .map(|s| round_dp(100.0 * count as f64 / s as f64, 2)),
            }
        })
        .collect()
}

/// Connection-time bin edges. The final bin catches peers present for the
/// whole investigation (duration within one snapshot interval of the span).
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBins {
    /// `(label, lower_ms inclusive, upper_ms exclusive)`.
    pub edges: Vec<(String, i64, i64)>,
    pub full_span_label: String,
    pub full_span_threshold_ms: i64,
}

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 24 * HOUR_MS;

/// The standard twelve bins: fractions of a day up to one day, then daily
/// bins up to a week, then "entire span".
pub fn thesis_bins(span_ms: i64, snapshot_interval_ms: i64) -> HistogramBins {
    let edges = vec![
        ("< 1.5 Hours".to_string(), 0, HOUR_MS * 3 / 2),
        ("1.5-3 Hours".to_string(), HOUR_MS * 3 / 2, 3 * HOUR_MS),
        ("3-6 Hours".to_string(), 3 * HOUR_MS, 6 * HOUR_MS),
        ("6-12 Hours".to_string(), 6 * HOUR_MS, 12 * HOUR_MS),
        ("12-24 Hours".to_string(), 12 * HOUR_MS, DAY_MS),
        ("1-2 Days".to_string(), DAY_MS, 2 * DAY_MS),
        ("2-3 Days".to_string(), 2 * DAY_MS, 3 * DAY_MS),
        ("3-4 Days".to_string(), 3 * DAY_MS, 4 * DAY_MS),
        ("4-5 Days".to_string(), 4 * DAY_MS, 5 * DAY_MS),
        ("5-6 Days".to_string(), 5 * DAY_MS, 6 * DAY_MS),
        ("6-7 Days".to_string(), 6 * DAY_MS, 7 * DAY_MS),
    ];
    HistogramBins {
        edges,
        full_span_label: "Entire Span".to_string(),
        full_span_threshold_ms: (span_ms - snapshot_interval_ms).max(0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HistogramRow {
    pub bin_label: String,
    pub count: u64,
}

/// Bin each IP's presence duration (last sighting minus first, across all
/// swarms). An IP seen once has duration zero and lands in the first bin;
/// durations at or beyond the full-span threshold land in the final bin.
pub fn connection_time_histogram(
    log: &EvidenceLog,
    bins: &HistogramBins,
) -> Result<Vec<HistogramRow>, AnalysisError> {
    let sightings = extract_sightings(log)?;
    let mut extent: BTreeMap<Ipv4Addr, (i64, i64)> = BTreeMap::new();
    for s in &sightings {
        let ts = s.sighting.timestamp_ms;
        extent
            .entry(s.sighting.ip)
            .and_modify(|(first, last)| {
                *first = (*first).min(ts);
                *last = (*last).max(ts);
            })
            .or_insert((ts, ts));
    }
    let mut counts = vec![0u64; bins.edges.len() + 1];
    for (first, last) in extent.values() {
        let duration = last - first;
        let slot = if duration >= bins.full_span_threshold_ms {
            bins.edges.len()
        } else {
            bins.edges
                .iter()
                .position(|(_, low, high)| duration >= *low && duration < *high)
                // Beyond the last edge but under the threshold: report in the
                // last labelled bin.
                .unwrap_or(bins.edges.len() - 1)
        };
        counts[slot] += 1;
    }
    let mut rows: Vec<HistogramRow> = bins
        .edges
        .iter()
        .zip(&counts)
        .map(|((label, _, _), &count)| HistogramRow {
            bin_label: label.clone(),
            count,
        })
        .collect();
    rows.push(HistogramRow {
        bin_label: bins.full_span_label.clone(),
        count: counts[bins.edges.len()],
    });
    Ok(rows)
}

/// Churn between two consecutive snapshots of one swarm.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChurnPoint {
    pub window_start_ms: i64,
    pub joined: u64,
    pub departed: u64,
    pub churn_rate: f64,
}

/// Symmetric-difference churn over consecutive snapshots: joined plus
/// departed over the union of the two peer sets (IP identity).
pub fn churn_rate(snapshots: &[SwarmSnapshot]) -> Result<Vec<ChurnPoint>, AnalysisError> {
    if snapshots.len() < 2 {
        return Err(AnalysisError::TooFewSnapshots);
    }
    let sets: Vec<BTreeSet<Ipv4Addr>> = snapshots
        .iter()
        .map(|s| s.sightings.iter().map(|x| x.ip).collect())
        .collect();
    Ok(snapshots
        .windows(2)
        .zip(sets.windows(2))
        .map(|(snaps, pair)| {
            let (previous, current) = (&pair[0], &pair[1]);
            let joined = current.difference(previous).count() as u64;
            let departed = previous.difference(current).count() as u64;
            let union = previous.union(current).count() as u64;
            ChurnPoint {
                window_start_ms: snaps[1].started_at_ms,
                joined,
                departed,
                churn_rate: if union == 0 {
                    0.0
                } else {
                    (joined + departed) as f64 / union as f64
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CategoryRow {
    pub category: String,
    pub percent: f64,
}

/// How category shares are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CategoryWeighting {
    /// Share of torrents per category.
    ByTorrent,
    /// Share of unique IPs observed per category.
    ByUniquePeers,
}

/// Category mix over the swarms in the log; unlabeled info-hashes count as
/// "unknown". Percentages carry one decimal.
pub fn category_distribution(
    log: &EvidenceLog,
    labels: &BTreeMap<String, String>,
    weighting: CategoryWeighting,
) -> Result<Vec<CategoryRow>, AnalysisError> {
    let sightings = extract_sightings(log)?;
    let swarms: BTreeSet<InfoHash> = sightings.iter().map(|s| s.sighting.info_hash).collect();
    if swarms.is_empty() {
        return Ok(Vec::new());
    }
    let label_of = |hash: &InfoHash| {
        labels
            .get(&hash.to_hex())
            .cloned()
            .unwrap_or_else(|| "unknown".to_string())
    };
    let mut weights: BTreeMap<String, u64> = BTreeMap::new();
    match weighting {
        CategoryWeighting::ByTorrent => {
            for swarm in &swarms {
                *weights.entry(label_of(swarm)).or_insert(0) += 1;
            }
        }
        CategoryWeighting::ByUniquePeers => {
            let mut per_swarm: BTreeMap<InfoHash, BTreeSet<Ipv4Addr>> = BTreeMap::new();
            for s in &sightings {
                per_swarm
                    .entry(s.sighting.info_hash)
                    .or_default()
                    .insert(s.sighting.ip);
            }
            for (swarm, ips) in per_swarm {
                *weights.entry(label_of(&swarm)).or_insert(0) += ips.len() as u64;
            }
        }
    }
    let total: u64 = weights.values().sum();
    Ok(weights
        .into_iter()
        .map(|(category, weight)| CategoryRow {
            category,
            percent: round_dp(100.0 * weight as f64 / total as f64, 1),
        })
        .collect())
}

/// Hours to move `content_size_bytes` over a `line_bits_per_second` link,
/// one decimal.
pub fn dialup_hours(
    content_size_bytes: u64,
    line_bits_per_second: u64,
) -> Result<f64, AnalysisError> {
    if content_size_bytes == 0 || line_bits_per_second == 0 {
        return Err(AnalysisError::InvalidInput(
            "content size and line rate must both be positive".into(),
        ));
    }
    let hours = content_size_bytes as f64 * 8.0 / line_bits_per_second as f64 / 3600.0;
    Ok(round_dp(hours, 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HeatmapCell {
    pub lat_bin: i32,
    pub lon_bin: i32,
    pub count: u64,
}

/// Bucket geolocated points into `cell_size_degrees` cells by floor
/// division. Counts conserve the number of points.
pub fn heatmap_grid(
    points: &[(f64, f64)],
    cell_size_degrees: f64,
) -> Result<Vec<HeatmapCell>, AnalysisError> {
    if !(cell_size_degrees > 0.0) {
        return Err(AnalysisError::BadCellSize);
    }
    let cells_per_turn = 360.0 / cell_size_degrees;
    if (cells_per_turn - cells_per_turn.round()).abs() > 1e-9 {
        return Err(AnalysisError::BadCellSize);
    }
    let mut grid: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    for (lat, lon) in points {
        let lat_bin = (lat / cell_size_degrees).floor() as i32;
        let lon_bin = (lon / cell_size_degrees).floor() as i32;
        *grid.entry((lat_bin, lon_bin)).or_insert(0) += 1;
    }
    Ok(grid
        .into_iter()
        .map(|((lat_bin, lon_bin), count)| HeatmapCell {
            lat_bin,
            lon_bin,
            count,
        })
        .collect())
}

/// CSV form: `lat_bin,lon_bin,count`.
pub fn heatmap_csv(cells: &[HeatmapCell]) -> String {
    let mut out = String::from("lat_bin,lon_bin,count\n");
    for cell in cells {
        out.push_str(&format!("{},{},{}\n", cell.lat_bin, cell.lon_bin, cell.count));
    }
    out
}

/// GeoJSON FeatureCollection of cell polygons, each carrying its count.
pub fn heatmap_geojson(cells: &[HeatmapCell], cell_size_degrees: f64) -> String {
    let features: Vec<Value> = cells
        .iter()
        .map(|cell| {
            let south = cell.lat_bin as f64 * cell_size_degrees;
            let west = cell.lon_bin as f64 * cell_size_degrees;
            let north = south + cell_size_degrees;
            let east = west + cell_size_degrees;
            serde_json::json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[
                        [west, south], [east, south], [east, north],
                        [west, north], [west, south],
                    ]],
                },
                "properties": {
                    "count": cell.count,
                    "latBin": cell.lat_bin,
                    "lonBin": cell.lon_bin,
                },
            })
        })
        .collect();
    serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    })
    .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PerCountryRow {
    pub country: String,
    pub unique_ips: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub broadband_subscribers: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent_of_broadband: Option<f64>,
}

/// Per-swarm churn series for the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SwarmChurnSeries {
    pub info_hash: InfoHash,
    pub points: Vec<ChurnPoint>,
}

/// The full analysis output, serialized as the report artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisReport {
    pub unique_ip_count: u64,
    pub avg_swarms_per_ip: f64,
    pub largest_swarm_peak: u64,
    pub smallest_swarm_trough: u64,
    pub mean_snapshot_seconds: f64,
    pub per_country: Vec<PerCountryRow>,
    pub connection_time_histogram: Vec<HistogramRow>,
    pub category_distribution: Vec<CategoryRow>,
    pub churn_series: Vec<SwarmChurnSeries>,
}

/// Compute every report metric from a verified log. `geo` resolves
/// countries (unmatched IPs count under `--`); `subscribers` fills the
/// broadband columns where present.
pub fn build_report(
    log: &EvidenceLog,
    geo: Option<&GeoDatabase>,
    subscribers: &BTreeMap<String, u64>,
) -> Result<AnalysisReport, AnalysisError> {
    let sightings = extract_sightings(log)?;
    if sightings.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let config = config_from_log(log).unwrap_or_default();
    let snapshots = snapshots_from_log(log)?;

    let all_ips: BTreeSet<Ipv4Addr> = sightings.iter().map(|s| s.sighting.ip).collect();
    let unique_ip_count = all_ips.len() as u64;

    let mut per_country_unique: BTreeMap<String, u64> = BTreeMap::new();
    if let Some(db) = geo {
        for ip in &all_ips {
            let country = db
                .lookup(*ip)
                .map(|r| r.country.to_string())
                .unwrap_or_else(|| UNRESOLVED_COUNTRY.to_string());
            *per_country_unique.entry(country).or_insert(0) += 1;
        }
    } else if unique_ip_count > 0 {
        per_country_unique.insert(UNRESOLVED_COUNTRY.to_string(), unique_ip_count);
    }

    let per_country = broadband_percentages(&per_country_unique, subscribers)
        .into_iter()
        .map(|row| PerCountryRow {
            country: row.country,
            unique_ips: row.unique_ips,
            broadband_subscribers: row.broadband_subscribers,
            percent_of_broadband: row.percent_of_broadband,
        })
        .collect();

    let mut largest_swarm_peak = 0u64;
    let mut smallest_swarm_trough = u64::MAX;
    let mut snapshot_secs_sum = 0f64;
    let mut snapshot_count = 0u64;
    let mut churn_series = Vec::new();
    for (hash, series) in &snapshots {
        for snap in series {
            let unique = snap.unique_peers() as u64;
            largest_swarm_peak = largest_swarm_peak.max(unique);
            smallest_swarm_trough = smallest_swarm_trough.min(unique);
            snapshot_secs_sum += (snap.completed_at_ms - snap.started_at_ms) as f64 / 1000.0;
            snapshot_count += 1;
        }
        if series.len() >= 2 {
            churn_series.push(SwarmChurnSeries {
                info_hash: *hash,
                points: churn_rate(series)?,
            });
        }
    }
    if smallest_swarm_trough == u64::MAX {
        smallest_swarm_trough = 0;
    }

    let span_ms = (config.total_duration_seconds * 1000) as i64;
    let interval_ms = (config.snapshot_interval_seconds * 1000) as i64;
    let bins = if span_ms > 0 {
        thesis_bins(span_ms, interval_ms)
    } else {
        // No recorded config: derive the span from the observations.
        let first = sightings
            .iter()
            .map(|s| s.sighting.timestamp_ms)
            .min()
            .unwrap_or(0);
        let last = sightings
            .iter()
            .map(|s| s.sighting.timestamp_ms)
            .max()
            .unwrap_or(0);
        thesis_bins(last - first, 0)
    };

    Ok(AnalysisReport {
        unique_ip_count,
        avg_swarms_per_ip: avg_swarms_per_ip(log)?,
        largest_swarm_peak,
        smallest_swarm_trough,
        mean_snapshot_seconds: if snapshot_count == 0 {
            0.0
        } else {
            snapshot_secs_sum / snapshot_count as f64
        },
        per_country,
        connection_time_histogram: connection_time_histogram(log, &bins)?,
        category_distribution: category_distribution(
            log,
            &config.category_labels,
            CategoryWeighting::ByTorrent,
        )?,
        churn_series,
    })
}

/// Geolocate the unique IPs of a log for heatmap export; returns one point
/// per resolvable IP.
pub fn geolocated_points(
    log: &EvidenceLog,
    geo: &GeoDatabase,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let sightings = extract_sightings(log)?;
    let ips: BTreeSet<Ipv4Addr> = sightings.iter().map(|s| s.sighting.ip).collect();
    Ok(ips
        .iter()
        .filter_map(|ip| geo.lookup(*ip).map(|r| (r.lat, r.lon)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::EvidenceKind;
    use serde_json::json;

    /// Hand-build a log of sightings: (ip, swarm letter, snapshot).
    fn log_of(sightings: &[(&str, u8, u64)]) -> EvidenceLog {
        let mut log = EvidenceLog::new("case", "tester", 0);
        for (i, (ip, swarm, snapshot)) in sightings.iter().enumerate() {
            let hash = InfoHash([*swarm; 20]);
            log.append(
                EvidenceKind::Sighting,
                &json!({
                    "ip": ip,
                    "port": 6881,
                    "infoHash": hash.to_hex(),
                    "ts": 1000 + i as i64,
                    "source": "tracker",
                    "snapshot": snapshot,
                }),
                1000 + i as i64,
            )
            .unwrap();
        }
        log
    }

    #[test]
    fn unique_ips_ignores_ports_and_swarms() {
        let log = log_of(&[("10.0.0.1", 1, 0), ("10.0.0.1", 2, 0), ("10.0.0.2", 1, 0)]);
        assert_eq!(unique_ips(&log), 2);
    }

    #[test]
    fn unique_ips_empty_log() {
        let log = EvidenceLog::new("case", "tester", 0);
        assert_eq!(unique_ips(&log), 0);
    }

    #[test]
    fn unique_ips_matches_set_oracle() {
        let mut entries = Vec::new();
        let mut oracle = std::collections::HashSet::new();
        for i in 0..100_000u32 {
            let ip = format!("10.{}.{}.{}", (i * 7) % 200, (i * 13) % 251, i % 241);
            entries.push((ip.clone(), (i % 3) as u8, 0u64));
            oracle.insert(ip);
        }
        let refs: Vec<(&str, u8, u64)> =
            entries.iter().map(|(ip, s, n)| (ip.as_str(), *s, *n)).collect();
        let log = log_of(&refs);
        assert_eq!(unique_ips(&log), oracle.len() as u64);
    }

    #[test]
    fn avg_swarms_fixture() {
        // {A:s1, A:s2, B:s1} -> 3 pairs / 2 ips = 1.50
        let log = log_of(&[("10.0.0.1", 1, 0), ("10.0.0.1", 2, 0), ("10.0.0.2", 1, 0)]);
        assert_eq!(avg_swarms_per_ip(&log).unwrap(), 1.50);
    }

    #[test]
    fn avg_swarms_identity_case() {
        let log = log_of(&[("10.0.0.1", 1, 0), ("10.0.0.2", 1, 0), ("10.0.0.3", 2, 0)]);
        assert_eq!(avg_swarms_per_ip(&log).unwrap(), 1.00);
    }

    #[test]
    fn avg_swarms_empty_is_error() {
        let log = EvidenceLog::new("case", "tester", 0);
        assert_eq!(avg_swarms_per_ip(&log), Err(AnalysisError::EmptyLog));
    }

    #[test]
    fn avg_swarms_matches_brute_force() {
        let mut entries = Vec::new();
        for i in 0..500u32 {
            entries.push((
                format!("10.0.{}.{}", i % 19, i % 23),
                (i % 5) as u8,
                0u64,
            ));
        }
        let refs: Vec<(&str, u8, u64)> =
            entries.iter().map(|(ip, s, n)| (ip.as_str(), *s, *n)).collect();
        let log = log_of(&refs);
        let mut pairs = std::collections::HashSet::new();
        let mut ips = std::collections::HashSet::new();
        for (ip, s, _) in &refs {
            pairs.insert((*ip, *s));
            ips.insert(*ip);
        }
        let expected = round_dp(pairs.len() as f64 / ips.len() as f64, 2);
        assert_eq!(avg_swarms_per_ip(&log).unwrap(), expected);
    }

    #[test]
    fn broadband_reproduces_published_rows() {
        let uniques = BTreeMap::from([
            ("United States".to_string(), 1_116_111u64),
            ("United Kingdom".to_string(), 790_162),
        ]);
        let subs = BTreeMap::from([
            ("United States".to_string(), 73_123_400u64),
            ("United Kingdom".to_string(), 17_276_000),
        ]);
        let rows = broadband_percentages(&uniques, &subs);
        let by_country: BTreeMap<&str, f64> = rows
            .iter()
            .map(|r| (r.country.as_str(), r.percent_of_broadband.unwrap()))
            .collect();
        assert_eq!(by_country["United States"], 1.53);
        assert_eq!(by_country["United Kingdom"], 4.57);
    }

    #[test]
    fn broadband_zero_count() {
        let uniques = BTreeMap::from([("X".to_string(), 0u64)]);
        let subs = BTreeMap::from([("X".to_string(), 10u64)]);
        assert_eq!(broadband_percentages(&uniques, &subs)[0].percent_of_broadband, Some(0.0));
    }

    #[test]
    fn broadband_missing_subscribers_omits_percent() {
        let uniques = BTreeMap::from([("Y".to_string(), 5u64)]);
        let rows = broadband_percentages(&uniques, &BTreeMap::new());
        assert_eq!(rows[0].percent_of_broadband, None);
        assert_eq!(rows[0].broadband_subscribers, None);
    }

    fn sighting_at(log: &mut EvidenceLog, ip: &str, ts: i64) {
        log.append(
            EvidenceKind::Sighting,
            &json!({
                "ip": ip,
                "port": 1,
                "infoHash": InfoHash([1; 20]).to_hex(),
                "ts": ts,
                "source": "tracker",
                "snapshot": 0,
            }),
            ts,
        )
        .unwrap();
    }

    #[test]
    fn histogram_single_sighting_first_bin() {
        let mut log = EvidenceLog::new("c", "i", 0);
        sighting_at(&mut log, "10.0.0.1", 50_000);
        let bins = thesis_bins(7 * DAY_MS, HOUR_MS);
        let rows = connection_time_histogram(&log, &bins).unwrap();
        assert_eq!(rows[0].count, 1);
        assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), 1);
    }

    #[test]
    fn histogram_two_hour_presence() {
        let mut log = EvidenceLog::new("c", "i", 0);
        sighting_at(&mut log, "10.0.0.1", 0);
        sighting_at(&mut log, "10.0.0.1", 2 * HOUR_MS);
        let bins = thesis_bins(7 * DAY_MS, HOUR_MS);
        let rows = connection_time_histogram(&log, &bins).unwrap();
        let row = rows.iter().find(|r| r.bin_label == "1.5-3 Hours").unwrap();
        assert_eq!(row.count, 1);
    }

    #[test]
    fn histogram_full_span_threshold() {
        let span = 720_000i64; // 12 minutes
        let interval = 60_000i64;
        let mut log = EvidenceLog::new("c", "i", 0);
        // Present from start to end: full span.
        sighting_at(&mut log, "10.0.0.1", 0);
        sighting_at(&mut log, "10.0.0.1", span - interval);
        // Short-lived peer.
        sighting_at(&mut log, "10.0.0.2", 60_000);
        let bins = thesis_bins(span, interval);
        let rows = connection_time_histogram(&log, &bins).unwrap();
        assert_eq!(rows.last().unwrap().count, 1);
        assert_eq!(rows[0].count, 1);
    }

    fn snapshot_with_ips(ips: &[&str], started: i64) -> SwarmSnapshot {
        SwarmSnapshot {
            info_hash: InfoHash([1; 20]),
            started_at_ms: started,
            completed_at_ms: started + 1000,
            sightings: ips
                .iter()
                .map(|ip| PeerSighting {
                    ip: ip.parse().unwrap(),
                    port: 1,
                    info_hash: InfoHash([1; 20]),
                    timestamp_ms: started,
                    source: DiscoverySource::Tracker,
                })
                .collect(),
            tracker_reported_count: ips.len() as u32,
            converged: true,
            announce_attempts: 1,
        }
    }

    #[test]
    fn churn_identical_sets_is_zero() {
        let snaps = vec![
            snapshot_with_ips(&["10.0.0.1", "10.0.0.2"], 0),
            snapshot_with_ips(&["10.0.0.1", "10.0.0.2"], 60_000),
        ];
        let points = churn_rate(&snaps).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].churn_rate, 0.0);
        assert_eq!(points[0].joined, 0);
        assert_eq!(points[0].departed, 0);
    }

    #[test]
    fn churn_disjoint_sets_is_one() {
        let snaps = vec![
            snapshot_with_ips(&["10.0.0.1", "10.0.0.2"], 0),
            snapshot_with_ips(&["10.0.0.3", "10.0.0.4"], 60_000),
        ];
        let points = churn_rate(&snaps).unwrap();
        assert_eq!(points[0].churn_rate, 1.0);
    }

    #[test]
    fn churn_needs_two_snapshots() {
        let snaps = vec![snapshot_with_ips(&["10.0.0.1"], 0)];
        assert_eq!(churn_rate(&snaps), Err(AnalysisError::TooFewSnapshots));
    }

    #[test]
    fn category_distribution_by_torrent() {
        let log = log_of(&[("10.0.0.1", 1, 0), ("10.0.0.2", 2, 0), ("10.0.0.3", 3, 0)]);
        let labels = BTreeMap::from([
            (InfoHash([1; 20]).to_hex(), "video".to_string()),
            (InfoHash([2; 20]).to_hex(), "video".to_string()),
            (InfoHash([3; 20]).to_hex(), "music".to_string()),
        ]);
        let rows = category_distribution(&log, &labels, CategoryWeighting::ByTorrent).unwrap();
        let by_cat: BTreeMap<&str, f64> =
            rows.iter().map(|r| (r.category.as_str(), r.percent)).collect();
        assert_eq!(by_cat["video"], 66.7);
        assert_eq!(by_cat["music"], 33.3);
    }

    #[test]
    fn category_single_category_is_hundred() {
        let log = log_of(&[("10.0.0.1", 1, 0)]);
        let labels = BTreeMap::from([(InfoHash([1; 20]).to_hex(), "video".to_string())]);
        let rows = category_distribution(&log, &labels, CategoryWeighting::ByTorrent).unwrap();
        assert_eq!(rows[0].percent, 100.0);
    }

    #[test]
    fn category_percents_sum_to_hundred() {
        let entries: Vec<(String, u8, u64)> = (0..100u8)
            .map(|i| (format!("10.0.1.{i}"), i, 0u64))
            .collect();
        let refs: Vec<(&str, u8, u64)> =
            entries.iter().map(|(ip, s, n)| (ip.as_str(), *s, *n)).collect();
        let log = log_of(&refs);
        let labels: BTreeMap<String, String> = (0..100u8)
            .map(|i| (InfoHash([i; 20]).to_hex(), format!("cat{}", i % 7)))
            .collect();
        let rows = category_distribution(&log, &labels, CategoryWeighting::ByTorrent).unwrap();
        let total: f64 = rows.iter().map(|r| r.percent).sum();
        assert!((total - 100.0).abs() <= 0.1, "sum {total}");
    }

    #[test]
    fn unlabeled_swarms_are_unknown() {
        let log = log_of(&[("10.0.0.1", 9, 0)]);
        let rows =
            category_distribution(&log, &BTreeMap::new(), CategoryWeighting::ByTorrent).unwrap();
        assert_eq!(rows[0].category, "unknown");
    }

    #[test]
    fn dialup_reference_computation() {
        // 1.62 GiB at 56 kbit/s.
        let size = (1.62 * (1u64 << 30) as f64).round() as u64;
        assert_eq!(dialup_hours(size, 56_000).unwrap(), 69.0);
    }

    #[test]
    fn dialup_small_transfer_rounds_to_zero() {
        assert_eq!(dialup_hours(56_000, 56_000).unwrap(), 0.0);
    }

    #[test]
    fn dialup_zero_is_error() {
        assert!(dialup_hours(0, 56_000).is_err());
        assert!(dialup_hours(1, 0).is_err());
    }

    #[test]
    fn heatmap_floor_binning() {
        let cells = heatmap_grid(&[(53.3, -6.2)], 1.0).unwrap();
        assert_eq!(cells, vec![HeatmapCell { lat_bin: 53, lon_bin: -7, count: 1 }]);
    }

    #[test]
    fn heatmap_accumulates_same_cell() {
        let cells = heatmap_grid(&[(10.1, 20.2), (10.9, 20.8)], 1.0).unwrap();
        assert_eq!(cells, vec![HeatmapCell { lat_bin: 10, lon_bin: 20, count: 2 }]);
    }

    #[test]
    fn heatmap_conserves_points() {
        let points: Vec<(f64, f64)> = (0..10_000)
            .map(|i| {
                let lat = ((i * 37) % 180) as f64 - 90.0 + 0.5;
                let lon = ((i * 91) % 360) as f64 - 180.0 + 0.5;
                (lat, lon)
            })
            .collect();
        let cells = heatmap_grid(&points, 5.0).unwrap();
        assert_eq!(
            cells.iter().map(|c| c.count).sum::<u64>(),
            points.len() as u64
        );
    }

    #[test]
    fn heatmap_rejects_bad_cell_sizes() {
        assert_eq!(heatmap_grid(&[], 7.0), Err(AnalysisError::BadCellSize));
        assert_eq!(heatmap_grid(&[], 0.0), Err(AnalysisError::BadCellSize));
        assert_eq!(heatmap_grid(&[], -1.0), Err(AnalysisError::BadCellSize));
        assert!(heatmap_grid(&[], 0.5).is_ok());
    }

    #[test]
    fn heatmap_csv_and_geojson_shapes() {
        let cells = heatmap_grid(&[(1.5, 2.5), (1.7, 2.9)], 1.0).unwrap();
        let csv = heatmap_csv(&cells);
        assert_eq!(csv, "lat_bin,lon_bin,count\n1,2,2\n");
        let geojson: Value = serde_json::from_str(&heatmap_geojson(&cells, 1.0)).unwrap();
        assert_eq!(geojson["type"], "FeatureCollection");
        assert_eq!(geojson["features"][0]["properties"]["count"], 2);
    }

    #[test]
    fn order_independence() {
        let forward = log_of(&[("10.0.0.1", 1, 0), ("10.0.0.2", 2, 0), ("10.0.0.3", 1, 1)]);
        let backward = log_of(&[("10.0.0.3", 1, 1), ("10.0.0.2", 2, 0), ("10.0.0.1", 1, 0)]);
        assert_eq!(unique_ips(&forward), unique_ips(&backward));
        assert_eq!(
            avg_swarms_per_ip(&forward).unwrap(),
            avg_swarms_per_ip(&backward).unwrap()
        );
    }

    #[test]
    fn duplication_invariance() {
        let once = log_of(&[("10.0.0.1", 1, 0), ("10.0.0.2", 2, 0)]);
        let twice = log_of(&[
            ("10.0.0.1", 1, 0),
            ("10.0.0.2", 2, 0),
            ("10.0.0.1", 1, 0),
            ("10.0.0.2", 2, 0),
        ]);
        assert_eq!(unique_ips(&once), unique_ips(&twice));
        assert_eq!(
            avg_swarms_per_ip(&once).unwrap(),
            avg_swarms_per_ip(&twice).unwrap()
        );
    }
}
