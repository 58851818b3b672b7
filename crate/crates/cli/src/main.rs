//! `up2p` — swarm investigation from the command line.
//!
//! Human-readable progress goes to stderr; machine-readable artifacts go to
//! files or stdout, so pipelines stay clean. Exit codes: 0 success, 1
//! operational failure, 2 usage error.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use up2p_core::analysis;
use up2p_core::crawler::{run_investigation, InvestigationConfig};
use up2p_core::evidence::{EvidenceError, EvidenceLog};
use up2p_core::field::FieldEnv;
use up2p_core::geo::GeoDatabase;
use up2p_core::metainfo::{parse_metainfo, summarize, TorrentMetainfo};
use up2p_core::simnet::{ChurnEvent, SimConfig, SimEnvironment, SimSwarmConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "up2p",
    about = "BitTorrent swarm investigation toolkit",
    version,
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an investigation and write the evidence log.
    #[command(group(ArgGroup::new("env").required(true).args(["sim", "live"])))]
    Investigate {
        /// Investigation config (JSON mirroring the config field names).
        #[arg(long)]
        config: PathBuf,
        /// Output evidence file (JSON Lines).
        #[arg(long)]
        out: PathBuf,
        /// Run against a simulated swarm environment (JSON config).
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Run against the live network.
        #[arg(long)]
        live: bool,
    },
    /// Verify an evidence log and produce the analysis report.
    Analyze {
        #[arg(long)]
        evidence: PathBuf,
        /// Geolocation database (CSV).
        #[arg(long)]
        geo: PathBuf,
        /// Optional per-country broadband subscriber counts (CSV:
        /// country,subscribers).
        #[arg(long)]
        subscribers: Option<PathBuf>,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an evidence log's hash chain.
    VerifyEvidence {
        #[arg(long)]
        evidence: PathBuf,
    },
    /// Look one IPv4 address up in a geolocation database.
    Geolocate {
        #[arg(long)]
        ip: Ipv4Addr,
        #[arg(long)]
        geo: PathBuf,
    },
    /// Export the geolocated peer grid as CSV and GeoJSON.
    ExportHeatmap {
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long)]
        geo: PathBuf,
        /// Cell size in degrees; must divide 360 evenly.
        #[arg(long)]
        cell: f64,
        /// Output prefix; writes <prefix>.csv and <prefix>.geojson.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a ready-to-run simulated investigation into a directory.
    Simdemo {
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a collection of .torrent files.
    MetainfoStats {
        /// Paths to .torrent files.
        #[arg(required = true)]
        torrents: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("UP2P_LOG_LEVEL")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

enum CliError {
    /// Bad invocation or unreadable inputs named on the command line.
    Usage(String),
    /// The operation itself failed.
    Failure(String),
}

fn read_input(path: &Path, what: &str) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8], what: &str) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Failure(format!("cannot write {what} {}: {e}", path.display())))
}

fn load_geo(path: &Path) -> Result<GeoDatabase, CliError> {
    let bytes = read_input(path, "geolocation database")?;
    GeoDatabase::load_csv(&bytes)
        .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

fn load_evidence(path: &Path) -> Result<EvidenceLog, CliError> {
    let bytes = read_input(path, "evidence log")?;
    match EvidenceLog::import_jsonl(&bytes) {
        Ok(log) => {
            eprintln!("chain OK, {} records", log.len());
            Ok(log)
        }
        Err(EvidenceError::ChainBroken { first_bad_seq }) => Err(CliError::Failure(format!(
            "evidence chain broken, first bad seq {first_bad_seq}; refusing tampered evidence"
        ))),
        Err(e) => Err(CliError::Failure(format!("{}: {e}", path.display()))),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Investigate {
            config,
            out,
            sim,
            live,
        } => investigate(&config, &out, sim.as_deref(), live),
        Command::Analyze {
            evidence,
            geo,
            subscribers,
            out,
        } => analyze(&evidence, &geo, subscribers.as_deref(), &out),
        Command::VerifyEvidence { evidence } => verify_evidence(&evidence),
        Command::Geolocate { ip, geo } => geolocate(ip, &geo),
        Command::ExportHeatmap {
            evidence,
            geo,
            cell,
            out,
        } => export_heatmap(&evidence, &geo, cell, &out),
        Command::Simdemo { out } => simdemo(&out),
        Command::MetainfoStats { torrents } => metainfo_stats(&torrents),
    }
}

fn investigate(
    config_path: &Path,
    out: &Path,
    sim: Option<&Path>,
    live: bool,
) -> Result<(), CliError> {
    let config_bytes = read_input(config_path, "investigation config")?;
    let config: InvestigationConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", config_path.display())))?;

    let log = if let Some(sim_path) = sim {
        let sim_bytes = read_input(sim_path, "simulator config")?;
        let env = SimEnvironment::from_json(&sim_bytes)
            .map_err(|e| CliError::Usage(format!("bad simulator config: {e}")))?;
        run_investigation(&config, &env)
    } else {
        debug_assert!(live);
        let env = FieldEnv::default();
        run_investigation(&config, &env)
    }
    .map_err(|e| CliError::Failure(e.to_string()))?;

    log.write_jsonl(out)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    print_run_summary(&log);
    eprintln!("evidence written to {} ({} records)", out.display(), log.len());
    Ok(())
}

/// Per-swarm convergence and timing summary, read back from the log's
/// snapshot summaries.
fn print_run_summary(log: &EvidenceLog) {
    let Ok(snapshots) = analysis::snapshots_from_log(log) else {
        return;
    };
    for (info_hash, series) in snapshots {
        let converged = series.iter().filter(|s| s.converged).count();
        let mean_secs = series
            .iter()
            .map(|s| (s.completed_at_ms - s.started_at_ms) as f64 / 1000.0)
            .sum::<f64>()
            / series.len().max(1) as f64;
        let mean_announces = series
            .iter()
            .map(|s| s.announce_attempts as f64)
            .sum::<f64>()
            / series.len().max(1) as f64;
        let peak = series.iter().map(|s| s.unique_peers()).max().unwrap_or(0);
        eprintln!(
            "swarm {info_hash}: {}/{} snapshots converged, peak {} peers, \
             mean {:.1}s and {:.1} announces per snapshot",
            converged,
            series.len(),
            peak,
            mean_secs,
            mean_announces,
        );
    }
}

fn load_subscribers(path: &Path) -> Result<BTreeMap<String, u64>, CliError> {
    let bytes = read_input(path, "subscriber table")?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| {
            CliError::Failure(format!("{} line {}: {e}", path.display(), i + 2))
        })?;
        if row.len() != 2 {
            return Err(CliError::Failure(format!(
                "{} line {}: expected country,subscribers",
                path.display(),
                i + 2
            )));
        }
        let count: u64 = row[1].trim().parse().map_err(|_| {
            CliError::Failure(format!(
                "{} line {}: bad subscriber count {:?}",
                path.display(),
                i + 2,
                &row[1]
            ))
        })?;
        out.insert(row[0].trim().to_string(), count);
    }
    Ok(out)
}

fn analyze(
    evidence: &Path,
    geo: &Path,
    subscribers: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let log = load_evidence(evidence)?;
    let db = load_geo(geo)?;
    let subscribers = match subscribers {
        Some(path) => load_subscribers(path)?,
        None => BTreeMap::new(),
    };
    let report = analysis::build_report(&log, Some(&db), &subscribers)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    write_output(out, json.as_bytes(), "report")?;
    eprintln!(
        "report written to {}: {} unique IPs, {:.2} swarms/IP, peak {}",
        out.display(),
        report.unique_ip_count,
        report.avg_swarms_per_ip,
        report.largest_swarm_peak
    );
    Ok(())
}

fn verify_evidence(evidence: &Path) -> Result<(), CliError> {
    let bytes = read_input(evidence, "evidence log")?;
    match EvidenceLog::import_jsonl(&bytes) {
        Ok(log) => {
            let verdict = log.verify_chain();
            println!(
                "{}",
                serde_json::json!({"ok": verdict.ok, "records": log.len()})
            );
            eprintln!("OK, {} records", log.len());
            Ok(())
        }
        Err(EvidenceError::ChainBroken { first_bad_seq }) => {
            println!(
                "{}",
                serde_json::json!({"ok": false, "firstBadSeq": first_bad_seq})
            );
            Err(CliError::Failure(format!(
                "chain broken, first bad seq {first_bad_seq}"
            )))
        }
        Err(e) => Err(CliError::Failure(e.to_string())),
    }
}

fn geolocate(ip: Ipv4Addr, geo: &Path) -> Result<(), CliError> {
    let db = load_geo(geo)?;
    match db.lookup(ip) {
        Some(record) => {
            println!(
                "{}",
                serde_json::json!({
                    "ip": ip.to_string(),
                    "country": record.country,
                    "city": record.city,
                    "lat": record.lat,
                    "lon": record.lon,
                    "isp": record.isp,
                })
            );
            eprintln!(
                "{} -> country {}{}",
                ip,
                record.country,
                record
                    .city
                    .map(|c| format!(", {c}"))
                    .unwrap_or_default()
            );
        }
        None => {
            println!("null");
            eprintln!("{ip} -> no match");
        }
    }
    Ok(())
}

fn export_heatmap(evidence: &Path, geo: &Path, cell: f64, out: &Path) -> Result<(), CliError> {
    let log = load_evidence(evidence)?;
    let db = load_geo(geo)?;
    let points = analysis::geolocated_points(&log, &db)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let cells = analysis::heatmap_grid(&points, cell)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let csv_path = out.with_extension("csv");
    let geojson_path = out.with_extension("geojson");
    write_output(&csv_path, analysis::heatmap_csv(&cells).as_bytes(), "heatmap CSV")?;
    write_output(
        &geojson_path,
        analysis::heatmap_geojson(&cells, cell).as_bytes(),
        "heatmap GeoJSON",
    )?;
    eprintln!(
        "{} geolocated IPs over {} cells -> {} and {}",
        points.len(),
        cells.len(),
        csv_path.display(),
        geojson_path.display()
    );
    Ok(())
}

fn simdemo(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", out.display())))?;

    let churn: Vec<ChurnEvent> = (1..6)
        .map(|k| ChurnEvent {
            at_virtual_second: k * 60,
            replace_fraction: Some(0.1),
            join_count: None,
            leave_count: None,
        })
        .collect();
    let mut alpha = SimSwarmConfig::new("alpha", 400);
    alpha.dht_node_count = 24;
    alpha.churn_script = churn;
    let mut beta = SimSwarmConfig::new("beta", 150);
    beta.dht_node_count = 16;
    beta.fake_block_peer_fraction = 0.1;
    let sim = SimConfig {
        seed: 42,
        swarms: vec![alpha, beta],
    };
    let env = SimEnvironment::from_config(&sim)
        .map_err(|e| CliError::Failure(e.to_string()))?;

    let urls_path = out.join("torrents.urls");
    let sim_path = out.join("simnet.json");
    let config_path = out.join("investigation.json");
    let geo_path = out.join("geo.csv");
    let subs_path = out.join("subscribers.csv");

    write_output(
        &urls_path,
        b"# demo swarms served by the simulator\nsim://alpha\nsim://beta\n",
        "URL list",
    )?;
    write_output(
        &sim_path,
        serde_json::to_string_pretty(&sim).unwrap().as_bytes(),
        "simulator config",
    )?;

    let config = InvestigationConfig {
        torrent_sources: vec![urls_path.to_string_lossy().into_owned()],
        snapshot_interval_seconds: 60,
        window_seconds: 360,
        total_duration_seconds: 360,
        numwant: 200,
        per_swarm_concurrency: 4,
        enabled_sources: [
            up2p_core::crawler::DiscoverySource::Tracker,
            up2p_core::crawler::DiscoverySource::Dht,
            up2p_core::crawler::DiscoverySource::Pex,
        ]
        .into(),
        max_announce_attempts: 50,
        category_labels: BTreeMap::from([
            (env.info_hash_of("alpha").unwrap().to_hex(), "video".to_string()),
            (env.info_hash_of("beta").unwrap().to_hex(), "music".to_string()),
        ]),
        random_seed: 42,
        peer_id_prefix: "-UP0001-".into(),
        announce_left: None,
        case_id: "DEMO-0001".into(),
        investigator: "demo operator".into(),
    };
    write_output(
        &config_path,
        serde_json::to_string_pretty(&config).unwrap().as_bytes(),
        "investigation config",
    )?;

    // Geo fixture covering most of the simulator's 10/8 address space; the
    // remainder stays unmatched to exercise the "--" bucket.
    let mut geo_csv = String::from("start_ip,end_ip,country,city,lat,lon,isp\n");
    let countries = [
        ("IE", "Dublin", 53.3, -6.2),
        ("GB", "London", 51.5, -0.1),
        ("US", "New York", 40.7, -74.0),
        ("DE", "Berlin", 52.5, 13.4),
        ("BR", "Sao Paulo", -23.5, -46.6),
        ("AU", "Sydney", -33.9, 151.2),
    ];
    for block in 0..192u32 {
        let (country, city, lat, lon) = countries[(block as usize) % countries.len()];
        geo_csv.push_str(&format!(
            "10.{block}.0.0,10.{block}.255.255,{country},{city},{lat},{lon},AS{block}\n"
        ));
    }
    write_output(&geo_path, geo_csv.as_bytes(), "geo fixture")?;
    write_output(
        &subs_path,
        b"country,subscribers\nIE,1700000\nGB,17276000\nUS,73123400\nDE,24043000\nBR,10098000\nAU,5140000\n",
        "subscriber table",
    )?;

    eprintln!("demo written to {}; next steps:", out.display());
    eprintln!(
        "  up2p investigate --config {} --sim {} --out {}",
        config_path.display(),
        sim_path.display(),
        out.join("evidence.jsonl").display()
    );
    eprintln!(
        "  up2p verify-evidence --evidence {}",
        out.join("evidence.jsonl").display()
    );
    eprintln!(
        "  up2p analyze --evidence {} --geo {} --subscribers {} --out {}",
        out.join("evidence.jsonl").display(),
        geo_path.display(),
        subs_path.display(),
        out.join("report.json").display()
    );
    eprintln!(
        "  up2p export-heatmap --evidence {} --geo {} --cell 1 --out {}",
        out.join("evidence.jsonl").display(),
        geo_path.display(),
        out.join("heatmap").display()
    );
    Ok(())
}

fn metainfo_stats(paths: &[PathBuf]) -> Result<(), CliError> {
    let mut parsed: Vec<TorrentMetainfo> = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = read_input(path, "torrent")?;
        parsed.push(
            parse_metainfo(&bytes)
                .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?,
        );
    }
    let stats = summarize(&parsed).map_err(|e| CliError::Failure(e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&stats).unwrap());
    eprintln!("summarized {} torrents", parsed.len());
    Ok(())
}
