//! Range-indexed IPv4 geolocation. The database is a CSV of non-overlapping
//! `[start_ip, end_ip]` intervals carrying country, city, coordinates and
//! ISP; lookups binary-search the sorted ranges.

use std::net::Ipv4Addr;

use thiserror::Error;

/// One interval row of the database.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRange {
    pub start_ip: u32,
    pub end_ip: u32,
    pub country: String,
    pub city: Option<String>,
    pub lat: f64,
    pub lon: f64,
    pub isp: Option<String>,
}

/// A lookup result borrowed from the containing range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRecord<'a> {
    pub country: &'a str,
    pub city: Option<&'a str>,
    pub lat: f64,
    pub lon: f64,
    pub isp: Option<&'a str>,
}

/// Ranges sorted by start address, pairwise non-overlapping. Immutable after
/// load and freely shareable across threads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeoDatabase {
    ranges: Vec<GeoRange>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeoError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("ranges on lines {line_a} and {line_b} overlap")]
    OverlappingRanges { line_a: usize, line_b: usize },
}

pub fn ip_to_u32(ip: Ipv4Addr) -> u32 {
    u32::from(ip)
}

fn parse_ip_field(field: &str, line: usize) -> Result<u32, GeoError> {
    if let Ok(ip) = field.parse::<Ipv4Addr>() {
        return Ok(u32::from(ip));
    }
    field.parse::<u32>().map_err(|_| GeoError::MalformedRow {
        line,
        reason: format!("{field:?} is neither a dotted quad nor a decimal address"),
    })
}

const HEADER: [&str; 7] = ["start_ip", "end_ip", "country", "city", "lat", "lon", "isp"];

impl GeoDatabase {
    /// Load and validate a CSV database. Rows may arrive in any order; the
    /// loaded database is sorted. Overlapping rows are an error reported with
    /// both source line numbers.
    pub fn load_csv(bytes: &[u8]) -> Result<GeoDatabase, GeoError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(bytes);
        {
            let headers = reader.headers().map_err(|e| GeoError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })?;
            let got: Vec<&str> = headers.iter().collect();
            if got != HEADER {
                return Err(GeoError::MalformedRow {
                    line: 1,
                    reason: format!("header must be {}", HEADER.join(",")),
                });
            }
        }

        // Keep the 1-based source line for error reporting (line 1 is the
        // header).
        let mut rows: Vec<(usize, GeoRange)> = Vec::new();
        for (index, record) in reader.records().enumerate() {
            let line = index + 2;
            let record = record.map_err(|e| GeoError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            if record.len() != 7 {
                return Err(GeoError::MalformedRow {
                    line,
                    reason: format!("expected 7 fields, found {}", record.len()),
                });
            }
            let start_ip = parse_ip_field(&record[0], line)?;
            let end_ip = parse_ip_field(&record[1], line)?;
            if start_ip > end_ip {
                return Err(GeoError::MalformedRow {
                    line,
                    reason: "start_ip exceeds end_ip".into(),
                });
            }
            let country = record[2].trim().to_string();
            if country.is_empty() {
                return Err(GeoError::MalformedRow {
                    line,
                    reason: "country is required".into(),
                });
            }
            let lat: f64 = record[4].parse().map_err(|_| GeoError::MalformedRow {
                line,
                reason: format!("bad latitude {:?}", &record[4]),
            })?;
            let lon: f64 = record[5].parse().map_err(|_| GeoError::MalformedRow {
                line,
                reason: format!("bad longitude {:?}", &record[5]),
            })?;
            if !(-90.0..=90.0).contains(&lat) {
                return Err(GeoError::MalformedRow {
                    line,
                    reason: format!("latitude {lat} out of range"),
                });
            }
            if !(-180.0..=180.0).contains(&lon) {
                return Err(GeoError::MalformedRow {
                    line,
                    reason: format!("longitude {lon} out of range"),
                });
            }
            let optional = |s: &str| {
                let t = s.trim();
                if t.is_empty() {
                    None
                } else {
                    Some(t.to_string())
                }
            };
            rows.push((
                line,
                GeoRange {
                    start_ip,
                    end_ip,
                    country,
                    city: optional(&record[3]),
                    lat,
                    lon,
                    isp: optional(&record[6]),
                },
            ));
        }

        rows.sort_by_key(|(_, r)| (r.start_ip, r.end_ip));
        for pair in rows.windows(2) {
            let (line_a, a) = (&pair[0].0, &pair[0].1);
            let (line_b, b) = (&pair[1].0, &pair[1].1);
            if b.start_ip <= a.end_ip {
                return Err(GeoError::OverlappingRanges {
                    line_a: *line_a,
                    line_b: *line_b,
                });
            }
        }

        Ok(GeoDatabase {
            ranges: rows.into_iter().map(|(_, r)| r).collect(),
        })
    }

    /// Binary search for the unique range containing `ip`.
    pub fn lookup(&self, ip: Ipv4Addr) -> Option<GeoRecord<'_>> {
        let needle = u32::from(ip);
        let idx = self.ranges.partition_point(|r| r.start_ip <= needle);
        if idx == 0 {
            return None;
        }
        let range = &self.ranges[idx - 1];
        if needle <= range.end_ip {
            Some(GeoRecord {
                country: &range.country,
                city: range.city.as_deref(),
                lat: range.lat,
                lon: range.lon,
                isp: range.isp.as_deref(),
            })
        } else {
            None
        }
    }

    pub fn ranges(&self) -> &[GeoRange] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Canonical CSV form: sorted rows, dotted-quad addresses, empty fields
    /// for absent city/ISP. `load_csv(to_csv(db))` reproduces `db`.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(&HEADER.join(","));
        out.push('\n');
        for r in &self.ranges {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                Ipv4Addr::from(r.start_ip),
                Ipv4Addr::from(r.end_ip),
                r.country,
                r.city.as_deref().unwrap_or(""),
                r.lat,
                r.lon,
                r.isp.as_deref().unwrap_or(""),
            ));
        }
        out.into_bytes()
    }
}
