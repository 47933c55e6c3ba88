//! Trace-file ingestion: parse JSONL records into per-device timelines, turn
//! cumulative counters into per-interval deltas (handling register wrap), and
//! apply the population filters (wireless-only, non-transient, reliable
//! counters).

use crate::telemetry::{
    CounterSample, CounterWidth, DeviceTimeline, HostDescriptor, HostnameSighting, Interface,
    MacAddress, RateSample, RssiSample,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use thiserror::Error;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Default minimum number of active days for a device to be non-transient.
pub const DEFAULT_MIN_ACTIVE_DAYS: u32 = 3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate {kind} sample for {mac} at timestamp {timestamp}")]
    DuplicateSample {
        mac: MacAddress,
        timestamp: i64,
        kind: &'static str,
    },
    #[error("need at least 2 counter samples, got {0}")]
    InsufficientSamples(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("timeline store error: {0}")]
    Store(String),
}

/// One line of the trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ts: i64,
    pub mac: MacAddress,
    #[serde(flatten)]
    pub body: TraceBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceBody {
    Counter {
        tx_cum: u64,
        rx_cum: u64,
        width: u8,
    },
    Rate {
        tx_kbps: u64,
        rx_kbps: u64,
    },
    Rssi {
        rssi: i32,
    },
    Descriptor {
        hostname: String,
        iface: Interface,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ssid: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bssid: Option<MacAddress>,
    },
}

/// Traffic attributed to the interval between two successive counter samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficDelta {
    pub interval_start: i64,
    pub interval_end: i64,
    pub tx_bytes: u64,
    pub rx_bytes: u64,
}

impl TrafficDelta {
    pub fn total(&self) -> u64 {
        self.tx_bytes + self.rx_bytes
    }
}

/// Census of the device population across the exclusion stages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationReport {
    pub total: u64,
    /// Wired-interface devices plus devices with unreliable (16-bit) counters.
    pub wired: u64,
    pub wireless: u64,
    pub transient: u64,
    pub nontransient: u64,
    pub coarse_labeled: u64,
    pub fine_labeled: u64,
}

impl PopulationReport {
    /// Check the structural invariants that must hold for any census.
    pub fn validate(&self) -> Result<(), String> {
        if self.wired + self.wireless != self.total {
            return Err(format!(
                "wired {} + wireless {} != total {}",
                self.wired, self.wireless, self.total
            ));
        }
        if self.transient + self.nontransient != self.wireless {
            return Err(format!(
                "transient {} + nontransient {} != wireless {}",
                self.transient, self.nontransient, self.wireless
            ));
        }
        if !(self.fine_labeled <= self.coarse_labeled && self.coarse_labeled <= self.nontransient)
        {
            return Err(format!(
                "label counts out of order: fine {} coarse {} nontransient {}",
                self.fine_labeled, self.coarse_labeled, self.nontransient
            ));
        }
        Ok(())
    }
}

#[derive(Default)]
struct TimelineAccumulator {
    counters: Vec<CounterSample>,
    rates: Vec<RateSample>,
    rssi: Vec<RssiSample>,
    sightings: Vec<HostnameSighting>,
    // (ts, file order, iface) of every descriptor record; the most recent wins.
    iface_obs: Vec<(i64, usize, Interface)>,
    bssids: Vec<(String, MacAddress)>,
}

/// Parse a JSONL trace stream into one timeline per distinct MAC.
///
/// Per-series timestamps come out sorted; an exact duplicate
/// (mac, timestamp, metric) is rejected rather than averaged so that corrupt
/// inputs fail loudly. Timelines are returned in MAC order.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<DeviceTimeline>, IngestError> {
    let mut devices: BTreeMap<MacAddress, TimelineAccumulator> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        let acc = devices.entry(record.mac).or_default();
        match record.body {
            TraceBody::Counter {
                tx_cum,
                rx_cum,
                width,
            } => {
                let width = match width {
                    16 => CounterWidth::W16,
                    32 => CounterWidth::W32,
                    other => {
                        return Err(IngestError::Parse {
                            line: line_no,
                            reason: format!("unsupported counter width {other}"),
                        })
                    }
                };
                acc.counters.push(CounterSample {
                    timestamp: record.ts,
                    tx_cum,
                    rx_cum,
                    width,
                });
            }
            TraceBody::Rate { tx_kbps, rx_kbps } => acc.rates.push(RateSample {
                timestamp: record.ts,
                tx_kbps,
                rx_kbps,
            }),
            TraceBody::Rssi { rssi } => acc.rssi.push(RssiSample {
                timestamp: record.ts,
                rssi,
            }),
            TraceBody::Descriptor {
                hostname,
                iface,
                ssid,
                bssid,
            } => {
                acc.iface_obs.push((record.ts, line_no, iface));
                acc.sightings.push(HostnameSighting {
                    timestamp: record.ts,
                    hostname,
                });
                if let (Some(ssid), Some(bssid)) = (ssid, bssid) {
                    acc.bssids.push((ssid, bssid));
                }
            }
        }
    }

    let mut timelines = Vec::with_capacity(devices.len());
    for (mac, mut acc) in devices {
        acc.counters.sort_by_key(|s| s.timestamp);
        acc.rates.sort_by_key(|s| s.timestamp);
        acc.rssi.sort_by_key(|s| s.timestamp);
        acc.sightings.sort_by(|a, b| {
            (a.timestamp, &a.hostname).cmp(&(b.timestamp, &b.hostname))
        });

        check_unique(acc.counters.iter().map(|s| s.timestamp), mac, "counter")?;
        check_unique(acc.rates.iter().map(|s| s.timestamp), mac, "rate")?;
        check_unique(acc.rssi.iter().map(|s| s.timestamp), mac, "rssi")?;

        // Most recent descriptor wins; a device with no descriptor record is
        // assumed wireless when it has wireless metrics, wired otherwise.
        let interface = acc
            .iface_obs
            .iter()
            .max_by_key(|(ts, order, _)| (*ts, *order))
            .map(|(_, _, iface)| *iface)
            .unwrap_or(if acc.rssi.is_empty() && acc.rates.is_empty() {
                Interface::Wired
            } else {
                Interface::WiFi
            });

        let hostnames = acc
            .sightings
            .iter()
            .map(|s| s.hostname.clone())
            .collect::<std::collections::BTreeSet<_>>();
        let advertised: std::collections::BTreeSet<(String, MacAddress)> =
            acc.bssids.into_iter().collect();

        timelines.push(DeviceTimeline {
            descriptor: HostDescriptor {
                mac,
                hostnames,
                interface,
                advertised_bssids: if advertised.is_empty() {
                    None
                } else {
                    Some(advertised)
                },
            },
            counters: acc.counters,
            rates: acc.rates,
            rssi: acc.rssi,
            hostname_sightings: acc.sightings,
        });
    }
    Ok(timelines)
}

fn check_unique<I: Iterator<Item = i64>>(
    timestamps: I,
    mac: MacAddress,
    kind: &'static str,
) -> Result<(), IngestError> {
    let mut prev: Option<i64> = None;
    for ts in timestamps {
        if prev == Some(ts) {
            return Err(IngestError::DuplicateSample {
                mac,
                timestamp: ts,
                kind,
            });
        }
        prev = Some(ts);
    }
    Ok(())
}

/// Successive differences of a cumulative counter series.
///
/// When a counter goes backwards the register wrapped; under the single-wrap
/// assumption the delta is `next + 2^width - prev`. More than one wrap per
/// interval is under-counted, which is why 16-bit devices are excluded from
/// the population downstream.
pub fn diff_counters(samples: &[CounterSample]) -> Result<Vec<TrafficDelta>, IngestError> {
    if samples.len() < 2 {
        return Err(IngestError::InsufficientSamples(samples.len()));
    }
    let mut deltas = Vec::with_capacity(samples.len() - 1);
    for pair in samples.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let modulus = prev.width.modulus();
        deltas.push(TrafficDelta {
            interval_start: prev.timestamp,
            interval_end: next.timestamp,
            tx_bytes: wrapped_diff(prev.tx_cum, next.tx_cum, modulus),
            rx_bytes: wrapped_diff(prev.rx_cum, next.rx_cum, modulus),
        });
    }
    Ok(deltas)
}

fn wrapped_diff(prev: u64, next: u64, modulus: u64) -> u64 {
    if next >= prev {
        next - prev
    } else {
        next + modulus - prev
    }
}

/// Count distinct UTC calendar days on which the device moved any traffic.
/// A delta is attributed to the day of its sample (interval end) timestamp.
pub fn active_days(deltas: &[TrafficDelta]) -> u32 {
    let mut days: Vec<i64> = deltas
        .iter()
        .filter(|d| d.total() > 0)
        .map(|d| d.interval_end.div_euclid(SECONDS_PER_DAY))
        .collect();
    days.sort_unstable();
    days.dedup();
    days.len() as u32
}

/// Active-day count straight from a timeline's counter series; zero when the
/// series is too short to difference.
pub fn timeline_active_days(timeline: &DeviceTimeline) -> u32 {
    match diff_counters(&timeline.counters) {
        Ok(deltas) => active_days(&deltas),
        Err(_) => 0,
    }
}

/// Apply the population filters: keep WiFi devices with trustworthy counters
/// that were active on at least `min_days` distinct days. Wired devices and
/// devices with 16-bit counters are tallied together in the `wired` bucket.
pub fn filter_population(
    timelines: Vec<DeviceTimeline>,
    min_days: u32,
) -> (Vec<DeviceTimeline>, PopulationReport) {
    let mut report = PopulationReport {
        total: timelines.len() as u64,
        ..Default::default()
    };
    let mut kept = Vec::new();
    for timeline in timelines {
        if timeline.descriptor.interface == Interface::Wired || timeline.unreliable_counters() {
            report.wired += 1;
            continue;
        }
        report.wireless += 1;
        if timeline_active_days(&timeline) >= min_days {
            report.nontransient += 1;
            kept.push(timeline);
        } else {
            report.transient += 1;
        }
    }
    (kept, report)
}

const TIMELINE_STORE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TimelineFile {
    version: u32,
    timelines: Vec<DeviceTimeline>,
}

/// Write timelines as gzip-compressed CBOR.
pub fn save_timelines<W: Write>(writer: W, timelines: &[DeviceTimeline]) -> Result<(), IngestError> {
    let encoder = flate2::write::GzEncoder::new(writer, flate2::Compression::fast());
    let file = TimelineFile {
        version: TIMELINE_STORE_VERSION,
        timelines: timelines.to_vec(),
    };
    ciborium::into_writer(&file, encoder).map_err(|e| IngestError::Store(e.to_string()))
}

/// Read timelines written by [`save_timelines`].
pub fn load_timelines<R: Read>(reader: R) -> Result<Vec<DeviceTimeline>, IngestError> {
    let decoder = flate2::read::GzDecoder::new(reader);
    let file: TimelineFile = ciborium::from_reader(std::io::BufReader::new(decoder))
        .map_err(|e| IngestError::Store(e.to_string()))?;
    if file.version != TIMELINE_STORE_VERSION {
        return Err(IngestError::Store(format!(
            "unsupported timeline store version {}",
            file.version
        )));
    }
    Ok(file.timelines)
}
