//! Behavioral fingerprinting: turn a device timeline into the named
//! 92-dimensional feature vector — eight time-series subclasses summarized by
//! eleven point statistics, plus four single-point RSSI features.

use crate::ingest::{diff_counters, TrafficDelta, SECONDS_PER_DAY};
use crate::telemetry::{DeviceTimeline, MacAddress};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::OnceLock;
use thiserror::Error;

/// Sessions end after this much silence (the ARP timeout).
pub const DEFAULT_SESSION_GAP_SECS: i64 = 15 * 60;

/// Nominal reporting interval; used as the duration floor when normalizing
/// zero-length sessions.
pub const REPORTING_INTERVAL_SECS: i64 = 60;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty series")]
    EmptySeries,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("insufficient data for device {mac}: missing {series} series")]
    InsufficientData { mac: MacAddress, series: &'static str },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad feature file: {0}")]
    BadFile(String),
}

/// A contiguous activity interval with attributed traffic volume.
///
/// Boundaries are the sample timestamps of the first and last active counter
/// intervals, so a session spanning a single report has zero duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub start: i64,
    pub end: i64,
    pub tx_bytes: u64,
    pub rx_bytes: u64,
}

impl Session {
    pub fn duration_secs(&self) -> i64 {
        self.end - self.start
    }

    /// Duration with the zero-length floor applied, for rate normalization.
    pub fn floored_duration_secs(&self) -> i64 {
        self.duration_secs().max(REPORTING_INTERVAL_SECS)
    }

    pub fn overlaps(&self, other: &Session) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Group traffic deltas into sessions separated by at least `gap_secs` of
/// silence. A delta is an activity event at its sample (interval end)
/// timestamp when it carries any traffic; zero deltas are silence.
pub fn sessionize(deltas: &[TrafficDelta], gap_secs: i64) -> Vec<Session> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut current: Option<Session> = None;
    for delta in deltas.iter().filter(|d| d.total() > 0) {
        let ts = delta.interval_end;
        match current.as_mut() {
            Some(session) if ts - session.end < gap_secs => {
                session.end = ts;
                session.tx_bytes += delta.tx_bytes;
                session.rx_bytes += delta.rx_bytes;
            }
            _ => {
                if let Some(done) = current.take() {
                    sessions.push(done);
                }
                current = Some(Session {
                    start: ts,
                    end: ts,
                    tx_bytes: delta.tx_bytes,
                    rx_bytes: delta.rx_bytes,
                });
            }
        }
    }
    if let Some(done) = current {
        sessions.push(done);
    }
    sessions
}

/// Per-active-day byte totals in day order: one (tx, rx) entry per UTC
/// calendar day with nonzero total traffic; inactive days are omitted.
pub fn daily_volumes(deltas: &[TrafficDelta]) -> (Vec<f64>, Vec<f64>) {
    let mut per_day: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for delta in deltas {
        let day = delta.interval_end.div_euclid(SECONDS_PER_DAY);
        let entry = per_day.entry(day).or_insert((0, 0));
        entry.0 += delta.tx_bytes;
        entry.1 += delta.rx_bytes;
    }
    let mut tx = Vec::new();
    let mut rx = Vec::new();
    for (_, (t, r)) in per_day {
        if t + r > 0 {
            tx.push(t as f64);
            rx.push(r as f64);
        }
    }
    (tx, rx)
}

/// The eleven point statistics extracted from every time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummaries {
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    /// p75 - p25.
    pub iqr: f64,
    /// p90 - p10.
    pub range80: f64,
    /// max - min.
    pub diameter: f64,
    pub count: f64,
}

impl PointSummaries {
    pub fn as_array(&self) -> [f64; 11] {
        [
            self.min,
            self.p10,
            self.p25,
            self.p50,
            self.p75,
            self.p90,
            self.max,
            self.iqr,
            self.range80,
            self.diameter,
            self.count,
        ]
    }
}

/// Percentile of a sorted slice by linear interpolation between order
/// statistics: index h = (n-1)p, value x_⌊h⌋ + (h-⌊h⌋)(x_⌊h⌋₊₁ - x_⌊h⌋).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[sorted.len() - 1]
    }
}

/// Compute the eleven point summaries of a non-empty series.
pub fn point_summaries(series: &[f64]) -> Result<PointSummaries, FeatureError> {
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let p10 = percentile_sorted(&sorted, 0.10);
    let p25 = percentile_sorted(&sorted, 0.25);
    let p50 = percentile_sorted(&sorted, 0.50);
    let p75 = percentile_sorted(&sorted, 0.75);
    let p90 = percentile_sorted(&sorted, 0.90);
    Ok(PointSummaries {
        min,
        p10,
        p25,
        p50,
        p75,
        p90,
        max,
        iqr: p75 - p25,
        range80: p90 - p10,
        diameter: max - min,
        count: series.len() as f64,
    })
}

/// Per-session traffic normalized by session length (bytes per second).
/// Zero-duration sessions use the reporting-interval floor.
pub fn normalized_session_traffic(sessions: &[Session]) -> (Vec<f64>, Vec<f64>) {
    let mut tx = Vec::with_capacity(sessions.len());
    let mut rx = Vec::with_capacity(sessions.len());
    for s in sessions {
        let dur = s.floored_duration_secs() as f64;
        tx.push(s.tx_bytes as f64 / dur);
        rx.push(s.rx_bytes as f64 / dur);
    }
    (tx, rx)
}

/// Allan deviation: sqrt( 1/(2(n-1)) · Σ (x_{i+1} - x_i)² ), the RMS of
/// successive differences scaled by 1/sqrt(2). Captures short-timescale
/// variation of a time-indexed series.
pub fn allan_deviation(series: &[f64]) -> Result<f64, FeatureError> {
    if series.len() < 2 {
        return Err(FeatureError::InsufficientSamples {
            needed: 2,
            got: series.len(),
        });
    }
    let sum_sq: f64 = series.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((sum_sq / (2.0 * (series.len() - 1) as f64)).sqrt())
}

/// Product of the series diameter with its median; amplifies spread
/// differences across device classes.
pub fn rssi_md_product(summaries: &PointSummaries) -> f64 {
    summaries.diameter * summaries.p50
}

/// Number of modes of the RSSI distribution; a proxy for the number of
/// distinct locations a device is used in.
///
/// The empirical pmf is built over 1-unit bins, smoothed by a moving median
/// (window 5) then a moving mean (window 3); a mode is a plateau-aware local
/// maximum with prominence at least 5% of the tallest bin. Always at least 1.
pub fn count_location_modes(rssi_values: &[i32]) -> Result<u32, FeatureError> {
    if rssi_values.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let min = *rssi_values.iter().min().unwrap() as i64;
    let max = *rssi_values.iter().max().unwrap() as i64;
    let width = (max - min + 1) as usize;
    if width == 1 {
        return Ok(1);
    }
    let mut hist = vec![0.0f64; width];
    for &v in rssi_values {
        hist[(v as i64 - min) as usize] += 1.0;
    }
    let smoothed = moving_mean(&moving_median(&hist, 5), 3);
    let global_max = smoothed.iter().cloned().fold(0.0f64, f64::max);
    if global_max <= 0.0 {
        return Ok(1);
    }
    let peaks = plateau_peaks(&smoothed);
    let threshold = 0.05 * global_max;
    let count = peaks
        .into_iter()
        .filter(|&p| peak_prominence(&smoothed, p) >= threshold)
        .count() as u32;
    Ok(count.max(1))
}

/// Centered moving median with windows truncated at the edges.
fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let mut w: Vec<f64> = values[lo..hi].to_vec();
            w.sort_by(|a, b| a.total_cmp(b));
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                (w[m / 2 - 1] + w[m / 2]) / 2.0
            }
        })
        .collect()
}

/// Centered moving mean with windows truncated at the edges.
fn moving_mean(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Indices of plateau-aware local maxima; a plateau counts once at its
/// middle, and array boundaries qualify as flanks.
fn plateau_peaks(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && y[j] == y[i] {
            j += 1;
        }
        let left_ok = i == 0 || y[i - 1] < y[i];
        let right_ok = j == n || y[j] < y[i];
        if left_ok && right_ok && y[i] > 0.0 {
            peaks.push(i + (j - i - 1) / 2);
        }
        i = j;
    }
    peaks
}

/// Topographic prominence of a peak: height above the higher of the two
/// bases, where each base is the minimum between the peak and the nearest
/// higher ground (or the end of the signal).
fn peak_prominence(y: &[f64], peak: usize) -> f64 {
    let h = y[peak];
    let mut left_base = h;
    let mut i = peak;
    while i > 0 {
        i -= 1;
        if y[i] > h {
            break;
        }
        left_base = left_base.min(y[i]);
    }
    let mut right_base = h;
    let mut i = peak;
    while i + 1 < y.len() {
        i += 1;
        if y[i] > h {
            break;
        }
        right_base = right_base.min(y[i]);
    }
    h - left_base.max(right_base)
}

/// Area under the RSSI distribution normalized by the tallest bin:
/// (Σ bin counts) / (max bin count). Equals 1 exactly when all mass sits in
/// one bin; grows with in-motion spread.
pub fn rssi_auc(rssi_values: &[i32]) -> Result<f64, FeatureError> {
    if rssi_values.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let mut counts: BTreeMap<i32, u64> = BTreeMap::new();
    for &v in rssi_values {
        *counts.entry(v).or_insert(0) += 1;
    }
    let max = *counts.values().max().unwrap();
    Ok(rssi_values.len() as f64 / max as f64)
}

/// Time-series subclasses in schema order.
pub const SUBCLASSES: [&str; 8] = [
    "tx",
    "rx",
    "session_l",
    "session_tx",
    "session_rx",
    "tx_rate",
    "rx_rate",
    "rssi",
];

/// Point-summary names in schema order.
pub const SUMMARIES: [&str; 11] = [
    "min", "p10", "p25", "p50", "p75", "p90", "max", "iqr", "range80", "diameter", "count",
];

/// Single-point RSSI features appended after the time-series block.
pub const SINGLE_POINT: [&str; 4] = ["rssi_ad", "rssi_md", "rssi_num_locations", "rssi_auc"];

/// Total number of features.
pub const FEATURE_COUNT: usize = SUBCLASSES.len() * SUMMARIES.len() + SINGLE_POINT.len();

/// The fixed, ordered feature name schema (`<subclass>_<summary>` for the
/// eight series, then the four single-point names).
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(FEATURE_COUNT);
        for subclass in SUBCLASSES {
            for summary in SUMMARIES {
                names.push(format!("{subclass}_{summary}"));
            }
        }
        for single in SINGLE_POINT {
            names.push(single.to_string());
        }
        names
    })
}

/// Index of a feature name in the schema.
pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

/// The named behavioral fingerprint of one device, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }
}

/// Extract the full feature vector for one timeline.
///
/// The timeline must have survived population filtering and carry at least
/// two counter samples, a non-empty rate series, and at least two RSSI
/// samples; otherwise the missing series is named in the error.
pub fn extract_features(
    timeline: &DeviceTimeline,
    session_gap_secs: i64,
) -> Result<FeatureVector, FeatureError> {
    let mac = timeline.mac();
    let missing = |series| FeatureError::InsufficientData { mac, series };

    if timeline.counters.len() < 2 {
        return Err(missing("counter"));
    }
    let deltas = diff_counters(&timeline.counters).expect("length checked");
    let (tx_daily, rx_daily) = daily_volumes(&deltas);
    if tx_daily.is_empty() {
        return Err(missing("daily traffic"));
    }
    let sessions = sessionize(&deltas, session_gap_secs);
    let session_lengths: Vec<f64> = sessions.iter().map(|s| s.duration_secs() as f64).collect();
    let (session_tx, session_rx) = normalized_session_traffic(&sessions);

    if timeline.rates.is_empty() {
        return Err(missing("rate"));
    }
    let tx_rate: Vec<f64> = timeline.rates.iter().map(|r| r.tx_kbps as f64).collect();
    let rx_rate: Vec<f64> = timeline.rates.iter().map(|r| r.rx_kbps as f64).collect();

    if timeline.rssi.len() < 2 {
        return Err(missing("rssi"));
    }
    let rssi_raw: Vec<i32> = timeline.rssi.iter().map(|s| s.rssi).collect();
    let rssi: Vec<f64> = rssi_raw.iter().map(|&v| v as f64).collect();

    let mut values = Vec::with_capacity(FEATURE_COUNT);
    for series in [
        &tx_daily,
        &rx_daily,
        &session_lengths,
        &session_tx,
        &session_rx,
        &tx_rate,
        &rx_rate,
        &rssi,
    ] {
        let summaries = point_summaries(series)?;
        values.extend_from_slice(&summaries.as_array());
    }
    let rssi_summaries = point_summaries(&rssi)?;
    values.push(allan_deviation(&rssi)?);
    values.push(rssi_md_product(&rssi_summaries));
    values.push(count_location_modes(&rssi_raw)? as f64);
    values.push(rssi_auc(&rssi_raw)?);

    debug_assert_eq!(values.len(), FEATURE_COUNT);
    debug_assert!(values.iter().all(|v| v.is_finite()));
    Ok(FeatureVector { values })
}

/// A feature matrix with row identities and named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub macs: Vec<MacAddress>,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Write as CSV with header `mac,<feature names>`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), FeatureError> {
        write!(writer, "mac")?;
        for name in &self.names {
            write!(writer, ",{name}")?;
        }
        writeln!(writer)?;
        for (mac, row) in self.macs.iter().zip(&self.rows) {
            write!(writer, "{mac}")?;
            for v in row {
                write!(writer, ",{v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<FeatureMatrix, FeatureError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| FeatureError::BadFile("empty file".into()))??;
        let mut fields = header.split(',');
        if fields.next() != Some("mac") {
            return Err(FeatureError::BadFile("first column must be mac".into()));
        }
        let names: Vec<String> = fields.map(str::to_string).collect();
        let mut macs = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let mac = fields
                .next()
                .ok_or_else(|| FeatureError::BadFile(format!("row {}: missing mac", i + 2)))?
                .parse::<MacAddress>()
                .map_err(|e| FeatureError::BadFile(format!("row {}: {e}", i + 2)))?;
            let row: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| FeatureError::BadFile(format!("row {}: {e}", i + 2)))
                })
                .collect::<Result<_, _>>()?;
            if row.len() != names.len() {
                return Err(FeatureError::BadFile(format!(
                    "row {}: expected {} values, got {}",
                    i + 2,
                    names.len(),
                    row.len()
                )));
            }
            macs.push(mac);
            rows.push(row);
        }
        Ok(FeatureMatrix { macs, names, rows })
    }
}

/// Extract features for a whole population in parallel, preserving input
/// order. Devices that cannot be fingerprinted are returned separately.
pub fn extract_corpus(
    timelines: &[DeviceTimeline],
    session_gap_secs: i64,
) -> (FeatureMatrix, Vec<(MacAddress, FeatureError)>) {
    let results: Vec<(MacAddress, Result<FeatureVector, FeatureError>)> = timelines
        .par_iter()
        .map(|t| (t.mac(), extract_features(t, session_gap_secs)))
        .collect();
    let mut macs = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (mac, result) in results {
        match result {
            Ok(v) => {
                macs.push(mac);
                rows.push(v.values);
            }
            Err(e) => skipped.push((mac, e)),
        }
    }
    (
        FeatureMatrix {
            macs,
            names: feature_names().to_vec(),
            rows,
        },
        skipped,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn delta(end_min: i64, tx: u64, rx: u64) -> TrafficDelta {
        TrafficDelta {
            interval_start: (end_min - 1) * 60,
            interval_end: end_min * 60,
            tx_bytes: tx,
            rx_bytes: rx,
        }
    }

    #[test]
    fn sessionize_splits_on_long_silence() {
        let deltas = vec![
            delta(0, 10, 0),
            delta(5, 10, 0),
            delta(10, 10, 0),
            delta(40, 7, 0),
        ];
        let sessions = sessionize(&deltas, DEFAULT_SESSION_GAP_SECS);
        assert_eq!(sessions.len(), 2);
        assert_eq!((sessions[0].start, sessions[0].end), (0, 600));
        assert_eq!((sessions[1].start, sessions[1].end), (2400, 2400));
        assert_eq!(sessions[0].tx_bytes, 30);
        assert_eq!(sessions[1].tx_bytes, 7);
    }

    #[test]
    fn sessionize_keeps_short_silence_together() {
        let deltas = vec![delta(0, 10, 0), delta(14, 10, 0)];
        let sessions = sessionize(&deltas, DEFAULT_SESSION_GAP_SECS);
        assert_eq!(sessions.len(), 1);
        assert_eq!((sessions[0].start, sessions[0].end), (0, 14 * 60));
    }

    #[test]
    fn sessionize_exact_gap_splits() {
        let deltas = vec![delta(0, 10, 0), delta(15, 10, 0)];
        let sessions = sessionize(&deltas, DEFAULT_SESSION_GAP_SECS);
        assert_eq!(sessions.len(), 2);
    }

    #[test]
    fn sessionize_all_zero_is_empty() {
        let deltas = vec![delta(0, 0, 0), delta(1, 0, 0)];
        assert!(sessionize(&deltas, DEFAULT_SESSION_GAP_SECS).is_empty());
    }

    #[test]
    fn daily_volumes_examples() {
        let day = |d: i64, minute: i64| d * SECONDS_PER_DAY + minute * 60;
        let deltas = vec![
            TrafficDelta { interval_start: day(1, 0), interval_end: day(1, 1), tx_bytes: 100, rx_bytes: 0 },
            TrafficDelta { interval_start: day(1, 1), interval_end: day(1, 2), tx_bytes: 200, rx_bytes: 0 },
            TrafficDelta { interval_start: day(2, 0), interval_end: day(2, 1), tx_bytes: 0, rx_bytes: 0 },
            TrafficDelta { interval_start: day(3, 0), interval_end: day(3, 1), tx_bytes: 50, rx_bytes: 0 },
        ];
        let (tx, rx) = daily_volumes(&deltas);
        assert_eq!(tx, vec![300.0, 50.0]);
        assert_eq!(rx, vec![0.0, 0.0]);

        let (tx, _) = daily_volumes(&[delta(0, 5, 5)]);
        assert_eq!(tx.len(), 1);

        let (tx, rx) = daily_volumes(&[]);
        assert!(tx.is_empty() && rx.is_empty());
    }

    #[test]
    fn point_summaries_one_to_ten() {
        let series: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let s = point_summaries(&series).unwrap();
        assert!((s.p50 - 5.5).abs() < 1e-12);
        assert!((s.p25 - 3.25).abs() < 1e-12);
        assert!((s.p75 - 7.75).abs() < 1e-12);
        assert!((s.iqr - 4.5).abs() < 1e-12);
        assert!((s.p10 - 1.9).abs() < 1e-12);
        assert!((s.p90 - 9.1).abs() < 1e-12);
        assert_eq!(s.diameter, 9.0);
        assert_eq!(s.count, 10.0);
    }

    #[test]
    fn point_summaries_singleton_and_constant() {
        let s = point_summaries(&[7.0]).unwrap();
        for v in [s.min, s.p10, s.p25, s.p50, s.p75, s.p90, s.max] {
            assert_eq!(v, 7.0);
        }
        assert_eq!((s.iqr, s.range80, s.diameter, s.count), (0.0, 0.0, 0.0, 1.0));

        let s = point_summaries(&[3.0; 4]).unwrap();
        for v in [s.min, s.p10, s.p25, s.p50, s.p75, s.p90, s.max] {
            assert_eq!(v, 3.0);
        }
        assert_eq!((s.iqr, s.range80, s.diameter), (0.0, 0.0, 0.0));
    }

    #[test]
    fn point_summaries_empty_errors() {
        assert!(matches!(point_summaries(&[]), Err(FeatureError::EmptySeries)));
    }

    // Brute-force oracle: independent sort + direct interpolation per p.
    fn oracle_percentile(series: &[f64], p_hundredths: u32) -> f64 {
        let mut sorted = series.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let h = (n as f64 - 1.0) * (p_hundredths as f64 / 100.0);
        let lo = h as usize;
        let hi = (lo + 1).min(n - 1);
        sorted[lo] * (1.0 - (h - lo as f64)) + sorted[hi] * (h - lo as f64)
    }

    #[test]
    fn point_summaries_agree_with_oracle_on_random_series() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(42);
        let normal = Normal::<f64>::new(0.0, 100.0).unwrap();
        for _ in 0..1000 {
            let n = 1 + (normal.sample(&mut rng).abs() as usize % 200);
            let series: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let s = point_summaries(&series).unwrap();
            for (value, p) in [
                (s.p10, 10),
                (s.p25, 25),
                (s.p50, 50),
                (s.p75, 75),
                (s.p90, 90),
            ] {
                assert!(
                    (value - oracle_percentile(&series, p)).abs() < 1e-9,
                    "p{p} mismatch"
                );
            }
        }
    }

    #[test]
    fn normalized_session_traffic_examples() {
        let s = Session { start: 0, end: 600, tx_bytes: 6000, rx_bytes: 0 };
        let (tx, _) = normalized_session_traffic(&[s]);
        assert_eq!(tx, vec![10.0]);

        let (tx, _) = normalized_session_traffic(&[s, s]);
        assert_eq!(tx[0], tx[1]);

        let zero_dur = Session { start: 100, end: 100, tx_bytes: 500, rx_bytes: 0 };
        let (tx, _) = normalized_session_traffic(&[zero_dur]);
        assert!((tx[0] - 500.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn allan_deviation_examples() {
        assert_eq!(allan_deviation(&[5.0; 4]).unwrap(), 0.0);
        // Independent summation oracle: sqrt(sum of squared diffs / (2(n-1))).
        let x: [f64; 4] = [0.0, 1.0, 0.0, 1.0];
        let mut sum = 0.0f64;
        for i in 0..x.len() - 1 {
            sum += (x[i + 1] - x[i]) * (x[i + 1] - x[i]);
        }
        let oracle = (sum / (2.0 * 3.0)).sqrt();
        assert!((allan_deviation(&x).unwrap() - oracle).abs() < 1e-15);
        assert!((allan_deviation(&x).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((allan_deviation(&[1.0, 4.0]).unwrap() - (4.5f64).sqrt()).abs() < 1e-12);
        assert!(matches!(
            allan_deviation(&[1.0]),
            Err(FeatureError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn rssi_md_product_examples() {
        let mk = |diameter: f64, median: f64| PointSummaries {
            min: 0.0, p10: 0.0, p25: 0.0, p50: median, p75: 0.0, p90: 0.0, max: 0.0,
            iqr: 0.0, range80: 0.0, diameter, count: 1.0,
        };
        assert_eq!(rssi_md_product(&mk(20.0, 40.0)), 800.0);
        assert_eq!(rssi_md_product(&mk(0.0, 40.0)), 0.0);
        assert_eq!(rssi_md_product(&mk(15.0, -60.0)), -900.0);
    }

    #[test]
    fn location_modes_single_point_mass() {
        assert_eq!(count_location_modes(&[-50; 100]).unwrap(), 1);
    }

    #[test]
    fn location_modes_bimodal_mixture() {
        // 500 samples ~N(-40, 2) + 500 ~N(-70, 2): the known mixture has two
        // peaks, which is the oracle for the expected count.
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let a = Normal::<f64>::new(-40.0, 2.0).unwrap();
        let b = Normal::<f64>::new(-70.0, 2.0).unwrap();
        let mut values = Vec::new();
        for _ in 0..500 {
            values.push(a.sample(&mut rng).round() as i32);
        }
        for _ in 0..500 {
            values.push(b.sample(&mut rng).round() as i32);
        }
        assert_eq!(count_location_modes(&values).unwrap(), 2);
    }

    #[test]
    fn location_modes_noisy_single_mode() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let a = Normal::<f64>::new(-55.0, 6.0).unwrap();
        let values: Vec<i32> = (0..2000).map(|_| a.sample(&mut rng).round() as i32).collect();
        assert_eq!(count_location_modes(&values).unwrap(), 1);
    }

    #[test]
    fn rssi_auc_examples() {
        assert_eq!(rssi_auc(&[-44; 25]).unwrap(), 1.0);

        // Uniform histogram oracle: 10 bins x 7 samples -> 70 / 7 = 10.
        let mut values = Vec::new();
        for bin in 0..10 {
            for _ in 0..7 {
                values.push(-60 + bin);
            }
        }
        assert_eq!(rssi_auc(&values).unwrap(), 10.0);

        let mut values = vec![-50; 8];
        values.extend_from_slice(&[-49; 2]);
        assert_eq!(rssi_auc(&values).unwrap(), 1.25);
    }

    #[test]
    fn schema_has_92_stable_names() {
        let names = feature_names();
        assert_eq!(names.len(), 92);
        assert_eq!(FEATURE_COUNT, 92);
        assert_eq!(names[0], "tx_min");
        assert_eq!(names[10], "tx_count");
        assert_eq!(names[11], "rx_min");
        assert_eq!(names[22], "session_l_min");
        assert_eq!(names[88], "rssi_ad");
        assert_eq!(names[91], "rssi_auc");
        assert_eq!(feature_index("rssi_ad"), Some(88));
        // Unique.
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), 92);
    }

    fn stationary_timeline() -> DeviceTimeline {
        use crate::telemetry::*;
        let mac = MacAddress([0xaa, 0, 0, 0, 0, 1]);
        let mut counters = Vec::new();
        let mut rates = Vec::new();
        let mut rssi = Vec::new();
        let mut cum = 0u64;
        for day in 0..5i64 {
            for minute in 0..30i64 {
                let ts = day * SECONDS_PER_DAY + minute * 60;
                counters.push(CounterSample {
                    timestamp: ts,
                    tx_cum: cum,
                    rx_cum: cum * 2,
                    width: CounterWidth::W32,
                });
                cum += 5000;
                rates.push(RateSample { timestamp: ts, tx_kbps: 3, rx_kbps: 8 });
                rssi.push(RssiSample { timestamp: ts, rssi: -47 });
            }
        }
        DeviceTimeline {
            descriptor: HostDescriptor {
                mac,
                hostnames: Default::default(),
                interface: Interface::WiFi,
                advertised_bssids: None,
            },
            counters,
            rates,
            rssi,
            hostname_sightings: vec![],
        }
    }

    #[test]
    fn extract_features_shape_and_stationary_values() {
        let timeline = stationary_timeline();
        let v = extract_features(&timeline, DEFAULT_SESSION_GAP_SECS).unwrap();
        assert_eq!(v.values.len(), 92);
        assert!(v.values.iter().all(|x| x.is_finite()));
        // Stationary, noiseless device.
        assert_eq!(v.get("rssi_ad"), Some(0.0));
        assert_eq!(v.get("rssi_auc"), Some(1.0));
        assert_eq!(v.get("rssi_num_locations"), Some(1.0));
        assert_eq!(v.get("rssi_diameter"), Some(0.0));
    }

    #[test]
    fn extract_features_names_missing_series() {
        let mut timeline = stationary_timeline();
        timeline.rssi.truncate(1);
        match extract_features(&timeline, DEFAULT_SESSION_GAP_SECS) {
            Err(FeatureError::InsufficientData { series, .. }) => assert_eq!(series, "rssi"),
            other => panic!("expected InsufficientData, got {other:?}"),
        }
    }

    #[test]
    fn feature_matrix_csv_roundtrip() {
        let m = FeatureMatrix {
            macs: vec![MacAddress([0, 0, 0, 0, 0, 1]), MacAddress([0, 0, 0, 0, 0, 2])],
            names: vec!["a".into(), "b".into()],
            rows: vec![vec![1.5, -2.0], vec![0.0, 1e-9]],
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let parsed = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, m);
    }

    proptest! {
        #[test]
        fn sessions_partition_active_deltas(
            pattern in proptest::collection::vec((0u64..500, 0i64..40), 1..60)
        ) {
            // Random activity pattern with random inter-sample spacing.
            let mut ts = 0i64;
            let mut deltas = Vec::new();
            for (volume, spacing_min) in pattern {
                ts += 60 + spacing_min * 60;
                deltas.push(TrafficDelta {
                    interval_start: ts - 60,
                    interval_end: ts,
                    tx_bytes: volume,
                    rx_bytes: volume / 3,
                });
            }
            let sessions = sessionize(&deltas, DEFAULT_SESSION_GAP_SECS);
            let session_total: u64 = sessions.iter().map(|s| s.tx_bytes + s.rx_bytes).sum();
            let delta_total: u64 = deltas.iter().filter(|d| d.total() > 0).map(|d| d.total()).sum();
            prop_assert_eq!(session_total, delta_total);
            let active_count = deltas.iter().filter(|d| d.total() > 0).count();
            prop_assert!(sessions.len() <= active_count.max(1));
            // Sessions are ordered, non-overlapping, separated by >= gap.
            for pair in sessions.windows(2) {
                prop_assert!(pair[1].start - pair[0].end >= DEFAULT_SESSION_GAP_SECS);
            }
        }

        #[test]
        fn allan_deviation_shift_and_scale(
            series in proptest::collection::vec(-100.0f64..100.0, 2..50),
            shift in -50.0f64..50.0,
            scale in -4.0f64..4.0,
        ) {
            let base = allan_deviation(&series).unwrap();
            let shifted: Vec<f64> = series.iter().map(|x| x + shift).collect();
            prop_assert!((allan_deviation(&shifted).unwrap() - base).abs() < 1e-12);
            let scaled: Vec<f64> = series.iter().map(|x| x * scale).collect();
            let expected = scale.abs() * base;
            prop_assert!((allan_deviation(&scaled).unwrap() - expected).abs() < 1e-9 * (1.0 + expected));
        }

        #[test]
        fn rssi_auc_at_least_one(values in proptest::collection::vec(-90i32..0, 1..300)) {
            let auc = rssi_auc(&values).unwrap();
            prop_assert!(auc >= 1.0);
            let distinct: std::collections::BTreeSet<_> = values.iter().collect();
            if distinct.len() == 1 {
                prop_assert_eq!(auc, 1.0);
            }
        }

        #[test]
        fn point_summaries_are_ordered(series in proptest::collection::vec(-1e6f64..1e6, 1..100)) {
            let s = point_summaries(&series).unwrap();
            prop_assert!(s.min <= s.p10 && s.p10 <= s.p25 && s.p25 <= s.p50);
            prop_assert!(s.p50 <= s.p75 && s.p75 <= s.p90 && s.p90 <= s.max);
            prop_assert!(s.iqr >= 0.0 && s.range80 >= 0.0 && s.diameter >= 0.0);
        }
    }
}
