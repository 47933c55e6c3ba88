//! Seeded generator of multi-home gateway traces with known device classes.
//! Class-conditioned behavior profiles (session habits, traffic intensity,
//! RSSI mobility) make the pipeline's qualitative claims testable at desk
//! scale; regeneration from the same seed is byte-identical.

use crate::classify::derive_seed;
use crate::ingest::{TraceBody, TraceRecord};
use crate::telemetry::{CoarseClass, FineClass, Interface, MacAddress};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad profile set: {0}")]
    BadProfiles(String),
}

fn default_relocate() -> bool {
    true
}

const MINUTES_PER_DAY: i64 = 1440;
/// Nominal observation window start (2013-11-01T00:00:00Z, a realistic
/// deployment epoch; any value works, it only anchors timestamps).
pub const DEFAULT_START_TS: i64 = 1_383_264_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuiChoice {
    pub oui: String,
    pub weight: f64,
}

/// A naming identity: hostname template plus the vendor prefixes devices
/// with that name draw from. Templates may use `{name}` (a person), and
/// `{digitsN}` (N random digits). An empty template means no hostname.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamingRule {
    pub weight: f64,
    pub template: String,
    pub ouis: Vec<OuiChoice>,
}

/// WiFi-direct SSID advertisement behavior (printers, extenders).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsidAdvert {
    pub prob: f64,
    pub ssid: String,
}

/// Extender devices aggregate hidden child devices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtenderSpec {
    /// Probability of 2, 3, 4, ... children.
    pub child_count_weights: Vec<f64>,
}

/// Class-conditioned behavior and identity parameters for one fine type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassProfile {
    pub fine_class: FineClass,
    /// Population mix weight.
    pub weight: f64,
    pub interface: Interface,
    /// Fraction of wired devices stuck on 16-bit counters.
    #[serde(default)]
    pub w16_prob: f64,
    /// Poisson rate of sessions per active day (minimum one).
    pub sessions_per_day: f64,
    /// Lognormal session length, minutes.
    pub session_len_median_min: f64,
    pub session_len_sigma: f64,
    /// Lognormal per-session downstream intensity, bytes/second.
    pub rx_rate_median_bps: f64,
    pub rx_rate_sigma: f64,
    /// Persistent per-device intensity multiplier, lognormal sigma. Device
    /// heterogeneity keeps class aggregates from collapsing onto the class
    /// median.
    #[serde(default)]
    pub device_rate_sigma: f64,
    /// Upstream volume as a fraction of downstream.
    pub tx_fraction: f64,
    /// In-session minutes with no traffic at all.
    pub idle_minute_prob: f64,
    pub active_day_prob: f64,
    /// Per-device mean RSSI: Normal(rssi_base_mean, rssi_base_sd).
    pub rssi_base_mean: f64,
    pub rssi_base_sd: f64,
    /// Spread between a device's distinct usage locations.
    pub location_spread_sd: f64,
    /// Probability of 1, 2, 3, ... locations.
    pub n_locations_weights: Vec<f64>,
    /// Random-walk step while associated; high for handhelds.
    pub mobility_step_sd: f64,
    pub rssi_noise_sd: f64,
    /// Re-seat at every session start (true, phones in pockets) or only
    /// once per day (false, devices that stay where they were put down).
    #[serde(default = "default_relocate")]
    pub relocate_per_session: bool,
    pub naming: Vec<NamingRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssid_advert: Option<SsidAdvert>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extender_children: Option<ExtenderSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChildMix {
    pub fine_class: FineClass,
    pub weight: f64,
}

/// The full generator parameterization, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSet {
    /// Devices per home is 1 + Poisson(lambda).
    pub devices_per_home_lambda: f64,
    /// Fraction of devices that are short-lived with behavior borrowed from
    /// another class; they stress the data-sufficiency threshold.
    pub short_lived_noisy_fraction: f64,
    /// What hides behind extenders.
    pub child_mix: Vec<ChildMix>,
    pub profiles: Vec<ClassProfile>,
}

impl ProfileSet {
    pub fn from_json(json: &str) -> Result<ProfileSet, SynthError> {
        let set: ProfileSet =
            serde_json::from_str(json).map_err(|e| SynthError::BadProfiles(e.to_string()))?;
        if set.profiles.is_empty() {
            return Err(SynthError::BadProfiles("no profiles".into()));
        }
        for profile in &set.profiles {
            let name = profile.fine_class;
            let bad = |what: &str| {
                Err(SynthError::BadProfiles(format!("{name}: {what}")))
            };
            if !(profile.weight > 0.0) {
                return bad("weight must be positive");
            }
            if !(profile.session_len_median_min > 0.0) || !(profile.rx_rate_median_bps > 0.0) {
                return bad("medians must be positive");
            }
            for sigma in [
                profile.session_len_sigma,
                profile.rx_rate_sigma,
                profile.device_rate_sigma,
            ] {
                if !sigma.is_finite() || sigma < 0.0 {
                    return bad("sigmas must be finite and non-negative");
                }
            }
            for p in [
                profile.idle_minute_prob,
                profile.active_day_prob,
                profile.w16_prob,
            ] {
                if !(0.0..=1.0).contains(&p) {
                    return bad("probabilities must lie in [0, 1]");
                }
            }
            if profile.n_locations_weights.is_empty() || profile.naming.is_empty() {
                return bad("location weights and naming rules must be non-empty");
            }
            for rule in &profile.naming {
                if rule.ouis.is_empty() {
                    return bad("every naming rule needs an OUI pool");
                }
                for choice in &rule.ouis {
                    if choice.oui.parse::<crate::telemetry::Oui>().is_err() {
                        return bad("malformed OUI in naming rule");
                    }
                }
            }
            if profile.extender_children.is_some() && profile.interface != Interface::WiFi {
                return bad("extender profiles must be wireless");
            }
        }
        for mix in &set.child_mix {
            if set.profile_for(mix.fine_class).is_none() {
                return Err(SynthError::BadProfiles(format!(
                    "child mix references missing profile {}",
                    mix.fine_class
                )));
            }
        }
        Ok(set)
    }

    fn profile_for(&self, fine: FineClass) -> Option<&ClassProfile> {
        self.profiles.iter().find(|p| p.fine_class == fine)
    }
}

/// The built-in home-like profile mix.
pub fn default_profiles() -> ProfileSet {
    ProfileSet::from_json(include_str!("../data/default_profiles.json"))
        .expect("embedded profiles are valid")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub homes: usize,
    pub days: u32,
    pub seed: u64,
    pub start_ts: i64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            homes: 240,
            days: 90,
            seed: 7,
            start_ts: DEFAULT_START_TS,
        }
    }
}

/// Ground truth for one generated device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceTruth {
    pub mac: MacAddress,
    pub coarse: CoarseClass,
    pub fine: FineClass,
}

fn pick_weighted(rng: &mut ChaCha20Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut roll = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    for (i, w) in weights.iter().enumerate() {
        if roll < *w {
            return i;
        }
        roll -= w;
    }
    weights.len() - 1
}

const FIRST_NAMES: [&str; 12] = [
    "alex", "sam", "jordan", "taylor", "casey", "robin", "jamie", "morgan", "drew", "pat",
    "lena", "marco",
];

fn fill_template(template: &str, rng: &mut ChaCha20Rng) -> String {
    let mut out = template.to_string();
    if out.contains("{name}") {
        let name = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
        out = out.replace("{name}", name);
    }
    while let Some(start) = out.find("{digits") {
        let end = out[start..].find('}').map(|e| start + e).unwrap_or(out.len());
        let n: usize = out[start + 7..end].parse().unwrap_or(6);
        let digits: String = (0..n)
            .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
            .collect();
        out.replace_range(start..=end.min(out.len() - 1), &digits);
    }
    out
}

/// One in-session minute of traffic, timestamped at the minute end.
struct MinuteSample {
    ts: i64,
    rx: u64,
    tx: u64,
}

struct Activity {
    minutes: Vec<MinuteSample>,
    /// (first sample ts, last sample ts) per session.
    sessions: Vec<(i64, i64)>,
}

/// Simulate the traffic activity of one behavioral profile over the chosen
/// active days. Sessions are clamped to their day.
fn simulate_activity(
    behavior: &ClassProfile,
    active_days: &[u32],
    start_ts: i64,
    rng: &mut ChaCha20Rng,
) -> Activity {
    let len_dist = LogNormal::new(
        behavior.session_len_median_min.ln(),
        behavior.session_len_sigma,
    )
    .expect("finite sigma");
    let device_rate_mult = if behavior.device_rate_sigma > 0.0 {
        LogNormal::new(0.0, behavior.device_rate_sigma)
            .expect("finite sigma")
            .sample(rng)
    } else {
        1.0
    };
    let rate_dist = LogNormal::new(
        (behavior.rx_rate_median_bps * device_rate_mult).ln(),
        behavior.rx_rate_sigma,
    )
    .expect("finite sigma");
    let jitter = LogNormal::new(0.0, 0.6).expect("finite sigma");
    let session_count = Poisson::new(behavior.sessions_per_day.max(0.01)).expect("positive rate");

    let mut minutes: Vec<MinuteSample> = Vec::new();
    let mut sessions: Vec<(i64, i64)> = Vec::new();
    for &day in active_days {
        let day_start = start_ts + day as i64 * 86_400;
        let n_sessions = (session_count.sample(rng) as usize).max(1);
        let mut intervals: Vec<(i64, i64)> = Vec::new();
        for _ in 0..n_sessions {
            let len = (len_dist.sample(rng).round() as i64).clamp(2, 600);
            let latest_start = (MINUTES_PER_DAY - len).max(1);
            let start_min = rng.random_range(0..latest_start);
            intervals.push((start_min, (start_min + len).min(MINUTES_PER_DAY)));
        }
        intervals.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::new();
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        let mut first_of_day = true;
        for (start_min, end_min) in merged {
            let rate = rate_dist.sample(rng);
            let mut first_ts = None;
            let mut last_ts = 0;
            for m in start_min..end_min {
                let ts = day_start + (m + 1) * 60;
                let idle =
                    !first_of_day && rng.random_range(0.0..1.0) < behavior.idle_minute_prob;
                // The first minute of a day always moves traffic, so an
                // active day is active by the counter definition too.
                let (rx, tx) = if idle {
                    (0, 0)
                } else {
                    let rx = (rate * 60.0 * jitter.sample(rng)).round().max(1.0) as u64;
                    let tx = (rx as f64 * behavior.tx_fraction * jitter.sample(rng)).round()
                        as u64;
                    (rx, tx)
                };
                first_of_day = false;
                minutes.push(MinuteSample { ts, rx, tx });
                if first_ts.is_none() {
                    first_ts = Some(ts);
                }
                last_ts = ts;
            }
            if let Some(first) = first_ts {
                sessions.push((first, last_ts));
            }
        }
    }
    Activity { minutes, sessions }
}

fn choose_active_days(
    days: u32,
    prob: f64,
    forced_count: Option<u32>,
    rng: &mut ChaCha20Rng,
) -> Vec<u32> {
    match forced_count {
        Some(count) => {
            let mut all: Vec<u32> = (0..days).collect();
            // Deterministic partial shuffle.
            for i in 0..count.min(days) as usize {
                let j = rng.random_range(i..all.len());
                all.swap(i, j);
            }
            let mut chosen: Vec<u32> = all.into_iter().take(count.min(days) as usize).collect();
            chosen.sort_unstable();
            chosen
        }
        None => (0..days)
            .filter(|_| rng.random_range(0.0..1.0) < prob)
            .collect(),
    }
}

/// Everything generated for one device.
pub struct GeneratedDevice {
    pub records: Vec<TraceRecord>,
    pub truth: DeviceTruth,
}

/// Generate one device's full record stream.
///
/// Identity (hostname template, OUI pool, truth label) comes from `profile`;
/// observable behavior comes from `behavior`, which differs for planted
/// short-lived noisy devices. Records are in (ts, kind) order.
pub fn generate_device(
    profile: &ClassProfile,
    behavior: &ClassProfile,
    days: u32,
    start_ts: i64,
    mac_suffix: [u8; 3],
    forced_active_days: Option<u32>,
    seed: u64,
) -> GeneratedDevice {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let naming_weights: Vec<f64> = profile.naming.iter().map(|n| n.weight).collect();
    let naming = &profile.naming[pick_weighted(&mut rng, &naming_weights)];
    let oui_weights: Vec<f64> = naming.ouis.iter().map(|o| o.weight).collect();
    let oui: crate::telemetry::Oui = naming.ouis[pick_weighted(&mut rng, &oui_weights)]
        .oui
        .parse()
        .expect("profile OUIs are valid");
    let mac = MacAddress([
        oui.0[0],
        oui.0[1],
        oui.0[2],
        mac_suffix[0],
        mac_suffix[1],
        mac_suffix[2],
    ]);
    let hostname = fill_template(&naming.template, &mut rng);

    let active = choose_active_days(
        days,
        behavior.active_day_prob,
        forced_active_days,
        &mut rng,
    );
    let activity = simulate_activity(behavior, &active, start_ts, &mut rng);

    let width = if profile.interface == Interface::Wired
        && rng.random_range(0.0..1.0) < profile.w16_prob
    {
        16
    } else {
        32
    };
    let advert = profile.ssid_advert.as_ref().and_then(|a| {
        (rng.random_range(0.0..1.0) < a.prob).then(|| {
            let bssid = if rng.random_range(0.0..1.0) < 0.5 {
                mac
            } else {
                let mut octets = mac.octets();
                octets[5] = octets[5].wrapping_add(1);
                MacAddress(octets)
            };
            (fill_template(&a.ssid, &mut rng), bssid)
        })
    });

    let mut records = device_records(
        mac,
        &hostname,
        profile.interface,
        width,
        advert.as_ref(),
        &activity,
        behavior,
        &mut rng,
    );
    sort_records(&mut records);
    GeneratedDevice {
        records,
        truth: DeviceTruth {
            mac,
            coarse: profile.fine_class.coarse(),
            fine: profile.fine_class,
        },
    }
}

/// Turn simulated minutes into counter/rate/rssi/descriptor records.
#[allow(clippy::too_many_arguments)]
fn device_records(
    mac: MacAddress,
    hostname: &str,
    interface: Interface,
    width: u8,
    advert: Option<&(String, MacAddress)>,
    activity: &Activity,
    behavior: &ClassProfile,
    rng: &mut ChaCha20Rng,
) -> Vec<TraceRecord> {
    let modulus: u64 = 1u64 << width;
    let wireless = interface == Interface::WiFi;

    // Per-device location set.
    let n_locations = pick_weighted(rng, &behavior.n_locations_weights) + 1;
    let base = behavior.rssi_base_mean + sample_normal(rng, behavior.rssi_base_sd);
    let locations: Vec<f64> = (0..n_locations)
        .map(|i| {
            if i == 0 {
                base
            } else {
                base + sample_normal(rng, behavior.location_spread_sd)
            }
        })
        .collect();

    let mut records = Vec::with_capacity(activity.minutes.len() * 3 + 16);
    let mut cum_tx = 0u64;
    let mut cum_rx = 0u64;
    let mut last_descriptor: Option<i64> = None;
    let mut session_iter = activity.sessions.iter().peekable();
    let mut location = locations[0];
    let mut walk = 0.0f64;
    let mut current_day = i64::MIN;

    for minute in &activity.minutes {
        let day = minute.ts.div_euclid(86_400);
        if !behavior.relocate_per_session && day != current_day {
            current_day = day;
            location = locations[rng.random_range(0..locations.len())];
        }
        // New session: maybe re-seat the device, reset the walk, and report
        // the descriptor if it has been a while.
        if session_iter.peek().map(|s| s.0) == Some(minute.ts) {
            let session = session_iter.next().unwrap();
            if behavior.relocate_per_session {
                location = locations[rng.random_range(0..locations.len())];
            }
            walk = 0.0;
            let stale = last_descriptor.map(|t| session.0 - t >= 6 * 3600).unwrap_or(true);
            if stale {
                last_descriptor = Some(session.0);
                records.push(TraceRecord {
                    ts: session.0,
                    mac,
                    body: TraceBody::Descriptor {
                        hostname: hostname.to_string(),
                        iface: interface,
                        ssid: advert.map(|(s, _)| s.clone()),
                        bssid: advert.map(|(_, b)| *b),
                    },
                });
            }
        }

        cum_tx += minute.tx;
        cum_rx += minute.rx;
        records.push(TraceRecord {
            ts: minute.ts,
            mac,
            body: TraceBody::Counter {
                tx_cum: cum_tx % modulus,
                rx_cum: cum_rx % modulus,
                width,
            },
        });
        if wireless {
            // Rates include management overhead and clip below 1 kbps.
            records.push(TraceRecord {
                ts: minute.ts,
                mac,
                body: TraceBody::Rate {
                    tx_kbps: (minute.tx as f64 * 1.15 / 7500.0) as u64,
                    rx_kbps: (minute.rx as f64 * 1.15 / 7500.0) as u64,
                },
            });
            let value = location + walk + sample_normal(rng, behavior.rssi_noise_sd);
            walk += sample_normal(rng, behavior.mobility_step_sd);
            records.push(TraceRecord {
                ts: minute.ts,
                mac,
                body: TraceBody::Rssi {
                    rssi: (value.round() as i32).clamp(-95, -15),
                },
            });
        }
    }
    records
}

fn sample_normal(rng: &mut ChaCha20Rng, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn kind_rank(body: &TraceBody) -> u8 {
    match body {
        TraceBody::Descriptor { .. } => 0,
        TraceBody::Counter { .. } => 1,
        TraceBody::Rate { .. } => 2,
        TraceBody::Rssi { .. } => 3,
    }
}

fn sort_records(records: &mut [TraceRecord]) {
    records.sort_by(|a, b| {
        (a.ts, a.mac, kind_rank(&a.body)).cmp(&(b.ts, b.mac, kind_rank(&b.body)))
    });
}

/// Generate an extender: 2-4 hidden child devices whose traffic aggregates
/// onto one MAC, child hostnames rotating through the descriptor reports so
/// concurrent child sessions are observable.
fn generate_extender(
    profile: &ClassProfile,
    set: &ProfileSet,
    days: u32,
    start_ts: i64,
    mac_suffix: [u8; 3],
    seed: u64,
) -> GeneratedDevice {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let spec = profile.extender_children.as_ref().expect("extender profile");

    let naming_weights: Vec<f64> = profile.naming.iter().map(|n| n.weight).collect();
    let naming = &profile.naming[pick_weighted(&mut rng, &naming_weights)];
    let oui_weights: Vec<f64> = naming.ouis.iter().map(|o| o.weight).collect();
    let oui: crate::telemetry::Oui = naming.ouis[pick_weighted(&mut rng, &oui_weights)]
        .oui
        .parse()
        .expect("profile OUIs are valid");
    let mac = MacAddress([
        oui.0[0],
        oui.0[1],
        oui.0[2],
        mac_suffix[0],
        mac_suffix[1],
        mac_suffix[2],
    ]);

    let n_children = pick_weighted(&mut rng, &spec.child_count_weights) + 2;
    let child_weights: Vec<f64> = set.child_mix.iter().map(|c| c.weight).collect();

    let mut merged: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    let mut sightings: Vec<(i64, String)> = Vec::new();
    for child in 0..n_children {
        let mix = &set.child_mix[pick_weighted(&mut rng, &child_weights)];
        let child_profile = set
            .profile_for(mix.fine_class)
            .expect("child profile exists");
        let child_naming_weights: Vec<f64> =
            child_profile.naming.iter().map(|n| n.weight).collect();
        let child_naming =
            &child_profile.naming[pick_weighted(&mut rng, &child_naming_weights)];
        let mut child_hostname = fill_template(&child_naming.template, &mut rng);
        if child_hostname.is_empty() {
            child_hostname = format!("station-{child}");
        }

        let active = choose_active_days(days, child_profile.active_day_prob, None, &mut rng);
        let activity = simulate_activity(child_profile, &active, start_ts, &mut rng);
        for minute in &activity.minutes {
            let entry = merged.entry(minute.ts).or_insert((0, 0));
            entry.0 += minute.rx;
            entry.1 += minute.tx;
        }
        // The DHCP table re-learns the active child's name every few minutes.
        for (session_start, session_end) in &activity.sessions {
            let mut t = *session_start;
            while t <= *session_end {
                sightings.push((t, child_hostname.clone()));
                t += 5 * 60;
            }
        }
    }

    let minutes: Vec<MinuteSample> = merged
        .into_iter()
        .map(|(ts, (rx, tx))| MinuteSample { ts, rx, tx })
        .collect();

    // The extender's own factory-default name shows up too, every few hours
    // of activity.
    let own_hostname = fill_template(&naming.template, &mut rng);
    if !own_hostname.is_empty() {
        let mut last_own: Option<i64> = None;
        for minute in &minutes {
            if last_own.map(|t| minute.ts - t >= 6 * 3600).unwrap_or(true) {
                sightings.push((minute.ts, own_hostname.clone()));
                last_own = Some(minute.ts);
            }
        }
    }

    let advert = profile.ssid_advert.as_ref().and_then(|a| {
        (rng.random_range(0.0..1.0) < a.prob)
            .then(|| (fill_template(&a.ssid, &mut rng), mac))
    });

    // Own stationary RSSI plus counters/rates over the merged traffic.
    let mut records = Vec::with_capacity(minutes.len() * 3 + sightings.len());
    let base = profile.rssi_base_mean + sample_normal(&mut rng, profile.rssi_base_sd);
    let mut cum_tx = 0u64;
    let mut cum_rx = 0u64;
    for minute in &minutes {
        cum_tx += minute.tx;
        cum_rx += minute.rx;
        records.push(TraceRecord {
            ts: minute.ts,
            mac,
            body: TraceBody::Counter {
                tx_cum: cum_tx % (1u64 << 32),
                rx_cum: cum_rx % (1u64 << 32),
                width: 32,
            },
        });
        records.push(TraceRecord {
            ts: minute.ts,
            mac,
            body: TraceBody::Rate {
                tx_kbps: (minute.tx as f64 * 1.15 / 7500.0) as u64,
                rx_kbps: (minute.rx as f64 * 1.15 / 7500.0) as u64,
            },
        });
        let value = base + sample_normal(&mut rng, profile.rssi_noise_sd)
            + sample_normal(&mut rng, profile.mobility_step_sd);
        records.push(TraceRecord {
            ts: minute.ts,
            mac,
            body: TraceBody::Rssi {
                rssi: (value.round() as i32).clamp(-95, -15),
            },
        });
    }
    // Deduplicate same-timestamp sightings deterministically.
    sightings.sort();
    sightings.dedup();
    for (ts, hostname) in sightings {
        records.push(TraceRecord {
            ts,
            mac,
            body: TraceBody::Descriptor {
                hostname,
                iface: Interface::WiFi,
                ssid: advert.as_ref().map(|(s, _)| s.clone()),
                bssid: advert.as_ref().map(|(_, b)| *b),
            },
        });
    }
    sort_records(&mut records);
    GeneratedDevice {
        records,
        truth: DeviceTruth {
            mac,
            coarse: profile.fine_class.coarse(),
            fine: profile.fine_class,
        },
    }
}

/// Generate one home: a weighted mix of devices, some flagged short-lived
/// noisy. Returns the home's records (sorted) and truth entries.
pub fn generate_home(
    set: &ProfileSet,
    days: u32,
    start_ts: i64,
    home_idx: usize,
    home_seed: u64,
) -> (Vec<TraceRecord>, Vec<DeviceTruth>) {
    let mut rng = ChaCha20Rng::seed_from_u64(home_seed);
    let n_devices =
        1 + Poisson::new(set.devices_per_home_lambda.max(0.01)).expect("rate").sample(&mut rng)
            as usize;
    let profile_weights: Vec<f64> = set.profiles.iter().map(|p| p.weight).collect();

    let mut records = Vec::new();
    let mut truths = Vec::new();
    for device_idx in 0..n_devices {
        let device_seed = derive_seed(home_seed, &format!("device-{device_idx}"));
        let profile = &set.profiles[pick_weighted(&mut rng, &profile_weights)];
        let suffix = [
            ((home_idx >> 8) & 0xff) as u8,
            (home_idx & 0xff) as u8,
            device_idx as u8,
        ];
        let generated = if profile.extender_children.is_some() {
            generate_extender(profile, set, days, start_ts, suffix, device_seed)
        } else {
            let noisy = rng.random_range(0.0..1.0) < set.short_lived_noisy_fraction;
            let (behavior, forced) = if noisy {
                let mut other = pick_weighted(&mut rng, &profile_weights);
                if set.profiles[other].fine_class == profile.fine_class
                    || set.profiles[other].extender_children.is_some()
                    || set.profiles[other].interface == Interface::Wired
                {
                    other = set
                        .profiles
                        .iter()
                        .position(|p| {
                            p.fine_class != profile.fine_class
                                && p.extender_children.is_none()
                                && p.interface == Interface::WiFi
                        })
                        .unwrap_or(other);
                }
                (&set.profiles[other], Some(rng.random_range(1..=3u32)))
            } else {
                (profile, None)
            };
            generate_device(profile, behavior, days, start_ts, suffix, forced, device_seed)
        };
        records.extend(generated.records);
        truths.push(generated.truth);
    }
    sort_records(&mut records);
    (records, truths)
}

/// Summary of a written corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub homes: usize,
    pub devices: usize,
    pub records: u64,
    pub trace_bytes: u64,
}

/// Generate a corpus and write `trace.jsonl` plus `truth.json` under
/// `out_dir`. Homes are generated in parallel with derived seeds and written
/// in home order, so output is byte-identical for a given seed.
pub fn generate_corpus(
    set: &ProfileSet,
    config: &GeneratorConfig,
    out_dir: &Path,
) -> Result<CorpusSummary, SynthError> {
    std::fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join("trace.jsonl");
    let mut writer = std::io::BufWriter::new(std::fs::File::create(&trace_path)?);

    let mut truth: BTreeMap<String, BTreeMap<&'static str, String>> = BTreeMap::new();
    let mut records: u64 = 0;
    let mut devices = 0usize;

    const CHUNK: usize = 30;
    let mut home = 0usize;
    while home < config.homes {
        let hi = (home + CHUNK).min(config.homes);
        let chunk: Vec<(String, Vec<DeviceTruth>)> = (home..hi)
            .into_par_iter()
            .map(|home_idx| {
                let home_seed = derive_seed(config.seed, &format!("home-{home_idx}"));
                let (records, truths) =
                    generate_home(set, config.days, config.start_ts, home_idx, home_seed);
                let mut buf = String::with_capacity(records.len() * 96);
                for record in &records {
                    buf.push_str(&serde_json::to_string(record).expect("serializable"));
                    buf.push('\n');
                }
                (buf, truths)
            })
            .collect();
        for (buf, truths) in chunk {
            records += buf.lines().count() as u64;
            writer.write_all(buf.as_bytes())?;
            for t in truths {
                devices += 1;
                truth.insert(
                    t.mac.to_string(),
                    BTreeMap::from([
                        ("coarse", t.coarse.to_string()),
                        ("fine", t.fine.to_string()),
                    ]),
                );
            }
        }
        home = hi;
    }
    writer.flush()?;
    let trace_bytes = std::fs::metadata(&trace_path)?.len();

    let truth_file = std::fs::File::create(out_dir.join("truth.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(truth_file), &truth)
        .map_err(|e| SynthError::BadProfiles(e.to_string()))?;

    Ok(CorpusSummary {
        homes: config.homes,
        devices,
        records,
        trace_bytes,
    })
}

/// Parse a truth.json written by [`generate_corpus`].
pub fn load_truth(
    path: &Path,
) -> Result<BTreeMap<MacAddress, (CoarseClass, FineClass)>, SynthError> {
    let raw: BTreeMap<String, BTreeMap<String, String>> =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
            .map_err(|e| SynthError::BadProfiles(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (mac, entry) in raw {
        let mac: MacAddress = mac
            .parse()
            .map_err(|_| SynthError::BadProfiles(format!("bad mac {mac:?}")))?;
        let coarse = entry
            .get("coarse")
            .and_then(|c| serde_json::from_value(serde_json::Value::String(c.clone())).ok())
            .ok_or_else(|| SynthError::BadProfiles("missing coarse".into()))?;
        let fine = entry
            .get("fine")
            .and_then(|f| serde_json::from_value(serde_json::Value::String(f.clone())).ok())
            .ok_or_else(|| SynthError::BadProfiles("missing fine".into()))?;
        out.insert(mac, (coarse, fine));
    }
    Ok(out)
}
