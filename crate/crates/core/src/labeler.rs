//! Conservative ground-truth labeling from static descriptors: hostname
//! dictionary matching, narrow-vendor OUI lookup, WiFi-direct BSSID evidence,
//! and network-extender detection, cross-checked so that any contradiction
//! rejects the label. Labels feed training and evaluation only.

use crate::features::{sessionize, Session, DEFAULT_SESSION_GAP_SECS};
use crate::ingest::diff_counters;
use crate::telemetry::{
    coarse_of, CoarseClass, DeviceTimeline, FineClass, HostDescriptor, Interface, MacAddress, Oui,
};
use regex::RegexBuilder;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("bad ruleset: {0}")]
    BadRuleset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Substring,
    Regex,
}

/// Label asserted by a matching pattern: either a full fine type or only the
/// coarse class (e.g. a bare "android").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelTarget {
    Coarse(CoarseClass),
    Fine(FineClass),
}

impl LabelTarget {
    pub fn coarse(&self) -> CoarseClass {
        match self {
            LabelTarget::Coarse(c) => *c,
            LabelTarget::Fine(f) => coarse_of(*f),
        }
    }

    pub fn fine(&self) -> Option<FineClass> {
        match self {
            LabelTarget::Coarse(_) => None,
            LabelTarget::Fine(f) => Some(*f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostnamePattern {
    pub pattern: String,
    pub kind: PatternKind,
    pub label: LabelTarget,
    /// Vendor names (keys of `vendor_ouis`) that cannot manufacture this
    /// kind of device; a matching device OUI rejects the label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub incompatible_vendors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsidPattern {
    pub pattern: String,
    pub kind: PatternKind,
    pub fine: FineClass,
}

fn default_extender_threshold() -> usize {
    3
}

/// The labeling dictionary. Ships as an editable JSON file; the mechanism is
/// fixed, the word list is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRuleset {
    /// Ordered; the first matching pattern wins.
    pub hostname_patterns: Vec<HostnamePattern>,
    /// Narrow-portfolio vendors only: the OUI alone pins the fine type.
    pub oui_map: BTreeMap<String, FineClass>,
    /// Factory-default names (e.g. the ISP's set-top boxes), matched exactly.
    pub stb_names: BTreeSet<String>,
    /// Model strings advertised in WiFi-direct SSIDs.
    #[serde(default)]
    pub ssid_patterns: Vec<SsidPattern>,
    /// Known OUIs per vendor, for incompatibility sanity checks.
    #[serde(default)]
    pub vendor_ouis: BTreeMap<String, Vec<String>>,
    /// Hostname count above which a device is tentatively an extender
    /// ("greater than two" = 3).
    #[serde(default = "default_extender_threshold")]
    pub extender_hostname_count_threshold: usize,
}

impl LabelRuleset {
    pub fn from_json(json: &str) -> Result<CompiledRuleset, LabelError> {
        let ruleset: LabelRuleset =
            serde_json::from_str(json).map_err(|e| LabelError::BadRuleset(e.to_string()))?;
        ruleset.compile()
    }

    /// Validate patterns and OUIs, pre-compile the regexes.
    pub fn compile(self) -> Result<CompiledRuleset, LabelError> {
        let compile = |pattern: &str, kind: PatternKind| -> Result<Matcher, LabelError> {
            Ok(match kind {
                PatternKind::Substring => Matcher::Substring(pattern.to_lowercase()),
                PatternKind::Regex => Matcher::Regex(
                    RegexBuilder::new(pattern)
                        .case_insensitive(true)
                        .build()
                        .map_err(|e| LabelError::BadRuleset(e.to_string()))?,
                ),
            })
        };
        let hostname_matchers = self
            .hostname_patterns
            .iter()
            .map(|p| compile(&p.pattern, p.kind))
            .collect::<Result<Vec<_>, _>>()?;
        let ssid_matchers = self
            .ssid_patterns
            .iter()
            .map(|p| compile(&p.pattern, p.kind))
            .collect::<Result<Vec<_>, _>>()?;
        let mut oui_map = BTreeMap::new();
        for (text, fine) in &self.oui_map {
            let oui: Oui = text
                .parse()
                .map_err(|_| LabelError::BadRuleset(format!("bad OUI {text:?}")))?;
            oui_map.insert(oui, *fine);
        }
        let mut vendor_ouis: BTreeMap<String, BTreeSet<Oui>> = BTreeMap::new();
        for (vendor, ouis) in &self.vendor_ouis {
            let parsed = ouis
                .iter()
                .map(|t| {
                    t.parse()
                        .map_err(|_| LabelError::BadRuleset(format!("bad OUI {t:?}")))
                })
                .collect::<Result<BTreeSet<Oui>, _>>()?;
            vendor_ouis.insert(vendor.clone(), parsed);
        }
        let stb_lower = self.stb_names.iter().map(|s| s.to_lowercase()).collect();
        Ok(CompiledRuleset {
            oui_lookup: oui_map,
            vendor_lookup: vendor_ouis,
            stb_lower,
            hostname_matchers,
            ssid_matchers,
            spec: self,
        })
    }
}

#[derive(Debug, Clone)]
enum Matcher {
    Substring(String),
    Regex(regex::Regex),
}

impl Matcher {
    fn matches(&self, hostname: &str) -> bool {
        match self {
            Matcher::Substring(needle) => hostname.to_lowercase().contains(needle),
            Matcher::Regex(re) => re.is_match(hostname),
        }
    }
}

/// A ruleset with pre-compiled matchers, ready to label devices.
#[derive(Debug, Clone)]
pub struct CompiledRuleset {
    pub spec: LabelRuleset,
    oui_lookup: BTreeMap<Oui, FineClass>,
    vendor_lookup: BTreeMap<String, BTreeSet<Oui>>,
    stb_lower: BTreeSet<String>,
    hostname_matchers: Vec<Matcher>,
    ssid_matchers: Vec<Matcher>,
}

/// The built-in starter dictionary.
pub fn default_ruleset() -> CompiledRuleset {
    LabelRuleset::from_json(include_str!("../data/default_rules.json"))
        .expect("embedded ruleset is valid")
}

/// One piece of hostname evidence: what matched and what it asserts.
#[derive(Debug, Clone, PartialEq)]
pub struct HostnameMatch {
    pub label: LabelTarget,
    pub rule_id: String,
    /// Index into `hostname_patterns`, or none for a factory STB name.
    pub pattern_index: Option<usize>,
}

/// First matching pattern across all hostnames wins; factory STB names are
/// checked before the pattern list. Hostnames are visited in sorted order so
/// the result does not depend on set iteration.
pub fn label_by_hostname(
    hostnames: &BTreeSet<String>,
    rules: &CompiledRuleset,
) -> Option<HostnameMatch> {
    for hostname in hostnames {
        if rules.stb_lower.contains(&hostname.to_lowercase()) {
            return Some(HostnameMatch {
                label: LabelTarget::Fine(FineClass::STB),
                rule_id: format!("stb:{}", hostname.to_lowercase()),
                pattern_index: None,
            });
        }
    }
    for (idx, (pattern, matcher)) in rules
        .spec
        .hostname_patterns
        .iter()
        .zip(&rules.hostname_matchers)
        .enumerate()
    {
        for hostname in hostnames {
            if matcher.matches(hostname) {
                return Some(HostnameMatch {
                    label: pattern.label,
                    rule_id: format!("hostname:{}", pattern.pattern),
                    pattern_index: Some(idx),
                });
            }
        }
    }
    None
}

/// Fine label iff the OUI belongs to a vendor with a single home product
/// category; broad-portfolio vendors are deliberately absent from the map.
pub fn label_by_oui(oui: Oui, rules: &CompiledRuleset) -> Option<FineClass> {
    rules.oui_lookup.get(&oui).copied()
}

/// Fine label when an advertised WiFi-direct SSID names a known model and
/// its BSSID is the device's own MAC or an adjacent one (last octet ±1).
pub fn label_by_bssid(
    descriptor: &HostDescriptor,
    rules: &CompiledRuleset,
) -> Option<(FineClass, String)> {
    let advertised = descriptor.advertised_bssids.as_ref()?;
    for (ssid, bssid) in advertised {
        let own = *bssid == descriptor.mac || bssid.is_adjacent(&descriptor.mac);
        if !own {
            continue;
        }
        for (pattern, matcher) in rules.spec.ssid_patterns.iter().zip(&rules.ssid_matchers) {
            if matcher.matches(ssid) {
                return Some((pattern.fine, format!("bssid:{}", pattern.pattern)));
            }
        }
    }
    None
}

/// Attribute traffic sessions to hostnames: each active counter interval
/// belongs to the most recently sighted hostname, and each hostname's events
/// are sessionized independently.
pub fn attribute_sessions_by_hostname(
    timeline: &DeviceTimeline,
    gap_secs: i64,
) -> BTreeMap<String, Vec<Session>> {
    let Ok(deltas) = diff_counters(&timeline.counters) else {
        return BTreeMap::new();
    };
    let sightings = &timeline.hostname_sightings;
    let mut per_hostname: BTreeMap<&str, Vec<crate::ingest::TrafficDelta>> = BTreeMap::new();
    for delta in deltas.iter().filter(|d| d.total() > 0) {
        // Most recent sighting at or before the sample time.
        let pos = sightings.partition_point(|s| s.timestamp <= delta.interval_end);
        if pos == 0 {
            continue;
        }
        per_hostname
            .entry(&sightings[pos - 1].hostname)
            .or_default()
            .push(*delta);
    }
    per_hostname
        .into_iter()
        .map(|(hostname, deltas)| (hostname.to_string(), sessionize(&deltas, gap_secs)))
        .collect()
}

/// A device is a confirmed extender when it has accumulated more hostnames
/// than the threshold and at least two differently-named sessions overlap in
/// time (several devices talking through it at once).
pub fn detect_extender(
    descriptor: &HostDescriptor,
    sessions_by_hostname: &BTreeMap<String, Vec<Session>>,
    rules: &CompiledRuleset,
) -> bool {
    if descriptor.hostnames.len() < rules.spec.extender_hostname_count_threshold {
        return false;
    }
    let named: Vec<(&String, &Vec<Session>)> = sessions_by_hostname.iter().collect();
    for (i, (_, sessions_a)) in named.iter().enumerate() {
        for (_, sessions_b) in &named[i + 1..] {
            for a in sessions_a.iter() {
                if sessions_b.iter().any(|b| a.overlaps(b)) {
                    return true;
                }
            }
        }
    }
    false
}

/// The conservative verdict for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub mac: MacAddress,
    pub coarse: Option<CoarseClass>,
    pub fine: Option<FineClass>,
    /// Rule ids that fired, including rejection markers.
    pub evidence: Vec<String>,
}

impl GroundTruthLabel {
    fn unlabeled(mac: MacAddress, evidence: Vec<String>) -> GroundTruthLabel {
        GroundTruthLabel {
            mac,
            coarse: None,
            fine: None,
            evidence,
        }
    }
}

/// Combine all evidence sources for one device and apply the sanity checks.
/// Any contradiction rejects the label; a confirmed extender overrides name
/// evidence, since the accumulated hostnames belong to the devices behind it.
pub fn label_device(timeline: &DeviceTimeline, rules: &CompiledRuleset) -> GroundTruthLabel {
    let descriptor = &timeline.descriptor;
    let mac = descriptor.mac;
    let mut evidence: Vec<String> = Vec::new();

    let bssid_evidence = label_by_bssid(descriptor, rules);
    let oui_fine = label_by_oui(mac.oui(), rules);
    if let Some((_, id)) = &bssid_evidence {
        evidence.push(id.clone());
    }
    if oui_fine.is_some() {
        evidence.push(format!("oui:{}", mac.oui()));
    }

    // Per-hostname matches, so conflicting names are visible.
    let mut hostname_matches: Vec<HostnameMatch> = Vec::new();
    for hostname in &descriptor.hostnames {
        let single: BTreeSet<String> = [hostname.clone()].into();
        if let Some(m) = label_by_hostname(&single, rules) {
            if !hostname_matches.contains(&m) {
                evidence.push(m.rule_id.clone());
                hostname_matches.push(m);
            }
        }
    }
    let primary_hostname = label_by_hostname(&descriptor.hostnames, rules);

    let sessions = attribute_sessions_by_hostname(timeline, DEFAULT_SESSION_GAP_SECS);
    let extender_confirmed = detect_extender(descriptor, &sessions, rules);

    if extender_confirmed {
        evidence.push("extender-confirmed".to_string());
        // Model evidence may pin the fine type; the hostnames themselves are
        // the children's names and say nothing about the extender.
        let network_fine = |f: FineClass| coarse_of(f) == CoarseClass::NetworkEquipment;
        if let Some((fine, _)) = &bssid_evidence {
            if !network_fine(*fine) {
                evidence.push("reject:conflict".to_string());
                return GroundTruthLabel::unlabeled(mac, evidence);
            }
            return GroundTruthLabel {
                mac,
                coarse: Some(CoarseClass::NetworkEquipment),
                fine: Some(*fine),
                evidence,
            };
        }
        let model_fine = hostname_matches
            .iter()
            .filter_map(|m| m.label.fine())
            .find(|f| network_fine(*f))
            .or(oui_fine.filter(|f| network_fine(*f)));
        let fine = model_fine.unwrap_or(match descriptor.interface {
            Interface::WiFi => FineClass::WifiExtender,
            Interface::Wired => FineClass::PowerlineEth,
        });
        return GroundTruthLabel {
            mac,
            coarse: Some(CoarseClass::NetworkEquipment),
            fine: Some(fine),
            evidence,
        };
    }

    // Collect claims: (coarse, optional fine) per source, in precedence
    // order BSSID > hostname-fine > OUI > hostname-coarse.
    let mut fine_claims: Vec<FineClass> = Vec::new();
    let mut coarse_claims: Vec<CoarseClass> = Vec::new();
    if let Some((fine, _)) = &bssid_evidence {
        fine_claims.push(*fine);
        coarse_claims.push(coarse_of(*fine));
    }
    for m in &hostname_matches {
        if let Some(fine) = m.label.fine() {
            fine_claims.push(fine);
        }
        coarse_claims.push(m.label.coarse());
    }
    if let Some(fine) = oui_fine {
        fine_claims.push(fine);
        coarse_claims.push(coarse_of(fine));
    }

    // Contradictions reject.
    fine_claims.dedup();
    let fine_set: BTreeSet<FineClass> = fine_claims.iter().copied().collect();
    let coarse_set: BTreeSet<CoarseClass> = coarse_claims.iter().copied().collect();
    if fine_set.len() > 1 || coarse_set.len() > 1 {
        evidence.push("reject:conflict".to_string());
        return GroundTruthLabel::unlabeled(mac, evidence);
    }

    let fine = fine_set.into_iter().next();
    let coarse = coarse_set.into_iter().next();
    let Some(coarse) = coarse else {
        return GroundTruthLabel::unlabeled(mac, evidence);
    };

    // Vendor incompatibility: a fired pattern that excludes this OUI's
    // vendor poisons the whole device.
    let device_oui = mac.oui();
    let vendor_conflict = primary_hostname
        .iter()
        .chain(hostname_matches.iter())
        .filter_map(|m| m.pattern_index)
        .any(|idx| {
            rules.spec.hostname_patterns[idx]
                .incompatible_vendors
                .iter()
                .any(|vendor| {
                    rules
                        .vendor_lookup
                        .get(vendor)
                        .map(|ouis| ouis.contains(&device_oui))
                        .unwrap_or(false)
                })
        });
    if vendor_conflict {
        evidence.push("reject:vendor".to_string());
        return GroundTruthLabel::unlabeled(mac, evidence);
    }

    // A handheld cannot sit on a wired interface without an extender.
    if coarse == CoarseClass::MobileHandheld && descriptor.interface == Interface::Wired {
        evidence.push("reject:wired-mobile".to_string());
        return GroundTruthLabel::unlabeled(mac, evidence);
    }

    GroundTruthLabel {
        mac,
        coarse: Some(coarse),
        fine,
        evidence,
    }
}

/// Label every timeline, in input order.
pub fn label_population(
    timelines: &[DeviceTimeline],
    rules: &CompiledRuleset,
) -> Vec<GroundTruthLabel> {
    use rayon::prelude::*;
    timelines
        .par_iter()
        .map(|t| label_device(t, rules))
        .collect()
}
