//! Domain types shared by every pipeline stage: device identifiers, raw
//! metric samples, per-device timelines, and the two-level category taxonomy.
//!
//! Everything here is an immutable value object; no I/O, no learning.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A 48-bit network interface address.
///
/// Canonical rendering is lowercase colon-separated hex (`aa:bb:cc:dd:ee:ff`);
/// parsing accepts `:` or `-` separators in any case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddress(pub [u8; 6]);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed MAC address: {0:?}")]
pub struct MalformedMac(pub String);

impl MacAddress {
    /// First three octets, identifying the interface vendor.
    pub fn oui(&self) -> Oui {
        Oui([self.0[0], self.0[1], self.0[2]])
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }

    /// True when the two addresses share the first five octets and the last
    /// octets differ by exactly one.
    pub fn is_adjacent(&self, other: &MacAddress) -> bool {
        self.0[..5] == other.0[..5]
            && (self.0[5] as i16 - other.0[5] as i16).abs() == 1
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl FromStr for MacAddress {
    type Err = MalformedMac;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let sep = if text.contains(':') { ':' } else { '-' };
        let parts: Vec<&str> = text.split(sep).collect();
        if parts.len() != 6 {
            return Err(MalformedMac(text.to_string()));
        }
        let mut octets = [0u8; 6];
        for (i, part) in parts.iter().enumerate() {
            if part.len() != 2 {
                return Err(MalformedMac(text.to_string()));
            }
            octets[i] =
                u8::from_str_radix(part, 16).map_err(|_| MalformedMac(text.to_string()))?;
        }
        Ok(MacAddress(octets))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Organizationally unique identifier: the first three MAC octets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Oui(pub [u8; 3]);

impl fmt::Display for Oui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}:{:02x}:{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for Oui {
    type Err = MalformedMac;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let sep = if text.contains(':') { ':' } else { '-' };
        let parts: Vec<&str> = text.split(sep).collect();
        if parts.len() != 3 {
            return Err(MalformedMac(text.to_string()));
        }
        let mut octets = [0u8; 3];
        for (i, part) in parts.iter().enumerate() {
            if part.len() != 2 {
                return Err(MalformedMac(text.to_string()));
            }
            octets[i] =
                u8::from_str_radix(part, 16).map_err(|_| MalformedMac(text.to_string()))?;
        }
        Ok(Oui(octets))
    }
}

impl Serialize for Oui {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Oui {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Physical attachment of a device to the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interface {
    Wired,
    WiFi,
}

/// Static properties of a device: identity, recorded hostnames, attachment,
/// and any WiFi-direct networks it advertised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostDescriptor {
    pub mac: MacAddress,
    /// Deduplicated; a device may accumulate several names over its lifetime.
    pub hostnames: BTreeSet<String>,
    pub interface: Interface,
    /// (ssid, bssid) pairs the device advertised, when observed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advertised_bssids: Option<BTreeSet<(String, MacAddress)>>,
}

/// Counter register width; 16-bit counters wrap even under light traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterWidth {
    W16,
    W32,
}

impl CounterWidth {
    /// Modulus of the counter register.
    pub fn modulus(&self) -> u64 {
        match self {
            CounterWidth::W16 => 1 << 16,
            CounterWidth::W32 => 1 << 32,
        }
    }
}

/// One cumulative traffic reading (bytes since the counter last reset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSample {
    /// Seconds since epoch.
    pub timestamp: i64,
    pub tx_cum: u64,
    pub rx_cum: u64,
    pub width: CounterWidth,
}

/// One throughput reading. The gateway driver reports integers and clips
/// values below 1 kbps to zero, so zero encodes "below 1 kbps".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateSample {
    pub timestamp: i64,
    pub tx_kbps: u64,
    pub rx_kbps: u64,
}

/// One signal-strength reading, in gateway-reported units. The sign
/// convention is whatever the gateway uses; nothing downstream assumes one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RssiSample {
    pub timestamp: i64,
    pub rssi: i32,
}

/// A timestamped hostname observation, kept in file order alongside the
/// deduplicated hostname set so sessions can later be attributed to names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostnameSighting {
    pub timestamp: i64,
    pub hostname: String,
}

/// Everything recorded for one MAC: static descriptors plus the three
/// independently time-ordered metric series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTimeline {
    pub descriptor: HostDescriptor,
    pub counters: Vec<CounterSample>,
    pub rates: Vec<RateSample>,
    pub rssi: Vec<RssiSample>,
    /// Hostname observations in timestamp order.
    pub hostname_sightings: Vec<HostnameSighting>,
}

impl DeviceTimeline {
    pub fn mac(&self) -> MacAddress {
        self.descriptor.mac
    }

    /// True when any counter sample uses a 16-bit register; such series can
    /// wrap more than once between reports and are untrustworthy.
    pub fn unreliable_counters(&self) -> bool {
        self.counters
            .iter()
            .any(|c| c.width == CounterWidth::W16)
    }
}

/// Top-level device class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoarseClass {
    Compute,
    MobileHandheld,
    NetworkEquipment,
    ConsumerElectronics,
}

impl CoarseClass {
    pub const ALL: [CoarseClass; 4] = [
        CoarseClass::Compute,
        CoarseClass::MobileHandheld,
        CoarseClass::NetworkEquipment,
        CoarseClass::ConsumerElectronics,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CoarseClass::Compute => "Compute",
            CoarseClass::MobileHandheld => "MobileHandheld",
            CoarseClass::NetworkEquipment => "NetworkEquipment",
            CoarseClass::ConsumerElectronics => "ConsumerElectronics",
        }
    }
}

impl fmt::Display for CoarseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fine-grained device type. Each value has exactly one coarse parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FineClass {
    LaptopDesktop,
    Smartphone,
    Tablet,
    EReader,
    PowerlineEth,
    WifiExtender,
    SmartTV,
    NAS,
    GameConsole,
    MediaBridge,
    OTTBox,
    PrinterScanner,
    STB,
}

impl FineClass {
    pub const ALL: [FineClass; 13] = [
        FineClass::LaptopDesktop,
        FineClass::Smartphone,
        FineClass::Tablet,
        FineClass::EReader,
        FineClass::PowerlineEth,
        FineClass::WifiExtender,
        FineClass::SmartTV,
        FineClass::NAS,
        FineClass::GameConsole,
        FineClass::MediaBridge,
        FineClass::OTTBox,
        FineClass::PrinterScanner,
        FineClass::STB,
    ];

    /// The coarse parent category.
    pub fn coarse(&self) -> CoarseClass {
        match self {
            FineClass::LaptopDesktop => CoarseClass::Compute,
            FineClass::Smartphone | FineClass::Tablet | FineClass::EReader => {
                CoarseClass::MobileHandheld
            }
            FineClass::PowerlineEth | FineClass::WifiExtender => CoarseClass::NetworkEquipment,
            FineClass::SmartTV
            | FineClass::NAS
            | FineClass::GameConsole
            | FineClass::MediaBridge
            | FineClass::OTTBox
            | FineClass::PrinterScanner
            | FineClass::STB => CoarseClass::ConsumerElectronics,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FineClass::LaptopDesktop => "LaptopDesktop",
            FineClass::Smartphone => "Smartphone",
            FineClass::Tablet => "Tablet",
            FineClass::EReader => "EReader",
            FineClass::PowerlineEth => "PowerlineEth",
            FineClass::WifiExtender => "WifiExtender",
            FineClass::SmartTV => "SmartTV",
            FineClass::NAS => "NAS",
            FineClass::GameConsole => "GameConsole",
            FineClass::MediaBridge => "MediaBridge",
            FineClass::OTTBox => "OTTBox",
            FineClass::PrinterScanner => "PrinterScanner",
            FineClass::STB => "STB",
        }
    }
}

impl fmt::Display for FineClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse a MAC address from text. Accepts `:` or `-` separators, any case.
pub fn parse_mac(text: &str) -> Result<MacAddress, MalformedMac> {
    text.parse()
}

/// Map a fine device type to its coarse parent class.
pub fn coarse_of(fine: FineClass) -> CoarseClass {
    fine.coarse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_mac_examples() {
        let m = parse_mac("00:00:48:12:34:56").unwrap();
        assert_eq!(m.octets(), [0x00, 0x00, 0x48, 0x12, 0x34, 0x56]);

        let m = parse_mac("AA-BB-CC-00-00-00").unwrap();
        assert_eq!(m.to_string(), "aa:bb:cc:00:00:00");

        assert!(parse_mac("zz:00:00:00:00:00").is_err());
        assert!(parse_mac("aa:bb:cc:dd:ee").is_err());
        assert!(parse_mac("aa:bb:cc:dd:ee:ff:00").is_err());
        assert!(parse_mac("aabb:cc:dd:ee:ff").is_err());
    }

    #[test]
    fn oui_is_projection_of_mac() {
        let m = parse_mac("00:00:48:12:34:56").unwrap();
        assert_eq!(m.oui(), Oui([0x00, 0x00, 0x48]));
        assert_eq!(m.oui().to_string(), "00:00:48");
    }

    #[test]
    fn coarse_of_table1() {
        assert_eq!(coarse_of(FineClass::Smartphone), CoarseClass::MobileHandheld);
        assert_eq!(coarse_of(FineClass::WifiExtender), CoarseClass::NetworkEquipment);
        assert_eq!(coarse_of(FineClass::GameConsole), CoarseClass::ConsumerElectronics);
        assert_eq!(coarse_of(FineClass::LaptopDesktop), CoarseClass::Compute);
        // STB is housed under ConsumerElectronics.
        assert_eq!(coarse_of(FineClass::STB), CoarseClass::ConsumerElectronics);
    }

    #[test]
    fn coarse_of_is_total() {
        for fine in FineClass::ALL {
            let parent = coarse_of(fine);
            assert!(CoarseClass::ALL.contains(&parent));
        }
    }

    #[test]
    fn mac_adjacency() {
        let a = parse_mac("aa:bb:cc:dd:ee:10").unwrap();
        let b = parse_mac("aa:bb:cc:dd:ee:11").unwrap();
        let c = parse_mac("aa:bb:cc:dd:ee:12").unwrap();
        let d = parse_mac("aa:bb:cc:dd:ff:11").unwrap();
        assert!(a.is_adjacent(&b));
        assert!(b.is_adjacent(&a));
        assert!(!a.is_adjacent(&c));
        assert!(!a.is_adjacent(&a));
        assert!(!b.is_adjacent(&d));
    }

    proptest! {
        #[test]
        fn mac_render_parse_roundtrip(octets in proptest::array::uniform6(any::<u8>())) {
            let m = MacAddress(octets);
            let parsed = parse_mac(&m.to_string()).unwrap();
            prop_assert_eq!(parsed, m);
        }
    }
}
