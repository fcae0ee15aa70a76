use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayString;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Longest freeway code accepted in a gantry id.
pub const MAX_FREEWAY_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bearing {
    North,
    South,
}

impl Bearing {
    pub fn suffix(self) -> char {
        match self {
            Bearing::North => 'N',
            Bearing::South => 'S',
        }
    }
}

/// A non-negative decimal with exactly one fractional digit, stored as
/// tenths. Used for mileages, distances, fees and trip lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Tenths(pub u32);

impl Tenths {
    pub fn from_f64(value: f64) -> Option<Self> {
        let scaled = value * 10.0;
        let rounded = scaled.round();
        if !value.is_finite() || value < 0.0 || (scaled - rounded).abs() > 1e-6 || rounded > u32::MAX as f64 {
            return None;
        }
        Some(Tenths(rounded as u32))
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    pub fn abs_diff(self, other: Tenths) -> Tenths {
        Tenths(self.0.abs_diff(other.0))
    }

    /// Parses the canonical `<digits>.<digit>` form: no sign, no leading
    /// zeros on the integer part, exactly one fractional digit.
    pub fn parse_canonical(s: &str) -> Result<Self, &'static str> {
        let (int, frac) = s.split_once('.').ok_or("missing decimal point")?;
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err("integer part must be digits");
        }
        if int.len() > 1 && int.starts_with('0') {
            return Err("leading zero");
        }
        if frac.len() != 1 || !frac.as_bytes()[0].is_ascii_digit() {
            return Err("expected exactly one fractional digit");
        }
        let whole: u32 = int.parse().map_err(|_| "value out of range")?;
        whole
            .checked_mul(10)
            .and_then(|w| w.checked_add(u32::from(frac.as_bytes()[0] - b'0')))
            .map(Tenths)
            .ok_or("value out of range")
    }
}

impl fmt::Display for Tenths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl std::ops::Add for Tenths {
    type Output = Tenths;
    fn add(self, rhs: Tenths) -> Tenths {
        Tenths(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Tenths {
    fn sum<I: Iterator<Item = Tenths>>(iter: I) -> Tenths {
        iter.fold(Tenths(0), |a, b| a + b)
    }
}

impl Serialize for Tenths {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Tenths {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Tenths::from_f64(value).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "{value} is not a non-negative number with at most one decimal"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed gantry id {text:?}: {reason}")]
pub struct MalformedGantryId {
    pub text: String,
    pub reason: &'static str,
}

/// A toll gantry, written `<freeway>-<mileage>N|S`, e.g. `01F-157.2N`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GantryId {
    freeway: ArrayString<MAX_FREEWAY_LEN>,
    mileage: Tenths,
    bearing: Bearing,
}

impl GantryId {
    pub fn new(freeway: &str, mileage: Tenths, bearing: Bearing) -> Result<Self, MalformedGantryId> {
        let err = |reason| MalformedGantryId {
            text: format!("{freeway}-{mileage}{}", bearing.suffix()),
            reason,
        };
        validate_freeway(freeway).map_err(err)?;
        let freeway = ArrayString::from(freeway).map_err(|_| err("freeway code too long"))?;
        Ok(Self {
            freeway,
            mileage,
            bearing,
        })
    }

    pub fn freeway(&self) -> &str {
        &self.freeway
    }

    pub fn mileage(&self) -> Tenths {
        self.mileage
    }

    pub fn mileage_km(&self) -> f64 {
        self.mileage.as_f64()
    }

    pub fn bearing(&self) -> Bearing {
        self.bearing
    }
}

fn validate_freeway(freeway: &str) -> Result<(), &'static str> {
    if freeway.is_empty() {
        return Err("empty freeway code");
    }
    if freeway.len() > MAX_FREEWAY_LEN {
        return Err("freeway code too long");
    }
    if !freeway.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err("freeway code must be ASCII alphanumeric");
    }
    Ok(())
}

pub fn parse_gantry_id(text: &str) -> Result<GantryId, MalformedGantryId> {
    let err = |reason| MalformedGantryId {
        text: text.to_string(),
        reason,
    };
    let (freeway, rest) = text.split_once('-').ok_or_else(|| err("missing '-' separator"))?;
    validate_freeway(freeway).map_err(err)?;
    let bearing = match rest.as_bytes().last() {
        Some(b'N') => Bearing::North,
        Some(b'S') => Bearing::South,
        _ => return Err(err("bearing suffix must be N or S")),
    };
    let mileage = Tenths::parse_canonical(&rest[..rest.len() - 1]).map_err(err)?;
    Ok(GantryId {
        freeway: ArrayString::from(freeway).map_err(|_| err("freeway code too long"))?,
        mileage,
        bearing,
    })
}

impl FromStr for GantryId {
    type Err = MalformedGantryId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_gantry_id(s)
    }
}

impl fmt::Display for GantryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}{}", self.freeway, self.mileage, self.bearing.suffix())
    }
}

impl fmt::Debug for GantryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GantryId({self})")
    }
}

impl Serialize for GantryId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GantryId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_gantry_id(&text).map_err(serde::de::Error::custom)
    }
}
