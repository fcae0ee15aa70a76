use std::fmt;

use serde::{Deserialize, Serialize};

/// Vehicle class code as recorded at the gantry. Unknown codes are kept
/// as-is so that new classes aggregate under their raw value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleType(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleLabel {
    Trailer,
    Car,
    Truck,
    Bus,
    BigTruck,
    Unknown(u16),
}

impl VehicleType {
    pub const TRAILER: VehicleType = VehicleType(5);
    pub const CAR: VehicleType = VehicleType(31);
    pub const TRUCK: VehicleType = VehicleType(32);
    pub const BUS: VehicleType = VehicleType(41);
    pub const BIG_TRUCK: VehicleType = VehicleType(42);

    pub const KNOWN: [VehicleType; 5] = [
        Self::TRAILER,
        Self::CAR,
        Self::TRUCK,
        Self::BUS,
        Self::BIG_TRUCK,
    ];

    pub fn code(self) -> u16 {
        self.0
    }

    pub fn label(self) -> VehicleLabel {
        match self.0 {
            5 => VehicleLabel::Trailer,
            31 => VehicleLabel::Car,
            32 => VehicleLabel::Truck,
            41 => VehicleLabel::Bus,
            42 => VehicleLabel::BigTruck,
            other => VehicleLabel::Unknown(other),
        }
    }
}

impl fmt::Display for VehicleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VehicleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleLabel::Trailer => f.write_str("Trailer"),
            VehicleLabel::Car => f.write_str("Car/Sedan"),
            VehicleLabel::Truck => f.write_str("Truck"),
            VehicleLabel::Bus => f.write_str("Bus"),
            VehicleLabel::BigTruck => f.write_str("BigTruck"),
            VehicleLabel::Unknown(code) => write!(f, "Unknown({code})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_codes() {
        assert_eq!(VehicleType(5).label(), VehicleLabel::Trailer);
        assert_eq!(VehicleType(31).label(), VehicleLabel::Car);
        assert_eq!(VehicleType(32).label(), VehicleLabel::Truck);
        assert_eq!(VehicleType(41).label(), VehicleLabel::Bus);
        assert_eq!(VehicleType(42).label(), VehicleLabel::BigTruck);
    }

    #[test]
    fn unknown_codes_preserved() {
        assert_eq!(VehicleType(99).label(), VehicleLabel::Unknown(99));
        assert_eq!(VehicleType(99).label().to_string(), "Unknown(99)");
        assert_eq!(serde_json::to_string(&VehicleType(99)).unwrap(), "99");
    }
}
