use serde::de::{Deserialize, Deserializer};
use serde::ser::{Error, Serialize, Serializer};
use serde_json::value::RawValue;

/// An `f64` written to JSON with 17 significant digits, which is enough for
/// any value to read back bit-identical.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct F17(pub f64);

impl F17 {
    pub fn format(v: f64) -> String {
        format!("{v:.16e}")
    }
}

impl From<f64> for F17 {
    fn from(v: f64) -> Self {
        F17(v)
    }
}

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("cannot serialize non-finite value {}", self.0)));
        }
        let raw = RawValue::from_string(Self::format(self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(F17)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(serde_json::to_string(&F17(0.25)).unwrap(), "2.5000000000000000e-1");
        assert_eq!(serde_json::to_string(&vec![F17(-3.0)]).unwrap(), "[-3.0000000000000000e0]");
        assert!(serde_json::to_string(&F17(f64::NAN)).is_err());
    }

    proptest! {
        #[test]
        fn bit_faithful(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let text = serde_json::to_string(&F17(v)).unwrap();
            let back: F17 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.0.to_bits(), v.to_bits());
        }
    }
}
