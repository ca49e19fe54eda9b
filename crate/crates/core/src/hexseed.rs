//! Serde adapter writing 64-bit seeds as `0x`-prefixed hex strings.

use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_seed(*seed))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    let text = String::deserialize(d)?;
    parse_seed(&text).map_err(D::Error::custom)
}

pub fn format_seed(seed: u64) -> String {
    format!("0x{seed:016x}")
}

/// Accepts hex with or without a `0x` prefix.
pub fn parse_seed(text: &str) -> Result<u64, String> {
    let digits = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")).unwrap_or(text);
    if digits.is_empty() || digits.len() > 16 {
        return Err(format!("seed {text:?} is not a 64-bit hex value"));
    }
    u64::from_str_radix(digits, 16).map_err(|e| format!("seed {text:?}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        assert_eq!(format_seed(0xbeef), "0x000000000000beef");
        assert_eq!(parse_seed("0x000000000000beef"), Ok(0xbeef));
        assert_eq!(parse_seed("BEEF"), Ok(0xbeef));
        assert!(parse_seed("0x").is_err());
        assert!(parse_seed("0x1_0000_0000_0000_0000").is_err());
        assert!(parse_seed("xyz").is_err());
    }
}
