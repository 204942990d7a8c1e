//! Census geographic identifiers.
//!
//! A block-group GEOID is a 12-digit string: 2-digit state FIPS, 3-digit
//! county FIPS, 6-digit tract, 1-digit block group. The tract key is the
//! first 11 digits and the county key the first 5, which is the nesting
//! the imputation pools and county aggregation rely on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A validated 12-digit block-group GEOID.
///
/// Ordering is lexicographic on the canonical key, which doubles as the
/// deterministic tie-breaker everywhere in the pipeline.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GeoId {
    key: [u8; 12],
}

impl GeoId {
    pub fn parse(s: &str) -> Result<Self, Error> {
        let bytes = s.as_bytes();
        if bytes.len() != 12 {
            return Err(Error::InvalidGeoId(
                s.to_string(),
                format!("expected 12 characters, got {}", bytes.len()),
            ));
        }
        if !bytes.iter().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidGeoId(
                s.to_string(),
                "non-digit character".to_string(),
            ));
        }
        let mut key = [0u8; 12];
        key.copy_from_slice(bytes);
        Ok(GeoId { key })
    }

    pub fn as_str(&self) -> &str {
        // key is validated ASCII digits
        std::str::from_utf8(&self.key).unwrap()
    }

    /// 2-digit state FIPS prefix.
    pub fn state_fips(&self) -> &str {
        &self.as_str()[..2]
    }

    /// 5-digit county key (state + county FIPS).
    pub fn county_key(&self) -> &str {
        &self.as_str()[..5]
    }

    /// 3-digit county FIPS within the state.
    pub fn county_fips(&self) -> &str {
        &self.as_str()[2..5]
    }

    /// 11-digit tract key (state + county + tract).
    pub fn tract_key(&self) -> &str {
        &self.as_str()[..11]
    }

    /// 6-digit tract code within the county.
    pub fn tract(&self) -> &str {
        &self.as_str()[5..11]
    }

    /// 1-digit block-group code within the tract.
    pub fn block_group(&self) -> &str {
        &self.as_str()[11..]
    }
}

impl fmt::Display for GeoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for GeoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GeoId({})", self.as_str())
    }
}

impl FromStr for GeoId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GeoId::parse(s)
    }
}

impl TryFrom<String> for GeoId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        GeoId::parse(&s)
    }
}

impl From<GeoId> for String {
    fn from(g: GeoId) -> String {
        g.as_str().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_splits() {
        let g = GeoId::parse("360050001001").unwrap();
        assert_eq!(g.state_fips(), "36");
        assert_eq!(g.county_fips(), "005");
        assert_eq!(g.county_key(), "36005");
        assert_eq!(g.tract(), "000100");
        assert_eq!(g.tract_key(), "36005000100");
        assert_eq!(g.block_group(), "1");
        assert_eq!(g.to_string(), "360050001001");
    }

    #[test]
    fn rejects_bad_length_and_nondigits() {
        assert!(GeoId::parse("12345").is_err());
        assert!(GeoId::parse("36005000100x").is_err());
        assert!(GeoId::parse("3600500010011").is_err());
    }

    #[test]
    fn nesting_prefixes_agree() {
        let g = GeoId::parse("481130078021").unwrap();
        assert!(g.tract_key().starts_with(g.county_key()));
        assert!(g.county_key().starts_with(g.state_fips()));
    }

    #[test]
    fn ordering_is_lexicographic() {
        let a = GeoId::parse("010010201001").unwrap();
        let b = GeoId::parse("010010201002").unwrap();
        assert!(a < b);
    }
}
