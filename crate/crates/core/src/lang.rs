//! Language codes and language pairs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("invalid ISO 639-1 language code {0:?}")]
    InvalidCode(String),
    #[error("invalid language pair {0:?}, expected e.g. \"en-fr\"")]
    InvalidPair(String),
    #[error("language pair needs two different languages, got {0}-{0}")]
    SameLanguage(Lang),
}

/// Two-letter ISO 639-1 language code, stored lowercase.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lang([u8; 2]);

impl Lang {
    pub const EN: Lang = Lang(*b"en");
    pub const DE: Lang = Lang(*b"de");
    pub const ES: Lang = Lang(*b"es");
    pub const FR: Lang = Lang(*b"fr");

    pub fn as_str(&self) -> &str {
        // Both bytes are ASCII lowercase letters by construction.
        std::str::from_utf8(&self.0).expect("ascii language code")
    }
}

impl FromStr for Lang {
    type Err = LangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        if b.len() == 2 && b.iter().all(u8::is_ascii_alphabetic) {
            Ok(Lang([b[0].to_ascii_lowercase(), b[1].to_ascii_lowercase()]))
        } else {
            Err(LangError::InvalidCode(s.to_string()))
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lang({})", self.as_str())
    }
}

impl Serialize for Lang {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Lang {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The pivot language and the partner language it is paired with.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LanguagePair {
    pub pivot: Lang,
    pub partner: Lang,
}

impl LanguagePair {
    pub fn new(pivot: Lang, partner: Lang) -> Result<Self, LangError> {
        if pivot == partner {
            return Err(LangError::SameLanguage(pivot));
        }
        Ok(LanguagePair { pivot, partner })
    }

    pub fn langs(&self) -> [Lang; 2] {
        [self.pivot, self.partner]
    }

    pub fn contains(&self, lang: Lang) -> bool {
        self.pivot == lang || self.partner == lang
    }
}

impl FromStr for LanguagePair {
    type Err = LangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['-', '_'])
            .ok_or_else(|| LangError::InvalidPair(s.to_string()))?;
        LanguagePair::new(a.parse()?, b.parse()?)
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.pivot, self.partner)
    }
}

impl fmt::Debug for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LanguagePair({self})")
    }
}

impl Serialize for LanguagePair {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguagePair {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
