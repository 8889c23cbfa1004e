use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The seven relation types of the terminology graph.
///
/// Integer codes are stable and are what link-prediction labels carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    Parent,
    Child,
    Synonym,
    AllowedQualifier,
    QualifiedBy,
    Broader,
    Narrower,
}

impl RelationType {
    pub const ALL: [RelationType; 7] = [
        RelationType::Parent,
        RelationType::Child,
        RelationType::Synonym,
        RelationType::AllowedQualifier,
        RelationType::QualifiedBy,
        RelationType::Broader,
        RelationType::Narrower,
    ];

    /// Relation types a link-prediction head has to choose between.
    pub const LINK_PREDICTION: [RelationType; 6] = [
        RelationType::Parent,
        RelationType::Child,
        RelationType::AllowedQualifier,
        RelationType::QualifiedBy,
        RelationType::Broader,
        RelationType::Narrower,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Default rendered token, e.g. `[REL_PAR]`.
    pub fn default_token(self) -> &'static str {
        match self {
            RelationType::Parent => "[REL_PAR]",
            RelationType::Child => "[REL_CHD]",
            RelationType::Synonym => "[REL_SY]",
            RelationType::AllowedQualifier => "[REL_AQ]",
            RelationType::QualifiedBy => "[REL_QB]",
            RelationType::Broader => "[REL_RB]",
            RelationType::Narrower => "[REL_RN]",
        }
    }

    /// Release relation code this type is mapped from by default.
    pub fn release_code(self) -> &'static str {
        match self {
            RelationType::Parent => "PAR",
            RelationType::Child => "CHD",
            RelationType::Synonym => "SY",
            RelationType::AllowedQualifier => "AQ",
            RelationType::QualifiedBy => "QB",
            RelationType::Broader => "RB",
            RelationType::Narrower => "RN",
        }
    }

    pub fn from_release_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.release_code() == code)
    }

    /// Position in the six-way link-prediction label space; `None` for synonyms.
    pub fn link_prediction_index(self) -> Option<usize> {
        Self::LINK_PREDICTION.iter().position(|&r| r == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Parent => "parent",
            RelationType::Child => "child",
            RelationType::Synonym => "synonym",
            RelationType::AllowedQualifier => "allowed_qualifier",
            RelationType::QualifiedBy => "qualified_by",
            RelationType::Broader => "broader",
            RelationType::Narrower => "narrower",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s || r.release_code() == s)
            .ok_or_else(|| Error::Config(format!("unknown relation type `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn codes_are_a_bijection() {
        let codes: HashSet<u8> = RelationType::ALL.iter().map(|r| r.code()).collect();
        assert_eq!(codes, (0..7).collect());
        for r in RelationType::ALL {
            assert_eq!(RelationType::from_code(r.code()), Some(r));
        }
        assert_eq!(RelationType::from_code(7), None);
    }

    #[test]
    fn tokens_distinct_and_non_empty() {
        let tokens: HashSet<&str> = RelationType::ALL.iter().map(|r| r.default_token()).collect();
        assert_eq!(tokens.len(), 7);
        assert!(tokens.iter().all(|t| !t.is_empty()));
    }

    #[test]
    fn link_prediction_excludes_synonym() {
        assert_eq!(RelationType::Synonym.link_prediction_index(), None);
        assert_eq!(RelationType::Narrower.link_prediction_index(), Some(5));
        assert_eq!(RelationType::LINK_PREDICTION.len(), 6);
    }

    #[test]
    fn parses_names_and_codes() {
        assert_eq!("RB".parse::<RelationType>().unwrap(), RelationType::Broader);
        assert_eq!(
            "qualified_by".parse::<RelationType>().unwrap(),
            RelationType::QualifiedBy
        );
        assert!("RO".parse::<RelationType>().is_err());
    }
}
