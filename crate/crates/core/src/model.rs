//! Shared value types and text normalization.

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use unicode_normalization::UnicodeNormalization;

use crate::error::Error;

/// NFC, lowercase, collapse whitespace runs to one space, trim.
pub fn normalize(text: &str) -> String {
    let folded: String = text.nfc().flat_map(char::to_lowercase).collect();
    // lowercasing can emit decomposed sequences (e.g. U+0130), recompose
    let folded: String = folded.nfc().collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalize, split on whitespace, strip punctuation at token edges.
///
/// Hyphens and apostrophes survive inside a token ("al-farra", "bob's")
/// but not at its edges.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text)
        .split(' ')
        .filter_map(|raw| {
            let tok = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!tok.is_empty()).then(|| tok.to_string())
        })
        .collect()
}

/// An unlinked extraction row: `[subject, predicate, object]` or
/// `[subject, predicate, value, type]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub literal_type: Option<String>,
}

impl RawTriple {
    /// Builds a triple, trimming every field and rejecting blanks.
    pub fn new(
        subject: impl AsRef<str>,
        predicate: impl AsRef<str>,
        object: impl AsRef<str>,
    ) -> Result<Self, Error> {
        Self::build(subject.as_ref(), predicate.as_ref(), object.as_ref(), None)
    }

    pub fn literal(
        subject: impl AsRef<str>,
        predicate: impl AsRef<str>,
        value: impl AsRef<str>,
        literal_type: impl AsRef<str>,
    ) -> Result<Self, Error> {
        Self::build(
            subject.as_ref(),
            predicate.as_ref(),
            value.as_ref(),
            Some(literal_type.as_ref()),
        )
    }

    fn build(s: &str, p: &str, o: &str, t: Option<&str>) -> Result<Self, Error> {
        let field = |name: &str, v: &str| {
            let v = v.trim();
            if v.is_empty() {
                Err(Error::InvalidTriple(format!("{name} is empty")))
            } else {
                Ok(v.to_string())
            }
        };
        Ok(Self {
            subject: field("subject", s)?,
            predicate: field("predicate", p)?,
            object: field("object", o)?,
            literal_type: t.map(|t| field("literal type", t)).transpose()?,
        })
    }

    pub fn is_literal(&self) -> bool {
        self.literal_type.is_some()
    }

    /// The 3- or 4-element row form.
    pub fn to_row(&self) -> Vec<&str> {
        let mut row = vec![
            self.subject.as_str(),
            self.predicate.as_str(),
            self.object.as_str(),
        ];
        if let Some(t) = &self.literal_type {
            row.push(t);
        }
        row
    }

    /// Parses a row of 3 or 4 strings.
    pub fn from_row<S: AsRef<str>>(row: &[S]) -> Result<Self, Error> {
        match row {
            [s, p, o] => Self::new(s, p, o),
            [s, p, o, t] => Self::literal(s, p, o, t),
            _ => Err(Error::InvalidTriple(format!(
                "expected 3 or 4 elements, got {}",
                row.len()
            ))),
        }
    }
}

impl fmt::Display for RawTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; {}; {}", self.subject, self.predicate, self.object)?;
        if let Some(t) = &self.literal_type {
            write!(f, " ({t})")?;
        }
        Ok(())
    }
}

impl Serialize for RawTriple {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let row = self.to_row();
        let mut seq = serializer.serialize_seq(Some(row.len()))?;
        for v in row {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for RawTriple {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RowVisitor;
        impl<'de> Visitor<'de> for RowVisitor {
            type Value = RawTriple;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of 3 or 4 non-empty strings")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<RawTriple, A::Error> {
                let mut row: Vec<String> = Vec::with_capacity(4);
                while let Some(v) = seq.next_element::<String>()? {
                    row.push(v);
                }
                RawTriple::from_row(&row).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(RowVisitor)
    }
}

/// Which knowledge-base namespace a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Entity,
    Property,
}

impl RecordKind {
    pub fn prefix(self) -> char {
        match self {
            RecordKind::Entity => 'Q',
            RecordKind::Property => 'P',
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Entity => "entity",
            RecordKind::Property => "property",
        })
    }
}

impl std::str::FromStr for RecordKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "entity" | "entities" => Ok(RecordKind::Entity),
            "property" | "properties" => Ok(RecordKind::Property),
            other => Err(Error::InvalidRecord(format!("unknown record kind {other:?}"))),
        }
    }
}

/// Knowledge-base identifier such as `Q837` or `P17`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KbId(String);

impl KbId {
    pub fn parse(s: &str) -> Result<Self, Error> {
        let mut chars = s.chars();
        match chars.next() {
            Some('Q' | 'P') if s.len() > 1 && chars.all(|c| c.is_ascii_digit()) => {
                Ok(KbId(s.to_string()))
            }
            _ => Err(Error::InvalidRecord(format!("malformed identifier {s:?}"))),
        }
    }

    pub fn kind(&self) -> RecordKind {
        if self.0.starts_with('Q') {
            RecordKind::Entity
        } else {
            RecordKind::Property
        }
    }

    /// Numeric part, used for tie-breaking.
    pub fn number(&self) -> u64 {
        // overlong digit strings saturate; ordering among them falls back to the string
        self.0[1..].parse().unwrap_or(u64::MAX)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for KbId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        KbId::parse(&s)
    }
}

impl From<KbId> for String {
    fn from(id: KbId) -> String {
        id.0
    }
}

impl fmt::Display for KbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One knowledge-base row. Entity and property dumps share this shape;
/// the id prefix decides the kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbRecord {
    pub id: KbId,
    #[serde(rename = "label")]
    pub preferred_label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

pub type EntityRecord = KbRecord;
pub type PropertyRecord = KbRecord;

impl KbRecord {
    pub fn new(id: &str, label: &str, aliases: &[&str]) -> Result<Self, Error> {
        let rec = KbRecord {
            id: KbId::parse(id)?,
            preferred_label: label.to_string(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.preferred_label.trim().is_empty() {
            return Err(Error::InvalidRecord(format!(
                "{} has an empty preferred label",
                self.id
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> RecordKind {
        self.id.kind()
    }

    /// Preferred label followed by aliases.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.preferred_label.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

/// A knowledge-base hit for one extracted term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate {
    pub id: KbId,
    pub matched_label: String,
    pub preferred_label: String,
    pub edit_distance: usize,
    pub confidence: f64,
}

/// A raw triple with its per-slot links and joint confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedStatement {
    pub raw: RawTriple,
    pub subject_link: Option<LinkCandidate>,
    pub predicate_link: Option<LinkCandidate>,
    pub object_link: Option<LinkCandidate>,
    pub statement_confidence: Option<f64>,
}

impl LinkedStatement {
    /// An unlinked statement, as produced by an extractor with no linker.
    pub fn unlinked(raw: RawTriple) -> Self {
        LinkedStatement {
            raw,
            subject_link: None,
            predicate_link: None,
            object_link: None,
            statement_confidence: None,
        }
    }
}
