//! N-Triples output for linked statements.
//!
//! Linked slots become knowledge-base IRIs. Unlinked subjects, objects and
//! predicates get deterministic local IRIs so that graphs from separate runs
//! merge by plain union. Predicates are always IRIs.

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::model::{normalize, LinkCandidate, LinkedStatement};
use crate::par::{self, ExecMode};

pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

const IRI_SAFE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitPolicy {
    pub entity_base: String,
    pub property_base: String,
    pub local_base: String,
    pub min_confidence: f64,
}

impl Default for EmitPolicy {
    fn default() -> Self {
        EmitPolicy {
            entity_base: "http://www.wikidata.org/entity/".into(),
            property_base: "http://www.wikidata.org/prop/direct/".into(),
            local_base: "urn:loke:term:".into(),
            min_confidence: 0.0,
        }
    }
}

impl EmitPolicy {
    /// Every base must be an absolute IRI (scheme followed by ':').
    pub fn validate(&self) -> Result<(), String> {
        for base in [&self.entity_base, &self.property_base, &self.local_base] {
            if !is_absolute_iri(base) {
                return Err(format!("{base:?} is not an absolute IRI"));
            }
        }
        Ok(())
    }
}

fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        && !s.chars().any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
        && !rest.is_empty()
}

/// XSD datatype IRI for a literal type tag; unknown tags map to `xsd:string`.
pub fn map_datatype(tag: &str) -> String {
    let local = match tag.trim().to_lowercase().as_str() {
        "year" => "gYear",
        "date" => "date",
        "number" | "quantity" => "decimal",
        _ => "string",
    };
    format!("{XSD}{local}")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(String),
    Literal { lexical: String, datatype: String },
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => write!(f, "<{iri}>"),
            Term::Literal { lexical, datatype } => {
                f.write_str("\"")?;
                for c in lexical.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c if (c as u32) < 0x20 || c == '\u{7f}' => write!(f, "\\u{:04X}", c as u32)?,
                        c => write!(f, "{c}")?,
                    }
                }
                write!(f, "\"^^<{datatype}>")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

fn local_iri(policy: &EmitPolicy, label: &str) -> String {
    format!(
        "{}{}",
        policy.local_base,
        utf8_percent_encode(&normalize(label), IRI_SAFE)
    )
}

fn resource(link: &Option<LinkCandidate>, base: &str, policy: &EmitPolicy, label: &str) -> Term {
    match link {
        Some(l) => Term::Iri(format!("{base}{}", l.id)),
        None => Term::Iri(local_iri(policy, label)),
    }
}

/// The RDF triple for one statement.
pub fn statement_triple(stmt: &LinkedStatement, policy: &EmitPolicy) -> Triple {
    let raw = &stmt.raw;
    let object = match &raw.literal_type {
        Some(tag) => Term::Literal {
            lexical: raw.object.clone(),
            datatype: map_datatype(tag),
        },
        None => resource(&stmt.object_link, &policy.entity_base, policy, &raw.object),
    };
    Triple {
        subject: resource(&stmt.subject_link, &policy.entity_base, policy, &raw.subject),
        predicate: resource(&stmt.predicate_link, &policy.property_base, policy, &raw.predicate),
        object,
    }
}

/// Sorted, deduplicated N-Triples for statements at or above the policy's
/// confidence floor (missing confidence counts as 0).
pub fn emit(statements: &[LinkedStatement], policy: &EmitPolicy) -> String {
    emit_with(statements, policy, ExecMode::default())
}

pub fn emit_with(statements: &[LinkedStatement], policy: &EmitPolicy, mode: ExecMode) -> String {
    let lines = par::map(statements, mode, |s| {
        (s.statement_confidence.unwrap_or(0.0) >= policy.min_confidence)
            .then(|| statement_triple(s, policy).to_string())
    });
    let set: BTreeSet<String> = lines.into_iter().flatten().collect();
    let mut out = String::new();
    for line in set {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Parses lines written by [`emit`] back into triples.
pub fn parse_ntriples(text: &str) -> Result<Vec<Triple>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

fn parse_line(line: &str) -> Result<Triple, String> {
    let mut rest = line.trim();
    let subject = take_iri(&mut rest)?;
    let predicate = take_iri(&mut rest)?;
    let object = if rest.trim_start().starts_with('<') {
        take_iri(&mut rest)?
    } else {
        take_literal(&mut rest)?
    };
    if rest.trim() != "." {
        return Err(format!("expected terminating '.', found {rest:?}"));
    }
    Ok(Triple {
        subject,
        predicate,
        object,
    })
}

fn take_iri(rest: &mut &str) -> Result<Term, String> {
    let s = rest.trim_start();
    let body = s.strip_prefix('<').ok_or("expected '<'")?;
    let end = body.find('>').ok_or("unterminated IRI")?;
    *rest = &body[end + 1..];
    Ok(Term::Iri(body[..end].to_string()))
}

fn take_literal(rest: &mut &str) -> Result<Term, String> {
    let s = rest.trim_start();
    let mut chars = s.strip_prefix('"').ok_or("expected literal")?.char_indices();
    let mut lexical = String::new();
    let close = loop {
        match chars.next() {
            None => return Err("unterminated literal".into()),
            Some((i, '"')) => break i,
            Some((_, '\\')) => match chars.next() {
                Some((_, 'n')) => lexical.push('\n'),
                Some((_, 'r')) => lexical.push('\r'),
                Some((_, 't')) => lexical.push('\t'),
                Some((_, '"')) => lexical.push('"'),
                Some((_, '\\')) => lexical.push('\\'),
                Some((_, 'u')) => {
                    let hex: String = (0..4).filter_map(|_| chars.next().map(|(_, c)| c)).collect();
                    let cp = u32::from_str_radix(&hex, 16).map_err(|e| e.to_string())?;
                    lexical.push(char::from_u32(cp).ok_or("bad escape")?);
                }
                other => return Err(format!("bad escape {other:?}")),
            },
            Some((_, c)) => lexical.push(c),
        }
    };
    let after = &s[1 + close + 1..];
    let mut tail = after.strip_prefix("^^").ok_or("expected datatype")?;
    let Term::Iri(datatype) = take_iri(&mut tail)? else {
        unreachable!()
    };
    *rest = tail;
    Ok(Term::Literal { lexical, datatype })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KbId, RawTriple};

    fn link(id: &str) -> Option<LinkCandidate> {
        Some(LinkCandidate {
            id: KbId::parse(id).unwrap(),
            matched_label: String::new(),
            preferred_label: String::new(),
            edit_distance: 0,
            confidence: 1.0,
        })
    }

    #[test]
    fn datatypes() {
        assert_eq!(map_datatype("year"), format!("{XSD}gYear"));
        assert_eq!(map_datatype("Date"), format!("{XSD}date"));
        assert_eq!(map_datatype("quantity"), format!("{XSD}decimal"));
        assert_eq!(map_datatype("frobnitz"), format!("{XSD}string"));
    }

    #[test]
    fn linked_statement_line() {
        let s = LinkedStatement {
            raw: RawTriple::new("Tiram", "country", "Nepal").unwrap(),
            subject_link: link("Q7"),
            predicate_link: link("P17"),
            object_link: link("Q837"),
            statement_confidence: Some(1.0),
        };
        assert_eq!(
            emit(&[s.clone(), s], &EmitPolicy::default()),
            "<http://www.wikidata.org/entity/Q7> <http://www.wikidata.org/prop/direct/P17> <http://www.wikidata.org/entity/Q837> .\n"
        );
    }

    #[test]
    fn literal_and_local_terms() {
        let s = LinkedStatement {
            subject_link: link("Q1"),
            ..LinkedStatement::unlinked(RawTriple::literal("Bahaa al-Farra", "date of birth", "10 March 1991", "date").unwrap())
        };
        let out = emit(&[s], &EmitPolicy::default());
        assert_eq!(
            out,
            "<http://www.wikidata.org/entity/Q1> <urn:loke:term:date%20of%20birth> \"10 March 1991\"^^<http://www.w3.org/2001/XMLSchema#date> .\n"
        );
    }

    #[test]
    fn confidence_floor() {
        let mut s = LinkedStatement::unlinked(RawTriple::new("a", "b", "c").unwrap());
        let policy = EmitPolicy { min_confidence: 0.5, ..Default::default() };
        assert_eq!(emit(&[s.clone()], &policy), "");
        s.statement_confidence = Some(0.5);
        assert_eq!(emit(&[s], &policy).lines().count(), 1);
    }

    #[test]
    fn escaping_round_trip() {
        let s = LinkedStatement::unlinked(
            RawTriple::literal("x", "says", "he said \"hi\"\\\u{1}é", "string").unwrap(),
        );
        let out = emit(&[s], &EmitPolicy::default());
        let parsed = parse_ntriples(&out).unwrap();
        assert_eq!(
            parsed[0].object,
            Term::Literal { lexical: "he said \"hi\"\\\u{1}é".into(), datatype: format!("{XSD}string") }
        );
        let again: String = parsed.iter().map(|t| format!("{t}\n")).collect();
        assert_eq!(again, out);
    }

    #[test]
    fn policy_validation() {
        assert!(EmitPolicy::default().validate().is_ok());
        let bad = EmitPolicy { local_base: "relative/path/".into(), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EmitPolicy { entity_base: "http://x y/".into(), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
