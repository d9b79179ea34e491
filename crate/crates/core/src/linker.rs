//! Entity and property linking.
//!
//! A term is searched in the label index, the top hits are re-ranked by
//! Levenshtein distance between the normalized term and the matched label,
//! and the closest hit becomes the link. Each link carries a confidence
//! that decays from 1 toward `1 - u` as the edit distance grows:
//!
//! ```text
//! c(ε) = (1 - u) + u · p^ε
//! ```

use serde::{Deserialize, Serialize};

use crate::index::{LabelIndex, SearchHit, DEFAULT_LIMIT};
use crate::model::{normalize, LinkCandidate, LinkedStatement, RawTriple, RecordKind};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Per-edit probability of success.
    pub p: f64,
    /// Weight of the uncertain part; confidence never drops below `1 - u`.
    pub u: f64,
    /// A slot is linkable when its link confidence reaches this value.
    pub theta_link: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        ConfidenceParams {
            p: 0.999,
            u: 0.5,
            theta_link: 0.999,
        }
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("p", self.p), ("u", self.u), ("theta_link", self.theta_link)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        Ok(())
    }
}

/// Levenshtein distance over the characters of the normalized inputs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = normalize(a).chars().collect();
    let b: Vec<char> = normalize(b).chars().collect();
    levenshtein(&a, &b)
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[b.len()]
}

/// `(1 - u) + u · p^eps`.
pub fn link_confidence(eps: usize, params: &ConfidenceParams) -> f64 {
    if eps == 0 {
        return 1.0;
    }
    let decay = (eps as f64 * params.p.ln()).exp();
    (1.0 - params.u) + params.u * decay
}

/// Links one term: minimum edit distance among the top-10 search hits.
///
/// Ties at equal distance go to the higher base score, then the lower
/// numeric id, then the shorter and lexicographically smaller label.
pub fn link_term(index: &LabelIndex, term: &str, params: &ConfidenceParams) -> Option<LinkCandidate> {
    let query: Vec<char> = normalize(term).chars().collect();
    index
        .search(term, DEFAULT_LIMIT)
        .into_iter()
        .map(|hit| {
            let label: Vec<char> = normalize(hit.label).chars().collect();
            (levenshtein(&query, &label), hit)
        })
        .min_by(|(da, a), (db, b)| {
            da.cmp(db)
                .then(b.base_score.cmp(&a.base_score))
                .then(a.id.number().cmp(&b.id.number()))
                .then(a.id.cmp(b.id))
                .then(a.label.chars().count().cmp(&b.label.chars().count()))
                .then(a.label.cmp(b.label))
        })
        .map(|(eps, hit): (usize, SearchHit<'_>)| LinkCandidate {
            id: hit.id.clone(),
            matched_label: hit.label.to_string(),
            preferred_label: hit.record.preferred_label.clone(),
            edit_distance: eps,
            confidence: link_confidence(eps, params),
        })
}

/// Links subject and object against entities, predicate against
/// properties. Literal objects are never linked.
pub fn link_statement(
    raw: &RawTriple,
    entities: &LabelIndex,
    properties: &LabelIndex,
    params: &ConfidenceParams,
) -> LinkedStatement {
    debug_assert_eq!(entities.kind(), RecordKind::Entity);
    debug_assert_eq!(properties.kind(), RecordKind::Property);
    let subject_link = link_term(entities, &raw.subject, params);
    let predicate_link = link_term(properties, &raw.predicate, params);
    let object_link = if raw.is_literal() {
        None
    } else {
        link_term(entities, &raw.object, params)
    };
    let statement_confidence = statement_confidence(
        raw.is_literal(),
        subject_link.as_ref(),
        predicate_link.as_ref(),
        object_link.as_ref(),
    );
    LinkedStatement {
        raw: raw.clone(),
        subject_link,
        predicate_link,
        object_link,
        statement_confidence,
    }
}

/// Product of the required link confidences, or `None` when one is missing.
pub fn statement_confidence(
    literal: bool,
    subject: Option<&LinkCandidate>,
    predicate: Option<&LinkCandidate>,
    object: Option<&LinkCandidate>,
) -> Option<f64> {
    let base = subject?.confidence * predicate?.confidence;
    if literal {
        Some(base)
    } else {
        Some(base * object?.confidence)
    }
}

/// Links a batch of triples; output order follows input order.
pub fn link_batch(
    triples: &[RawTriple],
    entities: &LabelIndex,
    properties: &LabelIndex,
    params: &ConfidenceParams,
    mode: ExecMode,
) -> Vec<LinkedStatement> {
    par::map(triples, mode, |t| link_statement(t, entities, properties, params))
}

/// Replaces each linked slot's text with the record's preferred label.
pub fn correct_labels(stmt: &LinkedStatement) -> RawTriple {
    let pick = |link: &Option<LinkCandidate>, text: &str| {
        link.as_ref()
            .map(|l| l.preferred_label.clone())
            .unwrap_or_else(|| text.to_string())
    };
    let raw = &stmt.raw;
    RawTriple {
        subject: pick(&stmt.subject_link, &raw.subject),
        predicate: pick(&stmt.predicate_link, &raw.predicate),
        object: if raw.is_literal() {
            raw.object.clone()
        } else {
            pick(&stmt.object_link, &raw.object)
        },
        literal_type: raw.literal_type.clone(),
    }
}

/// Whether a slot link clears the linkability threshold.
pub fn is_linkable(link: Option<&LinkCandidate>, params: &ConfidenceParams) -> bool {
    link.is_some_and(|l| l.confidence >= params.theta_link)
}
