//! Test-only oracles and fixtures. Nothing here calls into the code paths it
//! is used to check: search, linking and assignment are recomputed by
//! exhaustive enumeration.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use loke_core::index::{read_dump, LabelIndex};
use loke_core::model::{KbRecord, RawTriple, RecordKind};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn toy_indices() -> (LabelIndex, LabelIndex) {
    let ents = LabelIndex::build(RecordKind::Entity, read_dump(fixture("toy_entities.jsonl")).unwrap()).unwrap();
    let props = LabelIndex::build(RecordKind::Property, read_dump(fixture("toy_properties.jsonl")).unwrap()).unwrap();
    (ents, props)
}

/// Lowercase + whitespace collapse + edge-punctuation stripping, written
/// independently of the library tokenizer for ASCII test vocabularies.
pub fn ascii_tokens(s: &str) -> Vec<String> {
    s.to_ascii_lowercase()
        .split_ascii_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_ascii_alphanumeric()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn ascii_normal(s: &str) -> String {
    s.to_ascii_lowercase().split_ascii_whitespace().collect::<Vec<_>>().join(" ")
}

/// Full-matrix Levenshtein on chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanHit {
    pub id: String,
    pub label: String,
    pub score: usize,
}

/// Every (id, label) pair scored by shared distinct tokens, ranked by the
/// declared order, truncated to `limit`.
pub fn brute_search(records: &[KbRecord], query: &str, limit: usize) -> Vec<ScanHit> {
    let q: HashSet<String> = ascii_tokens(query).into_iter().collect();
    let mut hits = Vec::new();
    for r in records {
        let mut seen = HashSet::new();
        for label in std::iter::once(&r.preferred_label).chain(r.aliases.iter()) {
            if !seen.insert(label.clone()) {
                continue;
            }
            let toks: HashSet<String> = ascii_tokens(label).into_iter().collect();
            let score = q.intersection(&toks).count();
            if score > 0 {
                hits.push(ScanHit {
                    id: r.id.to_string(),
                    label: label.clone(),
                    score,
                });
            }
        }
    }
    hits.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(a.label.chars().count().cmp(&b.label.chars().count()))
            .then(a.id.cmp(&b.id))
            .then(a.label.cmp(&b.label))
    });
    hits.truncate(limit);
    hits
}

/// Closest hit within the brute-force top-10 pool.
pub fn brute_link(records: &[KbRecord], term: &str) -> Option<(String, String, usize)> {
    let q = ascii_normal(term);
    let pool = brute_search(records, term, 10);
    pool.into_iter()
        .map(|h| (levenshtein(&q, &ascii_normal(&h.label)), h))
        .min_by(|(da, a), (db, b)| {
            let num = |id: &str| id[1..].parse::<u64>().unwrap();
            da.cmp(db)
                .then(b.score.cmp(&a.score))
                .then(num(&a.id).cmp(&num(&b.id)))
                .then(a.label.chars().count().cmp(&b.label.chars().count()))
                .then(a.label.cmp(&b.label))
        })
        .map(|(d, h)| (h.id, h.label, d))
}

/// Max one-to-one assignment value by enumerating every injection of the
/// smaller side into the larger.
pub fn brute_assignment(w: &[Vec<f64>]) -> f64 {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    fn rec(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == w.len() {
            *best = best.max(acc);
            return;
        }
        // leave this row unmatched
        rec(w, row + 1, used, acc, best);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                rec(w, row + 1, used, acc + w[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = 0.0;
    rec(w, 0, &mut vec![false; cols], 0.0, &mut best);
    best
}

/// Token-multiset overlap, recomputed from scratch.
pub fn brute_pair(pred: &RawTriple, gold: &RawTriple) -> (f64, f64) {
    let bag = |t: &RawTriple| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for f in [&t.subject, &t.predicate, &t.object] {
            for tok in ascii_tokens(f) {
                *m.entry(tok).or_default() += 1;
            }
        }
        m
    };
    let (p, g) = (bag(pred), bag(gold));
    let mut shared = 0;
    for (tok, n) in &p {
        if let Some(m) = g.get(tok) {
            shared += (*n).min(*m);
        }
    }
    let np: usize = p.values().sum();
    let ng: usize = g.values().sum();
    let div = |d: usize| if d == 0 { 0.0 } else { shared as f64 / d as f64 };
    (div(np), div(ng))
}

pub const VOCAB: &[&str] = &[
    "north", "south", "river", "city", "new", "york", "old", "saint", "lake", "port", "mount", "bay",
    "green", "red", "upper", "lower", "east", "west", "fort", "glen", "ash", "oak", "elm", "pine",
];

pub fn random_label<R: Rng>(rng: &mut R, vocab: &[&str]) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Random entity records with unique ids and 0-2 aliases each.
pub fn random_records<R: Rng>(rng: &mut R, n: usize, vocab: &[&str]) -> Vec<KbRecord> {
    let mut ids: Vec<u64> = (1..=(n as u64 * 3)).collect();
    ids.shuffle(rng);
    ids.truncate(n);
    ids.into_iter()
        .map(|id| {
            let label = random_label(rng, vocab);
            let aliases: Vec<String> = (0..rng.gen_range(0..=2)).map(|_| random_label(rng, vocab)).collect();
            let aliases: Vec<&str> = aliases.iter().map(String::as_str).collect();
            KbRecord::new(&format!("Q{id}"), &label, &aliases).unwrap()
        })
        .collect()
}
