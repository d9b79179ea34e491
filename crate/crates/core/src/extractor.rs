//! Prompt rendering, completion retrieval and completion parsing.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::backend::{hex, CompletionBackend, CompletionRequest};
use crate::error::{Error, Result};
use crate::model::RawTriple;
use crate::par::{self, ExecMode};

pub const PLACEHOLDER: &str = "$prompt";

/// The engineered extraction prompt shipped as the default template.
pub const DEFAULT_TEMPLATE: &str = include_str!("../assets/default_prompt.txt");

/// A prompt body with exactly one `$prompt` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    body: String,
}

impl PromptTemplate {
    pub fn new(body: impl Into<String>) -> Result<Self> {
        let body = body.into();
        match body.matches(PLACEHOLDER).count() {
            1 => Ok(PromptTemplate { body }),
            n => Err(Error::Template(n)),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(std::fs::read_to_string(path)?)
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Hex SHA-256 of the body; part of the completion cache key.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.body.as_bytes()))
    }

    pub fn render(&self, sentence: &str) -> Result<String> {
        render_prompt(self, sentence)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            body: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

pub fn render_prompt(template: &PromptTemplate, sentence: &str) -> Result<String> {
    if sentence.trim().is_empty() {
        return Err(Error::EmptySentence);
    }
    Ok(template.body.replacen(PLACEHOLDER, sentence, 1))
}

/// Offsets of every well-formed JSON array that starts at a `[` in `raw`,
/// in order of position. Lazily evaluated.
fn json_arrays(raw: &str) -> impl Iterator<Item = Vec<Value>> + '_ {
    raw.match_indices('[').filter_map(move |(at, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[at..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Array(items))) => Some(items),
            _ => None,
        }
    })
}

/// Parses a completion into triples.
///
/// Picks the first balanced JSON array whose members are all arrays (a list
/// of lists), or failing that the first JSON array of any shape. Leading and
/// trailing prose is ignored. Rows that are not 3 or 4 non-empty strings are
/// skipped with a warning.
pub fn parse_completion(raw: &str) -> (Vec<RawTriple>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut fallback = None;
    let mut chosen = None;
    for items in json_arrays(raw) {
        if items.iter().all(Value::is_array) {
            chosen = Some(items);
            break;
        }
        if fallback.is_none() {
            fallback = Some(items);
        }
    }
    let Some(rows) = chosen.or(fallback) else {
        warnings.push("no JSON array found in completion".to_string());
        return (Vec::new(), warnings);
    };

    let mut triples = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let Value::Array(cells) = row else {
            warnings.push(format!("row {i}: not an array: {row}"));
            continue;
        };
        let strings: Option<Vec<&str>> = cells.iter().map(Value::as_str).collect();
        let Some(strings) = strings else {
            warnings.push(format!("row {i}: non-string member in {}", Value::Array(cells.clone())));
            continue;
        };
        match RawTriple::from_row(&strings) {
            Ok(t) => triples.push(t),
            Err(e) => warnings.push(format!("row {i}: {e}")),
        }
    }
    (triples, warnings)
}

/// Serializes triples as a JSON list of lists, the inverse of
/// [`parse_completion`] on clean input.
pub fn triples_to_json(triples: &[RawTriple]) -> String {
    serde_json::to_string(triples).expect("string rows always serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub sentence: String,
    pub raw_completion: String,
    pub triples: Vec<RawTriple>,
    pub parse_warnings: Vec<String>,
}

/// Renders, completes and parses one sentence.
pub fn extract<B: CompletionBackend + ?Sized>(
    backend: &B,
    template: &PromptTemplate,
    sentence: &str,
) -> Result<ExtractionResult> {
    let prompt = render_prompt(template, sentence)?;
    let digest = template.digest();
    let raw_completion = backend
        .complete(&CompletionRequest {
            prompt: &prompt,
            sentence,
            template_digest: &digest,
        })
        .map_err(|source| Error::Backend {
            sentence: sentence.to_string(),
            source,
        })?;
    let (triples, parse_warnings) = parse_completion(&raw_completion);
    Ok(ExtractionResult {
        sentence: sentence.to_string(),
        raw_completion,
        triples,
        parse_warnings,
    })
}

/// Extracts many sentences, concurrently when `mode` allows. The backend's
/// own rate limiter bounds request starts; results keep input order.
pub fn extract_batch<B: CompletionBackend + ?Sized>(
    backend: &B,
    template: &PromptTemplate,
    sentences: &[String],
    mode: ExecMode,
) -> Vec<Result<ExtractionResult>> {
    par::map(sentences, mode, |s| extract(backend, template, s))
}
