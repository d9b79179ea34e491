//! Reading and writing the pipeline's JSON-lines files.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use loke_core::dataset::{load_carb_gold, load_tekgen, BenchmarkRecord};
use loke_core::extractor::ExtractionResult;
use loke_core::{LinkedStatement, RawTriple};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

/// One line of `link` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedSentence {
    pub sentence: String,
    pub statements: Vec<LinkedStatement>,
}

fn is_tsv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
}

fn is_jsonl(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"))
}

fn json_lines(path: &Path) -> Result<Vec<(usize, Value)>, Failure> {
    let file = File::open(path).map_err(|e| Failure::input(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Failure::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn field<T: for<'de> Deserialize<'de>>(path: &Path, line: usize, v: &Value, key: &str) -> Result<T, Failure> {
    let raw = v
        .get(key)
        .ok_or_else(|| Failure::input(format!("{}:{line}: missing \"{key}\" field", path.display())))?;
    serde_json::from_value(raw.clone()).map_err(|e| Failure::input(format!("{}:{line}: \"{key}\": {e}", path.display())))
}

/// Gold records from TekGen JSON-lines or a CaRB `.tsv`.
pub fn read_gold(path: &Path) -> Result<Vec<BenchmarkRecord>, Failure> {
    if is_tsv(path) {
        load_carb_gold(path).map_err(Failure::from)
    } else {
        load_tekgen(path).map_err(Failure::from)
    }
}

/// Sentences from a `.tsv` (CaRB), JSON-lines with a `sentence` field, or
/// plain text with one sentence per line.
pub fn read_sentences(path: &Path) -> Result<Vec<String>, Failure> {
    if is_tsv(path) {
        return Ok(read_gold(path)?.into_iter().map(|r| r.sentence).collect());
    }
    if is_jsonl(path) {
        return json_lines(path)?
            .iter()
            .map(|(line, v)| field(path, *line, v, "sentence"))
            .collect();
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn read_extractions(path: &Path) -> Result<Vec<ExtractionResult>, Failure> {
    json_lines(path)?
        .into_iter()
        .map(|(line, v)| {
            serde_json::from_value(v).map_err(|e| Failure::input(format!("{}:{line}: {e}", path.display())))
        })
        .collect()
}

/// Predictions per sentence. Accepts `link` output (`statements`) or
/// `extract` output (`triples`, treated as unlinked).
pub fn read_predictions(path: &Path) -> Result<Vec<LinkedSentence>, Failure> {
    json_lines(path)?
        .iter()
        .map(|(line, v)| {
            let sentence = field(path, *line, v, "sentence")?;
            let statements = if v.get("statements").is_some() {
                field(path, *line, v, "statements")?
            } else {
                field::<Vec<RawTriple>>(path, *line, v, "triples")?
                    .into_iter()
                    .map(LinkedStatement::unlinked)
                    .collect()
            };
            Ok(LinkedSentence { sentence, statements })
        })
        .collect()
}

/// Triples from any pipeline file: CaRB `.tsv`, or JSON-lines carrying
/// `triples` (gold or extraction) or `statements` (linked).
pub fn read_triples(path: &Path) -> Result<Vec<RawTriple>, Failure> {
    if is_tsv(path) {
        return Ok(read_gold(path)?.into_iter().flat_map(|r| r.gold_triples).collect());
    }
    Ok(read_predictions(path)?
        .into_iter()
        .flat_map(|s| s.statements.into_iter().map(|st| st.raw))
        .collect())
}

/// Groups predictions by sentence text, keeping first-seen order.
pub fn by_sentence(preds: Vec<LinkedSentence>) -> HashMap<String, Vec<LinkedStatement>> {
    let mut map: HashMap<String, Vec<LinkedStatement>> = HashMap::new();
    for p in preds {
        map.entry(p.sentence).or_default().extend(p.statements);
    }
    map
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::input(format!("cannot create directory {}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))
}

pub fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row).expect("rows serialize");
        w.write_all(b"\n").map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}
