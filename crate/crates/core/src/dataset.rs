//! Benchmark ingestion: TekGen-style JSON-lines, CaRB gold TSV, and
//! seeded sampling with the subject-mention filter.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{normalize, RawTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Tekgen,
    Carb,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkRecord {
    pub sentence: String,
    pub gold_triples: Vec<RawTriple>,
    pub source: Source,
}

#[derive(Serialize, Deserialize)]
struct TekgenLine {
    sentence: String,
    triples: Vec<RawTriple>,
}

/// Loads `{"sentence": .., "triples": [[s,p,o], ..]}` lines.
pub fn load_tekgen(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>> {
    let path = path.as_ref();
    load_tekgen_from(BufReader::new(File::open(path)?), path)
}

pub fn load_tekgen_from<R: BufRead>(reader: R, path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TekgenLine =
            serde_json::from_str(&line).map_err(|e| Error::malformed(path, i + 1, e))?;
        if parsed.sentence.trim().is_empty() {
            return Err(Error::malformed(path, i + 1, "empty sentence"));
        }
        if parsed.triples.is_empty() {
            return Err(Error::malformed(path, i + 1, "no gold triples"));
        }
        out.push(BenchmarkRecord {
            sentence: parsed.sentence,
            gold_triples: parsed.triples,
            source: Source::Tekgen,
        });
    }
    Ok(out)
}

pub fn save_tekgen<W: Write>(mut w: W, records: &[BenchmarkRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(
            &mut w,
            &TekgenLine {
                sentence: r.sentence.clone(),
                triples: r.gold_triples.clone(),
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads `sentence \t relation \t arg1 \t arg2 [\t argN ...]` lines.
///
/// Consecutive lines with the same sentence form one record. Arguments past
/// the second are appended to the object, space separated.
pub fn load_carb_gold(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>> {
    let path = path.as_ref();
    load_carb_gold_from(BufReader::new(File::open(path)?), path)
}

pub fn load_carb_gold_from<R: BufRead>(reader: R, path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut out: Vec<BenchmarkRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(Error::malformed(
                path,
                i + 1,
                format!("expected at least 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let object = fields[3..]
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        let triple = RawTriple::new(fields[2], fields[1], object)
            .map_err(|e| Error::malformed(path, i + 1, e))?;
        let sentence = fields[0];
        match out.last_mut() {
            Some(last) if last.sentence == sentence => last.gold_triples.push(triple),
            _ => out.push(BenchmarkRecord {
                sentence: sentence.to_string(),
                gold_triples: vec![triple],
                source: Source::Carb,
            }),
        }
    }
    Ok(out)
}

pub fn save_carb_gold<W: Write>(mut w: W, records: &[BenchmarkRecord]) -> Result<()> {
    for r in records {
        for t in &r.gold_triples {
            writeln!(w, "{}\t{}\t{}\t{}", r.sentence, t.predicate, t.subject, t.object)?;
        }
    }
    Ok(())
}

/// True when every gold subject occurs (normalized) inside the sentence.
pub fn mentions_subjects(record: &BenchmarkRecord) -> bool {
    let sentence = normalize(&record.sentence);
    record
        .gold_triples
        .iter()
        .all(|t| sentence.contains(&normalize(&t.subject)))
}

/// Draws `n` records uniformly without replacement (ChaCha8 seeded with
/// `seed`), keeps those passing [`mentions_subjects`], and returns them in
/// their original file order.
pub fn sample_and_filter(records: &[BenchmarkRecord], n: usize, seed: u64) -> Vec<BenchmarkRecord> {
    assert!(n >= 1, "sample size must be at least 1");
    let mut picked: Vec<usize> = if n >= records.len() {
        (0..records.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, records.len(), n).into_vec()
    };
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| &records[i])
        .filter(|r| mentions_subjects(r))
        .cloned()
        .collect()
}
