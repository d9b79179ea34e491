//! Token-level full-text index over knowledge-base labels and aliases.
//!
//! A query hits every (record, label) pair sharing at least one distinct
//! token with it. Hits are ranked by the number of shared distinct tokens,
//! then by shorter label, then by identifier string.

use sha2::{Digest, Sha256};
use std::cmp::Reverse;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{tokenize, KbId, KbRecord, RecordKind};

/// Default size of the candidate pool handed to the linker.
pub const DEFAULT_LIMIT: usize = 10;

const MAGIC: &[u8; 4] = b"LOKE";
pub const FORMAT_VERSION: u16 = 1;
const CHECKSUM_LEN: usize = 32;

/// One indexed label of one record.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    record: u32,
    label: String,
    label_chars: usize,
}

/// A search hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit<'a> {
    pub id: &'a KbId,
    pub label: &'a str,
    pub base_score: usize,
    pub record: &'a KbRecord,
}

#[derive(Debug, Clone)]
pub struct LabelIndex {
    kind: RecordKind,
    records: Vec<KbRecord>,
    by_id: HashMap<KbId, u32>,
    entries: Vec<Entry>,
    postings: HashMap<String, Vec<u32>>,
}

impl LabelIndex {
    /// Builds an index; every record must carry the right id prefix and a
    /// unique id.
    pub fn build(kind: RecordKind, records: impl IntoIterator<Item = KbRecord>) -> Result<Self> {
        let mut index = LabelIndex {
            kind,
            records: Vec::new(),
            by_id: HashMap::new(),
            entries: Vec::new(),
            postings: HashMap::new(),
        };
        for rec in records {
            index.insert(rec)?;
        }
        Ok(index)
    }

    fn insert(&mut self, rec: KbRecord) -> Result<()> {
        rec.validate()?;
        if rec.kind() != self.kind {
            return Err(Error::KindMismatch {
                id: rec.id,
                expected: self.kind,
            });
        }
        if self.by_id.contains_key(&rec.id) {
            return Err(Error::DuplicateId(rec.id));
        }
        let rec_idx = u32::try_from(self.records.len()).expect("index holds < 2^32 records");
        let mut seen = HashSet::new();
        for label in rec.labels() {
            if !seen.insert(label) {
                continue;
            }
            let entry_idx = u32::try_from(self.entries.len()).expect("index holds < 2^32 labels");
            let tokens: HashSet<String> = tokenize(label).into_iter().collect();
            for tok in tokens {
                self.postings.entry(tok).or_default().push(entry_idx);
            }
            self.entries.push(Entry {
                record: rec_idx,
                label: label.to_string(),
                label_chars: label.chars().count(),
            });
        }
        self.by_id.insert(rec.id.clone(), rec_idx);
        self.records.push(rec);
        Ok(())
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[KbRecord] {
        &self.records
    }

    pub fn get(&self, id: &KbId) -> Option<&KbRecord> {
        self.by_id.get(id).map(|&i| &self.records[i as usize])
    }

    /// Number of distinct tokens in the postings map.
    pub fn vocabulary_len(&self) -> usize {
        self.postings.len()
    }

    /// Ids and labels posted under `token`.
    pub fn postings(&self, token: &str) -> Vec<(&KbId, &str)> {
        self.postings
            .get(token)
            .map(|list| {
                list.iter()
                    .map(|&e| {
                        let entry = &self.entries[e as usize];
                        (&self.records[entry.record as usize].id, entry.label.as_str())
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Top `limit` hits for `query`; empty when the query has no tokens.
    pub fn search(&self, query: &str, limit: usize) -> Vec<SearchHit<'_>> {
        assert!(limit >= 1, "search limit must be at least 1");
        let tokens: HashSet<String> = tokenize(query).into_iter().collect();
        let mut posted: Vec<u32> = tokens
            .iter()
            .filter_map(|tok| self.postings.get(tok))
            .flatten()
            .copied()
            .collect();
        posted.sort_unstable();
        let mut hits: Vec<(u32, usize)> = Vec::new();
        for e in posted {
            match hits.last_mut() {
                Some((last, n)) if *last == e => *n += 1,
                _ => hits.push((e, 1)),
            }
        }
        let key = |&(e, score): &(u32, usize)| {
            let entry = &self.entries[e as usize];
            (
                Reverse(score),
                entry.label_chars,
                self.records[entry.record as usize].id.as_str(),
                entry.label.as_str(),
            )
        };
        if hits.len() > limit {
            hits.select_nth_unstable_by(limit - 1, |a, b| key(a).cmp(&key(b)));
            hits.truncate(limit);
        }
        hits.sort_unstable_by(|a, b| key(a).cmp(&key(b)));
        hits.into_iter()
            .map(|(e, score)| {
                let entry = &self.entries[e as usize];
                let record = &self.records[entry.record as usize];
                SearchHit {
                    id: &record.id,
                    label: &entry.label,
                    base_score: score,
                    record,
                }
            })
            .collect()
    }

    /// Writes the binary index file: magic, version, kind, record payload,
    /// SHA-256 trailer over everything before it. Postings are rebuilt on load.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = File::create(path)?;
        file.write_all(&self.to_bytes())?;
        file.sync_all()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = serde_json::to_vec(&self.records).expect("records serialize");
        let mut buf = Vec::with_capacity(payload.len() + 48);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(match self.kind {
            RecordKind::Entity => 0,
            RecordKind::Property => 1,
        });
        buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        buf.extend_from_slice(&payload);
        let sum = Sha256::digest(&buf);
        buf.extend_from_slice(&sum);
        buf
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 4 + 2 + 1 + 8;
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(Error::CorruptIndex("missing LOKE magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version > FORMAT_VERSION {
            return Err(Error::IndexVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < HEADER + CHECKSUM_LEN {
            return Err(Error::CorruptIndex("file truncated".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(Error::CorruptIndex("checksum mismatch".into()));
        }
        let kind = match body[6] {
            0 => RecordKind::Entity,
            1 => RecordKind::Property,
            k => return Err(Error::CorruptIndex(format!("unknown kind byte {k}"))),
        };
        let len = u64::from_le_bytes(body[7..15].try_into().expect("8 bytes")) as usize;
        if body.len() - HEADER != len {
            return Err(Error::CorruptIndex("payload length mismatch".into()));
        }
        let records: Vec<KbRecord> = serde_json::from_slice(&body[HEADER..])
            .map_err(|e| Error::CorruptIndex(e.to_string()))?;
        Self::build(kind, records)
    }
}

/// Reads a JSON-lines dump (`{"id":..,"label":..,"aliases":[..]}` per line).
pub fn read_dump(path: impl AsRef<Path>) -> Result<Vec<KbRecord>> {
    let path = path.as_ref();
    read_dump_from(BufReader::new(File::open(path)?), path)
}

pub fn read_dump_from<R: BufRead>(reader: R, path: &Path) -> Result<Vec<KbRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: KbRecord =
            serde_json::from_str(&line).map_err(|e| Error::malformed(path, i + 1, e))?;
        rec.validate().map_err(|e| Error::malformed(path, i + 1, e))?;
        out.push(rec);
    }
    Ok(out)
}

/// Builds an index straight from a dump file.
pub fn build_from_dump(kind: RecordKind, path: impl AsRef<Path>) -> Result<LabelIndex> {
    LabelIndex::build(kind, read_dump(path)?)
}

/// Writes records in dump format.
pub fn write_dump<W: Write>(mut w: W, records: &[KbRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
