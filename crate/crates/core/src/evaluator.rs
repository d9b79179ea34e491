//! CaRB-style lenient scoring and linkability metrics.
//!
//! Tuples are compared as bags of tokens with slot boundaries ignored.
//! Precision credit is many-to-one (each prediction takes its best gold);
//! recall credit is one-to-one (a maximum-weight matching of golds to
//! predictions). Corpus scores are micro-averaged and swept over the
//! distinct statement confidences to trace a precision/recall curve.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::index::LabelIndex;
use crate::linker::{correct_labels, is_linkable, link_term, ConfidenceParams};
use crate::model::{tokenize, LinkedStatement, RawTriple};
use crate::par::{self, ExecMode};

/// Above this many (pred, gold) pairs recall uses the greedy matching.
pub const EXACT_ASSIGNMENT_MAX_PAIRS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub pair_precision: f64,
    pub pair_recall: f64,
}

impl PairScore {
    pub fn f1(&self) -> f64 {
        f1_score(self.pair_precision, self.pair_recall)
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn token_bag(t: &RawTriple) -> HashMap<String, usize> {
    let mut bag = HashMap::new();
    for field in [&t.subject, &t.predicate, &t.object] {
        for tok in tokenize(field) {
            *bag.entry(tok).or_insert(0) += 1;
        }
    }
    bag
}

fn bag_len(bag: &HashMap<String, usize>) -> usize {
    bag.values().sum()
}

fn match_bags(pred: &HashMap<String, usize>, gold: &HashMap<String, usize>) -> PairScore {
    let shared: usize = pred
        .iter()
        .map(|(tok, &n)| n.min(gold.get(tok).copied().unwrap_or(0)))
        .sum();
    let ratio = |den: usize| if den == 0 { 0.0 } else { shared as f64 / den as f64 };
    PairScore {
        pair_precision: ratio(bag_len(pred)),
        pair_recall: ratio(bag_len(gold)),
    }
}

/// Lenient match: shared token multiset over each side's token count.
pub fn tuple_match(pred: &RawTriple, gold: &RawTriple) -> PairScore {
    match_bags(&token_bag(pred), &token_bag(gold))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SentenceScore {
    pub precision_sum: f64,
    pub recall_sum: f64,
}

/// Maximum total weight of a one-to-one assignment in a `rows × cols`
/// weight matrix (row-major). Bitmask DP over the smaller side, so it is
/// meant for small matrices.
pub fn exact_assignment(weights: &[f64], rows: usize, cols: usize) -> f64 {
    assert_eq!(weights.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let transposed = cols > rows;
    let (big, small) = if transposed { (cols, rows) } else { (rows, cols) };
    assert!(small <= 16, "exact assignment limited to 16 on the smaller side");
    let w = |b: usize, s: usize| {
        if transposed {
            weights[s * cols + b]
        } else {
            weights[b * cols + s]
        }
    };
    let states = 1usize << small;
    let mut dp = vec![f64::NEG_INFINITY; states];
    dp[0] = 0.0;
    for b in 0..big {
        let mut next = dp.clone();
        for mask in 0..states {
            let cur = dp[mask];
            if cur == f64::NEG_INFINITY {
                continue;
            }
            for s in 0..small {
                if mask & (1 << s) == 0 {
                    let cand = cur + w(b, s);
                    let slot = &mut next[mask | (1 << s)];
                    if cand > *slot {
                        *slot = cand;
                    }
                }
            }
        }
        dp = next;
    }
    dp.into_iter().fold(0.0, f64::max)
}

/// Greedy one-to-one matching: repeatedly take the unused pair with the
/// highest key (ties by row then column index), adding its weight.
pub fn greedy_assignment(weights: &[f64], keys: &[f64], rows: usize, cols: usize) -> f64 {
    assert_eq!(weights.len(), rows * cols);
    assert_eq!(keys.len(), rows * cols);
    let mut order: Vec<usize> = (0..rows * cols).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut total = 0.0;
    for i in order {
        let (r, c) = (i / cols, i % cols);
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            total += weights[i];
        }
    }
    total
}

struct PairTable {
    preds: usize,
    golds: usize,
    scores: Vec<PairScore>,
}

impl PairTable {
    fn new(preds: &[RawTriple], golds: &[RawTriple]) -> Self {
        let gold_bags: Vec<_> = golds.iter().map(token_bag).collect();
        let scores = preds
            .iter()
            .flat_map(|p| {
                let pb = token_bag(p);
                gold_bags.iter().map(move |gb| match_bags(&pb, gb)).collect::<Vec<_>>()
            })
            .collect();
        PairTable {
            preds: preds.len(),
            golds: golds.len(),
            scores,
        }
    }

    fn best_precision(&self, pred: usize) -> f64 {
        (0..self.golds)
            .map(|g| self.scores[pred * self.golds + g].pair_precision)
            .fold(0.0, f64::max)
    }

    /// Recall credit for the subset of predictions in `kept`.
    fn recall_sum(&self, kept: &[usize]) -> f64 {
        let rows = kept.len();
        let cols = self.golds;
        let weights: Vec<f64> = kept
            .iter()
            .flat_map(|&p| (0..cols).map(move |g| (p, g)))
            .map(|(p, g)| self.scores[p * cols + g].pair_recall)
            .collect();
        if rows * cols <= EXACT_ASSIGNMENT_MAX_PAIRS {
            exact_assignment(&weights, rows, cols)
        } else {
            let keys: Vec<f64> = kept
                .iter()
                .flat_map(|&p| (0..cols).map(move |g| (p, g)))
                .map(|(p, g)| self.scores[p * cols + g].f1())
                .collect();
            greedy_assignment(&weights, &keys, rows, cols)
        }
    }
}

/// Precision and recall credit for one sentence.
pub fn score_sentence(preds: &[RawTriple], golds: &[RawTriple]) -> SentenceScore {
    let table = PairTable::new(preds, golds);
    let all: Vec<usize> = (0..table.preds).collect();
    SentenceScore {
        precision_sum: all.iter().map(|&p| table.best_precision(p)).sum(),
        recall_sum: table.recall_sum(&all),
    }
}

/// Predictions and gold tuples for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub preds: Vec<LinkedStatement>,
    pub golds: Vec<RawTriple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Sweep thresholds over statement confidence; otherwise one point.
    pub use_confidence: bool,
    /// Score the preferred-label form of each prediction.
    pub corrected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Ordered by descending threshold.
    pub curve: Vec<CurvePoint>,
    pub auc: f64,
    pub optimal: CurvePoint,
    pub predictions: usize,
    pub golds: usize,
    pub sentences: usize,
    pub warnings: Vec<String>,
}

/// Per-sentence step: at `threshold`, these increments join the kept set.
#[derive(Debug, Clone, Copy)]
struct Step {
    threshold: f64,
    sentence: usize,
    precision: f64,
    recall: f64,
    count: usize,
}

fn sentence_steps(idx: usize, preds: &[(RawTriple, f64)], golds: &[RawTriple]) -> Vec<Step> {
    let triples: Vec<RawTriple> = preds.iter().map(|(t, _)| t.clone()).collect();
    let table = PairTable::new(&triples, golds);
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].1.total_cmp(&preds[a].1).then(a.cmp(&b)));

    let mut steps = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let level = preds[order[i]].1;
        let mut precision = 0.0;
        let mut count = 0;
        while i < order.len() && preds[order[i]].1 == level {
            precision += table.best_precision(order[i]);
            kept.push(order[i]);
            count += 1;
            i += 1;
        }
        // the previous matching stays feasible on a superset
        let recall = table.recall_sum(&kept).max(prev_recall);
        steps.push(Step {
            threshold: level,
            sentence: idx,
            precision,
            recall: recall - prev_recall,
            count,
        });
        prev_recall = recall;
    }
    steps
}

/// Trapezoidal area under a curve given in descending-threshold order,
/// with a leading (recall 0, first precision) point.
pub fn auc(curve: &[CurvePoint]) -> f64 {
    let Some(first) = curve.first() else {
        return 0.0;
    };
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, first.precision);
    for pt in curve {
        area += (pt.recall - r0) * (pt.precision + p0) / 2.0;
        r0 = pt.recall;
        p0 = pt.precision;
    }
    area
}

pub fn score_corpus(items: &[CorpusItem], options: ScoreOptions) -> Result<ScoreReport> {
    score_corpus_with(items, options, ExecMode::default())
}

pub fn score_corpus_with(items: &[CorpusItem], options: ScoreOptions, mode: ExecMode) -> Result<ScoreReport> {
    let golds: usize = items.iter().map(|it| it.golds.len()).sum();
    if golds == 0 {
        return Err(Error::EmptyGold);
    }
    let mut missing = 0usize;
    let prepared: Vec<Vec<(RawTriple, f64)>> = items
        .iter()
        .map(|it| {
            it.preds
                .iter()
                .map(|s| {
                    let triple = if options.corrected {
                        correct_labels(s)
                    } else {
                        s.raw.clone()
                    };
                    let conf = if options.use_confidence {
                        s.statement_confidence.unwrap_or_else(|| {
                            missing += 1;
                            0.0
                        })
                    } else {
                        0.0
                    };
                    (triple, conf)
                })
                .collect()
        })
        .collect();

    let per_sentence = par::map_range(items.len(), mode, |i| sentence_steps(i, &prepared[i], &items[i].golds));
    let mut steps: Vec<Step> = per_sentence.into_iter().flatten().collect();
    steps.sort_by(|a, b| b.threshold.total_cmp(&a.threshold).then(a.sentence.cmp(&b.sentence)));

    let mut curve = Vec::new();
    let (mut psum, mut rsum, mut kept) = (0.0, 0.0, 0usize);
    let mut i = 0;
    while i < steps.len() {
        let t = steps[i].threshold;
        while i < steps.len() && steps[i].threshold == t {
            psum += steps[i].precision;
            rsum += steps[i].recall;
            kept += steps[i].count;
            i += 1;
        }
        let precision = if kept == 0 { 0.0 } else { psum / kept as f64 };
        let recall = (rsum / golds as f64).min(1.0);
        curve.push(CurvePoint {
            threshold: t,
            precision,
            recall,
            f1: f1_score(precision, recall),
        });
    }
    if curve.is_empty() {
        // no predictions at all
        curve.push(CurvePoint {
            threshold: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }

    let optimal = curve
        .iter()
        .copied()
        .fold(None::<CurvePoint>, |best, pt| match best {
            Some(b) if b.f1 >= pt.f1 => Some(b),
            _ => Some(pt),
        })
        .expect("curve is non-empty");

    let mut warnings = Vec::new();
    if missing > 0 {
        warnings.push(format!(
            "{missing} prediction(s) had no statement confidence and were assigned 0"
        ));
    }
    Ok(ScoreReport {
        auc: auc(&curve),
        curve,
        optimal,
        predictions: prepared.iter().map(Vec::len).sum(),
        golds,
        sentences: items.len(),
        warnings,
    })
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for pt in &self.curve {
            let _ = writeln!(out, "{},{},{}", pt.threshold, pt.precision, pt.recall);
        }
        out
    }

    /// Static precision/recall plot.
    pub fn curve_svg(&self, title: &str) -> String {
        const W: f64 = 480.0;
        const H: f64 = 360.0;
        const M: f64 = 48.0;
        let x = |r: f64| M + r * (W - 2.0 * M);
        let y = |p: f64| H - M - p * (H - 2.0 * M);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="20" text-anchor="middle">{}</text>"#,
            W / 2.0,
            xml_escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<path d="M{:.1},{:.1} L{:.1},{:.1} L{:.1},{:.1}" fill="none" stroke="black"/>"#,
            x(0.0),
            y(1.0),
            x(0.0),
            y(0.0),
            x(1.0),
            y(0.0)
        );
        for tick in 0..=4 {
            let v = tick as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
                x(v),
                y(0.0) + 16.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
                x(0.0) - 6.0,
                y(v) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">recall</text>"#,
            W / 2.0,
            H - 10.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">precision</text>"#,
            H / 2.0,
            H / 2.0
        );
        let points: Vec<String> = self
            .curve
            .iter()
            .map(|pt| format!("{:.2},{:.2}", x(pt.recall), y(pt.precision)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            points.join(" ")
        );
        for pt in &self.curve {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
                x(pt.recall),
                y(pt.precision)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkabilityReport {
    pub s_frac: f64,
    pub p_frac: f64,
    pub o_frac: f64,
    pub t_frac: f64,
    pub triples: usize,
    pub subjects_linked: usize,
    pub predicates_linked: usize,
    pub objects_linked: usize,
    pub triples_linked: usize,
    /// Set when there were no triples; all fractions are then 0.
    pub empty: bool,
}

impl LinkabilityReport {
    pub const CSV_HEADER: &'static str = "dataset,s,p,o,t,triples";

    pub fn csv_row(&self, dataset: &str) -> String {
        format!(
            "{},{},{},{},{},{}",
            dataset, self.s_frac, self.p_frac, self.o_frac, self.t_frac, self.triples
        )
    }
}

pub fn linkability(
    triples: &[RawTriple],
    entities: &LabelIndex,
    properties: &LabelIndex,
    params: &ConfidenceParams,
) -> LinkabilityReport {
    linkability_with(triples, entities, properties, params, ExecMode::default())
}

pub fn linkability_with(
    triples: &[RawTriple],
    entities: &LabelIndex,
    properties: &LabelIndex,
    params: &ConfidenceParams,
    mode: ExecMode,
) -> LinkabilityReport {
    let flags = par::map(triples, mode, |t| {
        let s = is_linkable(link_term(entities, &t.subject, params).as_ref(), params);
        let p = is_linkable(link_term(properties, &t.predicate, params).as_ref(), params);
        let o = !t.is_literal() && is_linkable(link_term(entities, &t.object, params).as_ref(), params);
        [s, p, o]
    });
    let count = |slot: usize| flags.iter().filter(|f| f[slot]).count();
    let all = flags.iter().filter(|f| f.iter().all(|&b| b)).count();
    let n = triples.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    LinkabilityReport {
        s_frac: frac(count(0)),
        p_frac: frac(count(1)),
        o_frac: frac(count(2)),
        t_frac: frac(all),
        triples: n,
        subjects_linked: count(0),
        predicates_linked: count(1),
        objects_linked: count(2),
        triples_linked: all,
        empty: n == 0,
    }
}
