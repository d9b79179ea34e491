//! Acceptance suite. Each test checks one criterion at its pinned tolerance
//! and prints a single PASS/FAIL line. Run with `--nocapture` to see them.

mod common;

use std::time::{Duration, Instant};

use common::*;
use loke_core::backend::ReplayBackend;
use loke_core::dataset::load_tekgen;
use loke_core::evaluator::{
    auc, f1_score, linkability, score_corpus, score_sentence, tuple_match, CorpusItem, CurvePoint, ScoreOptions,
};
use loke_core::extractor::{extract, parse_completion, PromptTemplate};
use loke_core::index::LabelIndex;
use loke_core::linker::{correct_labels, link_confidence, link_statement, link_term, ConfidenceParams};
use loke_core::model::{KbRecord, RawTriple, RecordKind};
use loke_core::rdf::{emit, EmitPolicy};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, ok: bool, detail: impl AsRef<str>) {
    println!("[{}] {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

/// (1 - u) + u·p^ε with p = 999/1000, u = 1/2, evaluated as 10^-60 fixed
/// point in big integers: each step multiplies by 999 and divides by 1000,
/// truncating, so the error after ε steps stays below ε·10^-60.
fn fixed_point_confidences(max_eps: usize) -> Vec<f64> {
    let digits = 60u32;
    let scale = BigUint::from(10u32).pow(digits);
    let mut power = scale.clone();
    let mut out = Vec::with_capacity(max_eps + 1);
    for _ in 0..=max_eps {
        // c = 1/2 + power/2, keep 20 decimal digits for the f64 conversion
        let c = (&scale + &power) / 2u32;
        let shifted: BigUint = &c / BigUint::from(10u32).pow(digits - 20);
        let as_f64 = shifted.to_string().parse::<f64>().unwrap() / 1e20;
        out.push(as_f64);
        power = power * 999u32 / 1000u32;
    }
    out
}

#[test]
fn confidence_formula_matches_high_precision_evaluation() {
    let start = Instant::now();
    let params = ConfidenceParams::default();
    let oracle = fixed_point_confidences(10_000);
    let mut worst = 0.0f64;
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for (eps, &expected) in oracle.iter().enumerate() {
        let c = link_confidence(eps, &params);
        worst = worst.max((c - expected).abs());
        monotone &= c <= prev;
        prev = c;
    }
    let c0 = link_confidence(0, &params);
    let c693 = link_confidence(693, &params);
    let elapsed = start.elapsed();
    let ok = worst <= 1e-12 && c0 == 1.0 && (c693 - 0.75).abs() <= 1e-4 && monotone && within(elapsed, 1);
    report(
        "confidence formula",
        ok,
        format!("max |err| {worst:.3e} over eps 0..=10000, c(0)={c0}, c(693)={c693:.6}, monotone={monotone}, {elapsed:?}"),
    );
    assert!(ok);
}

// The first row cannot be reproduced: F1(0.005, 0.009) = 0.00643, which is
// 0.00057 away from the printed 0.007. Run with --include-ignored to see it.
#[test]
#[ignore = "first row's printed F1 is inconsistent with its P and R beyond ±0.0005"]
fn reported_baseline_f1_consistency() {
    // (label, precision, recall, printed f1)
    let rows = [
        ("OpenIE 4", 0.005, 0.009, 0.007),
        ("OKE-GPT L", 0.248, 0.195, 0.218),
        ("OKE-GPT U", 0.101, 0.28, 0.148),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (label, p, r, printed) in rows {
        let f1 = f1_score(p, r);
        let row_ok = (f1 - printed).abs() <= 0.0005;
        ok &= row_ok;
        details.push(format!(
            "{label}: F1({p},{r})={f1:.5} vs {printed} ({})",
            if row_ok { "ok" } else { "outside ±0.0005" }
        ));
    }
    report("reported F1 consistency", ok, details.join("; "));
    assert!(ok, "{}", details.join("\n"));
}

fn toy_triple(rng: &mut ChaCha8Rng, words: &[&str]) -> RawTriple {
    let mut slot = || {
        (0..rng.gen_range(1..=2))
            .map(|_| *words.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (s, p, o) = (slot(), slot(), slot());
    RawTriple::new(s, p, o).unwrap()
}

#[test]
fn scorer_matches_brute_force_on_toy_corpora() {
    const WORDS: &[&str] = &["a", "b", "c", "d", "e"];
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_recall = 0.0f64;
    let mut precision_exact = true;
    let mut sentences = 0;
    for _ in 0..200 {
        let n_sent = rng.gen_range(1..=5);
        for _ in 0..n_sent {
            let n_preds = rng.gen_range(0..=4);
            let preds: Vec<_> = (0..n_preds).map(|_| toy_triple(&mut rng, WORDS)).collect();
            let n_golds = rng.gen_range(0..=4);
            let golds: Vec<_> = (0..n_golds).map(|_| toy_triple(&mut rng, WORDS)).collect();
            let got = score_sentence(&preds, &golds);

            let grid: Vec<Vec<(f64, f64)>> =
                preds.iter().map(|p| golds.iter().map(|g| brute_pair(p, g)).collect()).collect();
            let expected_precision: f64 = grid
                .iter()
                .map(|row| row.iter().map(|s| s.0).fold(0.0, f64::max))
                .sum();
            let recall_w: Vec<Vec<f64>> = grid.iter().map(|row| row.iter().map(|s| s.1).collect()).collect();
            let expected_recall = brute_assignment(&recall_w);

            precision_exact &= got.precision_sum == expected_precision;
            worst_recall = worst_recall.max((got.recall_sum - expected_recall).abs());
            sentences += 1;
        }
    }
    let elapsed = start.elapsed();
    // assignment sums may add the same terms in a different order
    let ok = precision_exact && worst_recall <= 1e-12 && within(elapsed, 10);
    report(
        "scorer oracle",
        ok,
        format!("200 corpora / {sentences} sentences, precision exact={precision_exact}, max recall |diff| {worst_recall:.1e}, {elapsed:?}"),
    );
    assert!(ok);
}

#[test]
fn linker_matches_exhaustive_scan() {
    let start = Instant::now();
    let params = ConfidenceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = Vec::new();
    let mut linked = 0;
    let mut queries = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=1000);
        let records = random_records(&mut rng, n, VOCAB);
        let index = LabelIndex::build(RecordKind::Entity, records.clone()).unwrap();
        for _ in 0..10 {
            let mut query = random_label(&mut rng, VOCAB);
            if rng.gen_bool(0.3) {
                // typo or unknown word
                query.push_str(if rng.gen_bool(0.5) { "s" } else { " zzz" });
            }
            let got = link_term(&index, &query, &params)
                .map(|c| (c.id.to_string(), c.matched_label, c.edit_distance));
            let expected = brute_link(&records, &query);
            if let Some((_, _, eps)) = &expected {
                linked += 1;
                let c = link_term(&index, &query, &params).unwrap().confidence;
                if c != link_confidence(*eps, &params) {
                    mismatches.push(format!("{query}: confidence"));
                }
            }
            if got != expected {
                mismatches.push(format!("{query}: {got:?} vs {expected:?}"));
            }
            queries += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches.is_empty() && queries == 1000 && within(elapsed, 30);
    report(
        "linker oracle",
        ok,
        format!("{queries} queries over 100 indices, {linked} linked, {} mismatches, {elapsed:?}", mismatches.len()),
    );
    assert!(ok, "{mismatches:#?}");
}

const SENTENCES: [&str; 3] = [
    "Tiram is a town and Village Development Committee in Pyuthan, a Middle Hills district of Rapti Zone, western Nepal.",
    "Toxabramis maensis is a species of ray-finned fish in the genus Toxabramis.",
    "Bahaa al-Farra (born 10 March 1991) is a Palestinian runner from Gaza.",
];

fn expected_triples() -> Vec<Vec<RawTriple>> {
    let t = |s: &str, p: &str, o: &str| RawTriple::new(s, p, o).unwrap();
    vec![
        vec![
            t("Tiram", "type", "town"),
            t("Tiram", "type", "Village Development Committee"),
            t("Tiram", "location", "Pyuthan"),
            t("Pyuthan", "type", "Middle Hills district"),
            t("Pyuthan", "location", "Rapti Zone"),
            t("Rapti Zone", "location", "western Nepal"),
        ],
        vec![
            t("Toxabramis maensis", "species", "ray-finned fish"),
            t("Toxabramis maensis", "genus", "Toxabramis"),
        ],
        vec![
            RawTriple::literal("Bahaa al-Farra", "born", "10 March 1991", "date").unwrap(),
            t("Bahaa al-Farra", "citizenship", "Palestine"),
            t("Bahaa al-Farra", "occupation", "runner"),
            t("Bahaa al-Farra", "location", "Gaza"),
        ],
    ]
}

#[test]
fn end_to_end_replay_pipeline() {
    let backend = ReplayBackend::from_jsonl(fixture("replay.jsonl")).unwrap();
    let template = PromptTemplate::default();
    let params = ConfidenceParams::default();
    let (ents, props) = toy_indices();
    let mut problems = Vec::new();

    // extraction reproduces the 12 triples verbatim
    let extracted: Vec<Vec<RawTriple>> = SENTENCES
        .iter()
        .map(|s| extract(&backend, &template, s).unwrap().triples)
        .collect();
    let total: usize = extracted.iter().map(Vec::len).sum();
    if extracted != expected_triples() || total != 12 {
        problems.push(format!("extraction mismatch ({total} triples)"));
    }

    // linking
    let linked: Vec<Vec<_>> = extracted
        .iter()
        .map(|ts| ts.iter().map(|t| link_statement(t, &ents, &props, &params)).collect::<Vec<_>>())
        .collect();
    let flat: Vec<_> = linked.iter().flatten().cloned().collect();
    let with_conf = flat.iter().filter(|s| s.statement_confidence.is_some()).count();
    if with_conf == 0 {
        problems.push("no statement confidences".into());
    }
    for s in &flat {
        if let Some(c) = s.statement_confidence {
            if !(c > 0.0 && c <= 1.0) {
                problems.push(format!("confidence {c} out of range"));
            }
        }
    }
    let citizenship = flat.iter().find(|s| s.raw.predicate == "citizenship").unwrap();
    let corrected = correct_labels(citizenship);
    if corrected.object != "State of Palestine" || corrected.predicate != "country of citizenship" {
        problems.push(format!("label correction gave {corrected}"));
    }
    let born = flat.iter().find(|s| s.raw.predicate == "born").unwrap();
    if born.object_link.is_some() || born.statement_confidence != Some(1.0) {
        problems.push("literal statement linking".into());
    }

    // RDF accepted line-for-line by an independent parser
    let nt = emit(&flat, &EmitPolicy::default());
    let lines = nt.lines().count();
    let mut parsed = 0;
    {
        use rio_api::parser::TriplesParser;
        let mut parser = rio_turtle::NTriplesParser::new(nt.as_bytes());
        let res = parser.parse_all(&mut |_| -> Result<(), rio_turtle::TurtleError> {
            parsed += 1;
            Ok(())
        });
        if let Err(e) = res {
            problems.push(format!("N-Triples rejected: {e}"));
        }
    }
    if parsed != lines || lines != 12 {
        problems.push(format!("{parsed} parsed of {lines} lines"));
    }

    // scoring against the reference triples
    let gold = load_tekgen(fixture("tekgen_reference.jsonl")).unwrap();
    let items: Vec<CorpusItem> = gold
        .iter()
        .map(|rec| {
            let i = SENTENCES.iter().position(|s| *s == rec.sentence).unwrap();
            CorpusItem { preds: linked[i].clone(), golds: rec.gold_triples.clone() }
        })
        .collect();
    let uncorrected = score_corpus(&items, ScoreOptions { use_confidence: true, corrected: false }).unwrap();
    let corrected_report = score_corpus(&items, ScoreOptions { use_confidence: true, corrected: true }).unwrap();
    let born_pair = tuple_match(&born.raw, &gold[2].gold_triples[0]);
    if !(uncorrected.optimal.recall > 0.0 && corrected_report.optimal.recall > 0.0) {
        problems.push("recall is zero".into());
    }
    if born_pair.pair_recall < 5.0 / 8.0 {
        problems.push(format!("born pair recall {}", born_pair.pair_recall));
    }

    let ok = problems.is_empty();
    report(
        "end-to-end replay",
        ok,
        format!(
            "{total} triples, {with_conf}/{} with statement confidence, {lines} N-Triples lines, R_opt uncorrected={:.3} corrected={:.3}, born pair recall={:.3}",
            flat.len(),
            uncorrected.optimal.recall,
            corrected_report.optimal.recall,
            born_pair.pair_recall
        ),
    );
    assert!(ok, "{problems:#?}");
}

#[test]
fn auc_toy_curve() {
    let pt = |r: f64, p: f64| CurvePoint { threshold: 0.0, precision: p, recall: r, f1: f1_score(p, r) };
    let area = auc(&[pt(0.5, 1.0), pt(1.0, 0.5)]);
    let ok = (area - 0.875).abs() <= 1e-9;
    report("AUC toy check", ok, format!("area {area}"));
    assert!(ok);
}

#[test]
fn linkability_invariants() {
    let params = ConfidenceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut violations = Vec::new();
    for round in 0..100 {
        let n_ents = rng.gen_range(1..200);
        let ent_records = random_records(&mut rng, n_ents, VOCAB);
        let n_props = rng.gen_range(1..50);
        let prop_records: Vec<KbRecord> = random_records(&mut rng, n_props, VOCAB)
            .into_iter()
            .map(|r| KbRecord { id: loke_core::KbId::parse(&format!("P{}", &r.id.as_str()[1..])).unwrap(), ..r })
            .collect();
        let ents = LabelIndex::build(RecordKind::Entity, ent_records).unwrap();
        let props = LabelIndex::build(RecordKind::Property, prop_records).unwrap();
        let triples: Vec<RawTriple> = (0..rng.gen_range(0..40))
            .map(|_| {
                let (s, p, o) = (random_label(&mut rng, VOCAB), random_label(&mut rng, VOCAB), random_label(&mut rng, VOCAB));
                if rng.gen_bool(0.25) {
                    RawTriple::literal(s, p, o, "string").unwrap()
                } else {
                    RawTriple::new(s, p, o).unwrap()
                }
            })
            .collect();
        let r = linkability(&triples, &ents, &props, &params);
        if r.t_frac > r.s_frac.min(r.p_frac).min(r.o_frac) {
            violations.push(format!("round {round}: t_frac above slot minimum"));
        }
        // literal objects never count
        let lits: Vec<RawTriple> = triples.iter().filter(|t| t.is_literal()).cloned().collect();
        let lr = linkability(&lits, &ents, &props, &params);
        if lr.objects_linked != 0 || lr.triples_linked != 0 {
            violations.push(format!("round {round}: literal object counted"));
        }
    }
    let (ents, props) = toy_indices();
    let all_linked = [
        RawTriple::new("Tiram", "country", "Nepal").unwrap(),
        RawTriple::new("Bahaa al-Farra", "citizenship", "Palestine").unwrap(),
        RawTriple::new("Toxabramis maensis", "taxon rank", "species").unwrap(),
    ];
    let r = linkability(&all_linked, &ents, &props, &params);
    if (r.s_frac, r.p_frac, r.o_frac, r.t_frac) != (1.0, 1.0, 1.0, 1.0) {
        violations.push(format!("toy set gave {r:?}"));
    }
    let ok = violations.is_empty();
    report("linkability invariants", ok, format!("100 random sets, {} violations", violations.len()));
    assert!(ok, "{violations:#?}");
}

#[test]
fn completion_parser_survives_fuzzing() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let seeds: Vec<Vec<u8>> = std::fs::read_to_string(fixture("replay.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["completion"].as_str().unwrap().as_bytes().to_vec()
        })
        .collect();
    let (mut bracketless, mut warned, mut with_triples) = (0, 0, 0);
    let mut missing_warning = 0;
    for i in 0..10_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            let n = rng.gen_range(0..256);
            (0..n).map(|_| rng.gen()).collect()
        } else {
            // mutate a real completion: flips, deletions, truncation
            let mut b = seeds[i % seeds.len()].clone();
            for _ in 0..rng.gen_range(1..6) {
                if b.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..b.len());
                match rng.gen_range(0..3) {
                    0 => b[at] = rng.gen(),
                    1 => {
                        b.remove(at);
                    }
                    _ => b.truncate(at),
                }
            }
            b
        };
        let text = String::from_utf8_lossy(&bytes);
        let (triples, warnings) = parse_completion(&text);
        if !text.contains('[') {
            bracketless += 1;
            if warnings.is_empty() || !triples.is_empty() {
                missing_warning += 1;
            }
        }
        warned += usize::from(!warnings.is_empty());
        with_triples += usize::from(!triples.is_empty());
    }
    let elapsed = start.elapsed();
    let ok = missing_warning == 0;
    report(
        "parser robustness",
        ok,
        format!("10000 inputs, no panics, {bracketless} without any array all warned ({missing_warning} missed), {warned} warned total, {with_triples} yielded triples, {elapsed:?}"),
    );
    assert!(ok);
}
