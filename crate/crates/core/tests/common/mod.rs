//! Shared helpers for the integration and acceptance tests: fixture access,
//! random document generation and independent reference implementations.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use coref_core::conllu::{
    parse_document, serialize_document, write_entities, Document, Mention, MentionSpan, TokenId,
};
use coref_core::scorer::{Clustering, Entity};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fixture_docs(name: &str) -> Vec<Document> {
    parse_document(&fixture_text(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const FIXTURE_FILES: [&str; 4] = [
    "synthetic.conllu",
    "chain_break.conllu",
    "hungarian_sample.conllu",
    "extras.conllu",
];

/// A runner that always draws the same cases.
pub fn deterministic_runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

const VOCAB: [&str; 12] = [
    "Anna", "saw", "the", "dog", "and", "it", "barked", "at", "her", "again", ".", "Ölçü",
];

/// Layout of one generated sentence: word forms, and after which words a
/// zero node follows.
#[derive(Debug, Clone)]
pub struct SentenceShape {
    pub words: Vec<usize>,
    pub zero_after: Vec<bool>,
}

fn sentence_shape(max_words: usize) -> impl Strategy<Value = SentenceShape> {
    prop::collection::vec((0..VOCAB.len(), prop::bool::weighted(0.15)), 1..=max_words).prop_map(|v| {
        let (words, zero_after) = v.into_iter().unzip();
        SentenceShape { words, zero_after }
    })
}

fn render_shape(doc_id: &str, shapes: &[SentenceShape]) -> String {
    let mut out = format!("# newdoc id = {doc_id}\n");
    for (si, s) in shapes.iter().enumerate() {
        out.push_str(&format!("# sent_id = {doc_id}-{}\n", si + 1));
        for (w, (&form, &zero)) in s.words.iter().zip(&s.zero_after).enumerate() {
            let id = w + 1;
            let head = if id == 1 { 0 } else { 1 };
            out.push_str(&format!("{id}\t{}\t_\tX\t_\t_\t{head}\tdep\t_\t_\n", VOCAB[form]));
            if zero {
                out.push_str(&format!("{id}.1\tpro\t_\tPRON\t_\t_\t_\t_\t{id}:nsubj\t_\n"));
            }
        }
        out.push('\n');
    }
    out
}

/// Candidate mention: sentence, first word, extra words, entity, zero flag.
type Candidate = (usize, usize, usize, u8, bool);

/// Keep candidates that fit the sentence, are new and do not cross an earlier one.
fn select_mentions(shapes: &[SentenceShape], candidates: &[Candidate]) -> Vec<Mention> {
    let mut chosen: Vec<Mention> = Vec::new();
    for &(s, first, extra, entity, zero) in candidates {
        let Some(shape) = shapes.get(s % shapes.len().max(1)) else { continue };
        let s = s % shapes.len();
        let n = shape.words.len();
        let start = first % n;
        let span = if zero {
            let zeros: Vec<usize> = (0..n).filter(|&i| shape.zero_after[i]).collect();
            if zeros.is_empty() {
                continue;
            }
            let w = zeros[first % zeros.len()] as u32 + 1;
            MentionSpan::single(s, TokenId::empty(w, 1))
        } else {
            let end = (start + extra).min(n - 1);
            MentionSpan::new(s, TokenId::word(start as u32 + 1), TokenId::word(end as u32 + 1))
        };
        if chosen.iter().any(|m| m.span == span || m.span.crosses(&span)) {
            continue;
        }
        chosen.push(Mention::new(format!("e{entity}"), span));
    }
    chosen.sort_by_key(|m| m.span);
    chosen
}

/// A random annotated document with up to `max_sentences` sentences.
pub fn document_strategy(max_sentences: usize, max_words: usize) -> impl Strategy<Value = Document> {
    (
        prop::collection::vec(sentence_shape(max_words), 1..=max_sentences),
        prop::collection::vec(
            (0..16usize, 0..16usize, 0..4usize, 0..5u8, prop::bool::weighted(0.2)),
            0..24,
        ),
    )
        .prop_map(|(shapes, candidates)| {
            let text = render_shape("rand", &shapes);
            let doc = parse_document(&text).expect("generated text parses").remove(0);
            let mentions = select_mentions(&shapes, &candidates);
            write_entities(&doc, &mentions).expect("generated mentions are valid")
        })
}

pub fn document_text_strategy(max_sentences: usize, max_words: usize) -> impl Strategy<Value = String> {
    document_strategy(max_sentences, max_words).prop_map(|d| serialize_document(&d))
}

/// Reference union-find, kept separate from anything the library uses.
pub struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Clusters as a canonical set of sets, ignoring labels.
pub fn partition<I, E>(entities: I) -> BTreeSet<BTreeSet<MentionSpan>>
where
    I: IntoIterator<Item = E>,
    E: IntoIterator<Item = MentionSpan>,
{
    entities
        .into_iter()
        .map(|e| e.into_iter().collect::<BTreeSet<_>>())
        .filter(|e| !e.is_empty())
        .collect()
}

pub fn document_partition(doc: &Document) -> BTreeSet<BTreeSet<MentionSpan>> {
    partition(
        Clustering::from_document(doc)
            .expect("valid entities")
            .entities()
            .iter()
            .map(|e| e.iter().copied().collect::<Vec<_>>()),
    )
}

/// Brute-force scorers. Each computes its metric by a route different
/// from the library: explicit link counting via union-find for MUC,
/// per-mention linear scans for B³, exhaustive matchings for CEAF_e.
pub mod brute {
    use super::*;

    fn entity_of(c: &[Vec<MentionSpan>], m: &MentionSpan) -> Option<usize> {
        c.iter().position(|e| e.contains(m))
    }

    /// Links of `key` recovered by `response`, over links in `key`.
    fn muc_side(key: &[Vec<MentionSpan>], response: &[Vec<MentionSpan>]) -> (f64, f64) {
        let mut found = 0usize;
        let mut total = 0usize;
        for e in key {
            total += e.len() - 1;
            let mut dsu = Dsu::new(e.len());
            for i in 0..e.len() {
                for j in i + 1..e.len() {
                    let (a, b) = (entity_of(response, &e[i]), entity_of(response, &e[j]));
                    if a.is_some() && a == b && dsu.union(i, j) {
                        found += 1;
                    }
                }
            }
        }
        (found as f64, total as f64)
    }

    fn div(n: f64, d: f64) -> f64 {
        if d == 0.0 {
            0.0
        } else {
            n / d
        }
    }

    /// (precision, recall)
    pub fn muc(key: &[Vec<MentionSpan>], response: &[Vec<MentionSpan>]) -> (f64, f64) {
        let (rn, rd) = muc_side(key, response);
        let (pn, pd) = muc_side(response, key);
        (div(pn, pd), div(rn, rd))
    }

    fn b3_side(key: &[Vec<MentionSpan>], response: &[Vec<MentionSpan>]) -> (f64, f64) {
        let mut sum = 0.0;
        let mut count = 0.0;
        for e in key {
            for m in e {
                count += 1.0;
                if let Some(r) = entity_of(response, m) {
                    let shared = e.iter().filter(|x| response[r].contains(x)).count();
                    sum += shared as f64 / e.len() as f64;
                }
            }
        }
        (sum, count)
    }

    pub fn b_cubed(key: &[Vec<MentionSpan>], response: &[Vec<MentionSpan>]) -> (f64, f64) {
        let (rn, rd) = b3_side(key, response);
        let (pn, pd) = b3_side(response, key);
        (div(pn, pd), div(rn, rd))
    }

    fn phi4(a: &[MentionSpan], b: &[MentionSpan]) -> f64 {
        let shared = a.iter().filter(|x| b.contains(x)).count();
        2.0 * shared as f64 / (a.len() + b.len()) as f64
    }

    /// Best total similarity over every partial injection of key into response.
    fn best(key: &[Vec<MentionSpan>], response: &[Vec<MentionSpan>], i: usize, used: &mut Vec<bool>) -> f64 {
        if i == key.len() {
            return 0.0;
        }
        let mut top = best(key, response, i + 1, used);
        for j in 0..response.len() {
            if !used[j] {
                used[j] = true;
                top = top.max(phi4(&key[i], &response[j]) + best(key, response, i + 1, used));
                used[j] = false;
            }
        }
        top
    }

    pub fn ceaf_e(key: &[Vec<MentionSpan>], response: &[Vec<MentionSpan>]) -> (f64, f64) {
        let total = best(key, response, 0, &mut vec![false; response.len()]);
        (div(total, response.len() as f64), div(total, key.len() as f64))
    }

    pub fn f1(p: f64, r: f64) -> f64 {
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

pub fn clustering_from(groups: &[Vec<MentionSpan>]) -> Clustering {
    Clustering::new(groups.iter().map(|g| g.iter().copied().collect::<Entity>()))
}

/// Key and response clusterings over at most six mentions: a random
/// partition for each side, over random subsets of a shared mention pool.
pub fn small_clustering_pair() -> impl Strategy<Value = (Vec<Vec<MentionSpan>>, Vec<Vec<MentionSpan>>)> {
    let pool: Vec<MentionSpan> = (1..=6u32)
        .map(|i| {
            if i % 3 == 0 {
                MentionSpan::single(0, TokenId::empty(i, 1))
            } else {
                MentionSpan::single(0, TokenId::word(i))
            }
        })
        .collect();
    let side = move |pool: Vec<MentionSpan>| {
        prop::collection::vec(prop::option::weighted(0.85, 0..4usize), 6).prop_map(move |labels| {
            let mut groups: BTreeMap<usize, Vec<MentionSpan>> = BTreeMap::new();
            for (m, l) in pool.iter().zip(labels) {
                if let Some(l) = l {
                    groups.entry(l).or_default().push(*m);
                }
            }
            groups.into_values().collect::<Vec<_>>()
        })
    };
    (side(pool.clone()), side(pool))
}

/// Gold entity label for every labelled mention of `doc`.
pub fn entity_labels(doc: &Document) -> HashMap<MentionSpan, String> {
    coref_core::conllu::extract_mentions(doc)
        .expect("valid entities")
        .into_iter()
        .filter_map(|m| m.entity_id.map(|e| (m.span, e)))
        .collect()
}
