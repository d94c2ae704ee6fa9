//! Coreference metrics: MUC, B³, CEAF_e, their CoNLL average, and a
//! simplified zero-anaphor score.
//!
//! Mentions are matched by exact position. Every metric is kept as raw
//! numerator/denominator sums so documents can be micro-averaged.

mod hungarian;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::AddAssign;

use serde_json::{Map, Value};

pub use hungarian::max_weight_assignment;

use crate::conllu::{extract_mentions, kind_of, Document, EntityError, Mention, MentionKind, MentionSpan};

/// Label shown for the zero score wherever it is reported.
pub const ZERO_LABEL: &str = "zero (simplified)";

pub type Entity = BTreeSet<MentionSpan>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    entities: Vec<Entity>,
}

impl Clustering {
    /// Drops empty entities and repeated mentions (first entity wins).
    pub fn new(entities: impl IntoIterator<Item = Entity>) -> Self {
        let mut seen = BTreeSet::new();
        let entities = entities
            .into_iter()
            .map(|e| e.into_iter().filter(|m| seen.insert(*m)).collect::<Entity>())
            .filter(|e| !e.is_empty())
            .collect();
        Clustering { entities }
    }

    /// Groups mentions by entity id; unresolved mentions become singletons.
    pub fn from_mentions(mentions: &[Mention]) -> Self {
        let mut by_id: BTreeMap<&str, Entity> = BTreeMap::new();
        let mut singletons = Vec::new();
        for m in mentions {
            match &m.entity_id {
                Some(id) => {
                    by_id.entry(id).or_default().insert(m.span);
                }
                None => singletons.push(Entity::from([m.span])),
            }
        }
        Clustering::new(by_id.into_values().chain(singletons))
    }

    pub fn from_document(doc: &Document) -> Result<Self, EntityError> {
        Ok(Clustering::from_mentions(&extract_mentions(doc)?))
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn mentions(&self) -> impl Iterator<Item = &MentionSpan> {
        self.entities.iter().flatten()
    }

    pub fn without_singletons(&self) -> Self {
        Clustering {
            entities: self.entities.iter().filter(|e| e.len() > 1).cloned().collect(),
        }
    }

    fn index(&self) -> HashMap<MentionSpan, usize> {
        self.entities
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.iter().map(move |m| (*m, i)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Raw sums behind one metric's precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricCounts {
    pub recall_num: f64,
    pub recall_den: f64,
    pub precision_num: f64,
    pub precision_den: f64,
}

impl MetricCounts {
    pub fn prf(&self) -> Prf {
        Prf::new(
            ratio(self.precision_num, self.precision_den),
            ratio(self.recall_num, self.recall_den),
        )
    }
}

impl AddAssign for MetricCounts {
    fn add_assign(&mut self, o: Self) {
        self.recall_num += o.recall_num;
        self.recall_den += o.recall_den;
        self.precision_num += o.precision_num;
        self.precision_den += o.precision_den;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    pub matched: Vec<MentionSpan>,
    pub missing: Vec<MentionSpan>,
    pub spurious: Vec<MentionSpan>,
}

pub fn align_mentions(key: &Clustering, response: &Clustering) -> Alignment {
    let k: BTreeSet<MentionSpan> = key.mentions().copied().collect();
    let r: BTreeSet<MentionSpan> = response.mentions().copied().collect();
    Alignment {
        matched: k.intersection(&r).copied().collect(),
        missing: k.difference(&r).copied().collect(),
        spurious: r.difference(&k).copied().collect(),
    }
}

/// Recall side of MUC: each key entity loses one link per extra part it is split into.
fn muc_recall(key: &Clustering, response: &Clustering) -> (f64, f64) {
    let resp = response.index();
    let mut num = 0.0;
    let mut den = 0.0;
    for entity in key.entities() {
        let mut parts = BTreeSet::new();
        let mut unmatched = 0;
        for m in entity {
            match resp.get(m) {
                Some(r) => {
                    parts.insert(*r);
                }
                None => unmatched += 1,
            }
        }
        let partitions = parts.len() + unmatched;
        num += (entity.len() - partitions) as f64;
        den += (entity.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(key: &Clustering, response: &Clustering) -> MetricCounts {
    let (recall_num, recall_den) = muc_recall(key, response);
    let (precision_num, precision_den) = muc_recall(response, key);
    MetricCounts {
        recall_num,
        recall_den,
        precision_num,
        precision_den,
    }
}

pub fn muc(key: &Clustering, response: &Clustering) -> Prf {
    muc_counts(key, response).prf()
}

fn b3_recall(key: &Clustering, response: &Clustering) -> (f64, f64) {
    let resp = response.index();
    let mut num = 0.0;
    let mut den = 0.0;
    for entity in key.entities() {
        for m in entity {
            den += 1.0;
            if let Some(&r) = resp.get(m) {
                let overlap = entity.intersection(&response.entities()[r]).count();
                num += overlap as f64 / entity.len() as f64;
            }
        }
    }
    (num, den)
}

pub fn b_cubed_counts(key: &Clustering, response: &Clustering) -> MetricCounts {
    let (recall_num, recall_den) = b3_recall(key, response);
    let (precision_num, precision_den) = b3_recall(response, key);
    MetricCounts {
        recall_num,
        recall_den,
        precision_num,
        precision_den,
    }
}

pub fn b_cubed(key: &Clustering, response: &Clustering) -> Prf {
    b_cubed_counts(key, response).prf()
}

/// Entity similarity `2|K∩R| / (|K|+|R|)`.
pub fn phi4(k: &Entity, r: &Entity) -> f64 {
    2.0 * k.intersection(r).count() as f64 / (k.len() + r.len()) as f64
}

pub fn ceaf_e_counts(key: &Clustering, response: &Clustering) -> MetricCounts {
    let weights: Vec<Vec<f64>> = key
        .entities()
        .iter()
        .map(|k| response.entities().iter().map(|r| phi4(k, r)).collect())
        .collect();
    let (total, _) = max_weight_assignment(&weights);
    MetricCounts {
        recall_num: total,
        recall_den: key.entities().len() as f64,
        precision_num: total,
        precision_den: response.entities().len() as f64,
    }
}

pub fn ceaf_e(key: &Clustering, response: &Clustering) -> Prf {
    ceaf_e_counts(key, response).prf()
}

pub fn conll_score(muc: &Prf, b3: &Prf, ceaf_e: &Prf) -> f64 {
    (muc.f1 + b3.f1 + ceaf_e.f1) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ZeroCounts {
    pub correct: usize,
    pub key_zeros: usize,
    pub response_zeros: usize,
}

impl ZeroCounts {
    pub fn prf(&self) -> Prf {
        Prf::new(
            ratio(self.correct as f64, self.response_zeros as f64),
            ratio(self.correct as f64, self.key_zeros as f64),
        )
    }

    pub fn applicable(&self) -> bool {
        self.key_zeros + self.response_zeros > 0
    }
}

impl AddAssign for ZeroCounts {
    fn add_assign(&mut self, o: Self) {
        self.correct += o.correct;
        self.key_zeros += o.key_zeros;
        self.response_zeros += o.response_zeros;
    }
}

fn antecedents(entity: &Entity, mention: &MentionSpan) -> BTreeSet<MentionSpan> {
    entity.range(..*mention).copied().collect()
}

/// A response zero is correct when the key has a zero at the same position
/// and the two entities share a preceding mention, or neither entity has
/// any mention before it.
pub fn zero_anaphor_counts(key: &Clustering, response: &Clustering) -> ZeroCounts {
    let is_zero = |m: &&MentionSpan| kind_of(m) == MentionKind::Zero;
    let key_index = key.index();
    let resp_index = response.index();
    let mut counts = ZeroCounts {
        key_zeros: key.mentions().filter(is_zero).count(),
        response_zeros: response.mentions().filter(is_zero).count(),
        correct: 0,
    };
    for z in response.mentions().filter(is_zero) {
        let Some(&k) = key_index.get(z) else { continue };
        let r = resp_index[z];
        let from_key = antecedents(&key.entities()[k], z);
        let from_resp = antecedents(&response.entities()[r], z);
        let agree = if from_key.is_empty() || from_resp.is_empty() {
            from_key.is_empty() && from_resp.is_empty()
        } else {
            !from_key.is_disjoint(&from_resp)
        };
        if agree {
            counts.correct += 1;
        }
    }
    counts
}

pub fn zero_anaphor_score(key: &Clustering, response: &Clustering) -> Prf {
    zero_anaphor_counts(key, response).prf()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MentionCounts {
    pub matched: usize,
    pub missing: usize,
    pub spurious: usize,
}

impl AddAssign for MentionCounts {
    fn add_assign(&mut self, o: Self) {
        self.matched += o.matched;
        self.missing += o.missing;
        self.spurious += o.spurious;
    }
}

/// Everything needed to produce a report; sums across documents.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreCounts {
    pub muc: MetricCounts,
    pub b3: MetricCounts,
    pub ceaf_e: MetricCounts,
    pub zero: ZeroCounts,
    pub mentions: MentionCounts,
}

impl AddAssign for ScoreCounts {
    fn add_assign(&mut self, o: Self) {
        self.muc += o.muc;
        self.b3 += o.b3;
        self.ceaf_e += o.ceaf_e;
        self.zero += o.zero;
        self.mentions += o.mentions;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoreOptions {
    pub remove_singletons: bool,
}

pub fn score_counts(key: &Clustering, response: &Clustering, options: ScoreOptions) -> ScoreCounts {
    let (key, response) = if options.remove_singletons {
        (key.without_singletons(), response.without_singletons())
    } else {
        (key.clone(), response.clone())
    };
    let alignment = align_mentions(&key, &response);
    ScoreCounts {
        muc: muc_counts(&key, &response),
        b3: b_cubed_counts(&key, &response),
        ceaf_e: ceaf_e_counts(&key, &response),
        zero: zero_anaphor_counts(&key, &response),
        mentions: MentionCounts {
            matched: alignment.matched.len(),
            missing: alignment.missing.len(),
            spurious: alignment.spurious.len(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub muc: Prf,
    pub b3: Prf,
    pub ceaf_e: Prf,
    pub conll: f64,
    pub zero: Prf,
    pub counts: MentionCounts,
    pub diagnostics: Vec<String>,
}

impl ScoreReport {
    pub fn from_counts(c: &ScoreCounts) -> Self {
        let muc = c.muc.prf();
        let b3 = c.b3.prf();
        let ceaf_e = c.ceaf_e.prf();
        let mut diagnostics = Vec::new();
        if c.muc.recall_den == 0.0 {
            diagnostics.push("MUC recall undefined: key has no coreference links".to_owned());
        }
        if !c.zero.applicable() {
            diagnostics.push(format!("{ZERO_LABEL}: not applicable, no zero mentions"));
        }
        ScoreReport {
            conll: conll_score(&muc, &b3, &ceaf_e),
            muc,
            b3,
            ceaf_e,
            zero: c.zero.prf(),
            counts: c.mentions,
            diagnostics,
        }
    }

    /// Flat machine-readable record; `name` identifies the document or dataset.
    pub fn to_record(&self, scope: &str, name: &str) -> Map<String, Value> {
        let mut rec = Map::new();
        rec.insert("scope".into(), scope.into());
        rec.insert("name".into(), name.into());
        for (metric, prf) in [("muc", self.muc), ("b3", self.b3), ("ceaf_e", self.ceaf_e)] {
            rec.insert(format!("{metric}.p"), prf.precision.into());
            rec.insert(format!("{metric}.r"), prf.recall.into());
            rec.insert(format!("{metric}.f1"), prf.f1.into());
        }
        rec.insert("conll".into(), self.conll.into());
        rec.insert("zero.p".into(), self.zero.precision.into());
        rec.insert("zero.r".into(), self.zero.recall.into());
        rec.insert("zero.f1".into(), self.zero.f1.into());
        rec.insert("zero.label".into(), ZERO_LABEL.into());
        rec.insert("counts.matched".into(), self.counts.matched.into());
        rec.insert("counts.missing".into(), self.counts.missing.into());
        rec.insert("counts.spurious".into(), self.counts.spurious.into());
        rec
    }
}

impl ScoreReport {
    pub fn zero_applicable(&self) -> bool {
        !self.diagnostics.iter().any(|d| d.starts_with(ZERO_LABEL))
    }
}

pub fn score(key: &Clustering, response: &Clustering) -> ScoreReport {
    ScoreReport::from_counts(&score_counts(key, response, ScoreOptions::default()))
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusScoreError {
    #[error("key has {key} documents but response has {response}")]
    CountMismatch { key: usize, response: usize },
    #[error("document {index}: key id {key:?} does not match response id {response:?}")]
    IdMismatch {
        index: usize,
        key: String,
        response: String,
    },
    #[error("document {doc:?}: {source}")]
    Entity { doc: String, source: EntityError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentScore {
    pub doc_id: String,
    pub counts: ScoreCounts,
    pub report: ScoreReport,
}

/// Per-document scores plus their micro-average.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetScore {
    pub name: String,
    pub documents: Vec<DocumentScore>,
    pub counts: ScoreCounts,
    pub report: ScoreReport,
}

/// Documents are paired by position and must carry the same ids.
pub fn score_dataset(
    name: &str,
    key: &[Document],
    response: &[Document],
    options: ScoreOptions,
) -> Result<DatasetScore, CorpusScoreError> {
    use rayon::prelude::*;

    if key.len() != response.len() {
        return Err(CorpusScoreError::CountMismatch {
            key: key.len(),
            response: response.len(),
        });
    }
    let clustering = |d: &Document| {
        Clustering::from_document(d).map_err(|source| CorpusScoreError::Entity {
            doc: d.doc_id.clone(),
            source,
        })
    };
    let documents = key
        .par_iter()
        .zip(response)
        .enumerate()
        .map(|(index, (k, r))| {
            if k.doc_id != r.doc_id {
                return Err(CorpusScoreError::IdMismatch {
                    index,
                    key: k.doc_id.clone(),
                    response: r.doc_id.clone(),
                });
            }
            let counts = score_counts(&clustering(k)?, &clustering(r)?, options);
            Ok(DocumentScore {
                doc_id: k.doc_id.clone(),
                report: ScoreReport::from_counts(&counts),
                counts,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut counts = ScoreCounts::default();
    for d in &documents {
        counts += d.counts;
    }
    Ok(DatasetScore {
        name: name.to_owned(),
        report: ScoreReport::from_counts(&counts),
        documents,
        counts,
    })
}

/// One table row per entry, then a macro-average row when there are several.
pub fn render_table(rows: &[(String, ScoreReport)]) -> String {
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    let mut out = format!(
        "{:<24} {:>8} {:>8} {:>8} {:>8} {:>18}\n",
        "name", "MUC", "B3", "CEAF_e", "CoNLL", ZERO_LABEL
    );
    let mut line = |name: &str, muc: f64, b3: f64, ceaf: f64, conll: f64, zero: String| {
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8} {:>18}\n",
            name,
            pct(muc),
            pct(b3),
            pct(ceaf),
            pct(conll),
            zero
        ));
    };
    for (name, r) in rows {
        let zero = if !r.zero_applicable() {
            "n/a".to_owned()
        } else {
            pct(r.zero.f1)
        };
        line(name, r.muc.f1, r.b3.f1, r.ceaf_e.f1, r.conll, zero);
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&ScoreReport) -> f64| rows.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
        let zero_rows: Vec<f64> = rows
            .iter()
            .filter(|(_, r)| r.zero_applicable())
            .map(|(_, r)| r.zero.f1)
            .collect();
        let zero = if zero_rows.is_empty() {
            "n/a".to_owned()
        } else {
            pct(zero_rows.iter().sum::<f64>() / zero_rows.len() as f64)
        };
        line(
            "macro average",
            avg(&|r| r.muc.f1),
            avg(&|r| r.b3.f1),
            avg(&|r| r.ceaf_e.f1),
            avg(&|r| r.conll),
            zero,
        );
    }
    out
}
