//! Evaluation metrics: schema consistency, information-consistency buckets,
//! triplet precision, resolution false discovery rate and threshold estimation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{cosine, embed_batch, BackendError, Embedder};
use crate::model::{canonicalize, KnowledgeGraph};

/// Pairs embedded per backend call during threshold estimation.
const ESTIMATE_BATCH: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid tally for `{key}`: {reason}")]
    InvalidTally { key: String, reason: String },
    #[error("no tallies given")]
    EmptyTallies,
    #[error("key `{0}` appears more than once")]
    DuplicateKey(String),
    #[error("fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("count {count} exceeds total {total}")]
    CountExceedsTotal { count: usize, total: usize },
    #[error("ratio is undefined for a zero total")]
    ZeroTotal,
    #[error("invalid pair dataset: {0}")]
    InvalidDataset(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Counts of correct, incorrect and total elements for one blueprint key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeyTally {
    key: String,
    correct: usize,
    incorrect: usize,
    total: usize,
}

impl KeyTally {
    pub fn new(
        key: impl Into<String>,
        correct: usize,
        incorrect: usize,
        total: usize,
    ) -> Result<Self, MetricsError> {
        let key = key.into();
        let reason = if total == 0 {
            Some("total must be at least 1".to_string())
        } else if correct > total {
            Some(format!("correct {correct} exceeds total {total}"))
        } else if incorrect > total {
            Some(format!("incorrect {incorrect} exceeds total {total}"))
        } else {
            None
        };
        match reason {
            Some(reason) => Err(MetricsError::InvalidTally { key, reason }),
            None => Ok(Self {
                key,
                correct,
                incorrect,
                total,
            }),
        }
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn correct(&self) -> usize {
        self.correct
    }

    pub fn incorrect(&self) -> usize {
        self.incorrect
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Sum with Neumaier compensation.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// `(C - I) / T`, or 0 when `C < I`.
pub fn schema_consistency_key(tally: &KeyTally) -> f64 {
    if tally.correct < tally.incorrect {
        return 0.0;
    }
    (tally.correct - tally.incorrect) as f64 / tally.total as f64
}

/// Mean of the per-key scores. Scores are summed in sorted order so the
/// result does not depend on the order of `tallies`.
pub fn schema_consistency(tallies: &[KeyTally]) -> Result<f64, MetricsError> {
    if tallies.is_empty() {
        return Err(MetricsError::EmptyTallies);
    }
    let mut seen = BTreeSet::new();
    for t in tallies {
        if !seen.insert(t.key.as_str()) {
            return Err(MetricsError::DuplicateKey(t.key.clone()));
        }
    }
    let mut scores: Vec<f64> = tallies.iter().map(schema_consistency_key).collect();
    scores.sort_by(f64::total_cmp);
    Ok(compensated_sum(scores) / tallies.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyCategory {
    VeryDifferent,
    Medium,
    LargelyConsistent,
    FullyConsistent,
}

impl ConsistencyCategory {
    pub const ALL: [Self; 4] = [
        Self::VeryDifferent,
        Self::Medium,
        Self::LargelyConsistent,
        Self::FullyConsistent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VeryDifferent => "very_different",
            Self::Medium => "medium",
            Self::LargelyConsistent => "largely_consistent",
            Self::FullyConsistent => "fully_consistent",
        }
    }
}

/// Buckets are `[0, .3)`, `[.3, .6)`, `[.6, .9)` and `[.9, 1]`.
pub fn information_consistency_category(
    fraction: f64,
) -> Result<ConsistencyCategory, MetricsError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(MetricsError::FractionOutOfRange(fraction));
    }
    Ok(if fraction < 0.30 {
        ConsistencyCategory::VeryDifferent
    } else if fraction < 0.60 {
        ConsistencyCategory::Medium
    } else if fraction < 0.90 {
        ConsistencyCategory::LargelyConsistent
    } else {
        ConsistencyCategory::FullyConsistent
    })
}

fn ratio(count: usize, total: usize) -> Result<f64, MetricsError> {
    if total == 0 {
        return Err(MetricsError::ZeroTotal);
    }
    if count > total {
        return Err(MetricsError::CountExceedsTotal { count, total });
    }
    Ok(count as f64 / total as f64)
}

pub fn triplet_precision(relevant: usize, total: usize) -> Result<f64, MetricsError> {
    ratio(relevant, total)
}

pub fn resolution_fdr(unresolved: usize, total: usize) -> Result<f64, MetricsError> {
    ratio(unresolved, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Entities,
    Relationships,
}

/// Pairs of texts judged to mean the same thing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPairDataset {
    kind: PairKind,
    pairs: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct PairHeader {
    kind: PairKind,
}

#[derive(Deserialize)]
struct PairLine {
    a: String,
    b: String,
}

impl LabeledPairDataset {
    pub fn new(kind: PairKind, pairs: Vec<(String, String)>) -> Result<Self, MetricsError> {
        if pairs.is_empty() {
            return Err(MetricsError::InvalidDataset("no pairs".into()));
        }
        if let Some(i) = pairs
            .iter()
            .position(|(a, b)| a.trim().is_empty() || b.trim().is_empty())
        {
            return Err(MetricsError::InvalidDataset(format!(
                "pair {} has an empty text",
                i + 1
            )));
        }
        Ok(Self { kind, pairs })
    }

    /// Parses JSON lines: a `{"kind": ...}` header, then one `{"a", "b"}` per
    /// line. Blank lines are ignored.
    pub fn from_jsonl(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| MetricsError::InvalidDataset("file is empty".into()))?;
        let header: PairHeader = serde_json::from_str(header)
            .map_err(|e| MetricsError::InvalidDataset(format!("line 1: {e}")))?;
        let pairs = lines
            .map(|(n, line)| {
                serde_json::from_str::<PairLine>(line)
                    .map(|p| (p.a, p.b))
                    .map_err(|e| MetricsError::InvalidDataset(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(header.kind, pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self, MetricsError> {
        Self::from_jsonl(&read(path)?)
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

fn read(path: &Path) -> Result<String, MetricsError> {
    std::fs::read_to_string(path).map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub kind: PairKind,
    pub pairs: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Mean and population standard deviation of pair cosines, accumulated in
/// file order.
pub fn estimate_threshold(
    dataset: &LabeledPairDataset,
    embedder: &dyn Embedder,
) -> Result<ThresholdEstimate, MetricsError> {
    let mut cosines = Vec::with_capacity(dataset.pairs.len());
    for chunk in dataset.pairs.chunks(ESTIMATE_BATCH) {
        let texts: Vec<String> = chunk
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        let vectors = embed_batch(embedder, &texts)?;
        for pair in vectors.chunks(2) {
            let c =
                cosine(&pair[0], &pair[1]).map_err(|e| BackendError::InvalidData(e.to_string()))?;
            cosines.push(c);
        }
    }
    let n = cosines.len() as f64;
    let mean = compensated_sum(cosines.iter().copied()) / n;
    let variance = compensated_sum(cosines.iter().map(|c| (c - mean) * (c - mean))) / n;
    Ok(ThresholdEstimate {
        kind: dataset.kind,
        pairs: cosines.len(),
        mean,
        std: variance.max(0.0).sqrt(),
    })
}

/// Ground-truth concept labels for graph items. Keys are canonicalized on
/// load; unlabeled items count as their own concept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolutionLabels {
    #[serde(default)]
    pub entities: BTreeMap<String, String>,
    #[serde(default)]
    pub predicates: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrCount {
    pub total: usize,
    pub unresolved: usize,
    /// Items with no label, each treated as a distinct concept.
    pub unlabeled: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr: Option<f64>,
}

impl FdrCount {
    fn new(total: usize, concepts: usize, unlabeled: usize) -> Self {
        let unresolved = total - concepts;
        Self {
            total,
            unresolved,
            unlabeled,
            fdr: resolution_fdr(unresolved, total).ok(),
        }
    }
}

impl ResolutionLabels {
    pub fn from_file(path: &Path) -> Result<Self, MetricsError> {
        let labels: Self = serde_json::from_str(&read(path)?).map_err(|e| MetricsError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(labels.canonical())
    }

    fn canonical(self) -> Self {
        let fold = |m: BTreeMap<String, String>| {
            m.into_iter()
                .map(|(k, v)| (canonicalize(&k), canonicalize(&v)))
                .collect()
        };
        Self {
            entities: fold(self.entities),
            predicates: fold(self.predicates),
        }
    }

    fn entity_concept<'a>(&'a self, key: &'a str) -> (&'a str, bool) {
        match self.entities.get(key) {
            Some(c) => (c, true),
            None => (key, false),
        }
    }

    /// Entities beyond one per concept are unresolved.
    pub fn entity_fdr(&self, graph: &KnowledgeGraph) -> FdrCount {
        let labels = self.clone().canonical();
        let mut concepts = BTreeSet::new();
        let mut unlabeled = 0;
        for e in graph.entities() {
            let (concept, labeled) = labels.entity_concept(e.key());
            unlabeled += usize::from(!labeled);
            concepts.insert(concept.to_string());
        }
        FdrCount::new(graph.entities().len(), concepts.len(), unlabeled)
    }

    /// Relations beyond one per (subject, predicate, object) concept triple
    /// are unresolved.
    pub fn relation_fdr(&self, graph: &KnowledgeGraph) -> FdrCount {
        let labels = self.clone().canonical();
        let mut concepts = BTreeSet::new();
        let mut unlabeled = 0;
        for r in graph.relations() {
            let (s, s_labeled) = labels.entity_concept(r.subject_key());
            let (o, o_labeled) = labels.entity_concept(r.object_key());
            let (p, p_labeled) = match labels.predicates.get(r.predicate_key()) {
                Some(c) => (c.as_str(), true),
                None => (r.predicate_key(), false),
            };
            unlabeled += usize::from(!(s_labeled && p_labeled && o_labeled));
            concepts.insert((s.to_string(), p.to_string(), o.to_string()));
        }
        FdrCount::new(graph.relations().len(), concepts.len(), unlabeled)
    }
}

/// Annotation counts per document and key.
pub type SchemaAnnotations = BTreeMap<String, BTreeMap<String, TallyCounts>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyCounts {
    pub correct: usize,
    pub incorrect: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCounts {
    pub relevant: usize,
    pub total: usize,
}

/// Everything `compute_report` may score. Absent sections are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsInput {
    #[serde(default)]
    pub schema_annotations: Option<SchemaAnnotations>,
    /// Judged information-consistency fraction per document.
    #[serde(default)]
    pub information_consistency: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub triplets: Option<TripletCounts>,
    #[serde(default)]
    pub labels: Option<ResolutionLabels>,
}

impl MetricsInput {
    pub fn from_file(path: &Path) -> Result<Self, MetricsError> {
        serde_json::from_str(&read(path)?).map_err(|e| MetricsError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemaConsistencyReport {
    /// Key scores over counts summed across documents.
    pub per_key: BTreeMap<String, f64>,
    pub per_document: BTreeMap<String, f64>,
    /// Mean of the per-document scores.
    pub overall: f64,
    /// Population standard deviation of the per-document scores.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: BTreeMap<&'static str, usize>,
    pub fractions: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_consistency: Option<SchemaConsistencyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub information_consistency: Option<Histogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr_entities: Option<FdrCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr_relations: Option<FdrCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_estimate: Option<ThresholdEstimate>,
}

fn tallies(counts: &BTreeMap<String, TallyCounts>) -> Result<Vec<KeyTally>, MetricsError> {
    counts
        .iter()
        .map(|(k, c)| KeyTally::new(k, c.correct, c.incorrect, c.total))
        .collect()
}

fn schema_report(annotations: &SchemaAnnotations) -> Result<SchemaConsistencyReport, MetricsError> {
    let mut summed: BTreeMap<String, TallyCounts> = BTreeMap::new();
    let mut per_document = BTreeMap::new();
    for (document, counts) in annotations {
        per_document.insert(document.clone(), schema_consistency(&tallies(counts)?)?);
        for (key, c) in counts {
            let s = summed.entry(key.clone()).or_insert(TallyCounts {
                correct: 0,
                incorrect: 0,
                total: 0,
            });
            s.correct += c.correct;
            s.incorrect += c.incorrect;
            s.total += c.total;
        }
    }
    if per_document.is_empty() {
        return Err(MetricsError::EmptyTallies);
    }
    let per_key = tallies(&summed)?
        .iter()
        .map(|t| (t.key.clone(), schema_consistency_key(t)))
        .collect();
    let n = per_document.len() as f64;
    let overall = compensated_sum(per_document.values().copied()) / n;
    let variance =
        compensated_sum(per_document.values().map(|s| (s - overall) * (s - overall))) / n;
    Ok(SchemaConsistencyReport {
        per_key,
        per_document,
        overall,
        std: variance.max(0.0).sqrt(),
    })
}

fn histogram(fractions: &BTreeMap<String, f64>) -> Result<Histogram, MetricsError> {
    let mut counts: BTreeMap<&'static str, usize> = ConsistencyCategory::ALL
        .iter()
        .map(|c| (c.as_str(), 0))
        .collect();
    for &f in fractions.values() {
        *counts
            .get_mut(information_consistency_category(f)?.as_str())
            .unwrap() += 1;
    }
    let n = fractions.len();
    let fractions = counts
        .iter()
        .map(|(k, &c)| (*k, if n == 0 { 0.0 } else { c as f64 / n as f64 }))
        .collect();
    Ok(Histogram { counts, fractions })
}

/// Scores every section present in `input`. FDR needs `graph`; threshold
/// estimation needs both `pairs` and `embedder`.
pub fn compute_report(
    input: &MetricsInput,
    graph: Option<&KnowledgeGraph>,
    pairs: Option<(&LabeledPairDataset, &dyn Embedder)>,
) -> Result<MetricReport, MetricsError> {
    let mut report = MetricReport {
        schema_consistency: input
            .schema_annotations
            .as_ref()
            .map(schema_report)
            .transpose()?,
        information_consistency: input
            .information_consistency
            .as_ref()
            .map(histogram)
            .transpose()?,
        precision: input
            .triplets
            .map(|t| triplet_precision(t.relevant, t.total))
            .transpose()?,
        ..MetricReport::default()
    };
    if let Some(graph) = graph {
        let labels = input.labels.clone().unwrap_or_default();
        report.fdr_entities = Some(labels.entity_fdr(graph));
        report.fdr_relations = Some(labels.relation_fdr(graph));
    }
    if let Some((dataset, embedder)) = pairs {
        report.threshold_estimate = Some(estimate_threshold(dataset, embedder)?);
    }
    Ok(report)
}
