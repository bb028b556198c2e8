//! Patient admissions, preprocessing into training records, patient-level
//! folds, and a synthetic cohort generator with planted progression rules.
//!
//! A cohort file holds one line per admission:
//!
//! ```text
//! #kgpath-cohort v1
//! #features<TAB>severity,marker_obesity,...
//! P0001<TAB>0<TAB>obesity;hypertension<TAB>0.42,1.03,...
//! ```
//!
//! Conditions are entity names separated by `;` (`-` for none) and features
//! are comma-separated numbers with `NA` for a missing value.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, EntityKind, KnowledgeGraph};

pub const COHORT_HEADER: &str = "#kgpath-cohort v1";

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing `{COHORT_HEADER}` header")]
    MissingHeader,
    #[error("line {line}: unknown entity `{name}`")]
    UnknownEntity { line: usize, name: String },
    #[error("line {line}: patient `{patient}` repeats admission {index}")]
    DuplicateAdmission { line: usize, patient: String, index: usize },
    #[error("line {line}: expected {expected} features, found {got}")]
    FeatureCount { line: usize, expected: usize, got: usize },
    #[error("feature column `{0}` has no observed value")]
    ColumnMissing(String),
    #[error("no usable records after preprocessing")]
    Empty,
    #[error("{folds} folds need at least {folds} patients, found {patients}")]
    TooFewPatients { folds: usize, patients: usize },
    #[error("rule {from} -> {to}: no knowledge-graph path of length at most 2")]
    InconsistentRule { from: String, to: String },
    #[error("rule {from} -> {to}: {message}")]
    InvalidRule { from: String, to: String, message: String },
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Admission {
    pub patient: String,
    pub index: usize,
    pub conditions: Vec<String>,
    pub features: Vec<Option<f64>>,
    /// Source line, 0 when built in memory.
    pub line: usize,
}

/// Admissions as read from or written to a cohort file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawCohort {
    pub feature_names: Vec<String>,
    pub admissions: Vec<Admission>,
}

impl RawCohort {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CohortError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CohortError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CohortError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| CohortError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CohortError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let header = lines.by_ref().find(|(_, l)| !l.trim().is_empty());
        if header.map(|(_, l)| l.trim()) != Some(COHORT_HEADER) {
            return Err(CohortError::MissingHeader);
        }
        let mut raw = RawCohort::default();
        let mut width: Option<usize> = None;
        for (line, text) in lines {
            if text.trim().is_empty() {
                continue;
            }
            if let Some(rest) = text.strip_prefix("#features\t") {
                raw.feature_names = rest.split(',').map(|s| s.trim().to_string()).collect();
                width = Some(raw.feature_names.len());
                continue;
            }
            if text.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = text.split('\t').collect();
            if cols.len() != 4 {
                return Err(CohortError::Malformed {
                    line,
                    message: format!("expected 4 tab-separated fields, found {}", cols.len()),
                });
            }
            let patient = cols[0].trim();
            if patient.is_empty() {
                return Err(CohortError::Malformed {
                    line,
                    message: "empty patient id".into(),
                });
            }
            let index = cols[1].trim().parse().map_err(|_| CohortError::Malformed {
                line,
                message: format!("bad admission index `{}`", cols[1]),
            })?;
            let conditions = match cols[2].trim() {
                "" | "-" => Vec::new(),
                s => s.split(';').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect(),
            };
            let features = if cols[3].trim().is_empty() {
                Vec::new()
            } else {
                cols[3]
                    .split(',')
                    .map(|f| match f.trim() {
                        "NA" | "" => Ok(None),
                        v => v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some).ok_or_else(|| {
                            CohortError::Malformed {
                                line,
                                message: format!("bad feature value `{v}`"),
                            }
                        }),
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let expected = *width.get_or_insert(features.len());
            if features.len() != expected {
                return Err(CohortError::FeatureCount {
                    line,
                    expected,
                    got: features.len(),
                });
            }
            raw.admissions.push(Admission {
                patient: patient.to_string(),
                index,
                conditions,
                features,
                line,
            });
        }
        if raw.feature_names.is_empty() {
            raw.feature_names = (0..width.unwrap_or(0)).map(|i| format!("f{i}")).collect();
        }
        Ok(raw)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{COHORT_HEADER}\n#features\t{}\n", self.feature_names.join(","));
        for a in &self.admissions {
            let conditions = if a.conditions.is_empty() {
                "-".to_string()
            } else {
                a.conditions.join(";")
            };
            let features: Vec<String> = a
                .features
                .iter()
                .map(|f| f.map_or_else(|| "NA".to_string(), |x| x.to_string()))
                .collect();
            let _ = writeln!(out, "{}\t{}\t{}\t{}", a.patient, a.index, conditions, features.join(","));
        }
        out
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Resolves every condition name against `kg`, failing on the first
    /// unknown name.
    pub fn resolve(&self, kg: &KnowledgeGraph) -> Result<Vec<Vec<EntityId>>, CohortError> {
        self.admissions
            .iter()
            .map(|a| {
                a.conditions
                    .iter()
                    .map(|name| {
                        kg.entity_id(name).ok_or_else(|| CohortError::UnknownEntity {
                            line: a.line,
                            name: name.clone(),
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Every unresolvable name, for diagnostics.
    pub fn unknown_entities(&self, kg: &KnowledgeGraph) -> Vec<(usize, String)> {
        self.admissions
            .iter()
            .flat_map(|a| {
                a.conditions
                    .iter()
                    .filter(|n| kg.entity_id(n).is_none())
                    .map(move |n| (a.line, n.clone()))
            })
            .collect()
    }

    pub fn patient_count(&self) -> usize {
        self.admissions.iter().map(|a| a.patient.as_str()).collect::<BTreeSet<_>>().len()
    }
}

/// One training example: the current admission's links and features, with
/// the diseases of the next admission as labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub patient: String,
    pub admission: usize,
    /// `p_c`, length `m`.
    pub characters: Vec<bool>,
    /// `p_f` min-max scaled to `[0, 1]`.
    pub features: Vec<f64>,
    /// `p_f` as z-scores, for reporting.
    pub standardized: Vec<f64>,
    pub labels: BTreeSet<EntityId>,
}

impl PatientRecord {
    pub fn links(&self) -> Vec<EntityId> {
        self.characters
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(EntityId(i)))
            .collect()
    }
}

/// Per-column statistics fitted by [`preprocess`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaling {
    fn fit(names: &[String], columns: &[Vec<Option<f64>>]) -> Result<(Self, Vec<String>), CohortError> {
        let l = names.len();
        let mut s = FeatureScaling {
            names: names.to_vec(),
            mean: vec![0.0; l],
            std: vec![0.0; l],
            min: vec![0.0; l],
            max: vec![0.0; l],
        };
        let mut constant = Vec::new();
        for j in 0..l {
            let observed: Vec<f64> = columns.iter().filter_map(|row| row[j]).collect();
            if observed.is_empty() {
                return Err(CohortError::ColumnMissing(names[j].clone()));
            }
            let n = columns.len() as f64;
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            // imputed entries sit at the mean, so they add nothing to the spread
            let var = observed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            s.mean[j] = mean;
            s.std[j] = var.sqrt();
            s.min[j] = observed.iter().copied().fold(f64::INFINITY, f64::min);
            s.max[j] = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if s.max[j] == s.min[j] {
                log::warn!("feature `{}` is constant; scaling it to 0.5", names[j]);
                constant.push(names[j].clone());
            }
        }
        Ok((s, constant))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Mean-imputes and maps into `[0, 1]`; values outside the fitted range
    /// are clamped.
    pub fn scale(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, x)| {
                let x = x.unwrap_or(self.mean[j]);
                let span = self.max[j] - self.min[j];
                if span > 0.0 {
                    ((x - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn standardize(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, x)| {
                let x = x.unwrap_or(self.mean[j]);
                if self.std[j] > 0.0 {
                    (x - self.mean[j]) / self.std[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// What preprocessing removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessReport {
    pub single_admission_patients: usize,
    pub records_without_links: usize,
    pub records_without_labels: usize,
    pub constant_features: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub entity_count: usize,
    pub records: Vec<PatientRecord>,
    pub scaling: FeatureScaling,
    /// The admissions the records were built from, minus everything dropped.
    pub admissions: RawCohort,
    pub report: PreprocessReport,
}

/// Counts in the shape of a dataset summary table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortSummary {
    pub patients: usize,
    pub admissions: usize,
    pub records: usize,
    pub features: usize,
    pub avg_links: f64,
    pub max_links: usize,
    pub avg_labels: f64,
    pub max_labels: usize,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.scaling.len()
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.patient.as_str()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&PatientRecord> {
        indices.iter().map(|&i| &self.records[i]).collect()
    }

    pub fn summary(&self) -> CohortSummary {
        let n = self.records.len().max(1) as f64;
        let links: Vec<usize> = self.records.iter().map(|r| r.characters.iter().filter(|&&c| c).count()).collect();
        let labels: Vec<usize> = self.records.iter().map(|r| r.labels.len()).collect();
        CohortSummary {
            patients: self.patients().len(),
            admissions: self.admissions.admissions.len(),
            records: self.records.len(),
            features: self.feature_count(),
            avg_links: links.iter().sum::<usize>() as f64 / n,
            max_links: links.iter().copied().max().unwrap_or(0),
            avg_labels: labels.iter().sum::<usize>() as f64 / n,
            max_labels: labels.iter().copied().max().unwrap_or(0),
        }
    }

    /// Label frequency per disease entity.
    pub fn label_counts(&self) -> BTreeMap<EntityId, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            for &d in &r.labels {
                *counts.entry(d).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Share of all labels taken by the `top` most frequent diseases.
    pub fn top_label_coverage(&self, top: usize) -> f64 {
        let mut counts: Vec<usize> = self.label_counts().into_values().collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts.iter().take(top).sum::<usize>() as f64 / total as f64
    }
}

/// Builds training records from admissions.
///
/// Patients with a single admission are dropped. Each consecutive admission
/// pair `(t, t+1)` becomes a record whose links are the conditions of `t`
/// and whose labels are the disease-kind conditions of `t+1`; records with
/// no link or no label are dropped. Features are mean-imputed, then min-max
/// scaled (constant columns become 0.5) with z-scores kept alongside.
pub fn preprocess(raw: &RawCohort, kg: &KnowledgeGraph) -> Result<Cohort, CohortError> {
    let resolved = raw.resolve(kg)?;
    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, a) in raw.admissions.iter().enumerate() {
        by_patient.entry(a.patient.as_str()).or_default().push(i);
    }

    let mut report = PreprocessReport::default();
    // (source admission, label admission)
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (patient, mut idx) in by_patient {
        idx.sort_by_key(|&i| raw.admissions[i].index);
        if let Some(w) = idx.windows(2).find(|w| raw.admissions[w[0]].index == raw.admissions[w[1]].index) {
            let a = &raw.admissions[w[1]];
            return Err(CohortError::DuplicateAdmission {
                line: a.line,
                patient: patient.to_string(),
                index: a.index,
            });
        }
        if idx.len() < 2 {
            report.single_admission_patients += 1;
            continue;
        }
        for w in idx.windows(2) {
            if resolved[w[0]].is_empty() {
                report.records_without_links += 1;
            } else if !resolved[w[1]].iter().any(|&e| kg.is_disease(e)) {
                report.records_without_labels += 1;
            } else {
                pairs.push((w[0], w[1]));
            }
        }
    }
    if pairs.is_empty() {
        return Err(CohortError::Empty);
    }

    let sources: Vec<Vec<Option<f64>>> = pairs.iter().map(|&(s, _)| raw.admissions[s].features.clone()).collect();
    let (scaling, constant) = FeatureScaling::fit(&raw.feature_names, &sources)?;
    report.constant_features = constant;

    let m = kg.entity_count();
    let records = pairs
        .iter()
        .map(|&(s, n)| {
            let a = &raw.admissions[s];
            let mut characters = vec![false; m];
            for e in &resolved[s] {
                characters[e.0] = true;
            }
            PatientRecord {
                patient: a.patient.clone(),
                admission: a.index,
                characters,
                features: scaling.scale(&a.features),
                standardized: scaling.standardize(&a.features),
                labels: resolved[n].iter().copied().filter(|&e| kg.is_disease(e)).collect(),
            }
        })
        .collect();

    let kept: BTreeSet<usize> = pairs.iter().flat_map(|&(s, n)| [s, n]).collect();
    let mut admissions: Vec<Admission> = kept.iter().map(|&i| raw.admissions[i].clone()).collect();
    admissions.sort_by(|a, b| a.patient.cmp(&b.patient).then(a.index.cmp(&b.index)));
    Ok(Cohort {
        entity_count: m,
        records,
        scaling,
        admissions: RawCohort {
            feature_names: raw.feature_names.clone(),
            admissions,
        },
        report,
    })
}

/// Patient-level fold assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Folds {
    pub count: usize,
    pub by_patient: BTreeMap<String, usize>,
    /// Fold of each record, aligned with `Cohort::records`.
    pub by_record: Vec<usize>,
}

impl Folds {
    /// `(train, test)` record indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.by_record.len()).partition(|&i| self.by_record[i] != f)
    }

    pub fn patients_in(&self, f: usize) -> usize {
        self.by_patient.values().filter(|&&x| x == f).count()
    }
}

/// Shuffles patients with `seed` and deals them round-robin into `folds`.
pub fn make_folds(cohort: &Cohort, folds: usize, seed: u64) -> Result<Folds, CohortError> {
    let mut patients: Vec<&str> = cohort.patients().into_iter().collect();
    if folds == 0 || patients.len() < folds {
        return Err(CohortError::TooFewPatients {
            folds,
            patients: patients.len(),
        });
    }
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let by_patient: BTreeMap<String, usize> =
        patients.iter().enumerate().map(|(i, p)| (p.to_string(), i % folds)).collect();
    let by_record = cohort.records.iter().map(|r| by_patient[&r.patient]).collect();
    Ok(Folds {
        count: folds,
        by_patient,
        by_record,
    })
}

/// A progression rule `from → to` by name, as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub from: String,
    pub to: String,
    pub probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rule {
    pub from: EntityId,
    pub to: EntityId,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub patients: usize,
    pub min_admissions: usize,
    pub max_admissions: usize,
    /// Chance per admission of one extra disease unrelated to the rules.
    pub noise: f64,
    /// Exponent of the power-law disease weights; 0 is uniform.
    pub imbalance: f64,
    /// Chance of each risk factor at the first admission.
    pub risk_prevalence: f64,
    /// Chance of a disease at the first admission.
    pub initial_disease_rate: f64,
    /// Chance a disease carries over to the next admission.
    pub persistence: f64,
    /// Chance a risk factor carries over to the next admission.
    pub risk_persistence: f64,
    /// Firing probabilities of derived rules are drawn from this range and
    /// shrunk for rare targets.
    pub rule_min: f64,
    pub rule_max: f64,
    /// Feature columns per admission.
    pub features: usize,
    /// Chance of each feature value being missing.
    pub missing: f64,
    pub seed: u64,
    /// Explicit rules; when absent one rule is derived per KG edge into a
    /// disease.
    pub rules: Option<Vec<RuleSpec>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patients: 2000,
            min_admissions: 2,
            max_admissions: 4,
            noise: 0.1,
            imbalance: 1.0,
            risk_prevalence: 0.3,
            initial_disease_rate: 0.7,
            persistence: 0.8,
            risk_persistence: 0.95,
            rule_min: 0.4,
            rule_max: 0.9,
            features: 16,
            missing: 0.0,
            seed: 0,
            rules: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        let unit = [
            ("noise", self.noise),
            ("risk_prevalence", self.risk_prevalence),
            ("initial_disease_rate", self.initial_disease_rate),
            ("persistence", self.persistence),
            ("risk_persistence", self.risk_persistence),
            ("rule_min", self.rule_min),
            ("rule_max", self.rule_max),
            ("missing", self.missing),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(CohortError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.rule_min > self.rule_max {
            return Err(CohortError::Config("rule_min exceeds rule_max".into()));
        }
        if self.min_admissions < 2 || self.max_admissions < self.min_admissions {
            return Err(CohortError::Config(
                "admissions per patient need 2 <= min_admissions <= max_admissions".into(),
            ));
        }
        if self.features == 0 {
            return Err(CohortError::Config("at least one feature column is required".into()));
        }
        if self.imbalance.is_nan() || self.imbalance < 0.0 {
            return Err(CohortError::Config("imbalance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub raw: RawCohort,
    pub rules: Vec<Rule>,
    /// Sampling weight of each disease, aligned with `KnowledgeGraph::diseases`.
    pub disease_weights: Vec<f64>,
}

/// Shortest domain-edge distance from `from` to `to`, if at most `limit`.
fn within_hops(kg: &KnowledgeGraph, from: EntityId, to: EntityId, limit: usize) -> bool {
    let mut queue = VecDeque::from([(from, 0)]);
    let mut seen = BTreeSet::from([from]);
    while let Some((e, d)) = queue.pop_front() {
        if d == limit {
            continue;
        }
        for t in kg.domain_triplets().iter().filter(|t| t.head == e) {
            if t.tail == to {
                return true;
            }
            if seen.insert(t.tail) {
                queue.push_back((t.tail, d + 1));
            }
        }
    }
    false
}

/// Power-law weights over diseases ranked by KG in-degree (ties by id).
pub fn disease_weights(kg: &KnowledgeGraph, exponent: f64) -> Vec<f64> {
    let diseases = kg.diseases();
    let indegree = |d: EntityId| kg.domain_triplets().iter().filter(|t| t.tail == d && t.head != d).count();
    let mut order: Vec<usize> = (0..diseases.len()).collect();
    order.sort_by(|&a, &b| indegree(diseases[b]).cmp(&indegree(diseases[a])).then(a.cmp(&b)));
    let mut w = vec![0.0; diseases.len()];
    for (rank, &i) in order.iter().enumerate() {
        w[i] = 1.0 / ((rank + 1) as f64).powf(exponent);
    }
    w
}

fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn resolve_rules(kg: &KnowledgeGraph, cfg: &SynthConfig, weights: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<Rule>, CohortError> {
    if let Some(specs) = &cfg.rules {
        return specs
            .iter()
            .map(|s| {
                let invalid = |message: &str| CohortError::InvalidRule {
                    from: s.from.clone(),
                    to: s.to.clone(),
                    message: message.into(),
                };
                let from = kg.entity_id(&s.from).ok_or_else(|| invalid("unknown source entity"))?;
                let to = kg.entity_id(&s.to).ok_or_else(|| invalid("unknown target entity"))?;
                if !kg.is_disease(to) {
                    return Err(invalid("target is not a disease"));
                }
                if !(0.0..=1.0).contains(&s.probability) {
                    return Err(invalid("probability outside [0, 1]"));
                }
                if !within_hops(kg, from, to, 2) {
                    return Err(CohortError::InconsistentRule {
                        from: s.from.clone(),
                        to: s.to.clone(),
                    });
                }
                Ok(Rule {
                    from,
                    to,
                    probability: s.probability,
                })
            })
            .collect();
    }
    let w_max = weights.iter().copied().fold(0.0, f64::max);
    let mut rules = Vec::new();
    for t in kg.domain_triplets() {
        let Some(idx) = kg.disease_index(t.tail) else { continue };
        if t.head == t.tail || rules.iter().any(|r: &Rule| r.from == t.head && r.to == t.tail) {
            continue;
        }
        let base = rng.random_range(cfg.rule_min..=cfg.rule_max);
        rules.push(Rule {
            from: t.head,
            to: t.tail,
            probability: base * (weights[idx] / w_max).sqrt(),
        });
    }
    Ok(rules)
}

struct FeatureLayout {
    names: Vec<String>,
    risk: Vec<EntityId>,
    disease: Vec<EntityId>,
}

fn feature_layout(kg: &KnowledgeGraph, weights: &[f64], l: usize) -> FeatureLayout {
    let risk: Vec<EntityId> = kg
        .entities()
        .iter()
        .filter(|e| e.kind == EntityKind::RiskFactor)
        .map(|e| e.id)
        .take(l.saturating_sub(1))
        .collect();
    let room = l.saturating_sub(1 + risk.len());
    let mut by_weight: Vec<usize> = (0..weights.len()).collect();
    by_weight.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let disease: Vec<EntityId> = by_weight
        .into_iter()
        .take(room - room / 3)
        .map(|i| kg.diseases()[i])
        .collect();
    let mut names = vec!["severity".to_string()];
    names.extend(risk.iter().map(|&e| format!("marker_{}", kg.entity(e).name)));
    names.extend(disease.iter().map(|&e| format!("marker_{}", kg.entity(e).name)));
    let noise = l - names.len().min(l);
    names.extend((0..noise).map(|i| format!("noise_{i}")));
    names.truncate(l);
    FeatureLayout { names, risk, disease }
}

/// Simulates a cohort over `kg`.
///
/// Each patient starts with sampled risk factors and diseases. Every
/// following admission keeps diseases with probability `persistence` and
/// risk factors with `risk_persistence`, adds the targets of rules whose
/// source is present (a per-admission severity score in `[0, 1]` makes rules
/// fire more often when high), and with probability `noise` adds one disease
/// drawn from the imbalance weights. An admission that would carry no
/// disease gets one. Features hold the severity score, noisy indicators of
/// risk factors and common diseases, and pure noise.
pub fn generate_synthetic(kg: &KnowledgeGraph, cfg: &SynthConfig) -> Result<Synthetic, CohortError> {
    cfg.validate()?;
    if kg.disease_count() == 0 {
        return Err(CohortError::Config("knowledge graph has no disease entities".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = disease_weights(kg, cfg.imbalance);
    let rules = resolve_rules(kg, cfg, &weights, &mut rng)?;
    let layout = feature_layout(kg, &weights, cfg.features);
    let risk_factors: Vec<EntityId> = kg
        .entities()
        .iter()
        .filter(|e| e.kind == EntityKind::RiskFactor)
        .map(|e| e.id)
        .collect();
    let diseases = kg.diseases();
    let risk_noise = Normal::new(0.0, 0.35).expect("valid sd");
    let disease_noise = Normal::new(0.0, 0.5).expect("valid sd");
    let unit = Normal::new(0.0, 1.0).expect("valid sd");
    let width = (cfg.patients.max(1) as f64).log10().floor() as usize + 1;

    let mut admissions = Vec::new();
    for p in 0..cfg.patients {
        let patient = format!("P{:0width$}", p + 1);
        let count = rng.random_range(cfg.min_admissions..=cfg.max_admissions);

        let mut current: BTreeSet<EntityId> = BTreeSet::new();
        for &rf in &risk_factors {
            if rng.random::<f64>() < cfg.risk_prevalence {
                current.insert(rf);
            }
        }
        if rng.random::<f64>() < cfg.initial_disease_rate {
            current.insert(diseases[weighted_pick(&weights, &mut rng)]);
            if rng.random::<f64>() < 0.3 {
                current.insert(diseases[weighted_pick(&weights, &mut rng)]);
            }
        }
        if current.is_empty() {
            current.insert(diseases[weighted_pick(&weights, &mut rng)]);
        }

        for index in 0..count {
            let severity: f64 = rng.random();
            let mut features = Vec::with_capacity(cfg.features);
            features.push(severity);
            for &rf in &layout.risk {
                features.push(f64::from(u8::from(current.contains(&rf))) + risk_noise.sample(&mut rng));
            }
            for &d in &layout.disease {
                features.push(f64::from(u8::from(current.contains(&d))) + disease_noise.sample(&mut rng));
            }
            while features.len() < cfg.features {
                features.push(unit.sample(&mut rng));
            }
            let features = features
                .into_iter()
                .map(|x| (cfg.missing == 0.0 || rng.random::<f64>() >= cfg.missing).then_some(x))
                .collect();
            admissions.push(Admission {
                patient: patient.clone(),
                index,
                conditions: current.iter().map(|&e| kg.entity(e).name.clone()).collect(),
                features,
                line: 0,
            });

            let mut next = BTreeSet::new();
            for &e in &current {
                let keep = if kg.is_disease(e) { cfg.persistence } else { cfg.risk_persistence };
                if rng.random::<f64>() < keep {
                    next.insert(e);
                }
            }
            let mut candidates: Vec<(EntityId, f64)> = Vec::new();
            for rule in rules.iter().filter(|r| current.contains(&r.from)) {
                let p = rule.probability.powf(1.5 - severity);
                if rng.random::<f64>() < p {
                    next.insert(rule.to);
                }
                candidates.push((rule.to, rule.probability));
            }
            if rng.random::<f64>() < cfg.noise {
                next.insert(diseases[weighted_pick(&weights, &mut rng)]);
            }
            if !next.iter().any(|&e| kg.is_disease(e)) {
                let pick = if candidates.is_empty() {
                    diseases[weighted_pick(&weights, &mut rng)]
                } else {
                    let w: Vec<f64> = candidates.iter().map(|c| c.1.max(1e-6)).collect();
                    candidates[weighted_pick(&w, &mut rng)].0
                };
                next.insert(pick);
            }
            current = next;
        }
    }
    Ok(Synthetic {
        raw: RawCohort {
            feature_names: layout.names,
            admissions,
        },
        rules,
        disease_weights: weights,
    })
}

/// Generates and preprocesses in one go, warning when an imbalanced profile
/// misses the intended concentration of labels on the top ten diseases.
pub fn synthesize(kg: &KnowledgeGraph, cfg: &SynthConfig) -> Result<Cohort, CohortError> {
    let synthetic = generate_synthetic(kg, cfg)?;
    let cohort = preprocess(&synthetic.raw, kg)?;
    if cfg.imbalance > 0.0 && kg.disease_count() > 10 {
        let coverage = cohort.top_label_coverage(10);
        if coverage < 0.85 {
            log::warn!("top-10 diseases cover only {:.1}% of labels", 100.0 * coverage);
        }
    }
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "entity\tRF1\trisk_factor\nentity\tD1\tdisease\nentity\tD2\tdisease\n\
                       entity\tC1\tdisease_category\n\
                       triplet\tRF1\tcauses\tD1\ntriplet\tD1\tcauses\tD2\n";

    fn adm(patient: &str, index: usize, conditions: &[&str], features: &[Option<f64>]) -> Admission {
        Admission {
            patient: patient.into(),
            index,
            conditions: conditions.iter().map(|s| s.to_string()).collect(),
            features: features.to_vec(),
            line: 0,
        }
    }

    fn raw(admissions: Vec<Admission>) -> RawCohort {
        let l = admissions.first().map_or(0, |a| a.features.len());
        RawCohort {
            feature_names: (0..l).map(|i| format!("f{i}")).collect(),
            admissions,
        }
    }

    #[test]
    fn file_round_trip() {
        let r = raw(vec![
            adm("A", 0, &["RF1", "D1"], &[Some(0.1), None]),
            adm("A", 1, &[], &[Some(-2.5e-3), Some(7.0)]),
        ]);
        let text = r.to_text();
        let mut back = RawCohort::parse(&text).unwrap();
        for a in &mut back.admissions {
            a.line = 0;
        }
        assert_eq!(back, r);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert!(matches!(RawCohort::parse("A\t0\tD1\t1"), Err(CohortError::MissingHeader)));
        let text = format!("{COHORT_HEADER}\nA\t0\tD1\t1,2\nA\t1\tD1\t1\n");
        assert!(matches!(
            RawCohort::parse(&text),
            Err(CohortError::FeatureCount { line: 3, .. })
        ));
        let text = format!("{COHORT_HEADER}\nA\tx\tD1\t1\n");
        assert!(matches!(RawCohort::parse(&text), Err(CohortError::Malformed { line: 2, .. })));
    }

    #[test]
    fn unknown_entity_is_named() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let text = format!("{COHORT_HEADER}\nA\t0\tD1\t1\nA\t1\tgout\t1\n");
        let r = RawCohort::parse(&text).unwrap();
        match preprocess(&r, &kg) {
            Err(CohortError::UnknownEntity { line, name }) => {
                assert_eq!(line, 3);
                assert_eq!(name, "gout");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(r.unknown_entities(&kg), vec![(3, "gout".to_string())]);
    }

    #[test]
    fn preprocessing_drops_and_labels() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let r = raw(vec![
            adm("single", 0, &["D1"], &[Some(1.0)]),
            adm("B", 0, &["RF1"], &[Some(2.0)]),
            adm("B", 1, &["D1", "RF1", "C1"], &[Some(4.0)]),
            adm("B", 2, &[], &[None]),
            adm("B", 3, &["D2"], &[Some(9.0)]),
        ]);
        let c = preprocess(&r, &kg).unwrap();
        assert_eq!(c.report.single_admission_patients, 1);
        // B1 -> B2 has no label; B2 -> B3 has no link
        assert_eq!(c.report.records_without_labels, 1);
        assert_eq!(c.report.records_without_links, 1);
        assert_eq!(c.records.len(), 1);
        let rec = &c.records[0];
        assert_eq!(rec.patient, "B");
        assert_eq!(rec.links(), vec![EntityId(0)]);
        assert_eq!(rec.labels, BTreeSet::from([EntityId(1)]));
        // one source admission: the only column is constant
        assert_eq!(rec.features, vec![0.5]);
        assert_eq!(c.report.constant_features, vec!["f0".to_string()]);
    }

    #[test]
    fn scaling_and_imputation() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let r = raw(vec![
            adm("A", 0, &["D1"], &[Some(0.0), Some(1.0)]),
            adm("A", 1, &["D1"], &[Some(10.0), None]),
            adm("A", 2, &["D2"], &[Some(5.0), Some(3.0)]),
            adm("A", 3, &["D2"], &[None, None]),
        ]);
        let c = preprocess(&r, &kg).unwrap();
        assert_eq!(c.records.len(), 3);
        assert_eq!(c.records[0].features, vec![0.0, 0.0]);
        // missing value imputed to the column mean 2.0
        assert_eq!(c.records[1].features, vec![1.0, 0.5]);
        assert_eq!(c.records[2].features, vec![0.5, 1.0]);
        assert_eq!(c.records[1].standardized[1], 0.0);
        assert!((c.records[1].standardized[0] - 5.0 / (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        for rec in &c.records {
            assert!(rec.features.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn fully_missing_column_fails() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let r = raw(vec![adm("A", 0, &["D1"], &[None]), adm("A", 1, &["D2"], &[None])]);
        assert!(matches!(preprocess(&r, &kg), Err(CohortError::ColumnMissing(_))));
    }

    #[test]
    fn preprocessing_is_idempotent() {
        let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv")).unwrap();
        let cfg = SynthConfig {
            patients: 60,
            missing: 0.05,
            seed: 4,
            ..Default::default()
        };
        let synthetic = generate_synthetic(&kg, &cfg).unwrap();
        let once = preprocess(&synthetic.raw, &kg).unwrap();
        let twice = preprocess(&once.admissions, &kg).unwrap();
        assert_eq!(once.records, twice.records);
        assert_eq!(once.scaling, twice.scaling);
        assert_eq!(once.admissions, twice.admissions);
    }

    #[test]
    fn folds_partition_patients() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let mut admissions = Vec::new();
        for p in 0..10 {
            admissions.push(adm(&format!("P{p}"), 0, &["D1"], &[Some(p as f64)]));
            admissions.push(adm(&format!("P{p}"), 1, &["D2"], &[Some(1.0)]));
            admissions.push(adm(&format!("P{p}"), 2, &["D2"], &[Some(2.0)]));
        }
        let c = preprocess(&raw(admissions), &kg).unwrap();
        let folds = make_folds(&c, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(folds.patients_in(f), 2);
        }
        assert_eq!(folds, make_folds(&c, 5, 3).unwrap());
        for (i, r) in c.records.iter().enumerate() {
            assert_eq!(folds.by_record[i], folds.by_patient[&r.patient]);
        }
        assert!(make_folds(&c, 11, 0).is_err());
    }

    #[test]
    fn deterministic_single_rule() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let cfg = SynthConfig {
            patients: 50,
            noise: 0.0,
            risk_prevalence: 1.0,
            risk_persistence: 1.0,
            rules: Some(vec![RuleSpec {
                from: "RF1".into(),
                to: "D1".into(),
                probability: 1.0,
            }]),
            ..Default::default()
        };
        let c = synthesize(&kg, &cfg).unwrap();
        assert!(!c.is_empty());
        let d1 = kg.entity_id("D1").unwrap();
        assert!(c.records.iter().all(|r| r.labels.contains(&d1)));
    }

    #[test]
    fn rules_must_follow_the_graph() {
        let kg = KnowledgeGraph::parse(TOY).unwrap();
        let two_hop = SynthConfig {
            patients: 5,
            rules: Some(vec![RuleSpec {
                from: "RF1".into(),
                to: "D2".into(),
                probability: 0.5,
            }]),
            ..Default::default()
        };
        assert!(generate_synthetic(&kg, &two_hop).is_ok());
        let backwards = SynthConfig {
            rules: Some(vec![RuleSpec {
                from: "D2".into(),
                to: "D1".into(),
                probability: 0.5,
            }]),
            ..two_hop
        };
        assert!(matches!(
            generate_synthetic(&kg, &backwards),
            Err(CohortError::InconsistentRule { .. })
        ));
    }

    #[test]
    fn same_seed_same_bytes() {
        let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv")).unwrap();
        let cfg = SynthConfig {
            patients: 40,
            ..Default::default()
        };
        let a = generate_synthetic(&kg, &cfg).unwrap().raw.to_text();
        let b = generate_synthetic(&kg, &cfg).unwrap().raw.to_text();
        assert_eq!(a, b);
        let other = generate_synthetic(&kg, &SynthConfig { seed: 1, ..cfg }).unwrap().raw.to_text();
        assert_ne!(a, other);
    }

    #[test]
    fn imbalance_concentrates_labels() {
        let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv")).unwrap();
        let c = synthesize(&kg, &SynthConfig::default()).unwrap();
        let coverage = c.top_label_coverage(10);
        assert!(coverage >= 0.85, "top-10 coverage {coverage}");
    }
}
