//! Ranking metrics, k-fold cross-validation and hyperparameter sweeps.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cohort::{Cohort, Folds};
use crate::inference::rank_scores;
use crate::kg::KnowledgeGraph;
use crate::pipeline::{predict_record, train_model, PipelineConfig, PipelineError};

/// The `k` values reported for top-k hit.
pub const HIT_KS: [usize; 4] = [1, 3, 5, 10];

pub const REPORT_HEADER: &str = "#kgpath-eval v1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score matrix has {scores} score rows but {labels} label rows")]
    Shape { scores: usize, labels: usize },
    #[error("row {row} has width {got}, expected {expected}")]
    RowWidth { row: usize, expected: usize, got: usize },
    #[error("no disease has both positive and negative examples")]
    NoEvaluableDisease,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: PipelineError },
    #[error("fold {fold}: {source}")]
    FoldMetric { fold: usize, source: Box<EvalError> },
    #[error("unknown sweep axis `{0}` (expected horizon or entropy)")]
    UnknownAxis(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl EvalError {
    pub fn pipeline(&self) -> Option<&PipelineError> {
        match self {
            EvalError::Fold { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Per-record disease scores with aligned binary labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<Vec<bool>>,
}

impl ScoreMatrix {
    pub fn new(scores: Vec<Vec<f64>>, labels: Vec<Vec<bool>>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::Shape {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        let width = scores.first().map_or(0, Vec::len);
        for (row, (s, l)) in scores.iter().zip(&labels).enumerate() {
            for got in [s.len(), l.len()] {
                if got != width {
                    return Err(EvalError::RowWidth {
                        row,
                        expected: width,
                        got,
                    });
                }
            }
        }
        Ok(Self { scores, labels })
    }

    pub fn records(&self) -> usize {
        self.scores.len()
    }

    pub fn diseases(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, scores: Vec<f64>, labels: Vec<bool>) {
        self.scores.push(scores);
        self.labels.push(labels);
    }

    pub fn mean_label_count(&self) -> f64 {
        let total: usize = self.labels.iter().map(|l| l.iter().filter(|&&x| x).count()).sum();
        total as f64 / self.records().max(1) as f64
    }
}

/// ROC area of one score column by the midrank formula; `None` when the
/// column lacks positives or negatives.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AucSummary {
    pub macro_auc: f64,
    /// `None` for diseases with a single class in this split.
    pub per_disease: Vec<Option<f64>>,
    pub skipped: usize,
}

/// Unweighted mean of per-disease AUCs, skipping single-class diseases.
pub fn macro_auc(m: &ScoreMatrix) -> Result<AucSummary, EvalError> {
    let per_disease: Vec<Option<f64>> = (0..m.diseases())
        .map(|d| {
            let s: Vec<f64> = m.scores.iter().map(|r| r[d]).collect();
            let l: Vec<bool> = m.labels.iter().map(|r| r[d]).collect();
            auc(&s, &l)
        })
        .collect();
    let valid: Vec<f64> = per_disease.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(EvalError::NoEvaluableDisease);
    }
    Ok(AucSummary {
        macro_auc: valid.iter().sum::<f64>() / valid.len() as f64,
        skipped: per_disease.len() - valid.len(),
        per_disease,
    })
}

/// Mean number of true labels among each record's `k` top-ranked diseases.
pub fn topk_hit(m: &ScoreMatrix, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let hits: usize = m
        .scores
        .iter()
        .zip(&m.labels)
        .map(|(s, l)| rank_scores(s).into_iter().take(k).filter(|&d| l[d]).count())
        .sum();
    Ok(hits as f64 / m.records().max(1) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub macro_auc: f64,
    /// Aligned with [`HIT_KS`].
    pub hits: [f64; 4],
    /// Mean policy entropy per step over the last training epoch.
    pub entropy: f64,
}

impl Metrics {
    fn fields(&self) -> [f64; 6] {
        [
            self.macro_auc,
            self.hits[0],
            self.hits[1],
            self.hits[2],
            self.hits[3],
            self.entropy,
        ]
    }

    fn from_fields(f: [f64; 6]) -> Self {
        Self {
            macro_auc: f[0],
            hits: [f[1], f[2], f[3], f[4]],
            entropy: f[5],
        }
    }

    pub fn hit(&self, k: usize) -> Option<f64> {
        HIT_KS.iter().position(|&x| x == k).map(|i| self.hits[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_records: usize,
    pub test_records: usize,
    pub metrics: Metrics,
    pub skipped_diseases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub folds: Vec<FoldResult>,
    pub mean: Metrics,
    /// Population standard deviation across folds.
    pub std: Metrics,
}

impl EvalReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let n = folds.len().max(1) as f64;
        let mut mean = [0.0; 6];
        for f in &folds {
            for (m, v) in mean.iter_mut().zip(f.metrics.fields()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 6];
        for f in &folds {
            for ((s, v), m) in var.iter_mut().zip(f.metrics.fields()).zip(mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        Self {
            folds,
            mean: Metrics::from_fields(mean),
            std: Metrics::from_fields(var.map(f64::sqrt)),
        }
    }

    /// Tab-separated rows for each fold plus `mean` and `std`, labeled
    /// with `config`.
    pub fn rows(&self, config: &str) -> String {
        let mut out = String::new();
        let row = |out: &mut String, fold: &str, train: String, test: String, m: &Metrics, skipped: String| {
            let _ = write!(out, "{config}\t{fold}\t{train}\t{test}");
            for v in m.fields() {
                let _ = write!(out, "\t{v:.6}");
            }
            let _ = writeln!(out, "\t{skipped}");
        };
        for f in &self.folds {
            row(
                &mut out,
                &f.fold.to_string(),
                f.train_records.to_string(),
                f.test_records.to_string(),
                &f.metrics,
                f.skipped_diseases.to_string(),
            );
        }
        row(&mut out, "mean", "-".into(), "-".into(), &self.mean, "-".into());
        row(&mut out, "std", "-".into(), "-".into(), &self.std, "-".into());
        out
    }

    pub fn to_tsv(&self, config: &str) -> String {
        format!("{}{}", report_header(), self.rows(config))
    }
}

fn report_header() -> String {
    let hits: Vec<String> = HIT_KS.iter().map(|k| format!("hit@{k}")).collect();
    format!(
        "{REPORT_HEADER}\nconfig\tfold\ttrain\ttest\tmacro_auc\t{}\tentropy\tskipped\n",
        hits.join("\t")
    )
}

/// Trains on one side of a fold and scores the other.
pub fn evaluate_fold(
    kg: &KnowledgeGraph,
    cohort: &Cohort,
    folds: &Folds,
    fold: usize,
    cfg: &PipelineConfig,
) -> Result<FoldResult, EvalError> {
    let wrap = |source| EvalError::Fold { fold, source };
    let (train_idx, test_idx) = folds.split(fold);
    let train = cohort.subset(&train_idx);
    let model = train_model(kg, &train, &cohort.scaling, cfg).map_err(wrap)?;
    let beam = cfg.beam(kg.entity_count());
    let diseases = kg.diseases();
    let mut matrix = ScoreMatrix::default();
    for &i in &test_idx {
        let record = &cohort.records[i];
        let result = predict_record(kg, &model, record, &beam).map_err(wrap)?;
        matrix.push(
            result.probabilities,
            diseases.iter().map(|d| record.labels.contains(d)).collect(),
        );
    }
    let metric = |e| EvalError::FoldMetric {
        fold,
        source: Box::new(e),
    };
    let summary = macro_auc(&matrix).map_err(metric)?;
    let mut hits = [0.0; 4];
    for (h, &k) in hits.iter_mut().zip(&HIT_KS) {
        *h = topk_hit(&matrix, k).map_err(metric)?;
    }
    let entropy = model.logs.agent.last().map_or(0.0, |r| r.mean_entropy);
    log::info!(
        "fold {fold}: macro AUC {:.4}, hit@1 {:.4}, {} diseases skipped",
        summary.macro_auc,
        hits[0],
        summary.skipped
    );
    Ok(FoldResult {
        fold,
        train_records: train_idx.len(),
        test_records: test_idx.len(),
        metrics: Metrics {
            macro_auc: summary.macro_auc,
            hits,
            entropy,
        },
        skipped_diseases: summary.skipped,
    })
}

/// Runs every fold with the same config. With `workers > 1` folds run
/// concurrently, each training its agent single-threaded; results do not
/// depend on the worker count.
pub fn cross_validate(
    kg: &KnowledgeGraph,
    cohort: &Cohort,
    folds: &Folds,
    cfg: &PipelineConfig,
) -> Result<EvalReport, EvalError> {
    let results: Vec<Result<FoldResult, EvalError>> = if cfg.workers <= 1 {
        (0..folds.count).map(|f| evaluate_fold(kg, cohort, folds, f, cfg)).collect()
    } else {
        let inner = PipelineConfig {
            workers: 1,
            ..cfg.clone()
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?;
        pool.install(|| {
            (0..folds.count)
                .into_par_iter()
                .map(|f| evaluate_fold(kg, cohort, folds, f, &inner))
                .collect()
        })
    };
    Ok(EvalReport::from_folds(results.into_iter().collect::<Result<_, _>>()?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Horizon,
    Entropy,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Horizon => "horizon",
            SweepAxis::Entropy => "entropy",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::Horizon => vec![2.0, 3.0, 4.0, 5.0],
            SweepAxis::Entropy => vec![0.0, 0.01, 0.1, 1.0],
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &PipelineConfig, value: f64) -> PipelineConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Horizon => cfg.agent.horizon = value.round().max(0.0) as usize,
            SweepAxis::Entropy => cfg.agent.entropy_weight = value,
        }
        cfg
    }
}

impl FromStr for SweepAxis {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "horizon" | "t" => Ok(SweepAxis::Horizon),
            "entropy" | "alpha" => Ok(SweepAxis::Entropy),
            other => Err(EvalError::UnknownAxis(other.into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn label(&self, value: f64) -> String {
        format!("{}={value}", self.axis.name())
    }

    /// One block of fold rows per grid point.
    pub fn to_tsv(&self) -> String {
        let mut out = report_header();
        for p in &self.points {
            out.push_str(&p.report.rows(&self.label(p.value)));
        }
        out
    }

    /// `value, mean ± std` lines for the headline metrics.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let (m, s) = (&p.report.mean, &p.report.std);
            let _ = writeln!(
                out,
                "{}: macro AUC {:.4} ± {:.4}, hit@1 {:.4} ± {:.4}, entropy {:.4} ± {:.4} ({} folds)",
                self.label(p.value),
                m.macro_auc,
                s.macro_auc,
                m.hits[0],
                s.hits[0],
                m.entropy,
                s.entropy,
                p.report.folds.len()
            );
        }
        out
    }
}

/// One cross-validation per grid value.
pub fn sweep(
    kg: &KnowledgeGraph,
    cohort: &Cohort,
    folds: &Folds,
    base: &PipelineConfig,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<SweepReport, EvalError> {
    let points = grid
        .iter()
        .map(|&value| {
            log::info!("sweep {}={value}", axis.name());
            let report = cross_validate(kg, cohort, folds, &axis.apply(base, value))?;
            Ok(SweepPoint { value, report })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(SweepReport { axis, points })
}
