//! Beam-search path enumeration and aggregation into disease probabilities.
//!
//! Every retained path is expanded by its top-`K_t` legal actions under the
//! current policy, path probabilities multiply along the way, and after `T`
//! steps the probability of each disease is the summed probability of the
//! paths that end on it. All paths are kept as explanations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, WalkState, Walker};
use crate::kg::{EntityId, KnowledgeGraph, LinkedGraph, Node, RelationId};

/// Version tag of the JSON explanation document.
pub const EXPLANATION_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("beam width at step {step} must be at least 1")]
    ZeroWidth { step: usize },
    #[error("beam config lists {got} widths for horizon {horizon}")]
    WidthCount { horizon: usize, got: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("unknown export format `{0}` (expected json or dot)")]
    UnknownFormat(String),
    #[error("serializing explanation: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub horizon: usize,
    /// Per-step widths `K_0 … K_{T-1}`; a single entry applies to all steps.
    pub widths: Vec<usize>,
    /// Keep every legal action (infinite width).
    pub exact: bool,
}

impl BeamConfig {
    pub fn exact(horizon: usize) -> Self {
        Self {
            horizon,
            widths: Vec::new(),
            exact: true,
        }
    }

    pub fn uniform(horizon: usize, width: usize) -> Self {
        Self {
            horizon,
            widths: vec![width],
            exact: false,
        }
    }

    /// Exact search for two-step walks on graphs of at most 100 entities,
    /// width 8 otherwise.
    pub fn default_for(horizon: usize, entities: usize) -> Self {
        if horizon <= 2 && entities <= 100 {
            Self::exact(horizon)
        } else {
            Self::uniform(horizon, 8)
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.horizon == 0 {
            return Err(InferenceError::ZeroHorizon);
        }
        if self.exact {
            return Ok(());
        }
        if self.widths.len() != 1 && self.widths.len() != self.horizon {
            return Err(InferenceError::WidthCount {
                horizon: self.horizon,
                got: self.widths.len(),
            });
        }
        if let Some(step) = self.widths.iter().position(|&w| w == 0) {
            return Err(InferenceError::ZeroWidth { step });
        }
        Ok(())
    }

    /// `None` means unlimited.
    pub fn width_at(&self, step: usize) -> Option<usize> {
        if self.exact {
            None
        } else if self.widths.len() == 1 {
            Some(self.widths[0])
        } else {
            self.widths.get(step).copied()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub relation: RelationId,
    pub entity: EntityId,
    /// Policy probability of this transition.
    pub probability: f64,
}

/// `patient, r₁, e₁, …, r_T, e_T` with its cumulative probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub steps: Vec<PathStep>,
    pub probability: f64,
    /// Stopped early on an empty action space.
    pub dead_end: bool,
}

impl Path {
    pub fn terminal(&self) -> Node {
        self.steps.last().map_or(Node::Patient, |s| Node::Entity(s.entity))
    }

    pub fn entities(&self) -> Vec<EntityId> {
        self.steps.iter().map(|s| s.entity).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    /// Indexed like [`KnowledgeGraph::diseases`].
    pub probabilities: Vec<f64>,
    pub diseases: Vec<EntityId>,
    pub paths: Vec<Path>,
    /// Mass of retained paths ending on a non-disease entity.
    pub discarded_mass: f64,
    /// Mass removed by beam pruning.
    pub pruned_mass: f64,
}

impl PredictionResult {
    pub fn path_probabilities(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.probability).collect()
    }

    pub fn probability_of(&self, entity: EntityId) -> Option<f64> {
        self.diseases
            .iter()
            .position(|&d| d == entity)
            .map(|i| self.probabilities[i])
    }
}

/// Runs beam search from the patient for `cfg.horizon` steps.
pub fn beam_predict(
    walker: Walker<'_>,
    graph: &LinkedGraph<'_>,
    p_e: ArrayView1<'_, f64>,
    cfg: &BeamConfig,
) -> Result<PredictionResult, InferenceError> {
    cfg.validate()?;
    let kg = graph.base();
    walker.params.check_compatible(kg, walker.embeddings)?;

    let mut beams: Vec<(Path, WalkState)> = vec![(
        Path {
            steps: Vec::new(),
            probability: 1.0,
            dead_end: false,
        },
        WalkState::start(),
    )];
    let mut pruned_mass = 0.0;

    for t in 0..cfg.horizon {
        let mut next = Vec::with_capacity(beams.len() * 2);
        for (path, walk) in beams {
            if path.dead_end {
                next.push((path, walk));
                continue;
            }
            let view = walker.view(graph, p_e, &walk)?;
            let Some((probs, _)) = view.policy else {
                next.push((
                    Path {
                        dead_end: true,
                        ..path
                    },
                    walk,
                ));
                continue;
            };
            let mut candidates: Vec<_> = view.mask.actions().map(|a| (a, probs[a.tail.0])).collect();
            if let Some(k) = cfg.width_at(t) {
                if candidates.len() > k {
                    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.tail.cmp(&b.0.tail)));
                    let dropped: f64 = candidates[k..].iter().map(|c| c.1).sum();
                    pruned_mass += path.probability * dropped;
                    candidates.truncate(k);
                    candidates.sort_by_key(|c| c.0.tail);
                }
            }
            for (action, p) in candidates {
                let mut steps = path.steps.clone();
                steps.push(PathStep {
                    relation: action.relation,
                    entity: action.tail,
                    probability: p,
                });
                let mut w = walk.clone();
                w.advance(action);
                next.push((
                    Path {
                        steps,
                        probability: p * path.probability,
                        dead_end: false,
                    },
                    w,
                ));
            }
        }
        beams = next;
    }

    let mut probabilities = vec![0.0; kg.disease_count()];
    let mut discarded_mass = 0.0;
    let paths: Vec<Path> = beams.into_iter().map(|(p, _)| p).collect();
    for path in &paths {
        match path.terminal() {
            Node::Entity(e) => match kg.disease_index(e) {
                Some(idx) => probabilities[idx] += path.probability,
                None => discarded_mass += path.probability,
            },
            Node::Patient => discarded_mass += path.probability,
        }
    }
    Ok(PredictionResult {
        probabilities,
        diseases: kg.diseases().to_vec(),
        paths,
        discarded_mass,
        pruned_mass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankedDisease {
    /// Position in the disease vector.
    pub index: usize,
    pub entity: EntityId,
    pub probability: f64,
}

/// Diseases by descending probability, ties by ascending id.
pub fn rank_diseases(result: &PredictionResult, top_k: usize) -> Vec<RankedDisease> {
    rank_scores(&result.probabilities)
        .into_iter()
        .take(top_k)
        .map(|index| RankedDisease {
            index,
            entity: result.diseases[index],
            probability: result.probabilities[index],
        })
        .collect()
}

/// Indices of `scores` by descending score, ties by ascending index.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" | "structured-json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(InferenceError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Serialize)]
struct StepRecord<'a> {
    relation: &'a str,
    entity: &'a str,
    probability: f64,
}

#[derive(Serialize)]
struct PathRecord<'a> {
    terminal: &'a str,
    probability: f64,
    dead_end: bool,
    steps: Vec<StepRecord<'a>>,
}

#[derive(Serialize)]
struct DiseaseRecord<'a> {
    entity: &'a str,
    probability: f64,
}

#[derive(Serialize)]
struct ExplanationDoc<'a> {
    format: &'static str,
    version: u32,
    diseases: Vec<DiseaseRecord<'a>>,
    discarded_mass: f64,
    pruned_mass: f64,
    paths: Vec<PathRecord<'a>>,
}

fn node_name(kg: &KnowledgeGraph, node: Node) -> &str {
    match node {
        Node::Patient => "patient",
        Node::Entity(e) => &kg.entity(e).name,
    }
}

/// Renders the paths of a prediction.
///
/// `json` lists every path with entity and relation names, per-step and
/// cumulative probabilities, plus the ranked non-zero diseases. `dot` draws
/// the union of path edges, each labeled with the largest probability of a
/// path through it; edges below `min_edge_prob` are left out.
pub fn export_paths(
    result: &PredictionResult,
    kg: &KnowledgeGraph,
    format: ExportFormat,
    min_edge_prob: f64,
) -> Result<String, InferenceError> {
    match format {
        ExportFormat::Json => {
            let doc = ExplanationDoc {
                format: "kgpath-explanation",
                version: EXPLANATION_VERSION,
                diseases: rank_diseases(result, result.probabilities.len())
                    .into_iter()
                    .filter(|r| r.probability > 0.0)
                    .map(|r| DiseaseRecord {
                        entity: &kg.entity(r.entity).name,
                        probability: r.probability,
                    })
                    .collect(),
                discarded_mass: result.discarded_mass,
                pruned_mass: result.pruned_mass,
                paths: result
                    .paths
                    .iter()
                    .map(|p| PathRecord {
                        terminal: node_name(kg, p.terminal()),
                        probability: p.probability,
                        dead_end: p.dead_end,
                        steps: p
                            .steps
                            .iter()
                            .map(|s| StepRecord {
                                relation: &kg.relation(s.relation).name,
                                entity: &kg.entity(s.entity).name,
                                probability: s.probability,
                            })
                            .collect(),
                    })
                    .collect(),
            };
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            Ok(text)
        }
        ExportFormat::Dot => Ok(render_dot(result, kg, min_edge_prob)),
    }
}

fn dot_id(node: Node) -> String {
    match node {
        Node::Patient => "patient".to_string(),
        Node::Entity(e) => format!("e{}", e.0),
    }
}

type DotEdges = BTreeMap<(usize, usize, usize), (Node, Node, RelationId, f64)>;

fn render_dot(result: &PredictionResult, kg: &KnowledgeGraph, min_edge_prob: f64) -> String {
    // (from, to, relation) → strongest supporting path probability
    let mut edges: DotEdges = BTreeMap::new();
    let key = |n: Node| match n {
        Node::Patient => 0,
        Node::Entity(e) => e.0 + 1,
    };
    for path in &result.paths {
        let mut from = Node::Patient;
        for step in &path.steps {
            let to = Node::Entity(step.entity);
            let entry = edges
                .entry((key(from), key(to), step.relation.0))
                .or_insert((from, to, step.relation, 0.0));
            entry.3 = entry.3.max(path.probability);
            from = to;
        }
    }

    let kept: Vec<_> = edges.values().filter(|e| e.3 >= min_edge_prob).collect();
    let mut nodes: BTreeMap<usize, Node> = BTreeMap::new();
    nodes.insert(0, Node::Patient);
    for e in &kept {
        nodes.insert(key(e.0), e.0);
        nodes.insert(key(e.1), e.1);
    }

    let mut out = String::from("digraph explanation {\n  rankdir=LR;\n");
    for node in nodes.values() {
        match node {
            Node::Patient => out.push_str("  patient [label=\"patient\", shape=box];\n"),
            Node::Entity(id) => {
                let entity = kg.entity(*id);
                let label = match result.probability_of(*id) {
                    Some(p) if p > 0.0 => format!("{}\\nP={p:.3}", entity.name),
                    _ => entity.name.clone(),
                };
                let _ = writeln!(
                    out,
                    "  {} [label=\"{label}\", kind=\"{}\"];",
                    dot_id(*node),
                    entity.kind.as_str()
                );
            }
        }
    }
    for (from, to, rel, p) in kept {
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{}\\n{p:.3}\", weight={p:.6}];",
            dot_id(*from),
            dot_id(*to),
            kg.relation(*rel).name
        );
    }
    out.push_str("}\n");
    out
}
