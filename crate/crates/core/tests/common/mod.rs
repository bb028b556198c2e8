//! Random fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use kgpath::agent::{build_state, state_width, AgentParams};
use kgpath::embeddings::{AutoencoderParams, Embeddings, RbmParams};
use kgpath::kg::{EntityId, EntityKind, KgBuilder, KnowledgeGraph, Node, RelationId};
use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TOY_KG: &str = "entity\tRF1\trisk_factor\nentity\tD1\tdisease\nentity\tD2\tdisease\n\
                          triplet\tRF1\tcauses\tD1\ntriplet\tD1\tcauses\tD2\n";

/// A graph with 3..=`max_entities` entities, at least one disease, up to
/// three domain relations, occasional parallel edges and domain self-edges.
pub fn random_kg(rng: &mut ChaCha8Rng, max_entities: usize) -> KnowledgeGraph {
    let n = rng.random_range(3..=max_entities);
    let mut b = KgBuilder::new();
    for i in 0..n {
        let kind = match (i, rng.random_range(0..4)) {
            (0, _) | (_, 0 | 1) => EntityKind::Disease,
            (_, 2) => EntityKind::DiseaseCategory,
            _ => EntityKind::RiskFactor,
        };
        b.add_entity(&format!("e{i}"), kind).unwrap();
    }
    let relations = rng.random_range(1..=3);
    let edges = rng.random_range(n..=3 * n);
    for _ in 0..edges {
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        let r = rng.random_range(0..relations);
        // Duplicates are rejected by the builder; skip them.
        let _ = b.add_triplet(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
    }
    b.build().unwrap()
}

pub fn random_links(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph) -> Vec<EntityId> {
    let m = kg.entity_count();
    let mut links: Vec<EntityId> = (0..m).filter(|_| rng.random_bool(0.3)).map(EntityId).collect();
    if links.is_empty() {
        links.push(EntityId(rng.random_range(0..m)));
    }
    links
}

pub fn random_embeddings(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, k: usize, features: usize) -> Embeddings {
    Embeddings {
        rbm: RbmParams::init(kg.entity_count(), k, rng),
        autoencoder: AutoencoderParams::init(features, 5, k, rng),
    }
}

/// Agent with weights scaled up so policies are far from uniform.
pub fn random_agent(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, k: usize, hidden: usize) -> AgentParams {
    let mut params = AgentParams::init(state_width(k, kg.relation_count()), hidden, kg.entity_count(), rng);
    use kgpath::nn::Parameters;
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x *= 3.0;
        }
    }
    params
}

pub fn random_code(rng: &mut ChaCha8Rng, k: usize) -> Array1<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

/// One enumerated walk: `(relation, entity)` per step, its probability and
/// whether it stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePath {
    pub steps: Vec<(RelationId, EntityId)>,
    pub probability: f64,
    pub dead_end: bool,
}

/// Legal moves computed straight from the triplet list: `have` edges from
/// the patient; from an entity, every outgoing triplet whose tail was not
/// walked before (self-loops always allowed); one relation per tail, the
/// lowest id.
pub fn oracle_moves(
    kg: &KnowledgeGraph,
    links: &[EntityId],
    current: Node,
    visited: &[EntityId],
) -> BTreeMap<usize, RelationId> {
    let mut moves = BTreeMap::new();
    let mut offer = |tail: EntityId, rel: RelationId| {
        moves
            .entry(tail.0)
            .and_modify(|r: &mut RelationId| *r = (*r).min(rel))
            .or_insert(rel);
    };
    match current {
        Node::Patient => {
            for &l in links {
                offer(l, kg.have_relation());
            }
        }
        Node::Entity(id) => {
            for t in kg.triplets().iter().filter(|t| t.head == id) {
                if t.relation == kg.self_loop_relation() || !visited.contains(&t.tail) {
                    offer(t.tail, t.relation);
                }
            }
        }
    }
    moves
}

/// Every depth-`horizon` walk with its policy probability.
pub fn enumerate_paths(
    kg: &KnowledgeGraph,
    params: &AgentParams,
    emb: &Embeddings,
    links: &[EntityId],
    p_e: &Array1<f64>,
    horizon: usize,
) -> Vec<OraclePath> {
    let mut out = Vec::new();
    let mut steps = Vec::new();
    walk(kg, params, emb, links, p_e, horizon, Node::Patient, None, &mut Vec::new(), 1.0, &mut steps, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    kg: &KnowledgeGraph,
    params: &AgentParams,
    emb: &Embeddings,
    links: &[EntityId],
    p_e: &Array1<f64>,
    horizon: usize,
    current: Node,
    previous: Option<(Node, RelationId)>,
    visited: &mut Vec<EntityId>,
    prob: f64,
    steps: &mut Vec<(RelationId, EntityId)>,
    out: &mut Vec<OraclePath>,
) {
    if steps.len() == horizon {
        out.push(OraclePath {
            steps: steps.clone(),
            probability: prob,
            dead_end: false,
        });
        return;
    }
    let moves = oracle_moves(kg, links, current, visited);
    if moves.is_empty() {
        out.push(OraclePath {
            steps: steps.clone(),
            probability: prob,
            dead_end: true,
        });
        return;
    }
    let mut mask = vec![false; kg.entity_count()];
    for &t in moves.keys() {
        mask[t] = true;
    }
    let state = build_state(emb, kg.relation_count(), p_e.view(), current, previous).unwrap();
    let (probs, _) = params.policy_value(&state, &mask).unwrap();
    for (&tail, &rel) in &moves {
        let tail = EntityId(tail);
        let pushed = match current {
            Node::Entity(id) if id != tail && !visited.contains(&id) => {
                visited.push(id);
                true
            }
            _ => false,
        };
        steps.push((rel, tail));
        walk(
            kg,
            params,
            emb,
            links,
            p_e,
            horizon,
            Node::Entity(tail),
            Some((current, rel)),
            visited,
            prob * probs[tail.0],
            steps,
            out,
        );
        steps.pop();
        if pushed {
            visited.pop();
        }
    }
}

/// Mann–Whitney AUC by counting every positive/negative pair, ties 1/2.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}
