mod common;

use std::collections::BTreeMap;

use common::*;
use kgpath::agent::{rollout, state_width, AgentParams, Walker};
use kgpath::embeddings::{AutoencoderParams, Embeddings, RbmParams};
use kgpath::inference::{beam_predict, BeamConfig};
use kgpath::kg::{EntityId, KnowledgeGraph};
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero_model(kg: &KnowledgeGraph) -> (AgentParams, Embeddings) {
    let params = AgentParams::zeros(state_width(2, kg.relation_count()), 4, kg.entity_count());
    let emb = Embeddings {
        rbm: RbmParams::zeros(kg.entity_count(), 2),
        autoencoder: AutoencoderParams::zeros(1, 2, 2),
    };
    (params, emb)
}

#[test]
fn rollout_frequencies_match_enumeration() {
    let kg = KnowledgeGraph::parse(TOY_KG).unwrap();
    let (params, emb) = zero_model(&kg);
    let links = [kg.entity_id("RF1").unwrap(), kg.entity_id("D1").unwrap()];
    let graph = kg.link_entities(&links).unwrap();
    let code = Array1::zeros(2);
    let exact = enumerate_paths(&kg, &params, &emb, &links, &code, 2);
    assert_eq!(exact.len(), 4);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 1000;
    let mut counts: BTreeMap<Vec<EntityId>, usize> = BTreeMap::new();
    for _ in 0..n {
        let t = rollout(Walker::new(&params, &emb), &graph, code.view(), 2, &mut rng).unwrap();
        *counts.entry(t.entities()).or_default() += 1;
    }
    for path in &exact {
        let entities: Vec<EntityId> = path.steps.iter().map(|s| s.1).collect();
        let freq = counts.get(&entities).copied().unwrap_or(0) as f64 / n as f64;
        let se = (path.probability * (1.0 - path.probability) / n as f64).sqrt();
        assert!(
            (freq - path.probability).abs() <= 3.0 * se,
            "{entities:?}: frequency {freq}, probability {}",
            path.probability
        );
    }
    assert_eq!(counts.len(), 4);
}

#[test]
fn wider_beams_never_prune_more() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let kg = random_kg(&mut rng, 12);
        let emb = random_embeddings(&mut rng, &kg, 3, 4);
        let agent = random_agent(&mut rng, &kg, 3, 8);
        let links = random_links(&mut rng, &kg);
        let code = random_code(&mut rng, 3);
        let graph = kg.link_entities(&links).unwrap();
        let walker = Walker::new(&agent, &emb);
        let exact = beam_predict(walker, &graph, code.view(), &BeamConfig::exact(3)).unwrap();
        let mut last = f64::INFINITY;
        for width in 1..=kg.entity_count() {
            let r = beam_predict(walker, &graph, code.view(), &BeamConfig::uniform(3, width)).unwrap();
            assert!(r.pruned_mass <= last + 1e-12, "width {width}");
            last = r.pruned_mass;
            let total: f64 = r.probabilities.iter().sum::<f64>() + r.discarded_mass + r.pruned_mass;
            assert!((total - 1.0).abs() < 1e-9);
            for p in &r.paths {
                assert!(exact.paths.iter().any(|q| q.steps == p.steps), "beam path not in the exact set");
            }
        }
        // A beam as wide as the graph keeps everything.
        let full = beam_predict(walker, &graph, code.view(), &BeamConfig::uniform(3, kg.entity_count())).unwrap();
        assert_eq!(full.paths.len(), exact.paths.len());
        assert!(full.pruned_mass.abs() < 1e-12);
    }
}

#[test]
fn walks_never_revisit_except_by_self_loop() {
    let text = "entity\tA\tdisease\nentity\tB\tdisease\nentity\tC\tdisease\n\
                triplet\tA\tcauses\tB\ntriplet\tB\tcauses\tC\ntriplet\tC\tcauses\tA\ntriplet\tB\tcauses\tA\n";
    let kg = KnowledgeGraph::parse(text).unwrap();
    let (params, emb) = zero_model(&kg);
    let a = kg.entity_id("A").unwrap();
    let graph = kg.link_entities(&[a]).unwrap();
    let result = beam_predict(Walker::new(&params, &emb), &graph, Array1::zeros(2).view(), &BeamConfig::exact(4)).unwrap();
    for path in &result.paths {
        let e = path.entities();
        for (i, step) in path.steps.iter().enumerate().skip(1) {
            if step.relation != kg.self_loop_relation() {
                assert!(!e[..i].contains(&step.entity), "{e:?} revisits");
            }
        }
    }
    // A -> B -> A is forbidden, so B's only moves are C and its self-loop.
    assert!(result.paths.iter().all(|p| p.entities().get(..3) != Some(&[a, kg.entity_id("B").unwrap(), a][..])));
}

#[test]
fn full_scale_graph_counts() {
    let kg = KnowledgeGraph::parse(include_str!("../data/full_kg.tsv")).unwrap();
    let c = kg.counts();
    assert_eq!(c.entities, 65);
    assert_eq!(c.diseases, 53);
    assert_eq!(c.categories, 5);
    assert_eq!(c.risk_factors, 7);
    assert_eq!(c.domain_triplets, 326);
    for e in kg.entities() {
        assert!(kg.outgoing(e.id).iter().any(|a| a.relation == kg.self_loop_relation() && a.tail == e.id));
    }
}

#[test]
fn beam_on_the_full_scale_graph_conserves_mass() {
    let kg = KnowledgeGraph::parse(include_str!("../data/full_kg.tsv")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let emb = random_embeddings(&mut rng, &kg, 8, 4);
    let agent = random_agent(&mut rng, &kg, 8, 16);
    let links = random_links(&mut rng, &kg);
    let graph = kg.link_entities(&links).unwrap();
    let code = random_code(&mut rng, 8);
    for cfg in [BeamConfig::exact(2), BeamConfig::default_for(3, 65), BeamConfig::uniform(4, 5)] {
        let r = beam_predict(Walker::new(&agent, &emb), &graph, code.view(), &cfg).unwrap();
        let total: f64 = r.probabilities.iter().sum::<f64>() + r.discarded_mass + r.pruned_mass;
        assert!((total - 1.0).abs() < 1e-9);
    }
}
