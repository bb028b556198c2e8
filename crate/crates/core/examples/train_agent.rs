//! Train the path-walking agent on a synthetic cohort and print its
//! per-epoch log and a few sampled walks.
//!
//! `cargo run --release --example train_agent -- [patients] [entropy_weight]`

use kgpath::agent::{rollout, terminal_reward, Walker};
use kgpath::cohort::{synthesize, SynthConfig};
use kgpath::kg::{KnowledgeGraph, Node};
use kgpath::pipeline::{train_model, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let patients = args.next().map_or(Ok(600), |s| s.parse())?;
    let alpha = args.next().map_or(Ok(0.13), |s| s.parse())?;

    let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?;
    let cohort = synthesize(&kg, &SynthConfig { patients, ..Default::default() })?;
    let records: Vec<_> = cohort.records.iter().collect();
    let mut cfg = PipelineConfig::default();
    cfg.agent.entropy_weight = alpha;
    let model = train_model(&kg, &records, &cohort.scaling, &cfg)?;

    println!("epoch  return  entropy  critic  hit");
    for r in &model.logs.agent {
        println!(
            "{:>5}  {:>6.3}  {:>7.3}  {:>6.3}  {:.3}",
            r.epoch, r.mean_return, r.mean_entropy, r.critic_loss, r.hit_rate
        );
    }

    let name = |n: Node| match n {
        Node::Patient => "patient".to_string(),
        Node::Entity(id) => kg.entity(id).name.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("\nsampled walks:");
    for record in records.iter().take(5) {
        let graph = kg.link_entities(&record.links())?;
        let code = model.embeddings.encode_patient(&record.features)?;
        let walker = Walker::new(&model.agent, &model.embeddings);
        let t = rollout(walker, &graph, code.view(), cfg.agent.horizon, &mut rng)?;
        let mut text = "patient".to_string();
        for s in &t.steps {
            text.push_str(&format!(" -{}-> {}", kg.relation(s.action.relation).name, name(Node::Entity(s.action.tail))));
        }
        println!("  {text}  (p = {:.3}, reward {:+})", t.probability(), terminal_reward(&kg, t.terminal, &record.labels));
    }
    Ok(())
}
