//! Load the knowledge graph, attach a patient and list what a walker may do
//! at each position.
//!
//! `cargo run --example action_space -- [kg.tsv] [entity ...]`

use kgpath::kg::{action_mask, KnowledgeGraph, Node};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).peekable();
    let kg = match args.peek() {
        Some(p) if p.ends_with(".tsv") => KnowledgeGraph::load(args.next().unwrap())?,
        _ => KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?,
    };
    let c = kg.counts();
    println!(
        "{} entities ({} disease, {} category, {} risk factor), {} domain triplets, {} relation types incl. have/self_loop",
        c.entities,
        c.diseases,
        c.categories,
        c.risk_factors,
        c.domain_triplets,
        kg.relation_count()
    );

    let names: Vec<String> = args.collect();
    let names = if names.is_empty() { vec!["obesity".to_string(), "hypertension".to_string()] } else { names };
    let links = names
        .iter()
        .map(|n| kg.entity_id(n).ok_or_else(|| format!("unknown entity {n}")))
        .collect::<Result<Vec<_>, _>>()?;
    let graph = kg.link_entities(&links)?;

    let show = |node: Node, visited: &[_]| -> Result<(), Box<dyn std::error::Error>> {
        let space = graph.action_space(node, visited);
        let mask = action_mask(&space, kg.entity_count())?;
        let label = match node {
            Node::Patient => "patient".to_string(),
            Node::Entity(id) => kg.entity(id).name.clone(),
        };
        println!("\nfrom {label}: {} legal tails", mask.count());
        for a in mask.actions() {
            println!("  --{}--> {}", kg.relation(a.relation).name, kg.entity(a.tail).name);
        }
        for c in mask.collisions() {
            println!("  (parallel edge to {} dropped: {})", kg.entity(c.tail).name, kg.relation(c.dropped).name);
        }
        Ok(())
    };
    show(Node::Patient, &[])?;
    for &l in &links {
        show(Node::Entity(l), &[])?;
    }
    // Once the walk has passed through the first link, edges back to it vanish.
    if let [first, .., last] = links[..] {
        println!("\nafter visiting {}:", kg.entity(first).name);
        show(Node::Entity(last), &[first])?;
    }
    Ok(())
}
