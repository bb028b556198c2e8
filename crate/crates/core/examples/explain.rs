//! Train a model, rank diseases for one patient with beam search and export
//! the supporting paths as structured JSON and Graphviz dot.
//!
//! `cargo run --release --example explain -- [condition;condition...] [min_edge_prob]`
//!
//! Pipe the dot part through `dot -Tsvg` to draw it.

use kgpath::cohort::{synthesize, SynthConfig};
use kgpath::inference::{export_paths, rank_diseases, ExportFormat};
use kgpath::kg::KnowledgeGraph;
use kgpath::pipeline::{predict, train_model, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let conditions = args.next().unwrap_or_else(|| "obesity;hypertension".into());
    let min_edge_prob = args.next().map_or(Ok(0.1), |s| s.parse())?;

    let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?;
    let cohort = synthesize(&kg, &SynthConfig { patients: 600, ..Default::default() })?;
    let records: Vec<_> = cohort.records.iter().collect();
    let cfg = PipelineConfig::default();
    let model = train_model(&kg, &records, &cohort.scaling, &cfg)?;

    let links = conditions
        .split(';')
        .map(|n| kg.entity_id(n.trim()).ok_or_else(|| format!("unknown entity {n}")))
        .collect::<Result<Vec<_>, _>>()?;
    // No lab values: every feature falls back to its cohort mean.
    let features = model.scaling.scale(&vec![None; model.scaling.len()]);
    let result = predict(&kg, &model.embeddings, &model.agent, &links, &features, &cfg.beam(kg.entity_count()))?;

    println!("next-admission risk for {conditions}:");
    for r in rank_diseases(&result, 5) {
        println!("  {:<26} {:.3}", kg.entity(r.entity).name, r.probability);
    }
    println!("  (non-disease terminals {:.3})\n", result.discarded_mass);

    println!("{}", export_paths(&result, &kg, ExportFormat::Json, min_edge_prob)?);
    println!("{}", export_paths(&result, &kg, ExportFormat::Dot, min_edge_prob)?);
    Ok(())
}
