//! Learn entity embeddings with an RBM over patient characters and a
//! patient-feature autoencoder, then list each entity's nearest neighbours.
//!
//! `cargo run --release --example embeddings -- [patients] [epochs]`

use kgpath::cohort::{synthesize, SynthConfig};
use kgpath::kg::KnowledgeGraph;
use kgpath::pipeline::{train_embeddings, EmbeddingConfig, PipelineConfig};
use ndarray::ArrayView1;

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt()).max(1e-12)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let patients = args.next().map_or(Ok(1000), |s| s.parse())?;
    let epochs = args.next().map_or(Ok(100), |s| s.parse())?;

    let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?;
    let cohort = synthesize(&kg, &SynthConfig { patients, ..Default::default() })?;
    let records: Vec<_> = cohort.records.iter().collect();
    let cfg = PipelineConfig {
        embeddings: EmbeddingConfig { epochs, ..Default::default() },
        ..Default::default()
    };
    let (emb, logs) = train_embeddings(&records, &cfg)?;

    for (name, log) in [("RBM reconstruction", &logs.rbm), ("autoencoder BCE", &logs.autoencoder)] {
        let first = log.first().map_or(f64::NAN, |e| e.loss);
        let last = log.last().map_or(f64::NAN, |e| e.loss);
        println!("{name:<20} {first:.4} -> {last:.4}");
    }

    println!("\nnearest neighbours by cosine of RBM weight rows:");
    let w = &emb.rbm.weights;
    for e in kg.entities() {
        let mut near: Vec<(f64, &str)> = kg
            .entities()
            .iter()
            .filter(|o| o.id != e.id)
            .map(|o| (cosine(w.row(e.id.0), w.row(o.id.0)), o.name.as_str()))
            .collect();
        near.sort_by(|a, b| b.0.total_cmp(&a.0));
        let top: Vec<String> = near.iter().take(3).map(|(c, n)| format!("{n} ({c:.2})")).collect();
        println!("  {:<26} {}", e.name, top.join(", "));
    }

    let code = emb.encode_patient(&cohort.records[0].features)?;
    println!("\npatient code of record 0: {:.3}", code);
    Ok(())
}
