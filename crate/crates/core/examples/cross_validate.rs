//! Five-fold cross-validation of the default pipeline on a synthetic cohort.
//!
//! `cargo run --release --example cross_validate -- [patients] [workers]`

use std::time::Instant;

use kgpath::cohort::{make_folds, synthesize, SynthConfig};
use kgpath::eval::cross_validate;
use kgpath::kg::KnowledgeGraph;
use kgpath::pipeline::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let patients = args.next().map_or(Ok(2000), |s| s.parse())?;
    let workers = args.next().map_or(Ok(1), |s| s.parse())?;

    let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?;
    let cohort = synthesize(&kg, &SynthConfig { patients, ..Default::default() })?;
    let summary = cohort.summary();
    println!(
        "{} patients, {} records, {:.2} links and {:.2} labels per record, top-10 coverage {:.3}",
        summary.patients,
        summary.records,
        summary.avg_links,
        summary.avg_labels,
        cohort.top_label_coverage(10)
    );

    let folds = make_folds(&cohort, 5, 0)?;
    let cfg = PipelineConfig { workers, ..Default::default() };
    let start = Instant::now();
    let report = cross_validate(&kg, &cohort, &folds, &cfg)?;
    print!("{}", report.to_tsv("default"));
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
