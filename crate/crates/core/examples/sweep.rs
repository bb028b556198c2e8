//! Cross-validate over a grid of horizons or entropy weights and print
//! mean ± std per grid point.
//!
//! `cargo run --release --example sweep -- [horizon|entropy] [patients] [folds]`

use kgpath::cohort::{make_folds, synthesize, SynthConfig};
use kgpath::eval::{sweep, SweepAxis};
use kgpath::kg::KnowledgeGraph;
use kgpath::pipeline::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let axis: SweepAxis = args.next().as_deref().unwrap_or("horizon").parse()?;
    let patients = args.next().map_or(Ok(400), |s| s.parse())?;
    let folds = args.next().map_or(Ok(3), |s| s.parse())?;

    let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?;
    let cohort = synthesize(&kg, &SynthConfig { patients, ..Default::default() })?;
    let folds = make_folds(&cohort, folds, 0)?;
    let mut cfg = PipelineConfig::default();
    cfg.agent.epochs = 10;

    let report = sweep(&kg, &cohort, &folds, &cfg, axis, &axis.default_grid())?;
    print!("{}", report.summary());
    Ok(())
}
