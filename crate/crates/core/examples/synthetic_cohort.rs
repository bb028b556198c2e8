//! Generate a planted-rule cohort, show the rules and summary statistics and
//! write it in the cohort file format.
//!
//! `cargo run --example synthetic_cohort -- [patients] [out.tsv]`

use kgpath::cohort::{generate_synthetic, preprocess, SynthConfig};
use kgpath::kg::KnowledgeGraph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let patients = args.next().map_or(Ok(500), |s| s.parse())?;
    let out = args.next();

    let kg = KnowledgeGraph::parse(include_str!("../data/mini_kg.tsv"))?;
    let cfg = SynthConfig { patients, ..Default::default() };
    let synth = generate_synthetic(&kg, &cfg)?;

    println!("planted rules (strongest first):");
    let mut rules = synth.rules.clone();
    rules.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    for r in rules.iter().take(12) {
        println!("  {:<24} -> {:<26} p = {:.2}", kg.entity(r.from).name, kg.entity(r.to).name, r.probability);
    }
    if rules.len() > 12 {
        println!("  ... {} more", rules.len() - 12);
    }

    let cohort = preprocess(&synth.raw, &kg)?;
    let s = cohort.summary();
    println!("\npatients {}  admissions {}  records {}", s.patients, s.admissions, s.records);
    println!("links per record   avg {:.2}  max {}", s.avg_links, s.max_links);
    println!("labels per record  avg {:.2}  max {}", s.avg_labels, s.max_labels);
    println!("top-10 label coverage {:.3}", cohort.top_label_coverage(10));

    let mut counts: Vec<_> = cohort.label_counts().into_iter().collect();
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    println!("\nlabel frequencies:");
    for (d, n) in counts {
        println!("  {:<26} {n}", kg.entity(d).name);
    }

    if let Some(path) = out {
        synth.raw.save(&path)?;
        println!("\nwrote {path}");
    }
    Ok(())
}
