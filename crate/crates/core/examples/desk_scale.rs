//! Summarize a finished four-condition experiment from its sweep CSVs.
//!
//! Produce the inputs first (about an hour on one core):
//!
//! ```text
//! entroreg train --out results/desk-scale
//! entroreg sweep --out results/desk-scale
//! ```
//!
//! cargo run --release --example desk_scale -- [results_dir]

use entroreg::experiment::{load_sweeps, summarize, ExperimentConfig};
use entroreg::pruning::median_peak_accuracy;

fn main() -> entroreg::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "results/desk-scale".into());
    let cfg = ExperimentConfig {
        out_dir: dir.into(),
        ..ExperimentConfig::default()
    };
    let groups = load_sweeps(&cfg)?;
    if groups.is_empty() {
        eprintln!("no sweep CSVs under {}", cfg.out_dir.display());
        std::process::exit(1);
    }

    println!("{:<10} {:>5} {:>10} {:>10} {:>12} {:>12}", "condition", "runs", "unpruned", "peak", "n@0.95", "n@0.90");
    for g in &groups {
        let mut unpruned: Vec<f64> = g.curves.iter().map(|c| c.unpruned.test_accuracy).collect();
        let at = |level| {
            entroreg::pruning::median_params_to_reach(&g.curves, level).map_or("-".to_string(), |n| format!("{n:.0}"))
        };
        println!(
            "{:<10} {:>5} {:>10.4} {:>10.4} {:>12} {:>12}",
            g.condition.name(),
            g.curves.len(),
            entroreg::pruning::median(&mut unpruned),
            median_peak_accuracy(&g.curves),
            at(0.95),
            at(0.90)
        );
    }

    if let Some(s) = summarize(&groups) {
        println!();
        if let Some(c) = &s.comparison {
            println!(
                "best common accuracy {:.4}: dense needs {:.0} weights, sparse {:.0} (sparse/dense = {:.3})",
                c.level,
                c.baseline_params,
                c.treated_params,
                c.ratio()
            );
        }
        if let Some(d) = s.domination {
            println!("sparse+wd at or above sparse in {:.0}% of bins up to 1e4 weights", 100.0 * d);
        }
    }
    Ok(())
}
