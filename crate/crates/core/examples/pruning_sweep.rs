//! Sensitivity pruning sweep over one checkpoint: per-weight |w * dL/dw|,
//! then accuracy at every 0.1 percentile threshold.
//!
//! cargo run --release --example pruning_sweep -- path/to/run.ckpt [out.csv]

use entroreg::checkpoint;
use entroreg::data::{load_mnist, resolve_data_dir};
use entroreg::pruning::{compute_sensitivities, sweep_with_progress};
use entroreg::report::sweep_csv;

fn main() -> entroreg::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().expect("usage: pruning_sweep <checkpoint> [out.csv]");
    let out = args.next();

    let params = checkpoint::load(&ckpt)?;
    let dir = resolve_data_dir(None).or_else(|_| resolve_data_dir(Some("data/mnist".as_ref())))?;
    let data = load_mnist(&dir)?;

    let sens = compute_sensitivities(&params, &data.train);
    let curve = sweep_with_progress(&params, &sens, &data.test, |p| {
        if p.tenths % 100 == 0 || p.tenths >= 990 {
            println!(
                "p = {:>5.1}%  surviving {:>6}  acc {:.4}",
                p.percentile(),
                p.surviving_params,
                p.test_accuracy
            );
        }
    });

    for level in [0.97, 0.95, 0.90, 0.50] {
        match curve.params_to_reach(level) {
            Some(n) => println!("fewest weights with accuracy >= {level}: {n}"),
            None => println!("accuracy {level} never reached"),
        }
    }
    if let Some(path) = out {
        std::fs::write(&path, sweep_csv(&curve)).expect("write csv");
        println!("wrote {path}");
    }
    Ok(())
}
