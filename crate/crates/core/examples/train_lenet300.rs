//! Train one LeNet300 on MNIST with or without the entropy penalty and print
//! per-epoch metrics plus how many weights ended up near zero.
//!
//! cargo run --release --example train_lenet300 -- [dense|dense+wd|sparse|sparse+wd] [epochs] [train_subset]
//!
//! Data comes from $ENTROREG_DATA_DIR or ./data/mnist.

use entroreg::data::{load_mnist, resolve_data_dir};
use entroreg::experiment::{Condition, ExperimentConfig};
use entroreg::mlp::{train_network, LENET300_SIZES};
use entroreg::total_sparsity_loss;

fn main() -> entroreg::Result<()> {
    let mut args = std::env::args().skip(1);
    let condition: Condition = args.next().as_deref().unwrap_or("sparse").parse()?;
    let epochs = args.next().map_or(3, |s| s.parse().expect("epochs"));
    let subset: Option<usize> = args.next().map(|s| s.parse().expect("train_subset"));

    let dir = resolve_data_dir(None).or_else(|_| resolve_data_dir(Some("data/mnist".as_ref())))?;
    let mut data = load_mnist(&dir)?;
    if let Some(n) = subset {
        data.train = data.train.head(n);
    }

    let cfg = ExperimentConfig {
        epochs,
        ..ExperimentConfig::default()
    }
    .training_config(condition, 1);
    println!("{condition}: {:?}", cfg);

    let (params, _) = train_network(&LENET300_SIZES, &cfg, &data.train, &data.test, |m| {
        println!(
            "epoch {:>3}  loss {:+.5}  entropy {:+.4}  test acc {:.4}",
            m.epoch, m.train_loss, m.sparsity_loss, m.test_accuracy
        )
    })?;

    println!("final sparsity loss {:+.4}", total_sparsity_loss(params.weights()));
    for (k, w) in params.weights().enumerate() {
        let max = w.max_abs();
        let small = w.as_slice().iter().filter(|v| v.abs() < 1e-2 * max).count();
        println!(
            "layer {}: {}x{}  |w|max {:.4}  below 1% of max: {:.1}%",
            k + 1,
            w.rows(),
            w.cols(),
            max,
            100.0 * small as f64 / w.len() as f64
        );
    }
    Ok(())
}
