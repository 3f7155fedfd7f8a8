use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use entroreg::experiment::{self, Condition, ConfigFile, ExperimentConfig};

#[derive(Parser)]
#[command(name = "entroreg", version, about = "Configuration-entropy sparsity experiments on LeNet300/MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every condition/seed pair and write checkpoints.
    Train(Opts),
    /// Prune-and-evaluate sweeps over saved checkpoints, aggregate CSV and plot.
    Sweep(Opts),
    /// Synthetic dense-versus-clustered matrices.
    Demo(Opts),
    /// Analytic-versus-numeric gradient checks.
    Gradcheck,
}

#[derive(Args)]
struct Opts {
    /// Flat TOML file with any of the options below (snake_case keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated subset of dense, dense+wd, sparse, sparse+wd.
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<Condition>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Coefficient used by the +wd conditions.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Coefficient on the entropy penalty (default 1).
    #[arg(long)]
    sparsity_weight: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// MNIST directory; falls back to $ENTROREG_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use only the first N training images.
    #[arg(long)]
    train_subset: Option<usize>,
    /// Number of pairs for `demo`.
    #[arg(long)]
    pairs: Option<usize>,
}

impl Opts {
    fn resolve(self) -> entroreg::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            ConfigFile::load(path)?.apply(&mut cfg)?;
        }
        cfg.data_dir = self.data_dir.or(cfg.data_dir);
        cfg.seeds = self.seeds.unwrap_or(cfg.seeds);
        cfg.conditions = self.conditions.unwrap_or(cfg.conditions);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.learning_rate = self.lr.unwrap_or(cfg.learning_rate);
        cfg.weight_decay = self.weight_decay.unwrap_or(cfg.weight_decay);
        cfg.sparsity_weight = self.sparsity_weight.unwrap_or(cfg.sparsity_weight);
        cfg.out_dir = self.out.unwrap_or(cfg.out_dir);
        cfg.threads = self.threads.unwrap_or(cfg.threads);
        cfg.train_subset = self.train_subset.or(cfg.train_subset);
        cfg.pairs = self.pairs.unwrap_or(cfg.pairs);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> entroreg::Result<bool> {
    match cli.command {
        Command::Train(opts) => {
            let cfg = opts.resolve()?;
            let outcomes = experiment::cmd_train(&cfg)?;
            let failed: Vec<_> = outcomes.iter().filter(|o| o.result.is_err()).collect();
            for o in &failed {
                eprintln!("{} seed {} failed: {}", o.condition, o.seed, o.result.as_ref().unwrap_err());
            }
            println!(
                "trained {}/{} runs into {}",
                outcomes.len() - failed.len(),
                outcomes.len(),
                cfg.out_dir.display()
            );
            Ok(failed.is_empty())
        }
        Command::Sweep(opts) => {
            let cfg = opts.resolve()?;
            let groups = experiment::cmd_sweep(&cfg)?;
            for g in &groups {
                println!("{}: {} runs swept", g.condition, g.curves.len());
            }
            println!("wrote {} and {}", cfg.aggregate_path().display(), cfg.plot_path().display());
            Ok(!groups.is_empty())
        }
        Command::Demo(opts) => {
            let mut cfg = opts.resolve()?;
            if cfg.out_dir == ExperimentConfig::default().out_dir {
                cfg.out_dir = "results/demo".into();
            }
            let report = experiment::cmd_demo(&cfg.out_dir, cfg.pairs)?;
            println!(
                "{} pairs: L1/L2 identical = {}, entropy separates {:.1}%, median margin {:.4}",
                report.rows.len(),
                report.lp_blind(),
                100.0 * report.separation_fraction(),
                report.median_margin()
            );
            Ok(true)
        }
        Command::Gradcheck => {
            let report = experiment::cmd_gradcheck();
            println!("{report}");
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
