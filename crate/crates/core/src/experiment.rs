//! Experiment orchestration behind the `entroreg` binary: the four training
//! conditions across seeds, pruning sweeps, aggregation and plotting, the
//! synthetic demo and the gradient checks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use crate::checkpoint;
use crate::data::{load_mnist, resolve_data_dir, Mnist};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradcheckReport};
use crate::mlp::{train_network, EpochMetrics, TrainingConfig, LENET300_SIZES};
use crate::pruning::{
    aggregate, best_common_level, compute_sensitivities, domination_fraction, median_params_to_reach, sweep,
    AggregateCurve, SweepCurve,
};
use crate::report::{self, PlotSeries};
use crate::synthetic::{demo_pair, demo_report, to_pgm, DemoReport};

/// Weight decay used by the `+wd` conditions unless overridden.
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;

/// The four training regimes compared in the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Dense,
    DenseWd,
    Sparse,
    SparseWd,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Dense,
        Condition::DenseWd,
        Condition::Sparse,
        Condition::SparseWd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Dense => "dense",
            Condition::DenseWd => "dense+wd",
            Condition::Sparse => "sparse",
            Condition::SparseWd => "sparse+wd",
        }
    }

    /// File-name friendly form.
    pub fn stem(self) -> &'static str {
        match self {
            Condition::Dense => "dense",
            Condition::DenseWd => "dense-wd",
            Condition::Sparse => "sparse",
            Condition::SparseWd => "sparse-wd",
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            Condition::Dense => "#e41a1c",
            Condition::DenseWd => "#7f0000",
            Condition::Sparse => "#2ca02c",
            Condition::SparseWd => "#1f4fbf",
        }
    }

    pub fn uses_sparsity_loss(self) -> bool {
        matches!(self, Condition::Sparse | Condition::SparseWd)
    }

    pub fn uses_weight_decay(self) -> bool {
        matches!(self, Condition::DenseWd | Condition::SparseWd)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s || c.stem() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown condition {s:?} (expected dense, dense+wd, sparse or sparse+wd)"
                ))
            })
    }
}

/// Everything a run of the harness needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: Option<PathBuf>,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Coefficient on the entropy penalty in the sparse conditions.
    pub sparsity_weight: f64,
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Train on only the first N training images.
    pub train_subset: Option<usize>,
    /// Pair count for the synthetic demo.
    pub pairs: usize,
    pub verbose: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            conditions: Condition::ALL.to_vec(),
            seeds: (1..=5).collect(),
            epochs: 25,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            sparsity_weight: 1.0,
            out_dir: PathBuf::from("results/desk-scale"),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            train_subset: None,
            pairs: 100,
            verbose: true,
        }
    }
}

/// Flat key/value config file; every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data_dir: Option<PathBuf>,
    pub conditions: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub sparsity_weight: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub train_subset: Option<usize>,
    pub pairs: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies the file's keys on top of `cfg`.
    pub fn apply(self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(v) = self.data_dir {
            cfg.data_dir = Some(v);
        }
        if let Some(v) = self.conditions {
            cfg.conditions = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        macro_rules! copy {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { cfg.$field = v; })*};
        }
        copy!(seeds, epochs, batch_size, learning_rate, weight_decay, sparsity_weight, out_dir, threads, pairs);
        if let Some(v) = self.train_subset {
            cfg.train_subset = Some(v);
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn training_config(&self, condition: Condition, seed: u64) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            weight_decay: if condition.uses_weight_decay() {
                self.weight_decay
            } else {
                0.0
            },
            use_sparsity_loss: condition.uses_sparsity_loss(),
            sparsity_weight: self.sparsity_weight,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..TrainingConfig::default()
        }
    }

    pub fn runs(&self) -> Vec<(Condition, u64)> {
        self.conditions
            .iter()
            .flat_map(|&c| self.seeds.iter().map(move |&s| (c, s)))
            .collect()
    }

    pub fn checkpoint_path(&self, condition: Condition, seed: u64) -> PathBuf {
        self.out_dir
            .join("runs")
            .join(format!("{}_seed{seed}.ckpt", condition.stem()))
    }

    pub fn metrics_path(&self, condition: Condition, seed: u64) -> PathBuf {
        self.out_dir
            .join("runs")
            .join(format!("{}_seed{seed}_metrics.csv", condition.stem()))
    }

    pub fn sweep_path(&self, condition: Condition, seed: u64) -> PathBuf {
        self.out_dir
            .join("sweeps")
            .join(format!("{}_seed{seed}.csv", condition.stem()))
    }

    pub fn aggregate_path(&self) -> PathBuf {
        self.out_dir.join("aggregate.csv")
    }

    pub fn plot_path(&self) -> PathBuf {
        self.out_dir.join("accuracy_vs_params.svg")
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one condition and one seed".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        self.training_config(Condition::DenseWd, 0).validate()
    }

    fn say(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn load_data(&self) -> Result<Mnist> {
        let dir = resolve_data_dir(self.data_dir.as_deref())?;
        self.say(format!("loading MNIST from {}", dir.display()));
        let mut data = load_mnist(&dir)?;
        if let Some(n) = self.train_subset {
            data.train = data.train.head(n);
        }
        Ok(data)
    }
}

/// Runs `f` over `jobs` on up to `threads` workers; results keep job order.
pub fn run_pool<T: Sync, R: Send>(jobs: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Outcome of one training run.
#[derive(Debug)]
pub struct RunOutcome {
    pub condition: Condition,
    pub seed: u64,
    pub result: Result<Vec<EpochMetrics>>,
}

/// Trains every (condition, seed) pair and writes a checkpoint and metrics
/// CSV for each. A run that diverges is reported and the rest continue.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    cmd_train_with_data(cfg, &data)
}

pub fn cmd_train_with_data(cfg: &ExperimentConfig, data: &Mnist) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let runs = cfg.runs();
    Ok(run_pool(&runs, cfg.threads, |&(condition, seed)| {
        let tc = cfg.training_config(condition, seed);
        let label = format!("{}_seed{seed}", condition.stem());
        let result = train_network(&LENET300_SIZES, &tc, &data.train, &data.test, |m| {
            cfg.say(format!(
                "[{label}] epoch {:>3} loss {:.5} test_acc {:.4} sparsity {:.4}",
                m.epoch, m.train_loss, m.test_accuracy, m.sparsity_loss
            ))
        })
        .and_then(|(params, log)| {
            write_file(&cfg.checkpoint_path(condition, seed), checkpoint::encode_params(&params))?;
            write_file(&cfg.metrics_path(condition, seed), report::metrics_csv(&log))?;
            Ok(log)
        });
        if let Err(e) = &result {
            cfg.say(format!("[{label}] aborted: {e}"));
        }
        RunOutcome {
            condition,
            seed,
            result,
        }
    }))
}

/// Sweeps of one condition.
#[derive(Clone, Debug)]
pub struct ConditionSweeps {
    pub condition: Condition,
    pub seeds: Vec<u64>,
    pub curves: Vec<SweepCurve>,
    pub aggregate: AggregateCurve,
}

fn write_aggregate_outputs(cfg: &ExperimentConfig, groups: &[ConditionSweeps]) -> Result<()> {
    let csv = report::aggregate_csv(groups.iter().map(|g| (g.condition.name(), &g.aggregate)));
    write_file(&cfg.aggregate_path(), csv)?;
    let series: Vec<PlotSeries> = groups
        .iter()
        .map(|g| PlotSeries {
            name: g.condition.name(),
            color: g.condition.color(),
            curve: &g.aggregate,
        })
        .collect();
    write_file(&cfg.plot_path(), report::accuracy_plot_svg(&series))
}

/// Prunes and evaluates every checkpoint, writes per-run sweep CSVs, the
/// aggregate CSV and the SVG plot. Missing checkpoints are skipped.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<ConditionSweeps>> {
    cfg.validate()?;
    let data = cfg.load_data()?;
    cmd_sweep_with_data(cfg, &data)
}

pub fn cmd_sweep_with_data(cfg: &ExperimentConfig, data: &Mnist) -> Result<Vec<ConditionSweeps>> {
    let mut present = Vec::new();
    for (c, s) in cfg.runs() {
        let path = cfg.checkpoint_path(c, s);
        if path.is_file() {
            present.push((c, s));
        } else {
            eprintln!("warning: missing checkpoint {}, skipping", path.display());
        }
    }
    let curves = run_pool(&present, cfg.threads, |&(c, s)| -> Result<SweepCurve> {
        let params = checkpoint::load(cfg.checkpoint_path(c, s))?;
        let sens = compute_sensitivities(&params, &data.train);
        let curve = sweep(&params, &sens, &data.test);
        write_file(&cfg.sweep_path(c, s), report::sweep_csv(&curve))?;
        cfg.say(format!(
            "[{}_seed{s}] swept: unpruned acc {:.4}",
            c.stem(),
            curve.unpruned.test_accuracy
        ));
        Ok(curve)
    });
    let mut groups: Vec<ConditionSweeps> = Vec::new();
    for ((c, s), curve) in present.into_iter().zip(curves) {
        let curve = curve?;
        match groups.iter_mut().find(|g| g.condition == c) {
            Some(g) => {
                g.seeds.push(s);
                g.curves.push(curve);
            }
            None => groups.push(ConditionSweeps {
                condition: c,
                seeds: vec![s],
                curves: vec![curve],
                aggregate: AggregateCurve { buckets: vec![] },
            }),
        }
    }
    for g in &mut groups {
        g.aggregate = aggregate(&g.curves);
    }
    write_aggregate_outputs(cfg, &groups)?;
    Ok(groups)
}

/// Reads sweep CSVs written by [`cmd_sweep`] back in, grouped by condition.
pub fn load_sweeps(cfg: &ExperimentConfig) -> Result<Vec<ConditionSweeps>> {
    let mut groups = Vec::new();
    for &c in &cfg.conditions {
        let mut seeds = Vec::new();
        let mut curves = Vec::new();
        for &s in &cfg.seeds {
            let path = cfg.sweep_path(c, s);
            if let Ok(text) = fs::read_to_string(&path) {
                curves.push(report::parse_sweep_csv(&text)?);
                seeds.push(s);
            }
        }
        if !curves.is_empty() {
            let aggregate = aggregate(&curves);
            groups.push(ConditionSweeps {
                condition: c,
                seeds,
                curves,
                aggregate,
            });
        }
    }
    Ok(groups)
}

/// Writes `demo.csv` and PGM images of the first pair.
pub fn cmd_demo(out_dir: &Path, pairs: usize) -> Result<DemoReport> {
    if pairs == 0 {
        return Err(Error::InvalidArgument("pairs must be at least 1".into()));
    }
    let report = demo_report(pairs);
    write_file(&out_dir.join("demo.csv"), report::demo_csv(&report))?;
    let (dense, sparse) = demo_pair(0);
    write_file(&out_dir.join("demo_dense.pgm"), to_pgm(&dense))?;
    write_file(&out_dir.join("demo_sparse.pgm"), to_pgm(&sparse))?;
    Ok(report)
}

pub fn cmd_gradcheck() -> GradcheckReport {
    gradcheck::run()
}

/// Summary numbers for the sparse-versus-dense comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// Highest accuracy the median run of both conditions reaches.
    pub level: f64,
    pub baseline_params: f64,
    pub treated_params: f64,
}

impl Comparison {
    /// `treated / baseline` surviving parameters at the common level.
    pub fn ratio(&self) -> f64 {
        self.treated_params / self.baseline_params
    }
}

pub fn compare_at_best_common_level(baseline: &[SweepCurve], treated: &[SweepCurve]) -> Option<Comparison> {
    let level = best_common_level(baseline, treated);
    Some(Comparison {
        level,
        baseline_params: median_params_to_reach(baseline, level)?,
        treated_params: median_params_to_reach(treated, level)?,
    })
}

/// Share of bins at or below `max_params` where `upper` has the higher median.
pub fn median_domination(upper: &ConditionSweeps, lower: &ConditionSweeps, max_params: f64) -> Option<f64> {
    domination_fraction(&upper.aggregate, &lower.aggregate, max_params)
}

/// Bin limit for the sparse+wd versus sparse comparison.
pub const DOMINATION_MAX_PARAMS: f64 = 1e4;

/// The headline numbers of a full four-condition sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct DeskScaleSummary {
    /// Unpruned test accuracy of every dense run.
    pub dense_unpruned: Vec<f64>,
    /// Unpruned test accuracy of every sparse and sparse+wd run.
    pub sparse_unpruned: Vec<f64>,
    /// Sparse versus dense at their best common accuracy.
    pub comparison: Option<Comparison>,
    /// Share of bins up to [`DOMINATION_MAX_PARAMS`] where sparse+wd's
    /// median is at least sparse's.
    pub domination: Option<f64>,
}

fn find(groups: &[ConditionSweeps], c: Condition) -> Option<&ConditionSweeps> {
    groups.iter().find(|g| g.condition == c)
}

/// Needs the dense and sparse groups; the sparse+wd parts are optional.
pub fn summarize(groups: &[ConditionSweeps]) -> Option<DeskScaleSummary> {
    let dense = find(groups, Condition::Dense)?;
    let sparse = find(groups, Condition::Sparse)?;
    let sparse_wd = find(groups, Condition::SparseWd);
    let unpruned = |g: &ConditionSweeps| g.curves.iter().map(|c| c.unpruned.test_accuracy).collect::<Vec<_>>();
    let mut sparse_unpruned = unpruned(sparse);
    if let Some(g) = sparse_wd {
        sparse_unpruned.extend(unpruned(g));
    }
    Some(DeskScaleSummary {
        dense_unpruned: unpruned(dense),
        sparse_unpruned,
        comparison: compare_at_best_common_level(&dense.curves, &sparse.curves),
        domination: sparse_wd.and_then(|g| median_domination(g, sparse, DOMINATION_MAX_PARAMS)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_names_round_trip() {
        for c in Condition::ALL {
            assert_eq!(c.name().parse::<Condition>().unwrap(), c);
            assert_eq!(c.stem().parse::<Condition>().unwrap(), c);
        }
        assert!("nope".parse::<Condition>().is_err());
    }

    #[test]
    fn conditions_map_to_flags() {
        let cfg = ExperimentConfig::default();
        let t = cfg.training_config(Condition::SparseWd, 3);
        assert!(t.use_sparsity_loss);
        assert_eq!(t.weight_decay, 1e-4);
        assert_eq!(t.seed, 3);
        let t = cfg.training_config(Condition::Dense, 3);
        assert!(!t.use_sparsity_loss);
        assert_eq!(t.weight_decay, 0.0);
        let t = cfg.training_config(Condition::DenseWd, 3);
        assert!(!t.use_sparsity_loss && t.weight_decay == 1e-4);
        assert_eq!(t.learning_rate, 1e-4);
        assert_eq!(t.batch_size, 64);
    }

    #[test]
    fn config_file_overrides() {
        let file = ConfigFile::parse(
            "conditions = [\"sparse\", \"dense-wd\"]\nseeds = [7, 8]\nepochs = 3\nlearning_rate = 0.001\n",
        )
        .unwrap();
        let mut cfg = ExperimentConfig::default();
        file.apply(&mut cfg).unwrap();
        assert_eq!(cfg.conditions, vec![Condition::Sparse, Condition::DenseWd]);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.batch_size, 64);
        assert!(ConfigFile::parse("bogus = 1").is_err());
    }

    #[test]
    fn pool_keeps_order() {
        let jobs: Vec<u32> = (0..20).collect();
        assert_eq!(run_pool(&jobs, 3, |&j| j * 2), (0..20).map(|j| j * 2).collect::<Vec<_>>());
        assert_eq!(run_pool(&jobs, 1, |&j| j + 1)[19], 20);
    }

    #[test]
    fn run_paths_are_unique() {
        let cfg = ExperimentConfig::default();
        let mut paths: Vec<PathBuf> = cfg.runs().iter().map(|&(c, s)| cfg.checkpoint_path(c, s)).collect();
        let n = paths.len();
        paths.sort();
        paths.dedup();
        assert_eq!(paths.len(), n);
        assert_eq!(n, 20);
    }
}
