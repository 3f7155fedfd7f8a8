//! Dense-versus-clustered binary matrices that every `L_p` sum rates as
//! identical but configuration entropy separates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::splitmix64;
use crate::entropy::config_entropy;
use crate::pruning::median;
use crate::tensor::Matrix;

pub const DEMO_SIZE: usize = 256;
pub const DEMO_ONES: usize = 1024;
pub const CENTER_SIDE: usize = 64;

/// Where the ones may land.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Full,
    /// The centered `CENTER_SIDE x CENTER_SIDE` block.
    Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub ones: usize,
    pub region: Region,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn dense(seed: u64) -> Self {
        Self {
            size: DEMO_SIZE,
            ones: DEMO_ONES,
            region: Region::Full,
            seed,
        }
    }

    pub fn sparse(seed: u64) -> Self {
        Self {
            region: Region::Center,
            ..Self::dense(seed)
        }
    }

    /// Inclusive-exclusive row/col range of the region.
    pub fn bounds(&self) -> (usize, usize) {
        match self.region {
            Region::Full => (0, self.size),
            Region::Center => {
                let side = CENTER_SIDE.min(self.size);
                let lo = (self.size - side) / 2;
                (lo, lo + side)
            }
        }
    }
}

/// Binary matrix with exactly `spec.ones` ones placed uniformly at random,
/// without replacement, inside the region.
pub fn gen_matrix(spec: &SyntheticSpec) -> Matrix {
    let (lo, hi) = spec.bounds();
    let side = hi - lo;
    assert!(spec.ones <= side * side, "more ones than region cells");
    let mut cells: Vec<usize> = (0..side * side).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (chosen, _) = cells.partial_shuffle(&mut rng, spec.ones);
    let mut m = Matrix::zeros(spec.size, spec.size);
    for &c in chosen.iter() {
        m[(lo + c / side, lo + c % side)] = 1.0;
    }
    m
}

/// `sum |w|^p` (the p-th power of the p-norm).
pub fn lp_sum(w: &Matrix, p: f64) -> f64 {
    assert!(p > 0.0, "p must be positive");
    w.as_slice().iter().map(|v| v.abs().powf(p)).sum()
}

/// Measurements for one dense/clustered pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoRow {
    pub pair_seed: u64,
    pub l1_dense: f64,
    pub l1_sparse: f64,
    pub l2_dense: f64,
    pub l2_sparse: f64,
    pub hc_dense: f64,
    pub hc_sparse: f64,
    /// `hc_dense - hc_sparse`
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoReport {
    pub rows: Vec<DemoRow>,
}

impl DemoReport {
    /// Share of pairs where the spread-out matrix has higher entropy.
    pub fn separation_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.margin > 0.0).count() as f64 / self.rows.len() as f64
    }

    pub fn median_margin(&self) -> f64 {
        let mut m: Vec<f64> = self.rows.iter().map(|r| r.margin).collect();
        median(&mut m)
    }

    /// True when every pair has equal L1 and L2 sums.
    pub fn lp_blind(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.l1_dense == r.l1_sparse && r.l2_dense == r.l2_sparse)
    }
}

/// The two matrices of pair `pair_seed`.
pub fn demo_pair(pair_seed: u64) -> (Matrix, Matrix) {
    let dense = gen_matrix(&SyntheticSpec::dense(splitmix64(2 * pair_seed)));
    let sparse = gen_matrix(&SyntheticSpec::sparse(splitmix64(2 * pair_seed + 1)));
    (dense, sparse)
}

pub fn demo_row(pair_seed: u64) -> DemoRow {
    let (d, s) = demo_pair(pair_seed);
    let (hc_dense, hc_sparse) = (config_entropy(&d), config_entropy(&s));
    DemoRow {
        pair_seed,
        l1_dense: lp_sum(&d, 1.0),
        l1_sparse: lp_sum(&s, 1.0),
        l2_dense: lp_sum(&d, 2.0),
        l2_sparse: lp_sum(&s, 2.0),
        hc_dense,
        hc_sparse,
        margin: hc_dense - hc_sparse,
    }
}

/// Pairs `0..seed_count`.
pub fn demo_report(seed_count: usize) -> DemoReport {
    assert!(seed_count >= 1);
    DemoReport {
        rows: (0..seed_count as u64).map(demo_row).collect(),
    }
}

/// Binary PGM (P5), nonzero entries white.
pub fn to_pgm(w: &Matrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", w.cols(), w.rows()).into_bytes();
    out.extend(w.as_slice().iter().map(|&v| if v != 0.0 { 255u8 } else { 0 }));
    out
}
