#![allow(dead_code)]

use std::path::{Path, PathBuf};

use entroreg::data::{
    encode_idx_images, encode_idx_labels, has_mnist, IdxImages, DATA_DIR_ENV, TEST_IMAGES, TEST_LABELS,
    TRAIN_IMAGES, TRAIN_LABELS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 28x28 digits where class `k` lights a 5x5 patch at a class-specific spot,
/// plus speckle noise. Easy to learn in an epoch or two.
pub fn fake_images(count: usize, seed: u64) -> (IdxImages, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; count * 784];
    let mut labels = Vec::with_capacity(count);
    for n in 0..count {
        let k = rng.gen_range(0..10u8);
        labels.push(k);
        let img = &mut pixels[n * 784..(n + 1) * 784];
        for p in img.iter_mut() {
            if rng.gen_bool(0.05) {
                *p = rng.gen_range(0..=120);
            }
        }
        let (r0, c0) = (3 + (k as usize / 5) * 13, 1 + (k as usize % 5) * 5);
        for r in r0..r0 + 5 {
            for c in c0..c0 + 5 {
                img[r * 28 + c] = rng.gen_range(180..=255);
            }
        }
    }
    (
        IdxImages {
            count,
            rows: 28,
            cols: 28,
            pixels,
        },
        labels,
    )
}

/// Writes the four standard IDX files into `dir`.
pub fn write_fake_mnist(dir: &Path, n_train: usize, n_test: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let (tr, trl) = fake_images(n_train, 1);
    let (te, tel) = fake_images(n_test, 2);
    std::fs::write(dir.join(TRAIN_IMAGES), encode_idx_images(&tr)).unwrap();
    std::fs::write(dir.join(TRAIN_LABELS), encode_idx_labels(&trl)).unwrap();
    std::fs::write(dir.join(TEST_IMAGES), encode_idx_images(&te)).unwrap();
    std::fs::write(dir.join(TEST_LABELS), encode_idx_labels(&tel)).unwrap();
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Real MNIST from the environment variable or `<workspace>/data/mnist`.
pub fn real_mnist_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .into_iter()
        .chain(std::iter::once(workspace_root().join("data/mnist")))
        .find(|d| has_mnist(d))
}
