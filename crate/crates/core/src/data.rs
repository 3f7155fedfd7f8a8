//! MNIST ingestion from the IDX container format, plus deterministic batching.
//!
//! IDX layout: a big-endian `u32` magic (`0x00000803` for rank-3 unsigned
//! byte images, `0x00000801` for rank-1 labels), one big-endian `u32` per
//! dimension, then the raw bytes.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, IdxError, Result};
use crate::tensor::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Environment variable consulted when no data directory is given.
pub const DATA_DIR_ENV: &str = "ENTROREG_DATA_DIR";

/// Raw image bytes, one row of `rows * cols` pixels per image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let n = self.pixels_per_image();
        &self.pixels[index * n..(index + 1) * n]
    }
}

fn read_header(bytes: &[u8], expected_magic: u32, dims: usize) -> Result<Vec<usize>, IdxError> {
    let needed = 4 * (1 + dims);
    if bytes.len() < 4 {
        return Err(IdxError::TruncatedHeader {
            needed,
            available: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let magic = word(0);
    if magic != expected_magic {
        return Err(IdxError::BadMagic {
            expected: expected_magic,
            found: magic,
        });
    }
    if bytes.len() < needed {
        return Err(IdxError::TruncatedHeader {
            needed,
            available: bytes.len(),
        });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn check_payload(bytes: &[u8], header_len: usize, declared: usize) -> Result<(), IdxError> {
    let available = bytes.len() - header_len;
    if available < declared {
        return Err(IdxError::TruncatedPayload {
            declared,
            available,
        });
    }
    if available > declared {
        return Err(IdxError::TrailingBytes {
            extra: available - declared,
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let dims = read_header(bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let declared = count * rows * cols;
    check_payload(bytes, 16, declared)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let dims = read_header(bytes, LABELS_MAGIC, 1)?;
    check_payload(bytes, 8, dims[0])?;
    let labels = bytes[8..].to_vec();
    if let Some((index, &value)) = labels
        .iter()
        .enumerate()
        .find(|(_, &v)| v as usize >= NUM_CLASSES)
    {
        return Err(IdxError::LabelOutOfRange { index, value });
    }
    Ok(labels)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    parse_idx_images(&read_file(path)?).map_err(|source| Error::Idx {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read_file(path)?).map_err(|source| Error::Idx {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [images.count, images.rows, images.cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pixel bytes scaled by 1/255, one image per row.
pub fn normalize(images: &IdxImages) -> Matrix {
    let data = images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    Matrix::from_vec(images.count, images.pixels_per_image(), data)
        .expect("pixel count matches header")
}

/// One split of a labelled image dataset.
#[derive(Clone, Debug)]
pub struct MnistSplit {
    pub images: Matrix,
    pub labels: Vec<u8>,
}

impl MnistSplit {
    pub fn new(images: Matrix, labels: Vec<u8>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> MnistSplit {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> MnistSplit {
        MnistSplit {
            images: self.images.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Train and test splits.
#[derive(Clone, Debug)]
pub struct Mnist {
    pub train: MnistSplit,
    pub test: MnistSplit,
}

pub fn load_split(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<MnistSplit> {
    let raw = load_idx_images(images.as_ref())?;
    let labels_v = load_idx_labels(labels.as_ref())?;
    if raw.count != labels_v.len() {
        return Err(Error::Idx {
            path: labels.as_ref().to_path_buf(),
            source: IdxError::CountMismatch {
                images: raw.count,
                labels: labels_v.len(),
            },
        });
    }
    MnistSplit::new(normalize(&raw), labels_v)
}

/// Loads the four standard files from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<Mnist> {
    let dir = dir.as_ref();
    Ok(Mnist {
        train: load_split(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))?,
        test: load_split(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))?,
    })
}

/// True when all four standard files exist in `dir`.
pub fn has_mnist(dir: &Path) -> bool {
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS]
        .iter()
        .all(|f| dir.join(f).is_file())
}

/// Picks the data directory: explicit path, then `ENTROREG_DATA_DIR`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    let candidate = match explicit {
        Some(p) => p.to_path_buf(),
        None => match env::var_os(DATA_DIR_ENV) {
            Some(p) => PathBuf::from(p),
            None => {
                return Err(Error::MissingData(format!(
                    "no data directory given and {DATA_DIR_ENV} is unset"
                )))
            }
        },
    };
    if !has_mnist(&candidate) {
        return Err(Error::MissingData(format!(
            "{} does not contain the four MNIST IDX files",
            candidate.display()
        )));
    }
    Ok(candidate)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffle seed for a given epoch of a run.
pub fn epoch_seed(run_seed: u64, epoch: usize) -> u64 {
    splitmix64(run_seed ^ epoch as u64)
}

/// Fisher-Yates permutation of `0..n` driven by `epoch_seed`.
pub fn epoch_permutation(n: usize, epoch_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);
    order
}

/// A contiguous slice of a shuffled epoch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub images: Matrix,
    pub labels: Vec<u8>,
}

/// Iterator over the batches of one epoch; the last batch may be short.
pub struct Minibatches<'a> {
    split: &'a MnistSplit,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Minibatches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let sel = self.split.select(&indices);
        Some(Batch {
            indices,
            images: sel.images,
            labels: sel.labels,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Minibatches<'_> {}

pub fn minibatches(split: &MnistSplit, batch_size: usize, epoch_seed: u64) -> Minibatches<'_> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    Minibatches {
        split,
        order: epoch_permutation(split.len(), epoch_seed),
        batch_size,
        pos: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_images() -> IdxImages {
        IdxImages {
            count: 2,
            rows: 2,
            cols: 2,
            pixels: vec![0, 51, 255, 7, 128, 1, 2, 3],
        }
    }

    fn tiny_split(n: usize) -> MnistSplit {
        let images = Matrix::from_fn(n, 3, |i, j| (i * 3 + j) as f64);
        MnistSplit::new(images, (0..n).map(|i| (i % 10) as u8).collect()).unwrap()
    }

    #[test]
    fn image_fixture_round_trip() {
        let bytes = encode_idx_images(&fixture_images());
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx_images(&bytes).unwrap(), fixture_images());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let labels = encode_idx_labels(&[1, 2]);
        assert_eq!(
            parse_idx_images(&labels).unwrap_err(),
            IdxError::BadMagic {
                expected: IMAGES_MAGIC,
                found: LABELS_MAGIC
            }
        );
        let images = encode_idx_images(&fixture_images());
        assert!(matches!(
            parse_idx_labels(&images),
            Err(IdxError::BadMagic { .. })
        ));
    }

    #[test]
    fn every_single_byte_magic_corruption_is_rejected() {
        for original in [encode_idx_images(&fixture_images()), encode_idx_labels(&[3, 4, 5])] {
            let is_images = original[3] == 3;
            for pos in 0..4 {
                for v in 0..=255u8 {
                    if v == original[pos] {
                        continue;
                    }
                    let mut bad = original.clone();
                    bad[pos] = v;
                    let err = if is_images {
                        parse_idx_images(&bad).map(|_| ()).unwrap_err()
                    } else {
                        parse_idx_labels(&bad).map(|_| ()).unwrap_err()
                    };
                    assert!(matches!(err, IdxError::BadMagic { .. }));
                }
            }
        }
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = encode_idx_images(&fixture_images());
        assert!(matches!(
            parse_idx_images(&bytes[..bytes.len() - 1]),
            Err(IdxError::TruncatedPayload { declared: 8, available: 7 })
        ));
        assert!(matches!(
            parse_idx_images(&bytes[..10]),
            Err(IdxError::TruncatedHeader { needed: 16, .. })
        ));
        assert!(matches!(
            parse_idx_images(&bytes[..2]),
            Err(IdxError::TruncatedHeader { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(
            parse_idx_images(&long).unwrap_err(),
            IdxError::TrailingBytes { extra: 1 }
        );
    }

    #[test]
    fn labels_edge_cases() {
        assert_eq!(parse_idx_labels(&encode_idx_labels(&[])).unwrap(), Vec::<u8>::new());
        assert_eq!(
            parse_idx_labels(&encode_idx_labels(&[0, 9, 10])).unwrap_err(),
            IdxError::LabelOutOfRange { index: 2, value: 10 }
        );
    }

    #[test]
    fn normalization_is_exact() {
        let m = normalize(&fixture_images());
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m.row(0), &[0.0, 0.2, 1.0, 7.0 / 255.0]);
        assert_eq!(m.row(1), &[128.0 / 255.0, 1.0 / 255.0, 2.0 / 255.0, 3.0 / 255.0]);
        for b in 0..=255u8 {
            let img = IdxImages { count: 1, rows: 1, cols: 1, pixels: vec![b] };
            assert_eq!(normalize(&img).as_slice()[0], f64::from(b) / 255.0);
        }
    }

    #[test]
    fn batch_sizes_and_coverage() {
        let split = tiny_split(10);
        let sizes: Vec<usize> = minibatches(&split, 3, 9).map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let mut seen: Vec<usize> = minibatches(&split, 3, 9).flat_map(|b| b.indices).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let one: Vec<Batch> = minibatches(&split, 10, 1).collect();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].images.rows(), 10);
    }

    #[test]
    fn batches_carry_matching_rows() {
        let split = tiny_split(7);
        for b in minibatches(&split, 2, 5) {
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.images.row(k), split.images.row(i));
                assert_eq!(b.labels[k], split.labels[i]);
            }
        }
    }

    #[test]
    fn batching_is_deterministic() {
        let split = tiny_split(50);
        let a: Vec<Vec<usize>> = minibatches(&split, 8, 42).map(|b| b.indices).collect();
        let b: Vec<Vec<usize>> = minibatches(&split, 8, 42).map(|b| b.indices).collect();
        let c: Vec<Vec<usize>> = minibatches(&split, 8, 43).map(|b| b.indices).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(epoch_seed(1, 0), epoch_seed(1, 1));
    }
}
