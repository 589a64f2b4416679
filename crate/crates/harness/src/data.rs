//! Turns [`DataSettings`] into a train/test pair.

use std::path::{Path, PathBuf};

use gradguard::datasets::{
    decoy_swatch_mask, decoyify, gen_2d_toy, gen_topic_corpus, gen_toy_color, gen_toy_color_one_rule,
    iris_dims_mask, load_20ng, load_iris_cancer, load_mnist, read_dataset, split, toy_color_masks, DecoyPhase,
    LabeledDataset, NewsgroupsOptions, SplitTag, Toy2dKind, ToyColorMask, ToyRule,
};
use gradguard::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::DataSettings;
use crate::error::{HarnessError, Result};

/// Offset between the seed of a generated training set and its test set.
pub const TEST_SEED_OFFSET: u64 = 1000;

pub const DATASETS: [&str; 9] = [
    "toy-color",
    "decoy-mnist",
    "mnist",
    "iris-cancer",
    "newsgroups",
    "topics",
    "blobs2",
    "blobs3",
    "file",
];

fn existing(path: &str) -> Result<PathBuf> {
    let p = PathBuf::from(path);
    if path.is_empty() || !p.exists() {
        return Err(HarnessError::MissingPath(p));
    }
    Ok(p)
}

/// Fails with the offending path if a file the dataset needs is missing.
pub fn check_paths(d: &DataSettings) -> Result<()> {
    match d.name.as_str() {
        "decoy-mnist" | "mnist" => {
            for f in mnist_files(&d.mnist_dir) {
                existing(f.to_str().unwrap_or_default())?;
            }
        }
        "iris-cancer" => {
            existing(&d.iris)?;
            existing(&d.wdbc)?;
        }
        "newsgroups" => {
            existing(&d.corpus_dir)?;
        }
        "file" => {
            existing(&d.train_path)?;
            existing(&d.test_path)?;
        }
        name if !DATASETS.contains(&name) => {
            return Err(HarnessError::config(format!(
                "unknown dataset `{name}` (expected one of {})",
                DATASETS.join(", ")
            )))
        }
        _ => {}
    }
    Ok(())
}

fn mnist_files(dir: &str) -> [PathBuf; 4] {
    let d = Path::new(dir);
    [
        d.join("train-images-idx3-ubyte.gz"),
        d.join("train-labels-idx1-ubyte.gz"),
        d.join("t10k-images-idx3-ubyte.gz"),
        d.join("t10k-labels-idx1-ubyte.gz"),
    ]
}

fn default_n(name: &str) -> usize {
    match name {
        "toy-color" => 10_000,
        "topics" => 1000,
        "blobs2" | "blobs3" => 400,
        _ => 0,
    }
}

/// Training set size that will be used (0 keeps all rows of a loaded set).
pub fn rows(d: &DataSettings) -> usize {
    if d.n > 0 {
        d.n
    } else {
        default_n(&d.name)
    }
}

/// Loads the training set (unannotated) and the test set.
///
/// `seed` picks generated data and random splits; drivers that repeat over
/// splits pass a different seed per split.
pub fn load_raw(d: &DataSettings, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    check_paths(d)?;
    let n = rows(d);
    let test_seed = seed.wrapping_add(TEST_SEED_OFFSET);
    let split_loaded = |full: LabeledDataset| -> Result<_> { Ok(split(&full, d.train_fraction, seed)?) };
    let pair = match d.name.as_str() {
        "toy-color" => {
            let test = match d.test_rules.as_str() {
                "mixed" => gen_toy_color(d.test_n, test_seed)?,
                "corners-only" => gen_toy_color_one_rule(ToyRule::Corners, d.test_n, test_seed)?,
                "top-middle-only" => gen_toy_color_one_rule(ToyRule::TopMiddle, d.test_n, test_seed)?,
                other => {
                    return Err(HarnessError::config(format!(
                        "data.test_rules must be mixed, corners-only or top-middle-only, got `{other}`"
                    )))
                }
            };
            (gen_toy_color(n, seed)?, test.with_split(SplitTag::Test))
        }
        "blobs2" | "blobs3" => {
            let kind = if d.name == "blobs2" {
                Toy2dKind::TwoClass
            } else {
                Toy2dKind::ThreeClass
            };
            (
                gen_2d_toy(kind, n, seed)?,
                gen_2d_toy(kind, d.test_n, test_seed)?.with_split(SplitTag::Test),
            )
        }
        "decoy-mnist" | "mnist" => {
            let [tri, trl, tei, tel] = mnist_files(&d.mnist_dir);
            let mut train = load_mnist(tri, trl)?;
            if n > 0 && n < train.len() {
                train = train.head(n);
            }
            let test = load_mnist(tei, tel)?;
            if d.name == "mnist" {
                (train, test)
            } else {
                // decoyify annotates the swatches; annotation is left to data.annotate.
                let clear = |x: LabeledDataset| {
                    let zeros = Tensor::zeros(&[x.len(), x.dim()]);
                    x.with_annotations(zeros)
                };
                (
                    clear(decoyify(&train, seed, DecoyPhase::Train)?)?,
                    clear(decoyify(&test, test_seed, DecoyPhase::Test)?)?,
                )
            }
        }
        "iris-cancer" => split_loaded(load_iris_cancer(&d.iris, &d.wdbc)?)?,
        "newsgroups" => split_loaded(load_20ng(
            &d.corpus_dir,
            NewsgroupsOptions {
                strip_headers: d.strip_headers,
                max_features: d.max_features,
            },
        )?)?,
        "topics" => split_loaded(gen_topic_corpus(n, seed).vectorize(d.max_features)?.0)?,
        "file" => (read_dataset(&d.train_path)?, read_dataset(&d.test_path)?),
        _ => unreachable!("checked above"),
    };
    Ok((
        pair.0.with_split(SplitTag::Train),
        pair.1.with_split(SplitTag::Test),
    ))
}

/// [`load_raw`] followed by [`annotate`] on the training set.
pub fn load(d: &DataSettings, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = load_raw(d, seed)?;
    Ok((annotate(train, &d.name, &d.annotate, d.annotated_fraction, d.annotated_count, seed)?, test))
}

/// The annotation row the dataset's `mask` name refers to, repeated `n`
/// times, or `None` for `none`.
pub fn mask_for(dataset: &str, mask: &str, n: usize) -> Result<Option<Tensor>> {
    let a = match (dataset, mask) {
        (_, "none") => return Ok(None),
        ("toy-color", "full") => toy_color_masks(ToyColorMask::Corners, n),
        ("toy-color", m) => toy_color_masks(m.parse::<ToyColorMask>().map_err(|e| HarnessError::config(e.to_string()))?, n),
        ("decoy-mnist", "full") => decoy_swatch_mask(n),
        ("iris-cancer", "full") => iris_dims_mask(n),
        (d, m) => {
            return Err(HarnessError::config(format!(
                "annotation `{m}` is not defined for dataset `{d}`"
            )))
        }
    };
    Ok(Some(a))
}

/// Annotates a seeded random subset of rows: `count` rows if nonzero,
/// otherwise `round(fraction * N)`.
pub fn annotate(
    data: LabeledDataset,
    dataset: &str,
    mask: &str,
    fraction: f64,
    count: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let n = data.len();
    let Some(full) = mask_for(dataset, mask, n)? else {
        return Ok(data);
    };
    if !(0.0..=1.0).contains(&fraction) {
        return Err(HarnessError::config(format!(
            "data.annotated_fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let keep = if count > 0 {
        count.min(n)
    } else {
        (fraction * n as f64).round() as usize
    };
    if keep == n {
        return Ok(data.with_annotations(full)?);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = vec![false; n];
    for &i in &order[..keep] {
        chosen[i] = true;
    }
    let d = data.dim();
    let mut a = full.into_data();
    for (i, row) in a.chunks_mut(d).enumerate() {
        if !chosen[i] {
            row.fill(0.0);
        }
    }
    Ok(data.with_annotations(Tensor::matrix(n, d, a)?)?)
}

/// Copy of `data` with `columns` zeroed in every row.
pub fn without_columns(data: &LabeledDataset, columns: &[usize]) -> Result<LabeledDataset> {
    let d = data.dim();
    let mut x = data.x.data().to_vec();
    for row in x.chunks_mut(d) {
        for &c in columns {
            row[c] = 0.0;
        }
    }
    let mut out = data.clone();
    out.x = Tensor::matrix(data.len(), d, x)?;
    Ok(out)
}
