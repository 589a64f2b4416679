//! IDX files and the decoy-swatch variant of MNIST.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataKind, LabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const SIDE: usize = 28;
const SWATCH: usize = 4;

/// Contents of an unsigned-byte IDX file.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads an IDX file (optionally gzip-compressed). Only the unsigned byte
/// element type (`0x08`) is supported.
pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let take = |offset: usize, len: usize| -> Result<&[u8]> {
        bytes.get(offset..offset + len).ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            needed: offset + len - bytes.len(),
        })
    };
    let magic = u32::from_be_bytes(take(0, 4)?.try_into().unwrap());
    if magic >> 16 != 0 || (magic >> 8) & 0xff != 0x08 {
        return Err(Error::format(
            path,
            format!("bad IDX magic {magic:#010x} (expected unsigned byte data)"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(u32::from_be_bytes(take(4 + 4 * i, 4)?.try_into().unwrap()) as usize);
    }
    let header = 4 + 4 * rank;
    let count: usize = dims.iter().product();
    let data = take(header, count)?.to_vec();
    Ok(IdxArray { magic, dims, data })
}

/// Images scaled to `[0, 1]` with one-hot digit labels.
pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let img = read_idx(ip)?;
    if img.magic != IMAGES_MAGIC {
        return Err(Error::format(
            ip,
            format!("bad magic {:#010x}, expected {IMAGES_MAGIC:#010x}", img.magic),
        ));
    }
    let lab = read_idx(lp)?;
    if lab.magic != LABELS_MAGIC {
        return Err(Error::format(
            lp,
            format!("bad magic {:#010x}, expected {LABELS_MAGIC:#010x}", lab.magic),
        ));
    }
    let (n, h, w) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(Error::format(
            lp,
            format!("{} labels for {n} images in {}", lab.dims[0], ip.display()),
        ));
    }
    if let Some(&bad) = lab.data.iter().find(|&&l| l > 9) {
        return Err(Error::format(lp, format!("label {bad} is not a digit")));
    }
    let x = Tensor::matrix(
        n,
        h * w,
        img.data.iter().map(|&b| b as f64 / 255.0).collect(),
    )?;
    let labels: Vec<usize> = lab.data.iter().map(|&l| l as usize).collect();
    LabeledDataset::new(
        x,
        &labels,
        10,
        DataKind::Grid {
            height: h,
            width: w,
            channels: 1,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoyPhase {
    /// Swatch shade encodes the digit.
    Train,
    /// Swatch shade is random.
    Test,
}

/// Top-left `(row, col)` of each 4×4 corner block.
const CORNER_ORIGINS: [(usize, usize); 4] = [
    (0, 0),
    (0, SIDE - SWATCH),
    (SIDE - SWATCH, 0),
    (SIDE - SWATCH, SIDE - SWATCH),
];

fn swatch_pixels(corner: usize) -> impl Iterator<Item = usize> {
    let (r0, c0) = CORNER_ORIGINS[corner];
    (0..SWATCH).flat_map(move |r| (0..SWATCH).map(move |c| (r0 + r) * SIDE + c0 + c))
}

/// Shade used for digit `y` in the training phase: `(255 - 25y) / 255`.
pub fn train_shade(digit: usize) -> f64 {
    (255.0 - 25.0 * digit as f64) / 255.0
}

/// `n × 784` matrix marking all four corner blocks (64 pixels per row).
pub fn decoy_swatch_mask(n: usize) -> Tensor {
    let mut row = vec![0.0; SIDE * SIDE];
    for corner in 0..4 {
        for p in swatch_pixels(corner) {
            row[p] = 1.0;
        }
    }
    let data = std::iter::repeat_n(row, n).flatten().collect();
    Tensor::matrix(n, SIDE * SIDE, data).expect("sized above")
}

/// Paints a gray swatch into one randomly chosen corner of every image and
/// annotates all four corners.
///
/// The corner for example `i` depends only on `(seed, i)`, so the train and
/// test phases differ only in shade. Test shades are drawn uniformly from the
/// ten training shades.
pub fn decoyify(mnist: &LabeledDataset, seed: u64, phase: DecoyPhase) -> Result<LabeledDataset> {
    match mnist.kind {
        DataKind::Grid {
            height: SIDE,
            width: SIDE,
            channels: 1,
        } => {}
        ref other => {
            return Err(Error::invalid(format!(
                "decoy swatches need 28x28 grayscale images, got {other:?}"
            )))
        }
    }
    let mut corner_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shade_rng = ChaCha8Rng::seed_from_u64(seed);
    shade_rng.set_stream(1);
    let labels = mnist.labels();
    let d = mnist.dim();
    let mut data = mnist.x.data().to_vec();
    for (i, &digit) in labels.iter().enumerate() {
        let corner = corner_rng.random_range(0..4);
        let shade = match phase {
            DecoyPhase::Train => train_shade(digit),
            DecoyPhase::Test => train_shade(shade_rng.random_range(0..10)),
        };
        for p in swatch_pixels(corner) {
            data[i * d + p] = shade;
        }
    }
    let out = LabeledDataset {
        x: Tensor::matrix(mnist.len(), d, data)?,
        y: mnist.y.clone(),
        a: decoy_swatch_mask(mnist.len()),
        kind: mnist.kind.clone(),
        split: mnist.split,
    };
    Ok(out)
}
