use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataKind, LabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Toy2dKind {
    /// Centers at `(1, 0)` and `(-1, 0)`.
    TwoClass,
    /// Centers at angles 0, 120 and 240 degrees on the unit circle.
    ThreeClass,
}

impl Toy2dKind {
    pub fn centers(self) -> Vec<[f64; 2]> {
        let k = match self {
            Toy2dKind::TwoClass => 2,
            Toy2dKind::ThreeClass => 3,
        };
        (0..k)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                [angle.cos(), angle.sin()]
            })
            .collect()
    }
}

pub const TOY2D_SIGMA: f64 = 0.3;

/// Gaussian blobs (σ = 0.3) around points on the unit circle; example `i`
/// belongs to class `i mod k`.
pub fn gen_2d_toy(kind: Toy2dKind, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < 10 {
        return Err(Error::invalid("2D toy data needs at least 10 examples"));
    }
    let centers = kind.centers();
    let noise = Normal::new(0.0, TOY2D_SIGMA).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % centers.len();
        data.push(centers[c][0] + noise.sample(&mut rng));
        data.push(centers[c][1] + noise.sample(&mut rng));
        labels.push(c);
    }
    let kind = DataKind::Tabular {
        feature_names: vec!["x1".into(), "x2".into()],
    };
    LabeledDataset::new(Tensor::matrix(n, 2, data)?, &labels, centers.len(), kind)
}
