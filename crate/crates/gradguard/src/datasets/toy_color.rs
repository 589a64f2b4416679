//! 5×5 RGB images with two independent rules that both decide the class.
//!
//! Label 0 images have four identical corner pixels *and* three pairwise
//! distinct top-middle pixels. Label 1 images satisfy neither rule. All other
//! pixels are uniform over the palette.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataKind, LabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const SIDE: usize = 5;
const CHANNELS: usize = 3;
pub(crate) const DIM: usize = SIDE * SIDE * CHANNELS;

/// Red, green, blue, yellow.
pub const TOY_COLORS: [[f64; 3]; 4] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
];

/// `(row, col)` of the four corner pixels.
pub const TOY_CORNERS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 4)];

/// `(row, col)` of the three top-middle pixels.
pub const TOY_TOP_MIDDLE: [(usize, usize); 3] = [(0, 1), (0, 2), (0, 3)];

/// The three input columns of pixel `(row, col)`.
pub fn pixel_columns(row: usize, col: usize) -> [usize; 3] {
    let base = (row * SIDE + col) * CHANNELS;
    [base, base + 1, base + 2]
}

fn grid_kind() -> DataKind {
    DataKind::Grid {
        height: SIDE,
        width: SIDE,
        channels: CHANNELS,
    }
}

fn pixel(image: &[f64], (r, c): (usize, usize)) -> [f64; 3] {
    let [a, b, d] = pixel_columns(r, c);
    [image[a], image[b], image[d]]
}

/// Rule 1 evaluated on the raw input vector.
pub fn corners_identical(image: &[f64]) -> bool {
    let first = pixel(image, TOY_CORNERS[0]);
    TOY_CORNERS.iter().all(|&p| pixel(image, p) == first)
}

/// Rule 2 evaluated on the raw input vector.
pub fn top_middle_distinct(image: &[f64]) -> bool {
    let [a, b, c] = TOY_TOP_MIDDLE.map(|p| pixel(image, p));
    a != b && b != c && a != c
}

fn paint(image: &mut [f64], (r, c): (usize, usize), color: usize) {
    for (col, v) in pixel_columns(r, c).into_iter().zip(TOY_COLORS[color]) {
        image[col] = v;
    }
}

fn random_image(rng: &mut impl Rng) -> Vec<f64> {
    let mut image = vec![0.0; DIM];
    for r in 0..SIDE {
        for c in 0..SIDE {
            paint(&mut image, (r, c), rng.random_range(0..TOY_COLORS.len()));
        }
    }
    image
}

/// `n` images, alternating label 0 and label 1 (so classes are balanced).
pub fn gen_toy_color(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::invalid("toy color needs at least 2 examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * DIM);
    let mut labels = Vec::with_capacity(n);
    let mut palette: Vec<usize> = (0..TOY_COLORS.len()).collect();
    for i in 0..n {
        let label = i % 2;
        let image = if label == 0 {
            let mut image = random_image(&mut rng);
            let corner = rng.random_range(0..TOY_COLORS.len());
            for p in TOY_CORNERS {
                paint(&mut image, p, corner);
            }
            palette.shuffle(&mut rng);
            for (p, &color) in TOY_TOP_MIDDLE.iter().zip(&palette) {
                paint(&mut image, *p, color);
            }
            image
        } else {
            loop {
                let image = random_image(&mut rng);
                if !corners_identical(&image) && !top_middle_distinct(&image) {
                    break image;
                }
            }
        };
        data.extend(image);
        labels.push(label);
    }
    let x = Tensor::matrix(n, DIM, data)?;
    LabeledDataset::new(x, &labels, 2, grid_kind())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyRule {
    /// Corners identical.
    Corners,
    /// Top-middle pixels distinct.
    TopMiddle,
}

impl ToyRule {
    pub fn holds(self, image: &[f64]) -> bool {
        match self {
            ToyRule::Corners => corners_identical(image),
            ToyRule::TopMiddle => top_middle_distinct(image),
        }
    }
}

/// Images labelled by one rule alone: label 0 when `rule` holds, label 1
/// otherwise. The other rule's pixels are uniform, so it carries no signal.
/// Used as held-out data to tell which rule a model relies on.
pub fn gen_toy_color_one_rule(rule: ToyRule, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::invalid("toy color needs at least 2 examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * DIM);
    let mut labels = Vec::with_capacity(n);
    let mut palette: Vec<usize> = (0..TOY_COLORS.len()).collect();
    for i in 0..n {
        let label = i % 2;
        let mut image = random_image(&mut rng);
        if label == 0 {
            match rule {
                ToyRule::Corners => {
                    let corner = rng.random_range(0..TOY_COLORS.len());
                    for p in TOY_CORNERS {
                        paint(&mut image, p, corner);
                    }
                }
                ToyRule::TopMiddle => {
                    palette.shuffle(&mut rng);
                    for (p, &color) in TOY_TOP_MIDDLE.iter().zip(&palette) {
                        paint(&mut image, *p, color);
                    }
                }
            }
        } else {
            while rule.holds(&image) {
                image = random_image(&mut rng);
            }
        }
        data.extend(image);
        labels.push(label);
    }
    let x = Tensor::matrix(n, DIM, data)?;
    LabeledDataset::new(x, &labels, 2, grid_kind())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyColorMask {
    /// The corner pixels (12 columns).
    Corners,
    /// The top-middle pixels (9 columns).
    TopMiddle,
    /// Everything except the corners.
    ProRule1,
    /// Everything except the top-middle pixels.
    ProRule2,
}

impl std::str::FromStr for ToyColorMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corners" | "anti-rule1" => Ok(ToyColorMask::Corners),
            "top-middle" | "anti-rule2" => Ok(ToyColorMask::TopMiddle),
            "pro-rule1" => Ok(ToyColorMask::ProRule1),
            "pro-rule2" => Ok(ToyColorMask::ProRule2),
            other => Err(Error::invalid(format!("unknown toy color mask `{other}`"))),
        }
    }
}

/// An `n × 75` annotation matrix with the same row repeated.
pub fn toy_color_masks(which: ToyColorMask, n: usize) -> Tensor {
    let mut row = vec![0.0; DIM];
    let pixels: &[(usize, usize)] = match which {
        ToyColorMask::Corners | ToyColorMask::ProRule1 => &TOY_CORNERS,
        ToyColorMask::TopMiddle | ToyColorMask::ProRule2 => &TOY_TOP_MIDDLE,
    };
    for &(r, c) in pixels {
        for col in pixel_columns(r, c) {
            row[col] = 1.0;
        }
    }
    if matches!(which, ToyColorMask::ProRule1 | ToyColorMask::ProRule2) {
        for v in &mut row {
            *v = 1.0 - *v;
        }
    }
    let data = std::iter::repeat_n(row, n).flatten().collect();
    Tensor::matrix(n, DIM, data).expect("sized above")
}
