//! Dataset generators and loaders, each with its annotation matrix.
//!
//! A [`LabeledDataset`] always carries inputs, one-hot targets and an
//! annotation matrix of the same row count. The annotation matrix marks input
//! components that should not matter for a row's prediction; it defaults to
//! all zeros.

mod iris_cancer;
mod mnist;
mod portable;
mod split;
mod text;
mod toy2d;
mod toy_color;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub use iris_cancer::{
    build_iris_cancer, iris_dims_mask, load_iris_cancer, parse_iris, parse_wdbc,
    wdbc_feature_names, IRIS_FEATURES,
};
pub use mnist::{decoy_swatch_mask, decoyify, load_mnist, read_idx, train_shade, DecoyPhase, IdxArray};
pub use portable::{read_dataset, write_dataset};
pub use split::split;
pub use text::{
    gen_topic_corpus, load_20ng, read_corpus_dir, tokenize, Corpus, NewsgroupsOptions,
    TfidfVectorizer,
};
pub use toy2d::{gen_2d_toy, Toy2dKind};
pub use toy_color::{
    corners_identical, gen_toy_color, gen_toy_color_one_rule, pixel_columns, top_middle_distinct, toy_color_masks,
    ToyColorMask, ToyRule, TOY_COLORS, TOY_CORNERS, TOY_TOP_MIDDLE,
};

/// How the columns of `x` are laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataKind {
    /// Row-major `height × width × channels` image.
    Grid {
        height: usize,
        width: usize,
        channels: usize,
    },
    /// Bag-of-words columns, one per vocabulary term.
    Text { vocabulary: Vec<String> },
    Tabular { feature_names: Vec<String> },
}

impl DataKind {
    pub fn dim(&self) -> usize {
        match self {
            DataKind::Grid {
                height,
                width,
                channels,
            } => height * width * channels,
            DataKind::Text { vocabulary } => vocabulary.len(),
            DataKind::Tabular { feature_names } => feature_names.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Full,
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// `N × D` inputs.
    pub x: Tensor,
    /// `N × K` one-hot targets.
    pub y: Tensor,
    /// `N × D` binary annotation matrix.
    pub a: Tensor,
    pub kind: DataKind,
    pub split: SplitTag,
}

/// `N × k` one-hot encoding of `labels`.
pub fn one_hot(labels: &[usize], k: usize) -> Tensor {
    let mut data = vec![0.0; labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        data[i * k + l] = 1.0;
    }
    Tensor::matrix(labels.len(), k, data).expect("sized above")
}

pub(crate) fn is_binary(t: &Tensor) -> bool {
    t.data().iter().all(|&v| v == 0.0 || v == 1.0)
}

impl LabeledDataset {
    pub fn new(x: Tensor, labels: &[usize], num_classes: usize, kind: DataKind) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        let a = Tensor::zeros(x.shape());
        let ds = LabeledDataset {
            y: one_hot(labels, num_classes),
            a,
            x,
            kind,
            split: SplitTag::Full,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.x.shape().len() != 2 || self.y.shape().len() != 2 || self.a.shape().len() != 2 {
            return Err(Error::invalid("x, y and A must be matrices"));
        }
        if self.y.rows() != n || self.a.rows() != n {
            return Err(Error::invalid(format!(
                "row counts differ: x {n}, y {}, A {}",
                self.y.rows(),
                self.a.rows()
            )));
        }
        if self.a.cols() != self.x.cols() {
            return Err(Error::invalid("A must have the same shape as x"));
        }
        if self.kind.dim() != self.x.cols() {
            return Err(Error::invalid(format!(
                "data kind describes {} columns but x has {}",
                self.kind.dim(),
                self.x.cols()
            )));
        }
        if !is_binary(&self.a) {
            return Err(Error::invalid("A must be binary"));
        }
        check_one_hot(&self.y)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.y.cols()
    }

    pub fn labels(&self) -> Vec<usize> {
        crate::model::argmax_rows(&self.y)
    }

    /// Replaces the annotation matrix.
    pub fn with_annotations(mut self, a: Tensor) -> Result<Self> {
        if a.shape() != self.x.shape() {
            return Err(Error::ShapeMismatch {
                op: "with_annotations",
                shapes: vec![self.x.shape().to_vec(), a.shape().to_vec()],
            });
        }
        if !is_binary(&a) {
            return Err(Error::invalid("A must be binary"));
        }
        self.a = a;
        Ok(self)
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            a: self.a.select_rows(idx),
            kind: self.kind.clone(),
            split: self.split,
        }
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Rows whose annotation is not all zero.
    pub fn annotated_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.a.row(i).iter().any(|&v| v != 0.0))
            .collect()
    }

    /// Hex SHA-256 over shapes and the exact bits of x, y and A.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in [&self.x, &self.y, &self.a] {
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize()
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub(crate) fn check_one_hot(y: &Tensor) -> Result<()> {
    for i in 0..y.rows() {
        let row = y.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::invalid(format!("target row {i} is not one-hot")));
        }
    }
    Ok(())
}
