//! Iris features glued onto breast-cancer rows so that the Iris columns are a
//! confound: they separate the two labels perfectly in both sources, but carry
//! no information about the cancer diagnosis.

use std::path::Path;

use super::{DataKind, LabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IRIS_FEATURES: [&str; 4] = [
    "iris_sepal_length",
    "iris_sepal_width",
    "iris_petal_length",
    "iris_petal_width",
];

const WDBC_BASE: [&str; 10] = [
    "radius",
    "texture",
    "perimeter",
    "area",
    "smoothness",
    "compactness",
    "concavity",
    "concave_points",
    "symmetry",
    "fractal_dimension",
];

/// The 30 WDBC feature names in file order, prefixed with `cancer_`.
pub fn wdbc_feature_names() -> Vec<String> {
    ["mean", "se", "worst"]
        .iter()
        .flat_map(|stat| WDBC_BASE.iter().map(move |b| format!("cancer_{b}_{stat}")))
        .collect()
}

/// Parses UCI `iris.data`: four numbers and a species name per line.
/// Classes are numbered in order of first appearance.
pub fn parse_iris(text: &str, origin: &Path) -> Result<(Vec<[f64; 4]>, Vec<usize>)> {
    let mut names: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| Error::format(origin, format!("line {}: {msg}", lineno + 1));
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let mut feats = [0.0; 4];
        for (f, s) in feats.iter_mut().zip(&fields[..4]) {
            *f = s.parse().map_err(|_| bad(format!("`{s}` is not a number")))?;
        }
        let class = match names.iter().position(|n| n == fields[4]) {
            Some(c) => c,
            None => {
                names.push(fields[4].to_string());
                names.len() - 1
            }
        };
        rows.push(feats);
        labels.push(class);
    }
    Ok((rows, labels))
}

/// Parses UCI `wdbc.data`: id, diagnosis (`M` or `B`) and 30 numbers.
/// Malignant is class 0, benign class 1.
pub fn parse_wdbc(text: &str, origin: &Path) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| Error::format(origin, format!("line {}: {msg}", lineno + 1));
        if fields.len() != 32 {
            return Err(bad(format!("expected 32 fields, found {}", fields.len())));
        }
        let label = match fields[1] {
            "M" => 0,
            "B" => 1,
            other => return Err(bad(format!("unknown diagnosis `{other}`"))),
        };
        let feats = fields[2..]
            .iter()
            .map(|s| s.parse().map_err(|_| bad(format!("`{s}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(feats);
        labels.push(label);
    }
    Ok((rows, labels))
}

/// `N × 34` mask with the four Iris columns set.
pub fn iris_dims_mask(n: usize) -> Tensor {
    let mut data = vec![0.0; n * 34];
    for row in data.chunks_mut(34) {
        row[..4].fill(1.0);
    }
    Tensor::matrix(n, 34, data).expect("sized above")
}

/// Rows 0..50 pair Iris class 1 with the first 50 cancer class-0 rows and
/// get label 0; rows 50..100 pair Iris class 2 with the first 50 cancer
/// class-1 rows and get label 1. Every column is then standardized to zero
/// mean and unit variance over the 100 rows.
pub fn build_iris_cancer(
    iris: &(Vec<[f64; 4]>, Vec<usize>),
    cancer: &(Vec<Vec<f64>>, Vec<usize>),
) -> Result<LabeledDataset> {
    let (iris_rows, iris_labels) = iris;
    let (cancer_rows, cancer_labels) = cancer;
    if iris_rows.len() != 150 || iris_labels.iter().max() != Some(&2) {
        return Err(Error::invalid(format!(
            "iris source must have 150 rows in 3 classes, got {} rows",
            iris_rows.len()
        )));
    }
    let pick_iris = |class: usize| -> Vec<&[f64; 4]> {
        iris_rows
            .iter()
            .zip(iris_labels)
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r)
            .collect()
    };
    let pick_cancer = |class: usize| -> Vec<&Vec<f64>> {
        cancer_rows
            .iter()
            .zip(cancer_labels)
            .filter(|(_, &l)| l == class)
            .map(|(r, _)| r)
            .take(50)
            .collect()
    };
    let mut data = Vec::with_capacity(100 * 34);
    let mut labels = Vec::with_capacity(100);
    for (label, iris_class) in [(0, 1), (1, 2)] {
        let ir = pick_iris(iris_class);
        let cr = pick_cancer(label);
        if ir.len() != 50 || cr.len() != 50 {
            return Err(Error::invalid(format!(
                "need 50 rows per class, got {} iris and {} cancer for label {label}",
                ir.len(),
                cr.len()
            )));
        }
        for (i, c) in ir.iter().zip(&cr) {
            if c.len() != 30 {
                return Err(Error::invalid("cancer rows must have 30 features"));
            }
            data.extend_from_slice(&i[..]);
            data.extend_from_slice(c);
            labels.push(label);
        }
    }
    standardize_columns(&mut data, 34);
    let x = Tensor::matrix(100, 34, data)?;
    let feature_names = IRIS_FEATURES
        .iter()
        .map(|s| s.to_string())
        .chain(wdbc_feature_names())
        .collect();
    LabeledDataset::new(x, &labels, 2, DataKind::Tabular { feature_names })
}

fn standardize_columns(data: &mut [f64], cols: usize) {
    let rows = data.len() / cols;
    for j in 0..cols {
        let mean = (0..rows).map(|i| data[i * cols + j]).sum::<f64>() / rows as f64;
        let var = (0..rows)
            .map(|i| (data[i * cols + j] - mean).powi(2))
            .sum::<f64>()
            / rows as f64;
        let sd = var.sqrt();
        for i in 0..rows {
            let v = &mut data[i * cols + j];
            *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
        }
    }
}

/// Reads both UCI files and builds the composite dataset.
pub fn load_iris_cancer(iris: impl AsRef<Path>, wdbc: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, wp) = (iris.as_ref(), wdbc.as_ref());
    let it = std::fs::read_to_string(ip).map_err(|e| Error::io(ip, e))?;
    let wt = std::fs::read_to_string(wp).map_err(|e| Error::io(wp, e))?;
    build_iris_cancer(&parse_iris(&it, ip)?, &parse_wdbc(&wt, wp)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_rows_rejected() {
        let p = Path::new("x");
        assert!(parse_iris("1,2,3,Iris-setosa\n", p).is_err());
        assert!(parse_iris("1,2,x,4,Iris-setosa\n", p).is_err());
        let mut line = String::from("1,Q");
        for _ in 0..30 {
            line.push_str(",1.0");
        }
        assert!(parse_wdbc(&line, p).is_err());
    }

    #[test]
    fn mask_marks_four_columns() {
        let m = iris_dims_mask(3);
        assert_eq!(m.row(2).iter().filter(|&&v| v == 1.0).count(), 4);
        assert_eq!(&m.row(0)[..5], &[1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn feature_names_cover_all_columns() {
        assert_eq!(wdbc_feature_names().len(), 30);
        assert_eq!(wdbc_feature_names()[10], "cancer_radius_se");
    }
}
