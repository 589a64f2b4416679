//! Single-file CSV serialization of a [`LabeledDataset`].
//!
//! ```text
//! # gradguard-dataset 1
//! # meta {"kind":{"type":"grid","height":5,"width":5,"channels":3},"num_classes":2,"split":"train"}
//! label,x_0,...,x_{D-1},a_0,...,a_{D-1}
//! 0,1,0,...
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so reading a written
//! file reproduces every value bit for bit.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataKind, LabeledDataset, SplitTag};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "# gradguard-dataset 1";

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: DataKind,
    num_classes: usize,
    split: SplitTag,
}

pub fn write_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let meta = Meta {
        kind: dataset.kind.clone(),
        num_classes: dataset.num_classes(),
        split: dataset.split,
    };
    let meta = serde_json::to_string(&meta).map_err(|e| Error::format(path, e.to_string()))?;
    let d = dataset.dim();
    let mut text = format!("{MAGIC}\n# meta {meta}\nlabel");
    for j in 0..d {
        text.push_str(&format!(",x_{j}"));
    }
    for j in 0..d {
        text.push_str(&format!(",a_{j}"));
    }
    text.push('\n');
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    for (i, label) in dataset.labels().into_iter().enumerate() {
        let mut line = label.to_string();
        for v in dataset.x.row(i).iter().chain(dataset.a.row(i)) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<std::fs::File>| -> Result<String> {
        line.clear();
        reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(Error::format(path, "not a gradguard dataset file"));
    }
    let meta_line = next_line(&mut reader)?;
    let meta: Meta = meta_line
        .strip_prefix("# meta ")
        .ok_or_else(|| Error::format(path, "missing meta line"))
        .and_then(|m| serde_json::from_str(m).map_err(|e| Error::format(path, e.to_string())))?;
    let d = meta.kind.dim();

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header_len = csv
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .len();
    if header_len != 1 + 2 * d {
        return Err(Error::format(
            path,
            format!("expected {} columns, header has {header_len}", 1 + 2 * d),
        ));
    }
    let mut labels = Vec::new();
    let mut x = Vec::new();
    let mut a = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let bad = |msg: String| Error::format(path, format!("data row {}: {msg}", row + 1));
        if record.len() != 1 + 2 * d {
            return Err(bad(format!("{} fields", record.len())));
        }
        labels.push(
            record[0]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad label `{}`", &record[0])))?,
        );
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("bad number `{field}`")))?;
            if j < d {
                x.push(v)
            } else {
                a.push(v)
            }
        }
    }
    let n = labels.len();
    let ds = LabeledDataset::new(Tensor::matrix(n, d, x)?, &labels, meta.num_classes, meta.kind)?
        .with_annotations(Tensor::matrix(n, d, a)?)?
        .with_split(meta.split);
    Ok(ds)
}
