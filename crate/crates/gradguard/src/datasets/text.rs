//! Bag-of-words text classification inputs.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataKind, LabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Lowercased alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// TF-IDF with raw counts, smoothed idf `ln((1 + N) / (1 + df)) + 1` and L2
/// normalized rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfVectorizer {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// Keeps the `max_features` terms with the highest document frequency
    /// (ties broken alphabetically). The vocabulary is stored sorted.
    pub fn fit<S: AsRef<str>>(docs: &[S], max_features: usize) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let mut seen: Vec<String> = tokenize(doc.as_ref());
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut terms: Vec<(String, usize)> = df.into_iter().collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        terms.truncate(max_features);
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let n = docs.len() as f64;
        let idf = terms
            .iter()
            .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        let vocabulary: Vec<String> = terms.into_iter().map(|(t, _)| t).collect();
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TfidfVectorizer {
            vocabulary,
            index,
            idf,
        }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn transform<S: AsRef<str>>(&self, docs: &[S]) -> Tensor {
        let d = self.vocabulary.len();
        let mut data = vec![0.0; docs.len() * d];
        for (row, doc) in data.chunks_mut(d.max(1)).zip(docs) {
            for t in tokenize(doc.as_ref()) {
                if let Some(&j) = self.index.get(&t) {
                    row[j] += 1.0;
                }
            }
            for (v, idf) in row.iter_mut().zip(&self.idf) {
                *v *= idf;
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Tensor::matrix(docs.len(), d, data).expect("sized above")
    }
}

/// Raw labelled documents.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub docs: Vec<String>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Corpus {
    /// Fits a vectorizer on the whole corpus and returns the dataset.
    pub fn vectorize(&self, max_features: usize) -> Result<(LabeledDataset, TfidfVectorizer)> {
        let vec = TfidfVectorizer::fit(&self.docs, max_features);
        let x = vec.transform(&self.docs);
        let kind = DataKind::Text {
            vocabulary: vec.vocabulary().to_vec(),
        };
        let ds = LabeledDataset::new(x, &self.labels, self.class_names.len(), kind)?;
        Ok((ds, vec))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewsgroupsOptions {
    /// Drop the header block, quoted lines and a trailing signature.
    pub strip_headers: bool,
    pub max_features: usize,
}

impl Default for NewsgroupsOptions {
    fn default() -> Self {
        NewsgroupsOptions {
            strip_headers: true,
            max_features: 5000,
        }
    }
}

fn strip_post(text: &str) -> String {
    let body = match text.find("\n\n") {
        Some(i) => &text[i + 2..],
        None => text,
    };
    let body = match body.rfind("\n-- \n").or_else(|| body.rfind("\n--\n")) {
        Some(i) => &body[..i],
        None => body,
    };
    body.lines()
        .filter(|l| {
            let t = l.trim_start();
            !(t.starts_with('>') || t.starts_with('|'))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads `dir/<class>/<file>` documents. Class directories are sorted by
/// name and numbered from 0; every class directory must hold at least one
/// document.
pub fn read_corpus_dir(dir: impl AsRef<Path>, strip_headers: bool) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mut classes: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    classes.sort();
    if classes.len() < 2 {
        return Err(Error::format(
            dir,
            format!("need at least two class directories, found {}", classes.len()),
        ));
    }
    let mut corpus = Corpus {
        docs: Vec::new(),
        labels: Vec::new(),
        class_names: Vec::new(),
    };
    for (label, class_dir) in classes.iter().enumerate() {
        let mut files: Vec<_> = std::fs::read_dir(class_dir)
            .map_err(|e| Error::io(class_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::format(class_dir, "class directory is empty"));
        }
        for f in files {
            let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
            let text = String::from_utf8_lossy(&bytes);
            corpus.docs.push(if strip_headers {
                strip_post(&text)
            } else {
                text.into_owned()
            });
            corpus.labels.push(label);
        }
        corpus.class_names.push(
            class_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Ok(corpus)
}

/// Two-class newsgroup subset as TF-IDF rows (the vectorizer is fit on every
/// document in the directory).
pub fn load_20ng(dir: impl AsRef<Path>, options: NewsgroupsOptions) -> Result<LabeledDataset> {
    let corpus = read_corpus_dir(dir, options.strip_headers)?;
    if corpus.class_names.len() != 2 {
        return Err(Error::invalid(format!(
            "expected two newsgroups, found {}",
            corpus.class_names.len()
        )));
    }
    Ok(corpus.vectorize(options.max_features)?.0)
}

/// A synthetic two-topic corpus for exercising the text pipeline without the
/// newsgroup files.
///
/// Each document mixes shared filler words with words drawn mostly from its
/// own topic and occasionally from the other one.
pub fn gen_topic_corpus(n_docs: usize, seed: u64) -> Corpus {
    const SHARED: usize = 400;
    const TOPIC: usize = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(n_docs);
    let mut labels = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let label = i % 2;
        let len = rng.random_range(40..120);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let u: f64 = rng.random();
            let w = if u < 0.8 {
                // Zipf-like skew toward the first filler words.
                let r: f64 = rng.random();
                format!("common{}", (r * r * SHARED as f64) as usize)
            } else {
                let topic = if u < 0.97 { label } else { 1 - label };
                let r: f64 = rng.random();
                format!("topic{}word{}", topic, (r * r * TOPIC as f64) as usize)
            };
            words.push(w);
        }
        docs.push(words.join(" "));
        labels.push(label);
    }
    Corpus {
        docs,
        labels,
        class_names: vec!["topic0".into(), "topic1".into()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Hello, a WORLD! x1 42 é"),
            vec!["hello", "world", "x1", "42"]
        );
    }

    #[test]
    fn idf_and_normalization() {
        let docs = ["apple banana", "apple cherry", "apple"];
        let v = TfidfVectorizer::fit(&docs, 10);
        assert_eq!(v.vocabulary(), &["apple", "banana", "cherry"]);
        assert!((v.idf()[0] - 1.0).abs() < 1e-15);
        assert!((v.idf()[1] - (2.0f64.ln() + 1.0)).abs() < 1e-15);
        let x = v.transform(&docs);
        for i in 0..3 {
            let n: f64 = x.row(i).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(x.row(2), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn vocabulary_keeps_most_frequent() {
        let docs = ["aa bb cc", "aa bb", "aa dd"];
        let v = TfidfVectorizer::fit(&docs, 2);
        assert_eq!(v.vocabulary(), &["aa", "bb"]);
    }

    #[test]
    fn strips_headers_quotes_and_signature() {
        let post = "From: x\nSubject: y\n\nbody line\n> quoted\nmore\n-- \nsig";
        assert_eq!(strip_post(post), "body line\nmore");
    }
}
