use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledDataset, SplitTag};
use crate::error::{Error, Result};

/// Stratified seeded split.
///
/// The training set gets `round(fraction * N)` rows in total. Each class
/// contributes `floor(fraction * n_c)` rows, and the leftover rows go to the
/// classes with the largest fractional remainders (lowest class index first
/// on ties), so per-class counts stay within one of proportional.
///
/// Fails if any class ends up with no training rows or no test rows.
pub fn split(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let labels = dataset.labels();
    let k = dataset.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }

    let total = (train_fraction * labels.len() as f64).round() as usize;
    let mut counts: Vec<usize> = by_class
        .iter()
        .map(|m| (train_fraction * m.len() as f64).floor() as usize)
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    let remainder = |c: usize| train_fraction * by_class[c].len() as f64 - counts[c] as f64;
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    let mut left = total.saturating_sub(counts.iter().sum());
    for &c in &order {
        if left == 0 {
            break;
        }
        if counts[c] < by_class[c].len() {
            counts[c] += 1;
            left -= 1;
        }
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if counts[c] == 0 {
            return Err(Error::invalid(format!(
                "class {c} has no training examples after the split"
            )));
        }
        if counts[c] == members.len() {
            return Err(Error::invalid(format!(
                "class {c} has no test examples after the split"
            )));
        }
        train_idx.extend_from_slice(&members[..counts[c]]);
        test_idx.extend_from_slice(&members[counts[c]..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        dataset.subset(&train_idx).with_split(SplitTag::Train),
        dataset.subset(&test_idx).with_split(SplitTag::Test),
    ))
}
