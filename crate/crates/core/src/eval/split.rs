use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::preprocess::Label;

/// Index partition produced by [`stratified_split`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Class-stratified train/test partition of `labels`.
///
/// With `groups`, every item sharing a group key lands on the same side and
/// stratification is done over whole groups: each class's groups are shuffled
/// and greedily moved to the test side while they fit under
/// `round((1 - train_fraction) * n_class)`. Without groups the per-class
/// counts are exact. Deterministic for a fixed seed; indices come back sorted.
pub fn stratified_split(
    labels: &[Label],
    groups: Option<&[&str]>,
    train_fraction: f64,
    seed: u64,
) -> Result<Split, EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InsufficientData(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    if let Some(g) = groups {
        assert_eq!(g.len(), labels.len(), "one group key per label");
    }

    // Groups in first-appearance order, per class.
    let mut by_class: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    let mut slot: HashMap<&str, (Label, usize)> = HashMap::new();
    for (i, &label) in labels.iter().enumerate() {
        match groups {
            Some(keys) => match slot.get(keys[i]) {
                Some(&(l, _)) if l != label => {
                    return Err(EvalError::MixedGroupLabels(keys[i].to_string()));
                }
                Some(&(l, k)) => by_class[l.index()][k].push(i),
                None => {
                    let list = &mut by_class[label.index()];
                    slot.insert(keys[i], (label, list.len()));
                    list.push(vec![i]);
                }
            },
            None => by_class[label.index()].push(vec![i]),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut class_groups) in by_class.into_iter().enumerate() {
        let label = Label::from_index(class);
        let n: usize = class_groups.iter().map(Vec::len).sum();
        if n < 2 || class_groups.len() < 2 {
            return Err(EvalError::InsufficientData(format!(
                "class {label} has {n} examples in {} recordings; need at least 2 of each",
                class_groups.len()
            )));
        }
        let target = (((1.0 - train_fraction) * n as f64).round() as usize).clamp(1, n - 1);
        class_groups.shuffle(&mut rng);
        let mut taken = 0;
        let mut to_test = vec![false; class_groups.len()];
        for (k, g) in class_groups.iter().enumerate() {
            if taken + g.len() <= target {
                taken += g.len();
                to_test[k] = true;
            }
        }
        if taken == 0 {
            let smallest = (0..class_groups.len())
                .min_by_key(|&k| class_groups[k].len())
                .expect("at least two groups");
            to_test[smallest] = true;
        }
        for (g, t) in class_groups.into_iter().zip(to_test) {
            if t {
                test.extend(g);
            } else {
                train.extend(g);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
