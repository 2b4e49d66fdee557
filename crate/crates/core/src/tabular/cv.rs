use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::TabularError;
use crate::util;

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Group k-fold with approximate class stratification over groups.
///
/// Groups are ordered by majority label, shuffled within each label, then
/// dealt round-robin to folds. `labels` are class indices per row.
pub fn grouped_kfold(groups: &[String], labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>, TabularError> {
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g.as_str()).or_default().push(i);
    }
    let n_groups = by_group.len();
    if k < 2 || k > n_groups {
        return Err(TabularError::TooFewGroups { k, groups: n_groups });
    }
    let majority = |rows: &[usize]| {
        let ones = rows.iter().filter(|&&r| labels[r] == 1).count();
        usize::from(2 * ones > rows.len())
    };
    let mut rng = util::rng(seed, 0x6b66);
    let mut ordered: Vec<&str> = Vec::with_capacity(n_groups);
    for class in 0..2 {
        let mut members: Vec<&str> =
            by_group.iter().filter(|(_, rows)| majority(rows) == class).map(|(g, _)| *g).collect();
        members.shuffle(&mut rng);
        ordered.extend(members);
    }
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, g) in ordered.iter().enumerate() {
        fold_of.insert(g, i % k);
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..groups.len()).partition(|&i| fold_of[groups[i].as_str()] == f);
            Fold { train, test }
        })
        .collect())
}

/// Confirms no group appears on both sides of any fold and that the test
/// sides cover every group exactly once.
pub fn check_no_leakage(groups: &[String], folds: &[Fold]) -> Result<(), String> {
    use std::collections::BTreeSet;
    let mut tested: BTreeMap<&str, usize> = BTreeMap::new();
    for (f, fold) in folds.iter().enumerate() {
        let train: BTreeSet<&str> = fold.train.iter().map(|&i| groups[i].as_str()).collect();
        let test: BTreeSet<&str> = fold.test.iter().map(|&i| groups[i].as_str()).collect();
        if let Some(g) = train.intersection(&test).next() {
            return Err(format!("fold {f}: group {g} in both train and test"));
        }
        for g in test {
            *tested.entry(g).or_default() += 1;
        }
    }
    let all: BTreeSet<&str> = groups.iter().map(|g| g.as_str()).collect();
    if tested.len() != all.len() || tested.values().any(|&c| c != 1) {
        return Err("test folds do not partition the groups".into());
    }
    Ok(())
}
