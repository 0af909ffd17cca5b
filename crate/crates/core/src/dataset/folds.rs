use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

/// What the groups were balanced over when dealt into folds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratification {
    /// Every (identity, emotion) cell had at least `k` groups.
    Cell,
    /// Too few groups per cell; balanced per identity only.
    Identity,
}

/// Partition of original-image groups into `k` test folds. Every augmented
/// copy follows its group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<u64>>,
    pub stratification: Stratification,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// `(train, test)` image indices for one fold.
    pub fn split(&self, fold: usize, images: &[LabeledImage]) -> Result<(Vec<usize>, Vec<usize>)> {
        let test_groups: HashSet<u64> = self
            .folds
            .get(fold)
            .ok_or_else(|| Error::Config(format!("fold {fold} out of range for {} folds", self.k())))?
            .iter()
            .copied()
            .collect();
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..images.len()).partition(|&i| test_groups.contains(&images[i].group_id));
        Ok((train, test))
    }

    /// Writes `folds.json`: a JSON list of group-id lists.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.folds).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, stratification: Stratification) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let folds: Vec<Vec<u64>> = serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        let mut seen = HashSet::new();
        for (i, f) in folds.iter().enumerate() {
            for g in f {
                if !seen.insert(*g) {
                    return Err(Error::Format { path: path.into(), line: i, msg: format!("group {g} appears in two folds") });
                }
            }
        }
        Ok(FoldPlan { folds, stratification })
    }
}

/// Shuffles groups within strata and deals them round-robin into `k` folds.
/// The dealing cursor carries over between strata, so fold sizes differ by at
/// most one group overall and within every stratum.
pub fn make_group_folds(images: &[LabeledImage], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut labels: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for img in images {
        labels.entry(img.group_id).or_insert((img.identity, img.emotion));
    }
    if labels.len() < k {
        return Err(Error::Config(format!("{} groups cannot fill {k} folds", labels.len())));
    }

    let mut per_cell: HashMap<(usize, usize), usize> = HashMap::new();
    for &cell in labels.values() {
        *per_cell.entry(cell).or_default() += 1;
    }
    let stratification =
        if per_cell.values().all(|&n| n >= k) { Stratification::Cell } else { Stratification::Identity };

    let mut strata: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    for (&group, &(identity, emotion)) in &labels {
        let key = match stratification {
            Stratification::Cell => (identity, emotion),
            Stratification::Identity => (identity, 0),
        };
        strata.entry(key).or_default().push(group);
    }

    let mut rng = rng_from(derive_seed(seed, &[&"folds"]));
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for groups in strata.values_mut() {
        groups.shuffle(&mut rng);
        for &g in groups.iter() {
            folds[cursor].push(g);
            cursor = (cursor + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldPlan { folds, stratification })
}
