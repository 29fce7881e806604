use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::DeauvilleLabel;
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub n_iterations: usize,
    /// Train, validation and test fractions.
    pub fractions: (f64, f64, f64),
    pub seed: u64,
    /// Keep class proportions roughly equal across the three sets.
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_iterations: 7,
            fractions: (0.8, 0.1, 0.1),
            seed: 0,
            stratified: false,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if [a, b, c].iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::validation("split fractions must be non-negative"));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("split fractions sum to {}, expected 1", a + b + c)));
        }
        if self.n_iterations == 0 {
            return Err(Error::validation("n_iterations must be positive"));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` ids.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps exact products such as 0.1 * 30 from flooring down.
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.fractions.0).min(n);
        let val = floor(self.fractions.1).min(n - train);
        (train, val, n - train - val)
    }
}

/// One Monte Carlo partition. Id lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// 1-based.
    pub iteration: usize,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn check_ids(ids: &[String]) -> Result<()> {
    if ids.len() < 10 {
        return Err(Error::validation(format!("need at least 10 exams to split, got {}", ids.len())));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::validation(format!("duplicate exam id {dup}")));
    }
    Ok(())
}

fn cut(iteration: usize, seed: u64, order: Vec<&String>, sizes: (usize, usize, usize)) -> SplitPlan {
    let take = |r: std::ops::Range<usize>| {
        let mut v: Vec<String> = order[r].iter().map(|s| s.to_string()).collect();
        v.sort();
        v
    };
    let (tr, va, _) = sizes;
    SplitPlan {
        iteration,
        seed,
        train_ids: take(0..tr),
        val_ids: take(tr..tr + va),
        test_ids: take(tr + va..order.len()),
    }
}

/// Independent uniform random partitions, one per iteration. The result
/// depends only on the id set, not on the order of `ids`.
pub fn make_splits(ids: &[String], cfg: &SplitConfig) -> Result<Vec<SplitPlan>> {
    cfg.validate()?;
    check_ids(ids)?;
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    let sizes = cfg.sizes(ids.len());
    Ok((1..=cfg.n_iterations)
        .map(|it| {
            let mut order = sorted.clone();
            order.shuffle(&mut rng_for(cfg.seed, "split", it as u64));
            cut(it, cfg.seed, order, sizes)
        })
        .collect())
}

/// Like [`make_splits`] but each class is spread evenly through the
/// shuffled order before cutting, so every set gets close to the corpus
/// class proportions. Set sizes are the same as in the uniform mode.
pub fn make_stratified_splits(labelled: &[(String, DeauvilleLabel)], cfg: &SplitConfig) -> Result<Vec<SplitPlan>> {
    cfg.validate()?;
    let ids: Vec<String> = labelled.iter().map(|(id, _)| id.clone()).collect();
    check_ids(&ids)?;
    let mut by_class: BTreeMap<DeauvilleLabel, Vec<&String>> = BTreeMap::new();
    for (id, label) in labelled {
        by_class.entry(*label).or_default().push(id);
    }
    for members in by_class.values_mut() {
        members.sort();
    }
    let sizes = cfg.sizes(ids.len());
    Ok((1..=cfg.n_iterations)
        .map(|it| {
            let mut rng = rng_for(cfg.seed, "split-stratified", it as u64);
            let mut keyed: Vec<(f64, &String)> = Vec::with_capacity(ids.len());
            for members in by_class.values() {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                let n = m.len() as f64;
                for (rank, id) in m.into_iter().enumerate() {
                    keyed.push(((rank as f64 + rng.gen::<f64>()) / n, id));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            cut(it, cfg.seed, keyed.into_iter().map(|(_, id)| id).collect(), sizes)
        })
        .collect())
}
