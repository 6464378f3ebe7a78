use rand::seq::SliceRandom;

use super::{smote, Dataset, ForestModel, ForestParams};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified k-fold split. Each class is shuffled and dealt round-robin
/// into the validation folds, so per-fold class counts differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid("fold count", format!("{k} < 2")));
    }
    let mut rng = seed::rng(seed, 0x4b46_4f4c);
    let mut validation = vec![Vec::new(); k];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Insufficient(format!(
                "{} {} samples for {k} folds",
                idx.len(),
                if class { "positive" } else { "negative" }
            )));
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            validation[j % k].push(i);
        }
    }
    Ok(validation
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let mut in_val = vec![false; labels.len()];
            v.iter().for_each(|&i| in_val[i] = true);
            Fold {
                train: (0..labels.len()).filter(|&i| !in_val[i]).collect(),
                validation: v,
            }
        })
        .collect())
}

/// What happened inside one fold.
#[derive(Debug, Clone)]
pub struct CvFold {
    pub fold: Fold,
    /// Original row indices SMOTE interpolated between.
    pub smote_sources: Vec<usize>,
    pub train_size_after_smote: usize,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    /// Out-of-fold positive-class scores, one per input row.
    pub scores: Vec<f64>,
    pub folds: Vec<CvFold>,
}

/// Stratified k-fold evaluation: SMOTE on each training split only, a forest
/// per fold, and out-of-fold scores for every row.
pub fn cross_validate(
    data: &Dataset,
    k: usize,
    forest: &ForestParams,
    smote_k: usize,
    seed: u64,
) -> Result<CvReport> {
    let folds = stratified_kfold(data.labels(), k, seed)?;
    let mut scores = vec![f64::NAN; data.len()];
    let mut report = Vec::with_capacity(k);
    for (fi, fold) in folds.into_iter().enumerate() {
        let train = data.subset(&fold.train);
        let balanced = smote(&train, smote_k, seed::derive(seed::derive(seed, seed::STREAM_SMOTE), fi as u64))?;
        let params = ForestParams {
            seed: seed::derive(forest.seed, fi as u64),
            ..forest.clone()
        };
        let model = ForestModel::train(&balanced.dataset, &params)?;
        for &i in &fold.validation {
            scores[i] = model.predict_proba(data.row(i))?;
        }
        let mut sources: Vec<usize> = balanced
            .synthetic
            .iter()
            .flat_map(|s| [fold.train[s.base], fold.train[s.neighbor]])
            .collect();
        sources.sort_unstable();
        sources.dedup();
        report.push(CvFold {
            train_size_after_smote: balanced.dataset.len(),
            fold,
            smote_sources: sources,
        });
    }
    Ok(CvReport {
        scores,
        folds: report,
    })
}
