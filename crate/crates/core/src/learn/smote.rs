use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Provenance of one synthetic row: `base + lambda * (neighbor - base)`,
/// indices into the input dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synthetic {
    pub base: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    /// Original rows first, synthetic minority rows appended.
    pub dataset: Dataset,
    pub synthetic: Vec<Synthetic>,
}

/// Oversample the minority class up to the majority count by interpolating
/// between each random minority row and one of its `k_neighbors` nearest
/// minority neighbors (Euclidean).
pub fn smote(data: &Dataset, k_neighbors: usize, seed: u64) -> Result<SmoteOutput> {
    let pos = data.positives();
    let neg = data.negatives();
    if pos == 0 || neg == 0 {
        return Err(Error::Insufficient("SMOTE needs two classes".into()));
    }
    if pos == neg {
        return Ok(SmoteOutput {
            dataset: data.clone(),
            synthetic: Vec::new(),
        });
    }
    let minority_label = pos < neg;
    let minority: Vec<usize> = (0..data.len())
        .filter(|&i| data.labels()[i] == minority_label)
        .collect();
    if minority.len() < 2 {
        return Err(Error::Insufficient(format!(
            "SMOTE needs at least 2 minority rows, got {}",
            minority.len()
        )));
    }
    let k = k_neighbors.min(minority.len() - 1).max(1);
    let needed = pos.max(neg) - minority.len();

    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| nearest(data, i, &minority, k))
        .collect();

    let mut rng = seed::rng(seed, 0x534d_4f54);
    let mut out = data.clone();
    let mut synthetic = Vec::with_capacity(needed);
    let mut row = vec![0.0; data.n_features()];
    for _ in 0..needed {
        let b = rng.random_range(0..minority.len());
        let nn = neighbors[b][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        let (x, y) = (data.row(minority[b]), data.row(nn));
        for ((r, a), c) in row.iter_mut().zip(x).zip(y) {
            *r = a + lambda * (c - a);
        }
        out.push(&row, minority_label);
        synthetic.push(Synthetic {
            base: minority[b],
            neighbor: nn,
            lambda,
        });
    }
    Ok(SmoteOutput {
        dataset: out,
        synthetic,
    })
}

/// The `k` nearest members of `pool` to row `i`, excluding `i`; ties broken
/// by index.
fn nearest(data: &Dataset, i: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let x = data.row(i);
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| {
            let dist = x
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (dist, j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}
