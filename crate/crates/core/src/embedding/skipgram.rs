//! Skip-gram with negative sampling over walk corpora.

use rand::Rng;

use super::alias::AliasTable;
use super::{Node2VecParams, NodeEmbedding};
use crate::seed;

/// Floor of the linearly decayed learning rate, relative to the initial one.
const MIN_LR_FRACTION: f64 = 1e-4;

/// Train node vectors on `walks` (node indices below `ids.len()`).
///
/// Input vectors start uniform in `[-0.5/d, 0.5/d]`, drawn from a stream keyed
/// by the node's arbitration ID so that the same ID starts from the same point
/// in every window; context vectors start at zero. The input matrix is the
/// embedding. Nodes that never occur in a walk get the zero vector.
pub fn train_skipgram(
    walks: &[Vec<usize>],
    ids: &[u32],
    params: &Node2VecParams,
    sgns_seed: u64,
) -> NodeEmbedding {
    let n = ids.len();
    let d = params.dimensions;
    let mut counts = vec![0u64; n];
    for w in walks {
        for &v in w {
            counts[v] += 1;
        }
    }

    let init_seed = seed::derive(params.seed, seed::STREAM_INIT);
    let half = 0.5 / d as f32;
    let mut input = vec![0f32; n * d];
    for (v, row) in input.chunks_exact_mut(d).enumerate() {
        if counts[v] == 0 {
            continue;
        }
        let mut rng = seed::rng(init_seed, ids[v] as u64);
        for x in row {
            *x = rng.random_range(-half..half);
        }
    }
    let mut output = vec![0f32; n * d];

    let tokens: u64 = counts.iter().sum();
    if tokens > 0 && params.epochs > 0 {
        let noise_weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let noise = AliasTable::new(&noise_weights);
        let mut rng = seed::rng(sgns_seed, seed::STREAM_SGNS);
        let total = (params.epochs as u64 * tokens) as f64;
        let lr0 = params.learning_rate;
        let radius = params.context_window;
        let mut processed = 0u64;
        let mut grad = vec![0f32; d];

        for _ in 0..params.epochs {
            for walk in walks {
                for (i, &center) in walk.iter().enumerate() {
                    let lr = (lr0 * (1.0 - processed as f64 / total)).max(lr0 * MIN_LR_FRACTION) as f32;
                    processed += 1;
                    let lo = i.saturating_sub(radius);
                    let hi = (i + radius + 1).min(walk.len());
                    for (j, &ctx) in walk.iter().enumerate().take(hi).skip(lo) {
                        if j == i {
                            continue;
                        }
                        grad.fill(0.0);
                        let cin = &input[center * d..(center + 1) * d];
                        for s in 0..=params.negatives {
                            let (target, label) = if s == 0 {
                                (ctx, 1.0f32)
                            } else {
                                let t = noise.sample(&mut rng);
                                if t == ctx {
                                    continue;
                                }
                                (t, 0.0)
                            };
                            let out = &mut output[target * d..(target + 1) * d];
                            let f = dot(cin, out);
                            let g = (label - sigmoid(f)) * lr;
                            axpy(&mut grad, g, out);
                            axpy(out, g, cin);
                        }
                        axpy(&mut input[center * d..(center + 1) * d], 1.0, &grad);
                    }
                }
            }
        }
    }

    NodeEmbedding {
        ids: ids.to_vec(),
        dimensions: d,
        vectors: input.into_iter().map(f64::from).collect(),
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with eight independent accumulators so it vectorizes.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, ra) = a.split_at(a.len() - a.len() % 8);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f32 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f32>() + tail
}

#[inline]
fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}
