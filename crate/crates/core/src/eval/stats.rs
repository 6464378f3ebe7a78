//! Two-sample nonparametric tests.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Pooled sizes up to this use exact enumeration of the permutation
/// distribution in [`mann_whitney_u`].
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// `x` tends to be larger than `y`.
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `U` of `x`: number of `(x, y)` pairs with `x > y`, ties counting half.
    pub u: f64,
    pub p: f64,
    pub method: PMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Mid-ranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Insufficient("two-sample test needs non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::invalid("sample", "NaN value"));
    }
    Ok(())
}

fn u_statistic(x: &[f64], y: &[f64]) -> (f64, Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let nx = x.len() as f64;
    let rx: f64 = ranks[..x.len()].iter().sum();
    (rx - nx * (nx + 1.0) / 2.0, ranks, ties)
}

/// Mann-Whitney U test. Exact permutation p-value when the pooled size is at
/// most [`EXACT_LIMIT`], otherwise the tie-corrected normal approximation
/// with continuity correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64], alt: Alternative) -> Result<MannWhitney> {
    if x.len() + y.len() <= EXACT_LIMIT {
        mann_whitney_exact(x, y, alt)
    } else {
        mann_whitney_normal(x, y, alt)
    }
}

pub fn mann_whitney_normal(x: &[f64], y: &[f64], alt: Alternative) -> Result<MannWhitney> {
    check(x, y)?;
    let (u, _, ties) = u_statistic(x, y);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term);
    let p = if var <= 0.0 {
        1.0
    } else {
        let sd = var.sqrt();
        let upper = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
        match alt {
            Alternative::Greater => upper((u - mean - 0.5) / sd),
            Alternative::Less => upper((mean - u - 0.5) / sd),
            Alternative::TwoSided => (2.0 * upper(((u - mean).abs() - 0.5) / sd)).min(1.0),
        }
    };
    Ok(MannWhitney {
        u,
        p: p.clamp(0.0, 1.0),
        method: PMethod::Normal,
    })
}

/// Exact permutation distribution of U over every assignment of the pooled
/// mid-ranks to `x`. Cost is `C(n, |x|)`, so only small samples are accepted.
pub fn mann_whitney_exact(x: &[f64], y: &[f64], alt: Alternative) -> Result<MannWhitney> {
    check(x, y)?;
    let n = x.len() + y.len();
    if n > 24 {
        return Err(Error::invalid("sample", format!("exact test limited to 24 values, got {n}")));
    }
    let (u, ranks, _) = u_statistic(x, y);
    let nx = x.len();
    let offset = (nx * (nx + 1)) as f64 / 2.0;
    // Ranks are multiples of 1/2; compare in doubled integer units.
    let twice: Vec<i64> = ranks.iter().map(|r| (2.0 * r) as i64).collect();
    let u2 = (2.0 * u).round() as i64;
    let off2 = (2.0 * offset) as i64;
    let (mut ge, mut le, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != nx {
            continue;
        }
        let s: i64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| twice[i]).sum();
        let v = s - off2;
        total += 1;
        if v >= u2 {
            ge += 1;
        }
        if v <= u2 {
            le += 1;
        }
    }
    let (pg, pl) = (ge as f64 / total as f64, le as f64 / total as f64);
    let p = match alt {
        Alternative::Greater => pg,
        Alternative::Less => pl,
        Alternative::TwoSided => (2.0 * pg.min(pl)).min(1.0),
    };
    Ok(MannWhitney {
        u,
        p,
        method: PMethod::Exact,
    })
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// `Q_KS(sqrt(n_eff) * D)`, `n_eff = |x||y| / (|x| + |y|)`.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    check(x, y)?;
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = na * nb / (na + nb);
    Ok(KsResult {
        d,
        p: kolmogorov_sf(en.sqrt() * d),
    })
}

/// Survival function of the Kolmogorov distribution,
/// `Q(t) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 t^2)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // Jacobi-transformed series, fast for small t:
        // 1 - Q(t) = sqrt(2 pi) / t * sum exp(-(2k-1)^2 pi^2 / (8 t^2)).
        let c = -std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let cdf: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (c * m * m).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / t;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * t * t).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}
