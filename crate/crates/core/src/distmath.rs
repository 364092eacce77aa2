//! Distribution comparison on ordinal label supports, baseline
//! distributions, and rank correlation.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::VoteDistribution;
use crate::error::{Error, Result};

/// Base of the similarity transform `ems = BASE^(-emd)`.
pub const EMS_BASE: f64 = 100.0;

fn check_same_scheme(d1: &VoteDistribution, d2: &VoteDistribution) -> Result<()> {
    if d1.scheme() != d2.scheme() {
        return Err(Error::SchemeMismatch {
            left: d1.scheme().to_string(),
            right: d2.scheme().to_string(),
        });
    }
    Ok(())
}

/// Earth mover's distance between two distributions on the same ordinal
/// scheme, with unit spacing between adjacent labels.
///
/// On a line the optimal transport cost is the L1 distance between the
/// cumulative distributions: `sum_{i<k} |F1(i) - F2(i)|`.
pub fn emd(d1: &VoteDistribution, d2: &VoteDistribution) -> Result<f64> {
    check_same_scheme(d1, d2)?;
    Ok(emd_unchecked(d1.probs(), d2.probs()))
}

/// [`emd`] on raw probability slices, validating normalization first.
pub fn emd_probs(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidDistribution(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for v in [p, q] {
        let total: f64 = v.iter().sum();
        if v.iter().any(|x| !x.is_finite() || *x < 0.0)
            || (total - 1.0).abs() > crate::data::MASS_TOLERANCE
        {
            return Err(Error::InvalidDistribution(format!("{v:?} is not normalized")));
        }
    }
    Ok(emd_unchecked(p, q))
}

fn emd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    // The last CDF entry is 1 for both, so it contributes nothing.
    for (a, b) in p.iter().zip(q).take(p.len().saturating_sub(1)) {
        cdf_gap += a - b;
        total += cdf_gap.abs();
    }
    total
}

/// Earth mover's similarity, `100^(-emd)`, in `(0, 1]`.
pub fn ems(d1: &VoteDistribution, d2: &VoteDistribution) -> Result<f64> {
    Ok(ems_from_emd(emd(d1, d2)?))
}

pub fn ems_from_emd(distance: f64) -> f64 {
    EMS_BASE.powf(-distance)
}

/// Parametric stand-ins for a predicted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BaselineSpec {
    Uniform,
    /// Discretized Gaussian centered at `mean` (one-based ordinal units).
    NormalAroundStats { mean: f64, std: f64 },
}

pub fn baseline_distribution(
    spec: BaselineSpec,
    scheme: crate::labels::LabelScheme,
) -> Result<VoteDistribution> {
    match spec {
        BaselineSpec::Uniform => Ok(VoteDistribution::uniform(scheme)),
        BaselineSpec::NormalAroundStats { mean, std } => {
            if !mean.is_finite() {
                return Err(Error::InvalidParameter(format!("mean {mean} is not finite")));
            }
            if !(std >= 0.0) || !std.is_finite() {
                return Err(Error::InvalidParameter(format!("std {std} must be >= 0")));
            }
            let k = scheme.size();
            let point_mass = || {
                let idx = mean.round().clamp(1.0, k as f64) as usize - 1;
                VoteDistribution::onehot(scheme.labels()[idx])
            };
            if std == 0.0 {
                return Ok(point_mass());
            }
            let density: Vec<f64> = (1..=k)
                .map(|i| (-(i as f64 - mean).powi(2) / (2.0 * std * std)).exp())
                .collect();
            if density.iter().sum::<f64>() <= 0.0 {
                // every support point underflowed; the mass sits at the nearest label
                return Ok(point_mass());
            }
            VoteDistribution::from_weights(scheme, density)
        }
    }
}

/// Kendall rank correlation with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTau {
    pub tau: f64,
    pub p_value: f64,
}

/// Pair statistics behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// `n(n-1)/2`
    pub total: u64,
    /// Pairs tied on x (including joint ties).
    pub tied_x: u64,
    /// Pairs tied on y (including joint ties).
    pub tied_y: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

/// Counts pairs with Knight's O(n log n) sort-and-merge scheme.
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "kendall tau needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("kendall tau needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("kendall tau input contains NaN".into()));
    }
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tied_x = tie_pairs(pairs.iter().map(|p| p.0));
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);
    let tied_y = tie_pairs(ys.iter().copied());

    let total = n * (n - 1) / 2;
    let score = total as i64 - tied_x as i64 - tied_y as i64 + joint as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        total,
        tied_x,
        tied_y,
        score,
    })
}

/// Number of tied pairs in an already sorted sequence.
fn tie_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut out = 0;
    let mut prev: Option<f64> = None;
    let mut run = 0u64;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            out += run * (run.saturating_sub(1)) / 2;
            run = 1;
            prev = Some(v);
        }
    }
    out + run * (run.saturating_sub(1)) / 2
}

/// Stable merge sort that returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Tie-corrected Kendall tau-b with a normal-approximation p-value.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallTau> {
    let counts = pair_counts(x, y)?;
    let denom = ((counts.total - counts.tied_x) as f64) * ((counts.total - counts.tied_y) as f64);
    if denom == 0.0 {
        return Err(Error::InvalidInput(
            "kendall tau is undefined when one input is constant".into(),
        ));
    }
    let tau = counts.score as f64 / denom.sqrt();

    // Variance of the score under independence, corrected for ties.
    let n = x.len() as f64;
    let group_sizes = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let mut sizes = Vec::new();
        let mut run = 1.0;
        for w in s.windows(2) {
            if w[0] == w[1] {
                run += 1.0;
            } else {
                sizes.push(run);
                run = 1.0;
            }
        }
        sizes.push(run);
        sizes
    };
    let (tx, ty) = (group_sizes(x), group_sizes(y));
    let sum = |g: &[f64], f: &dyn Fn(f64) -> f64| g.iter().map(|&t| f(t)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum(&tx, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum(&ty, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = sum(&tx, &|t| t * (t - 1.0)) * sum(&ty, &|t| t * (t - 1.0)) / (2.0 * n * (n - 1.0));
    let v2 = if n > 2.0 {
        sum(&tx, &|t| t * (t - 1.0) * (t - 2.0)) * sum(&ty, &|t| t * (t - 1.0) * (t - 2.0))
            / (9.0 * n * (n - 1.0) * (n - 2.0))
    } else {
        0.0
    };
    let var = (v0 - vt - vu) / 18.0 + v1 + v2;
    let p_value = if var > 0.0 {
        let z = counts.score as f64 / var.sqrt();
        erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(KendallTau {
        tau: tau.clamp(-1.0, 1.0),
        p_value,
    })
}
