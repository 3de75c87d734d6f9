//! Stage 3 statistics: Spearman/Pearson correlation with t-based p-values,
//! partial Spearman via residualized ranks, a seeded permutation test, and
//! median-split group comparison.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A correlation statistic with its two-sided p-value and sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_paired(x: &[f64], y: &[f64], min_n: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_n {
        return Err(Error::Validation(format!(
            "need at least {min_n} pairs, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite sample value".into()));
    }
    Ok(())
}

fn pearson_core(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "constant input has no correlation".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p for a correlation `r` at `df` degrees of freedom via the
/// Student-t transform t = r sqrt(df / (1 - r^2)).
fn t_p_value(r: f64, df: f64) -> f64 {
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return f64::MIN_POSITIVE;
    }
    let t = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t));
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Product-moment correlation with t-based two-sided p.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_paired(x, y, 3)?;
    let r = pearson_core(x, y)?;
    Ok(CorrelationResult {
        statistic: r,
        p_value: t_p_value(r, (x.len() - 2) as f64),
        n: x.len(),
    })
}

/// Rank correlation: average-rank transform with ties, then Pearson on ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_paired(x, y, 3)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson_core(&rx, &ry)?;
    Ok(CorrelationResult {
        statistic: rho,
        p_value: t_p_value(rho, (x.len() - 2) as f64),
        n: x.len(),
    })
}

/// Projects `v` onto the orthogonal complement of the span of `basis`
/// (columns already orthonormal).
fn residualize(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    for q in basis {
        let coef: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
        for (ri, qi) in r.iter_mut().zip(q) {
            *ri -= coef * qi;
        }
    }
    r
}

/// Partial Spearman: rank-transform x, y, and every control, regress both
/// rank vectors on the controls (with intercept) and correlate the residuals.
/// Degrees of freedom are n - 2 - #controls.
pub fn partial_spearman(x: &[f64], y: &[f64], controls: &[Vec<f64>]) -> Result<CorrelationResult> {
    check_paired(x, y, 3)?;
    let n = x.len();
    if n <= controls.len() + 2 {
        return Err(Error::Validation(format!(
            "need n > #controls + 2 (n {n}, controls {})",
            controls.len()
        )));
    }
    for c in controls {
        check_paired(x, c, 3)?;
    }

    // Orthonormal basis for [intercept, rank(controls)...] via modified
    // Gram-Schmidt; a vanishing residual norm means a collinear design.
    let scale = (n as f64).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / scale; n]];
    for c in controls {
        let ranked = average_ranks(c);
        let orig_norm = ranked.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = residualize(&ranked, &basis);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * orig_norm.max(1.0) {
            return Err(Error::RankDeficient(
                "control variables are collinear with the design".into(),
            ));
        }
        for v in r.iter_mut() {
            *v /= norm;
        }
        basis.push(r);
    }

    let rx = residualize(&average_ranks(x), &basis);
    let ry = residualize(&average_ranks(y), &basis);
    let sxx: f64 = rx.iter().map(|v| v * v).sum();
    let syy: f64 = ry.iter().map(|v| v * v).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation(
            "residual variance is zero after controlling".into(),
        ));
    }
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2 - controls.len()) as f64;
    Ok(CorrelationResult {
        statistic: rho,
        p_value: t_p_value(rho, df),
        n,
    })
}

/// Seeded permutation p-value for the Spearman statistic: the proportion of
/// shuffles of `y` whose |rho| reaches the observed |rho|, with the +1
/// correction.
pub fn spearman_permutation_p(
    x: &[f64],
    y: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    check_paired(x, y, 3)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let observed = pearson_core(&rx, &ry)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = ry;
    let mut hits = 0usize;
    for _ in 0..resamples {
        shuffled.shuffle(&mut rng);
        if let Ok(r) = pearson_core(&rx, &shuffled) {
            if r.abs() >= observed - 1e-12 {
                hits += 1;
            }
        }
    }
    Ok((hits + 1) as f64 / (resamples + 1) as f64)
}

/// Mean and population standard deviation of one metric within one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn group_stats(values: &[f64]) -> Option<GroupStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(GroupStats {
        mean,
        std: var.sqrt(),
        n: values.len(),
    })
}

/// Per-metric group statistics after a median split.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMetric {
    pub name: String,
    pub higher: Option<GroupStats>,
    pub lower: Option<GroupStats>,
}

/// Median-split comparison: sessions scoring at or above the median form the
/// higher group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupComparison {
    pub split_value: f64,
    pub higher_n: usize,
    pub lower_n: usize,
    pub metrics: Vec<GroupMetric>,
}

/// Splits sessions by the median of `scores` and reports mean ± population
/// std of every supplied metric per group. Metric value vectors must align
/// with `scores`.
pub fn median_split(scores: &[f64], metrics: &[(String, Vec<f64>)]) -> Result<GroupComparison> {
    if scores.len() < 2 {
        return Err(Error::Validation("median split needs at least 2 sessions".into()));
    }
    for (name, vals) in metrics {
        if vals.len() != scores.len() {
            return Err(Error::Validation(format!(
                "metric {name:?} has {} values for {} sessions",
                vals.len(),
                scores.len()
            )));
        }
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let split_value = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    let in_higher: Vec<bool> = scores.iter().map(|&s| s >= split_value).collect();
    let higher_n = in_higher.iter().filter(|&&h| h).count();
    let metrics = metrics
        .iter()
        .map(|(name, vals)| {
            let mut hi = Vec::new();
            let mut lo = Vec::new();
            for (&v, &h) in vals.iter().zip(&in_higher) {
                if h {
                    hi.push(v);
                } else {
                    lo.push(v);
                }
            }
            GroupMetric {
                name: name.clone(),
                higher: group_stats(&hi),
                lower: group_stats(&lo),
            }
        })
        .collect();
    Ok(GroupComparison {
        split_value,
        higher_n,
        lower_n: scores.len() - higher_n,
        metrics,
    })
}
