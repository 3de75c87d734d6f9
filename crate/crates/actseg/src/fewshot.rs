//! Stage 1 up to the emission inputs: support sampling, prototype
//! construction, and cosine similarity scoring.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{FeatureSequence, Timeline};
use crate::error::{Error, Result};
use crate::num::{dot, norm, Real};

/// Scales `v` to unit L2 norm.
pub fn l2_normalize<F: Real>(v: &[F]) -> Result<Vec<F>> {
    let n = norm(v);
    if n <= F::zero() || !n.is_finite() {
        return Err(Error::Degenerate("cannot normalize zero vector".into()));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

/// Unit-norm support vectors sampled from one session, keyed by label.
#[derive(Debug, Clone)]
pub struct SupportSet<F: Real> {
    pub session_id: String,
    pub shots: usize,
    pub seed: u64,
    /// Sampled frame indices per label, ascending.
    pub frames: BTreeMap<u8, Vec<usize>>,
    /// Normalized feature vectors matching `frames`.
    pub vectors: BTreeMap<u8, Vec<Vec<F>>>,
}

impl<F: Real> SupportSet<F> {
    /// All sampled frame indices across labels, ascending and deduplicated.
    pub fn sampled_frames(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.frames.values().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Uniformly samples up to `n` frames per label present in `gt` (background
/// included) without replacement, returning their normalized features.
pub fn sample_support<F: Real>(
    gt: &Timeline,
    feats: &FeatureSequence<F>,
    n: usize,
    seed: u64,
) -> Result<SupportSet<F>> {
    if gt.len() != feats.num_frames() {
        return Err(Error::Validation(format!(
            "timeline length {} does not match feature frames {}",
            gt.len(),
            feats.num_frames()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_label: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (t, &l) in gt.labels.iter().enumerate() {
        by_label.entry(l).or_default().push(t);
    }
    let mut frames = BTreeMap::new();
    let mut vectors = BTreeMap::new();
    for (label, candidates) in by_label {
        let take = n.min(candidates.len());
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), take)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        picked.sort_unstable();
        let vecs = picked
            .iter()
            .map(|&t| l2_normalize(feats.row(t)))
            .collect::<Result<Vec<_>>>()?;
        frames.insert(label, picked);
        vectors.insert(label, vecs);
    }
    Ok(SupportSet {
        session_id: gt.session_id.clone(),
        shots: n,
        seed,
        frames,
        vectors,
    })
}

/// How a label's prototypes were built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrototypeStrategy {
    Mean,
    Clustered,
}

impl std::str::FromStr for PrototypeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PrototypeStrategy::Mean),
            "clustered" => Ok(PrototypeStrategy::Clustered),
            other => Err(Error::Validation(format!(
                "unknown prototype strategy {other:?} (expected mean|clustered)"
            ))),
        }
    }
}

/// One or more unit-norm prototype vectors per label.
#[derive(Debug, Clone)]
pub struct PrototypeSet<F: Real> {
    pub strategy: PrototypeStrategy,
    protos: BTreeMap<u8, Vec<Vec<F>>>,
}

impl<F: Real> PrototypeSet<F> {
    /// Labels with at least one prototype, ascending.
    pub fn labels(&self) -> Vec<u8> {
        self.protos.keys().copied().collect()
    }

    pub fn prototypes(&self, label: u8) -> Option<&[Vec<F>]> {
        self.protos.get(&label).map(Vec::as_slice)
    }

    pub fn dim(&self) -> Option<usize> {
        self.protos.values().flatten().next().map(Vec::len)
    }

    pub fn len(&self) -> usize {
        self.protos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.protos.is_empty()
    }
}

fn centroid<F: Real>(vecs: &[Vec<F>]) -> Vec<F> {
    let dim = vecs[0].len();
    let mut acc = vec![F::zero(); dim];
    for v in vecs {
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = F::from_count(vecs.len());
    for a in acc.iter_mut() {
        *a /= n;
    }
    acc
}

/// Builds one global prototype per label: the renormalized mean of the
/// per-session normalized centroids, taken over sessions containing the
/// label. Sessions are folded in id order, so the result does not depend on
/// input ordering.
pub fn mean_prototypes<F: Real>(supports: &[SupportSet<F>]) -> Result<PrototypeSet<F>> {
    let mut ordered: Vec<&SupportSet<F>> = supports.iter().collect();
    ordered.sort_by(|a, b| a.session_id.cmp(&b.session_id));

    let mut per_label: BTreeMap<u8, Vec<Vec<F>>> = BTreeMap::new();
    for set in ordered {
        for (&label, vecs) in &set.vectors {
            if vecs.is_empty() {
                continue;
            }
            let unit = l2_normalize(&centroid(vecs))?;
            per_label.entry(label).or_default().push(unit);
        }
    }
    let mut protos = BTreeMap::new();
    for (label, session_units) in per_label {
        let global = l2_normalize(&centroid(&session_units))?;
        protos.insert(label, vec![global]);
    }
    Ok(PrototypeSet {
        strategy: PrototypeStrategy::Mean,
        protos,
    })
}

/// Pools all support vectors per label and partitions them into up to `k`
/// sub-centroids via k-means, returning the normalized centroids.
pub fn clustered_prototypes<F: Real>(
    supports: &[SupportSet<F>],
    k: usize,
    seed: u64,
) -> Result<PrototypeSet<F>> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let mut ordered: Vec<&SupportSet<F>> = supports.iter().collect();
    ordered.sort_by(|a, b| a.session_id.cmp(&b.session_id));

    let mut pooled: BTreeMap<u8, Vec<Vec<F>>> = BTreeMap::new();
    for set in ordered {
        for (&label, vecs) in &set.vectors {
            pooled.entry(label).or_default().extend(vecs.iter().cloned());
        }
    }
    let mut protos = BTreeMap::new();
    for (label, points) in pooled {
        if points.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive(seed, &[u64::from(label)]));
        let centroids = kmeans(&points, k, &mut rng);
        let mut units = centroids
            .iter()
            .map(|c| l2_normalize(c))
            .collect::<Result<Vec<_>>>()?;
        units.sort_by(|a, b| a.partial_cmp(b).expect("unit vectors are finite"));
        protos.insert(label, units);
    }
    Ok(PrototypeSet {
        strategy: PrototypeStrategy::Clustered,
        protos,
    })
}

fn dist_sq<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Lloyd iterations with k-means++ seeding. The effective cluster count is
/// min(k, distinct points); empty clusters are re-seeded from the point
/// farthest from its assigned centroid.
fn kmeans<F: Real>(points: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let mut distinct: Vec<&Vec<F>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|d| *d == p) {
            distinct.push(p);
        }
    }
    let k = k.min(distinct.len());
    if k == 1 {
        return vec![centroid(points)];
    }

    // k-means++ seeding on the full point set.
    let mut centers: Vec<Vec<F>> = Vec::with_capacity(k);
    let first = rand::Rng::random_range(rng, 0..points.len());
    centers.push(points[first].clone());
    let mut min_d2: Vec<F> = points.iter().map(|p| dist_sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: F = min_d2.iter().copied().sum();
        let next = if total > F::zero() {
            let mut target = F::from_f64(rand::Rng::random::<f64>(rng)).unwrap() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target = target - d;
            }
            chosen
        } else {
            // All remaining mass at existing centers; any distinct point works.
            distinct
                .iter()
                .position(|d| !centers.iter().any(|c| c == *d))
                .map(|i| points.iter().position(|p| p == distinct[i]).unwrap())
                .unwrap_or(0)
        };
        centers.push(points[next].clone());
        for (d, p) in min_d2.iter_mut().zip(points) {
            let nd = dist_sq(p, centers.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = dist_sq(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist_sq(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for c in 0..k {
            let members: Vec<Vec<F>> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p.clone())
                .collect();
            if members.is_empty() {
                // Re-seed from the point farthest from its assigned centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (j, q)| {
                        let dp = dist_sq(p, &centers[assign[*i]]);
                        let dq = dist_sq(q, &centers[assign[*j]]);
                        dp.partial_cmp(&dq).unwrap().then(j.cmp(i))
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                centers[c] = points[far].clone();
            } else {
                centers[c] = centroid(&members);
            }
        }
    }
    centers
}

/// T×L matrix of per-frame scores: entry (t, l) is the maximum cosine
/// similarity between frame t and any prototype of the l-th label in
/// `protos.labels()` order. Frame rows must already be unit-norm.
pub fn similarity_scores<F: Real>(
    feats: &FeatureSequence<F>,
    protos: &PrototypeSet<F>,
) -> Result<Vec<Vec<F>>> {
    let dim = protos
        .dim()
        .ok_or_else(|| Error::Validation("prototype set is empty".into()))?;
    if dim != feats.dim() {
        return Err(Error::Validation(format!(
            "feature dim {} does not match prototype dim {dim}",
            feats.dim()
        )));
    }
    let labels = protos.labels();
    let mut scores = Vec::with_capacity(feats.num_frames());
    for row in feats.rows() {
        let mut frame_scores = Vec::with_capacity(labels.len());
        for &label in &labels {
            let best = protos.prototypes(label).unwrap().iter().fold(
                F::neg_infinity(),
                |acc, p| acc.max(dot(row, p)),
            );
            frame_scores.push(best);
        }
        scores.push(frame_scores);
    }
    Ok(scores)
}
