//! Frame-level HMM: Laplace-smoothed transitions and priors estimated from
//! labeled timelines, temperature-scaled log-softmax emissions, and Viterbi
//! decoding.

use crate::domain::Timeline;
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};

/// Default softmax temperature.
pub const DEFAULT_TAU: f64 = 5.0;
/// Default Laplace pseudo-count.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Log-domain transition matrix and prior over an ordered label set.
#[derive(Debug, Clone)]
pub struct TransitionModel<F: Real> {
    pub labels: Vec<u8>,
    /// L×L log-transition matrix, row = source label index.
    pub log_a: Vec<Vec<F>>,
    /// Length-L log-prior over starting labels.
    pub log_pi: Vec<F>,
    pub alpha: F,
    pub tau: F,
}

impl<F: Real> TransitionModel<F> {
    /// Estimates transitions and priors from `timelines` over `labels`.
    pub fn estimate(
        timelines: &[&Timeline],
        labels: &[u8],
        alpha: F,
        tau: F,
    ) -> Result<TransitionModel<F>> {
        if labels.is_empty() {
            return Err(Error::Validation("label set must be non-empty".into()));
        }
        if alpha <= F::zero() {
            return Err(Error::Validation("alpha must be positive".into()));
        }
        if tau <= F::zero() {
            return Err(Error::Validation("tau must be positive".into()));
        }
        let a = estimate_transitions(timelines, labels, alpha);
        let pi = estimate_priors(timelines, labels, alpha);
        let floor = F::min_positive_value();
        Ok(TransitionModel {
            labels: labels.to_vec(),
            log_a: a
                .into_iter()
                .map(|row| row.into_iter().map(|p| p.max(floor).ln()).collect())
                .collect(),
            log_pi: pi.into_iter().map(|p| p.max(floor).ln()).collect(),
            alpha,
            tau,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }
}

fn index_of(labels: &[u8]) -> impl Fn(u8) -> Option<usize> + '_ {
    move |l| labels.iter().position(|&x| x == l)
}

/// Row-stochastic transition matrix with Laplace smoothing: counts every
/// frame-to-frame pair whose endpoints both lie in `labels` (self-transitions
/// included), then normalizes A[a][b] = (c(a,b) + alpha) / (c(a,·) + alpha·L).
pub fn estimate_transitions<F: Real>(
    timelines: &[&Timeline],
    labels: &[u8],
    alpha: F,
) -> Vec<Vec<F>> {
    let l = labels.len();
    let idx = index_of(labels);
    let mut counts = vec![vec![0u64; l]; l];
    for t in timelines {
        for w in t.labels.windows(2) {
            if let (Some(a), Some(b)) = (idx(w[0]), idx(w[1])) {
                counts[a][b] += 1;
            }
        }
    }
    counts
        .iter()
        .map(|row| {
            let total = F::from_u64(row.iter().sum::<u64>()).unwrap() + alpha * F::from_count(l);
            row.iter()
                .map(|&c| (F::from_u64(c).unwrap() + alpha) / total)
                .collect()
        })
        .collect()
}

/// Smoothed distribution over each timeline's starting label.
pub fn estimate_priors<F: Real>(timelines: &[&Timeline], labels: &[u8], alpha: F) -> Vec<F> {
    let l = labels.len();
    let idx = index_of(labels);
    let mut counts = vec![0u64; l];
    for t in timelines {
        if let Some(&first) = t.labels.first() {
            if let Some(i) = idx(first) {
                counts[i] += 1;
            }
        }
    }
    let total = F::from_u64(counts.iter().sum::<u64>()).unwrap() + alpha * F::from_count(l);
    counts
        .iter()
        .map(|&c| (F::from_u64(c).unwrap() + alpha) / total)
        .collect()
}

/// Per-frame emission log-probabilities: row t is the log-softmax of
/// tau-scaled scores, so each row exponentiates to a distribution.
pub fn emission_log_probs<F: Real>(scores: &[Vec<F>], tau: F) -> Vec<Vec<F>> {
    scores
        .iter()
        .map(|row| {
            let scaled: Vec<F> = row.iter().map(|&s| tau * s).collect();
            let lse = log_sum_exp(&scaled);
            scaled.into_iter().map(|s| s - lse).collect()
        })
        .collect()
}

/// Maximum-probability label path under the model, ties broken by the lowest
/// label index at every argmax. Returns label ids from `model.labels`.
pub fn viterbi<F: Real>(log_b: &[Vec<F>], model: &TransitionModel<F>) -> Result<Vec<u8>> {
    let t_len = log_b.len();
    let l = model.num_labels();
    if t_len == 0 {
        return Err(Error::Validation("cannot decode an empty sequence".into()));
    }
    if log_b.iter().any(|row| row.len() != l) {
        return Err(Error::Validation(format!(
            "emission rows must have {l} columns"
        )));
    }

    let mut delta: Vec<F> = (0..l).map(|j| model.log_pi[j] + log_b[0][j]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let mut next = vec![F::neg_infinity(); l];
        let mut ptr = vec![0usize; l];
        for j in 0..l {
            let mut best = delta[0] + model.log_a[0][j];
            let mut best_i = 0;
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let cand = d + model.log_a[i][j];
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + log_b[t][j];
            ptr[j] = best_i;
        }
        delta = next;
        back.push(ptr);
    }

    let mut best_j = 0;
    for (j, &d) in delta.iter().enumerate().skip(1) {
        if d > delta[best_j] {
            best_j = j;
        }
    }
    let mut path_idx = vec![0usize; t_len];
    path_idx[t_len - 1] = best_j;
    for t in (0..t_len - 1).rev() {
        path_idx[t] = back[t][path_idx[t + 1]];
    }
    Ok(path_idx.into_iter().map(|i| model.labels[i]).collect())
}

/// Log-score of an explicit path under the model; used by tests and fuzzing.
pub fn path_log_score<F: Real>(log_b: &[Vec<F>], model: &TransitionModel<F>, path: &[usize]) -> F {
    let mut score = model.log_pi[path[0]] + log_b[0][path[0]];
    for t in 1..path.len() {
        score = score + model.log_a[path[t - 1]][path[t]] + log_b[t][path[t]];
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tl(labels: Vec<u8>) -> Timeline {
        Timeline::new("t", labels).unwrap()
    }

    #[test]
    fn transitions_with_no_data_are_uniform() {
        let a: Vec<Vec<f64>> = estimate_transitions(&[], &[1, 2, 3], 1.0);
        for row in &a {
            for &p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transitions_hand_count() {
        let t = tl(vec![1, 1, 2]);
        let a: Vec<Vec<f64>> = estimate_transitions(&[&t], &[1, 2], 1.0);
        // Row 1: counts (1,1) over total 2 -> (2/4, 2/4). Row 2: no outgoing -> uniform.
        assert!((a[0][0] - 0.5).abs() < 1e-12);
        assert!((a[0][1] - 0.5).abs() < 1e-12);
        assert!((a[1][0] - 0.5).abs() < 1e-12);
        assert!((a[1][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn self_transition_dominates_as_alpha_vanishes() {
        let t = tl(vec![3; 50]);
        let a: Vec<Vec<f64>> = estimate_transitions(&[&t], &[3, 4], 1e-6);
        assert!((a[0][0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn priors_with_no_data_are_uniform() {
        let pi: Vec<f64> = estimate_priors(&[], &[1, 2, 3, 4], 1.0);
        for &p in &pi {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn priors_hand_count() {
        let a = tl(vec![1, 2]);
        let b = tl(vec![1, 1]);
        let c = tl(vec![2, 1]);
        let pi: Vec<f64> = estimate_priors(&[&a, &b, &c], &[1, 2], 1.0);
        assert!((pi[0] - 3.0 / 5.0).abs() < 1e-12);
        assert!((pi[1] - 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn priors_concentrate_as_alpha_vanishes() {
        let a = tl(vec![3, 1]);
        let b = tl(vec![3, 2]);
        let pi: Vec<f64> = estimate_priors(&[&a, &b], &[1, 2, 3], 1e-6);
        assert!((pi[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rows_and_priors_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let len = rng.random_range(1..40);
            let labels: Vec<u8> = (0..rng.random_range(1..6)).collect();
            let seq: Vec<u8> = (0..len)
                .map(|_| labels[rng.random_range(0..labels.len())])
                .collect();
            let t = tl(seq);
            let a: Vec<Vec<f64>> = estimate_transitions(&[&t], &labels, 0.5);
            for row in &a {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
            let pi: Vec<f64> = estimate_priors(&[&t], &labels, 0.5);
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_moves_rows_toward_uniform() {
        let t = tl(vec![1, 1, 1, 1, 2, 1, 1]);
        let mut prev_max = f64::INFINITY;
        for alpha in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let a: Vec<Vec<f64>> = estimate_transitions(&[&t], &[1, 2], alpha);
            let max0 = a[0].iter().cloned().fold(0.0, f64::max);
            assert!(max0 <= prev_max + 1e-12);
            prev_max = max0;
        }
    }

    #[test]
    fn constant_emission_row_is_uniform_log() {
        for s in [-2.5, 0.0, 7.0] {
            let out = emission_log_probs(&[vec![s, s, s]], 5.0);
            for &v in &out[0] {
                assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn emission_closed_form_two_labels() {
        let out = emission_log_probs(&[vec![1.0, 0.0]], 5.0);
        let e5 = 5.0f64.exp();
        assert!((out[0][0] - (e5 / (e5 + 1.0)).ln()).abs() < 1e-12);
        assert!((out[0][1] - (1.0 / (e5 + 1.0)).ln()).abs() < 1e-12);
    }

    #[test]
    fn emission_shift_invariance() {
        let row = vec![0.3, -0.8, 0.55, 0.0];
        let base = emission_log_probs(&[row.clone()], 5.0);
        for c in [1.0, -3.5, 0.25] {
            let shifted: Vec<f64> = row.iter().map(|&s| s + c).collect();
            let out = emission_log_probs(&[shifted], 5.0);
            for (a, b) in out[0].iter().zip(&base[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn emission_rows_exponentiate_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let l = rng.random_range(1..8);
            let row: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let out = emission_log_probs(&[row], 5.0);
            let s: f64 = out[0].iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    fn random_model(rng: &mut ChaCha8Rng, l: usize) -> TransitionModel<f64> {
        let labels: Vec<u8> = (1..=l as u8).collect();
        let seq: Vec<u8> = (0..30).map(|_| labels[rng.random_range(0..l)]).collect();
        let t = tl(seq);
        TransitionModel::estimate(&[&t], &labels, 1.0, 5.0).unwrap()
    }

    /// Enumerates every path and keeps the best under the Viterbi tie-break:
    /// smallest final label, then smallest predecessor working backwards.
    fn brute_force(log_b: &[Vec<f64>], model: &TransitionModel<f64>) -> (Vec<usize>, f64) {
        let t_len = log_b.len();
        let l = model.num_labels();
        let total = l.pow(t_len as u32);
        let mut best_path = Vec::new();
        let mut best_score = f64::NEG_INFINITY;
        for code in 0..total {
            let mut c = code;
            let mut path = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                path.push(c % l);
                c /= l;
            }
            let score = path_log_score(log_b, model, &path);
            let better = score > best_score || {
                score == best_score && {
                    // Reverse-lexicographic comparison, matching backpointer ties.
                    let mut smaller = false;
                    for (a, b) in path.iter().rev().zip(best_path.iter().rev()) {
                        match a.cmp(b) {
                            std::cmp::Ordering::Less => {
                                smaller = true;
                                break;
                            }
                            std::cmp::Ordering::Greater => break,
                            std::cmp::Ordering::Equal => {}
                        }
                    }
                    smaller
                }
            };
            if better {
                best_score = score;
                best_path = path;
            }
        }
        (best_path, best_score)
    }

    #[test]
    fn viterbi_single_step_takes_prior_plus_emission() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(&mut rng, 3);
        let log_b = vec![vec![-0.5, -0.2, -9.0]];
        let path = viterbi(&log_b, &model).unwrap();
        let mut best = 0;
        for j in 1..3 {
            if model.log_pi[j] + log_b[0][j] > model.log_pi[best] + log_b[0][best] {
                best = j;
            }
        }
        assert_eq!(path, vec![model.labels[best]]);
    }

    #[test]
    fn viterbi_with_uniform_model_is_framewise_argmax() {
        let labels = vec![1u8, 2, 3];
        let model: TransitionModel<f64> =
            TransitionModel::estimate(&[], &labels, 1.0, 5.0).unwrap();
        let log_b = vec![
            vec![-1.0, -0.1, -2.0],
            vec![-0.1, -1.0, -2.0],
            vec![-2.0, -1.0, -0.1],
        ];
        assert_eq!(viterbi(&log_b, &model).unwrap(), vec![2, 1, 3]);
    }

    #[test]
    fn viterbi_matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..25 {
            let l = rng.random_range(2..=4);
            let t_len = rng.random_range(1..=6);
            let model = random_model(&mut rng, l);
            let log_b: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..l).map(|_| rng.random::<f64>() * -4.0).collect())
                .collect();
            let path = viterbi(&log_b, &model).unwrap();
            let idx_path: Vec<usize> = path
                .iter()
                .map(|&id| model.labels.iter().position(|&x| x == id).unwrap())
                .collect();
            let (want, want_score) = brute_force(&log_b, &model);
            assert_eq!(idx_path, want, "case {case}");
            let got_score = path_log_score(&log_b, &model, &idx_path);
            assert!((got_score - want_score).abs() < 1e-9);
        }
    }

    #[test]
    fn viterbi_beats_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = 4;
        let model = random_model(&mut rng, l);
        let t_len = 30;
        let log_b: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..l).map(|_| rng.random::<f64>() * -4.0).collect())
            .collect();
        let path = viterbi(&log_b, &model).unwrap();
        let idx_path: Vec<usize> = path
            .iter()
            .map(|&id| model.labels.iter().position(|&x| x == id).unwrap())
            .collect();
        let best = path_log_score(&log_b, &model, &idx_path);
        for _ in 0..1000 {
            let rand_path: Vec<usize> = (0..t_len).map(|_| rng.random_range(0..l)).collect();
            assert!(path_log_score(&log_b, &model, &rand_path) <= best + 1e-12);
        }
    }
}
