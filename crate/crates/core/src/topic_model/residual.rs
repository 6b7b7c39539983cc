use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::Scalar;

use super::TopicSet;

/// `r_k = -log Σ_s u_s exp(v_s · t_k)` for every column of `topics`,
/// by max-shifted log-sum-exp. All-zero columns get exactly 0.
pub fn compute_topic_residuals<S: Scalar>(
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    topics: &Array2<S>,
) -> Result<Array1<S>> {
    debug_assert_eq!(unigram.len(), embeddings.len());
    let logits = embeddings.vectors().dot(topics);
    let log_u: Vec<S> = unigram.iter().map(|u| u.ln()).collect();
    let mut residuals = Array1::zeros(topics.ncols());
    for (k, (col, r)) in logits.columns().into_iter().zip(residuals.iter_mut()).enumerate() {
        if topics.column(k).iter().all(|x| x.is_zero()) {
            continue;
        }
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::EmbeddingOverflow { topic: k });
        }
        *r = -log_sum_exp(col.iter().zip(&log_u).map(|(&l, &lu)| l + lu));
    }
    Ok(residuals)
}

fn log_sum_exp<S: Scalar>(values: impl Iterator<Item = S> + Clone) -> S {
    let max = values.clone().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<S>().ln()
}

/// `log P(w | k) = log u_w + v_w · t_k + r_k`.
pub fn log_word_topic_prob<S: Scalar>(
    word: usize,
    topic: usize,
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
) -> S {
    unigram[word].ln() + embeddings.row(word).dot(&topic_set.topic(topic)) + topic_set.residuals[topic]
}

/// ∂r_k/∂t_k: the negated `u·exp(v·t_k)`-weighted mean embedding.
pub fn residual_gradient<S: Scalar>(
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    topic: usize,
) -> Array1<S> {
    weighted_embedding_mean(embeddings, unigram, topic_set.topic(topic)).mapv(|x| -x)
}

pub(super) fn weighted_embedding_mean<S: Scalar>(
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    topic: ArrayView1<'_, S>,
) -> Array1<S> {
    let logits = embeddings.vectors().dot(&topic);
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut weights = Array1::zeros(logits.len());
    Zip::from(&mut weights)
        .and(&logits)
        .and(&ArrayView1::from(unigram))
        .for_each(|w, &l, &u| *w = u * (l - max).exp());
    let total = weights.sum();
    embeddings.vectors().t().dot(&weights) / total
}

/// Largest `|Σ_s u_s exp(v_s · t_k + r_k) - 1|` over the topics of a set.
pub fn max_normalization_error<S: Scalar>(
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
) -> S {
    let logits = embeddings.vectors().dot(&topic_set.topics);
    logits
        .columns()
        .into_iter()
        .zip(topic_set.residuals.iter())
        .map(|(col, &r)| {
            let total: S = col.iter().zip(unigram).map(|(&l, &u)| u * (l + r).exp()).sum();
            (total - S::one()).abs()
        })
        .fold(S::zero(), S::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_word() -> (EmbeddingMatrix<f64>, Vec<f64>) {
        (
            EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            vec![0.5, 0.5],
        )
    }

    #[test]
    fn zero_topics_have_zero_residuals() {
        let (v, u) = two_word();
        let r = compute_topic_residuals(&v, &u, &Array2::zeros((2, 3))).unwrap();
        assert_eq!(r, array![0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_term_closed_form() {
        let (v, u) = two_word();
        let r = compute_topic_residuals(&v, &u, &array![[1.0], [0.0]]).unwrap();
        // -log((e + 1) / 2), direct two-term sum
        let expected = -((1f64.exp() + 1.0) / 2.0).ln();
        assert!((r[0] - expected).abs() < 1e-15);
        assert!((r[0] - -0.620_115).abs() < 1e-6);
    }

    #[test]
    fn single_word_closed_form() {
        let v = EmbeddingMatrix::new(array![[2.0f64]]).unwrap();
        let r = compute_topic_residuals(&v, &[1.0], &array![[3.0]]).unwrap();
        assert!((r[0] + 6.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let v = EmbeddingMatrix::new(array![[1e300], [1.0]]).unwrap();
        let err = compute_topic_residuals(&v, &[0.5, 0.5], &array![[1e300]]).unwrap_err();
        assert!(matches!(err, Error::EmbeddingOverflow { topic: 0 }));
    }

    #[test]
    fn word_probabilities() {
        let (v, u) = two_word();
        let ts = TopicSet::from_topics(array![[0.0, 1.0], [0.0, 0.0]], &v, &u, "g").unwrap();
        // null topic: exactly log u_w
        assert_eq!(log_word_topic_prob(0, 0, &ts, &v, &u), 0.5f64.ln());
        let p = log_word_topic_prob(0, 1, &ts, &v, &u).exp();
        let e = 1f64.exp();
        assert!((p - 0.5 * e / ((e + 1.0) / 2.0)).abs() < 1e-15);
        let total: f64 = (0..2).map(|w| log_word_topic_prob(w, 1, &ts, &v, &u).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gradient_at_zero_is_negative_unigram_mean() {
        let v = EmbeddingMatrix::new(array![[1.0f64, 2.0], [3.0, -1.0], [0.0, 4.0]]).unwrap();
        let u = [0.2, 0.3, 0.5];
        let ts = TopicSet::zeros(2, 2, "g");
        let g = residual_gradient(&ts, &v, &u, 1);
        let mean = v.weighted_mean(&u);
        assert!((&g + &mean).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn single_word_gradient_is_constant() {
        let v = EmbeddingMatrix::new(array![[2.0f64]]).unwrap();
        for t in [-3.0, 0.0, 0.7, 50.0] {
            let ts = TopicSet::from_topics(array![[0.0, t]], &v, &[1.0], "g").unwrap();
            let g = residual_gradient(&ts, &v, &[1.0], 1);
            assert!((g[0] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (w, n) = (20, 5);
        let v = EmbeddingMatrix::new(Array2::from_shape_fn((w, n), |_| rng.random_range(-1.0..1.0))).unwrap();
        let raw: Vec<f64> = (0..w).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let u: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let topics = Array2::from_shape_fn((n, 2), |(_, k)| if k == 0 { 0.0 } else { rng.random_range(-2.0..2.0) });
        let ts = TopicSet::from_topics(topics.clone(), &v, &u, "g").unwrap();
        let analytic = residual_gradient(&ts, &v, &u, 1);
        let h = 1e-5;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..n {
            let mut plus = topics.clone();
            plus[[i, 1]] += h;
            let mut minus = topics.clone();
            minus[[i, 1]] -= h;
            let fd = (compute_topic_residuals(&v, &u, &plus).unwrap()[1]
                - compute_topic_residuals(&v, &u, &minus).unwrap()[1])
                / (2.0 * h);
            diff2 += (fd - analytic[i]).powi(2);
            norm2 += fd * fd;
        }
        assert!((diff2 / norm2).sqrt() <= 1e-5);
    }

    #[test]
    fn large_norms_stay_finite() {
        let v = EmbeddingMatrix::new(array![[30.0f64], [-30.0], [1.0]]).unwrap();
        let u = [0.3, 0.3, 0.4];
        let ts = TopicSet::from_topics(array![[0.0, 25.0]], &v, &u, "g").unwrap();
        assert!(ts.residuals[1].is_finite());
        assert!(max_normalization_error(&ts, &v, &u) < 1e-10);
        assert!(residual_gradient(&ts, &v, &u, 1).iter().all(|x| x.is_finite()));
    }
}
