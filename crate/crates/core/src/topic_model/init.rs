//! Warm start for the topic matrix from a clustering of the documents.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::Result;
use crate::Scalar;

use super::mstep::project_to_ball;
use super::residual::{compute_topic_residuals, weighted_embedding_mean};
use super::TopicSet;

/// How GEM builds the topics it starts from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicInit {
    /// All topics zero; the first E-step gets seeded random proportions.
    #[default]
    Zero,
    /// k-means over centered mean document embeddings, then one topic
    /// fitted to the words of each cluster. The cluster nearest the
    /// unigram mean is left to the null topic.
    Clustered,
}

impl std::str::FromStr for TopicInit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(Self::Zero),
            "clustered" => Ok(Self::Clustered),
            _ => Err("expected zero or clustered".into()),
        }
    }
}

const KMEANS_RESTARTS: u64 = 5;
const KMEANS_MAX_ITERS: usize = 100;
const FIT_MAX_ITERS: usize = 500;

/// Topic set of `num_topics` columns fitted to a k-means partition of `docs`.
/// Clusters that end up empty leave their topic at zero.
pub fn clustered_topics<S: Scalar>(
    docs: &[&[usize]],
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    num_topics: usize,
    gamma: S,
    seed: u64,
    owner: &str,
) -> Result<TopicSet<S>> {
    let dim = embeddings.dim();
    let mut topics = Array2::zeros((dim, num_topics));
    let docs: Vec<&[usize]> = docs.iter().copied().filter(|d| !d.is_empty()).collect();
    if num_topics > 1 && !docs.is_empty() {
        let center = unigram_mean(embeddings, unigram);
        let points: Vec<Array1<S>> = docs.iter().map(|d| mean_embedding(embeddings, d) - &center).collect();
        let labels = kmeans(&points, num_topics.min(points.len()), seed);
        let mut clusters: Vec<(S, Vec<usize>)> = (0..num_topics)
            .map(|c| {
                let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == c).collect();
                let centroid = centroid(&points, &members, dim);
                (centroid.dot(&centroid), members)
            })
            .filter(|(_, m)| !m.is_empty())
            .collect();
        clusters.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite norms"));
        for (k, (_, members)) in clusters.into_iter().skip(1).enumerate() {
            let mut counts = vec![S::zero(); unigram.len()];
            for &i in &members {
                for &w in docs[i] {
                    counts[w] += S::one();
                }
            }
            topics
                .column_mut(k + 1)
                .assign(&fit_topic(&counts, embeddings, unigram, gamma));
        }
    }
    TopicSet::from_topics(topics, embeddings, unigram, owner)
}

/// Maximizes the mean log-likelihood of `counts` under a single topic,
/// by projected gradient ascent with a backtracking step.
pub fn fit_topic<S: Scalar>(counts: &[S], embeddings: &EmbeddingMatrix<S>, unigram: &[S], gamma: S) -> Array1<S> {
    let total: S = counts.iter().copied().sum();
    let dim = embeddings.dim();
    if !(total > S::zero()) {
        return Array1::zeros(dim);
    }
    let weights = ArrayView1::from(counts).mapv(|c| c / total);
    let target = embeddings.vectors().t().dot(&weights);
    let objective = |t: &Array1<S>| -> S {
        let col = t.view().insert_axis(ndarray::Axis(1)).to_owned();
        let r = compute_topic_residuals(embeddings, unigram, &col)
            .map(|r| r[0])
            .unwrap_or(S::neg_infinity());
        target.dot(t) + r
    };
    let mut t = Array1::zeros(dim);
    let mut value = objective(&t);
    let mut step = S::one();
    for _ in 0..FIT_MAX_ITERS {
        let grad = &target - &weighted_embedding_mean(embeddings, unigram, t.view());
        let moved = loop {
            let mut cand = (&t + &(&grad * step)).insert_axis(ndarray::Axis(1));
            project_to_ball(&mut cand, gamma);
            let cand = cand.column(0).to_owned();
            let v = objective(&cand);
            if v >= value {
                step *= S::lit(1.5);
                break Some((cand, v));
            }
            step *= S::lit(0.5);
            if step < S::lit(1e-12) {
                break None;
            }
        };
        match moved {
            Some((cand, v)) => {
                let gain = v - value;
                t = cand;
                value = v;
                if gain <= S::lit(1e-12) * (S::one() + value.abs()) {
                    break;
                }
            }
            None => break,
        }
    }
    t
}

fn unigram_mean<S: Scalar>(embeddings: &EmbeddingMatrix<S>, unigram: &[S]) -> Array1<S> {
    let total: S = unigram.iter().copied().sum();
    embeddings.vectors().t().dot(&ArrayView1::from(unigram)) / total
}

fn mean_embedding<S: Scalar>(embeddings: &EmbeddingMatrix<S>, tokens: &[usize]) -> Array1<S> {
    let mut sum = Array1::zeros(embeddings.dim());
    for &w in tokens {
        sum += &embeddings.row(w);
    }
    sum / S::from_usize_lossy(tokens.len())
}

fn centroid<S: Scalar>(points: &[Array1<S>], members: &[usize], dim: usize) -> Array1<S> {
    let mut sum = Array1::zeros(dim);
    for &i in members {
        sum += &points[i];
    }
    if !members.is_empty() {
        sum /= S::from_usize_lossy(members.len());
    }
    sum
}

fn sq_dist<S: Scalar>(a: &Array1<S>, b: &Array1<S>) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds; keeps the lowest-inertia of
/// several seeded restarts.
pub fn kmeans<S: Scalar>(points: &[Array1<S>], k: usize, seed: u64) -> Vec<usize> {
    let mut best: Option<(S, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        let (inertia, labels) = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

fn lloyd<S: Scalar>(points: &[Array1<S>], k: usize, rng: &mut ChaCha8Rng) -> (S, Vec<usize>) {
    let n = points.len();
    let dim = points.first().map_or(0, |p| p.len());
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(S::infinity(), S::min)
                    .as_f64()
            })
            .collect();
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            Err(_) => rng.random_range(0..n),
        };
        centers.push(points[next].clone());
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let nearest = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(p, &centers[a])
                        .partial_cmp(&sq_dist(p, &centers[b]))
                        .expect("finite distances")
                })
                .expect("k >= 1");
            if *label != nearest {
                *label = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if !members.is_empty() {
                *center = centroid(points, &members, dim);
            }
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (inertia, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kmeans_separates_two_blobs() {
        let points: Vec<Array1<f64>> = vec![
            array![0.0, 0.1],
            array![0.1, 0.0],
            array![10.0, 10.1],
            array![10.1, 10.0],
            array![0.05, 0.05],
        ];
        let labels = kmeans(&points, 2, 3);
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[0], labels[4]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
        assert_eq!(labels, kmeans(&points, 2, 3));
    }

    #[test]
    fn fit_topic_matches_word_frequencies() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        let u = vec![1.0 / 3.0; 3];
        let counts = [6.0, 3.0, 1.0];
        let t = fit_topic(&counts, &v, &u, 50.0);
        let logits: Vec<f64> = (0..3).map(|w| v.row(w).dot(&t)).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for w in 0..3 {
            assert!((logits[w].exp() / z - counts[w] / 10.0).abs() < 1e-5, "word {w}");
        }
    }

    #[test]
    fn fit_topic_stays_in_ball() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let t: Array1<f64> = fit_topic(&[1.0, 0.0], &v, &[0.5, 0.5], 2.0);
        assert!((t.dot(&t).sqrt() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_topic_stays_zero() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let d: &[usize] = &[0, 1, 0];
        let ts = clustered_topics(&[d], &v, &[0.5, 0.5], 1, 7.0, 0, "g").unwrap();
        assert!(ts.topics.iter().all(|&x| x == 0.0));
    }
}
