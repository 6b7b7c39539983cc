use ndarray::{Array2, Axis};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::Scalar;

use super::residual::residual_gradient;
use super::{DocVariational, Hyperparams, TopicSet};

/// Gradient of the objective with respect to the topic matrix, summed over
/// the documents that share `topic_set`:
/// `Σ_docs Σ_j v_wj π_jᵀ + [m̄_k ∂r_k/∂t_k]_k`, with the null column zeroed.
pub fn topic_gradient<'a, S, I>(
    docs: I,
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
) -> Array2<S>
where
    S: Scalar,
    I: IntoIterator<Item = (&'a [usize], &'a DocVariational<S>)>,
{
    let k = topic_set.num_topics();
    let mut grad = Array2::zeros((topic_set.dim(), k));
    let mut mass = ndarray::Array1::<S>::zeros(k);
    for (tokens, state) in docs {
        if tokens.is_empty() {
            continue;
        }
        let x = embeddings.gather(tokens);
        grad += &x.t().dot(&state.pi);
        mass += &state.pi.sum_axis(Axis(0));
    }
    for t in 1..k {
        if mass[t].is_zero() {
            continue;
        }
        let dr = residual_gradient(topic_set, embeddings, unigram, t);
        grad.column_mut(t).scaled_add(mass[t], &dr);
    }
    grad.column_mut(0).fill(S::zero());
    grad
}

/// λ(l, L) = L₀ λ₀ / (l · max(L, L₀)).
pub fn learning_rate<S: Scalar>(iteration: usize, total_len: usize, length_threshold: usize, lambda0: S) -> S {
    let l0 = S::from_usize_lossy(length_threshold);
    let denom = S::from_usize_lossy(iteration) * S::from_usize_lossy(total_len.max(length_threshold));
    l0 * lambda0 / denom
}

/// Rescales every column whose norm exceeds `radius` back onto the sphere.
pub fn project_to_ball<S: Scalar>(topics: &mut Array2<S>, radius: S) {
    for mut col in topics.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > radius {
            let scale = radius / norm;
            col.mapv_inplace(|x| x * scale);
        }
    }
}

/// One projected gradient ascent step followed by a residual refresh.
pub fn m_step<S: Scalar>(
    topic_set: &TopicSet<S>,
    gradient: &Array2<S>,
    iteration: usize,
    total_len: usize,
    hyper: &Hyperparams<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
) -> Result<TopicSet<S>> {
    if iteration == 0 {
        return Err(Error::Invalid("GEM iterations are numbered from 1".into()));
    }
    if gradient.dim() != topic_set.topics.dim() {
        return Err(Error::DimensionMismatch(format!(
            "gradient is {:?}, topics are {:?}",
            gradient.dim(),
            topic_set.topics.dim()
        )));
    }
    let step = learning_rate(iteration, total_len, hyper.length_threshold, hyper.lambda0);
    let mut topics = topic_set.topics.clone();
    topics.scaled_add(step, gradient);
    project_to_ball(&mut topics, hyper.gamma);
    topics.column_mut(0).fill(S::zero());
    TopicSet::from_topics(topics, embeddings, unigram, topic_set.owner.clone())
}
