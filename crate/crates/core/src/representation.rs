//! Document feature vectors built from a trained model: merged topic space,
//! topic proportions, mean word embedding, and similarity-adjusted comparison.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::topic_model::{DocVariational, ModelState, TopicSet};
use crate::Scalar;

/// Owner name given to the merged topic set.
pub const MERGED_OWNER: &str = "merged";

/// Where a merged topic came from. The shared null topic has no category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicOrigin {
    pub category: Option<String>,
    pub local_index: usize,
}

/// All categories' non-null topics behind one shared null topic.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTopicSpace<S> {
    pub space: TopicSet<S>,
    /// Dirichlet concentration per merged topic, inherited from the local index.
    pub alpha: Vec<S>,
    pub origin: Vec<TopicOrigin>,
}

impl<S: Scalar> MergedTopicSpace<S> {
    pub fn num_topics(&self) -> usize {
        self.space.num_topics()
    }

    pub fn topics(&self) -> &Array2<S> {
        &self.space.topics
    }

    pub fn residuals(&self) -> &Array1<S> {
        &self.space.residuals
    }
}

/// Number of merged topics for `categories` sets of `k` topics each.
pub fn merged_topic_count(categories: usize, k: usize) -> usize {
    categories * (k - 1) + 1
}

/// Concatenates every set's non-null columns after a single null column and
/// recomputes residuals against `unigram`.
pub fn merge_topic_sets<S: Scalar>(
    model: &ModelState<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
) -> Result<MergedTopicSpace<S>> {
    let dim = model.dim();
    if dim != embeddings.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model topics have dimension {dim}, embeddings {}",
            embeddings.dim()
        )));
    }
    let alpha = &model.hyper.alpha;
    let mut columns: Vec<ArrayView1<'_, S>> = Vec::new();
    let zero = Array1::zeros(dim);
    columns.push(zero.view());
    let mut merged_alpha = vec![alpha[0]];
    let mut origin = vec![TopicOrigin {
        category: None,
        local_index: 0,
    }];
    for set in &model.topic_sets {
        if set.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "topic set `{}` has dimension {}, expected {dim}",
                set.owner,
                set.dim()
            )));
        }
        for k in 1..set.num_topics() {
            columns.push(set.topic(k));
            merged_alpha.push(alpha[k]);
            origin.push(TopicOrigin {
                category: Some(set.owner.clone()),
                local_index: k,
            });
        }
    }
    let stacked: Vec<_> = columns.iter().map(|c| c.insert_axis(Axis(1))).collect();
    let topics = concatenate(Axis(1), &stacked).expect("equal column heights");
    let space = TopicSet::from_topics(topics, embeddings, unigram, MERGED_OWNER)?;
    Ok(MergedTopicSpace {
        space,
        alpha: merged_alpha,
        origin,
    })
}

/// Point estimate of a document's topic mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProportionEstimator {
    /// θ / Σθ, the mean of the variational Dirichlet.
    #[default]
    DirichletMean,
    /// Σ_j π_j / L; falls back to the Dirichlet mean for empty documents.
    MeanResponsibility,
}

/// θ / Σθ.
pub fn doc_topic_proportions<S: Scalar>(state: &DocVariational<S>) -> Array1<S> {
    let total = state.theta.sum();
    state.theta.mapv(|t| t / total)
}

pub fn doc_topic_proportions_with<S: Scalar>(state: &DocVariational<S>, estimator: ProportionEstimator) -> Array1<S> {
    match estimator {
        ProportionEstimator::MeanResponsibility if !state.is_empty() => {
            let len = S::from_usize_lossy(state.len());
            state.topic_mass().mapv(|m| m / len)
        }
        _ => doc_topic_proportions(state),
    }
}

/// Unweighted mean of the document's token embeddings; zero for an empty document.
pub fn mean_word_vector<S: Scalar>(tokens: &[usize], embeddings: &EmbeddingMatrix<S>) -> Array1<S> {
    if tokens.is_empty() {
        log::warn!("mean word vector of an empty document is the zero vector");
        return Array1::zeros(embeddings.dim());
    }
    embeddings.gather(tokens).mean_axis(Axis(0)).expect("non-empty")
}

/// Proportions followed by the mean word vector.
pub fn combined_features<S: Scalar>(proportions: &Array1<S>, mean_wv: &Array1<S>) -> Array1<S> {
    concatenate(Axis(0), &[proportions.view(), mean_wv.view()]).expect("1-d concatenation")
}

/// Cosine similarity between merged topics. A zero vector has cosine 0 with
/// everything except itself, and every diagonal entry is 1.
pub fn topic_similarity_matrix<S: Scalar>(topics: &Array2<S>) -> Array2<S> {
    let k = topics.ncols();
    let norms: Vec<S> = topics.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    Array2::from_shape_fn((k, k), |(i, j)| {
        if i == j {
            S::one()
        } else if norms[i].is_zero() || norms[j].is_zero() {
            S::zero()
        } else {
            topics.column(i).dot(&topics.column(j)) / (norms[i] * norms[j])
        }
    })
}

/// pᵀ S q.
pub fn adjusted_doc_similarity<S: Scalar>(p: &Array1<S>, q: &Array1<S>, similarity: &Array2<S>) -> S {
    p.dot(&similarity.dot(q))
}
