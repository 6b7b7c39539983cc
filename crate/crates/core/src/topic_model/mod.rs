//! Variational GEM inference of topic embeddings.
//!
//! Word `w` under topic `k` has probability `u_w · exp(v_w · t_k + r_k)`.
//! The E-step alternates closed-form updates of the responsibilities `π`
//! and the Dirichlet parameters `θ`; the M-step takes one projected gradient
//! ascent step on the topic matrix and recomputes the residuals.

mod checkpoint;
mod elbo;
mod estep;
mod gem;
mod init;
mod mstep;
mod residual;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use elbo::{doc_elbo, elbo_core};
pub use estep::{
    e_step_document, e_step_document_from, e_step_document_traced, initial_theta, update_pi, update_pi_from_scores,
    update_theta, EStepOutcome,
};
pub use gem::{gem_fit, gem_fit_observed, infer_new_document, FitResult, GemObserver, TopicSharing, GLOBAL_OWNER};
pub use init::{clustered_topics, fit_topic, kmeans, TopicInit};
pub use mstep::{learning_rate, m_step, project_to_ball, topic_gradient};
pub use residual::{compute_topic_residuals, log_word_topic_prob, max_normalization_error, residual_gradient};

use ndarray::{Array1, Array2, ArrayView1};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::Scalar;

/// Inference hyperparameters. `alpha` has one entry per topic, null topic first.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams<S> {
    pub num_topics: usize,
    pub alpha: Vec<S>,
    /// Radius of the ball every topic embedding is confined to.
    pub gamma: S,
    /// Initial learning rate λ₀.
    pub lambda0: S,
    /// Length threshold L₀ of the learning-rate schedule.
    pub length_threshold: usize,
    pub gem_iters: usize,
    pub e_tol: S,
    pub e_max: usize,
    /// Seeds the random parts of initialization: the k-means restarts of
    /// [`TopicInit::Clustered`], and the first E-step proportions whenever
    /// some non-null topic starts at zero.
    pub seed: u64,
    pub init: TopicInit,
}

impl<S: Scalar> Hyperparams<S> {
    /// Defaults: α = 0.1, γ = 7, λ₀ = 0.1, L₀ = 500, 100 GEM iterations,
    /// E-step tolerance 1e-4 with at most 100 alternations.
    pub fn new(num_topics: usize) -> Self {
        Self {
            num_topics,
            alpha: vec![S::lit(0.1); num_topics],
            gamma: S::lit(7.0),
            lambda0: S::lit(0.1),
            length_threshold: 500,
            gem_iters: 100,
            e_tol: S::lit(1e-4),
            e_max: 100,
            seed: 0,
            init: TopicInit::Zero,
        }
    }

    pub fn with_alpha(mut self, alpha: S) -> Self {
        self.alpha = vec![alpha; self.num_topics];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparams(m));
        if self.num_topics < 1 {
            return bad("K must be at least 1".into());
        }
        if self.alpha.len() != self.num_topics {
            return bad(format!(
                "alpha has {} entries, expected K = {}",
                self.alpha.len(),
                self.num_topics
            ));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > S::zero()) || !a.is_finite()) {
            return bad(format!("alpha entries must be > 0, got {a}"));
        }
        if !(self.gamma > S::zero()) || !self.gamma.is_finite() {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.lambda0 > S::zero()) || !self.lambda0.is_finite() {
            return bad(format!("lambda0 must be > 0, got {}", self.lambda0));
        }
        if self.length_threshold < 1 {
            return bad("L0 must be at least 1".into());
        }
        if !(self.e_tol > S::zero()) {
            return bad(format!("e_tol must be > 0, got {}", self.e_tol));
        }
        if self.e_max < 1 {
            return bad("e_max must be at least 1".into());
        }
        Ok(())
    }
}

/// N×K topic embeddings with their residuals. Column 0 is the null topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSet<S> {
    pub topics: Array2<S>,
    pub residuals: Array1<S>,
    pub owner: String,
}

impl<S: Scalar> TopicSet<S> {
    /// All-zero topics; every residual is exactly zero.
    pub fn zeros(dim: usize, num_topics: usize, owner: impl Into<String>) -> Self {
        Self {
            topics: Array2::zeros((dim, num_topics)),
            residuals: Array1::zeros(num_topics),
            owner: owner.into(),
        }
    }

    /// Wraps `topics` and computes consistent residuals.
    pub fn from_topics(
        topics: Array2<S>,
        embeddings: &EmbeddingMatrix<S>,
        unigram: &[S],
        owner: impl Into<String>,
    ) -> Result<Self> {
        let residuals = compute_topic_residuals(embeddings, unigram, &topics)?;
        Ok(Self {
            topics,
            residuals,
            owner: owner.into(),
        })
    }

    pub fn num_topics(&self) -> usize {
        self.topics.ncols()
    }

    pub fn dim(&self) -> usize {
        self.topics.nrows()
    }

    pub fn topic(&self, k: usize) -> ArrayView1<'_, S> {
        self.topics.column(k)
    }

    pub fn refresh_residuals(&mut self, embeddings: &EmbeddingMatrix<S>, unigram: &[S]) -> Result<()> {
        self.residuals = compute_topic_residuals(embeddings, unigram, &self.topics)?;
        Ok(())
    }

    /// L×K matrix of `v_w · t_k + r_k` for each token of a document.
    pub fn token_scores(&self, embeddings: &EmbeddingMatrix<S>, tokens: &[usize]) -> Array2<S> {
        let mut scores = embeddings.gather(tokens).dot(&self.topics);
        scores += &self.residuals;
        scores
    }

    pub fn max_topic_norm(&self) -> S {
        self.topics
            .columns()
            .into_iter()
            .map(|c| c.dot(&c).sqrt())
            .fold(S::zero(), S::max)
    }
}

/// Variational state of one document: L×K responsibilities and Dirichlet parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVariational<S> {
    pub pi: Array2<S>,
    pub theta: Array1<S>,
}

impl<S: Scalar> DocVariational<S> {
    pub fn len(&self) -> usize {
        self.pi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.nrows() == 0
    }

    /// Expected topic counts Σ_j π_jk.
    pub fn topic_mass(&self) -> Array1<S> {
        self.pi.sum_axis(ndarray::Axis(0))
    }
}

/// Trained topic sets, one per owner (category, or [`GLOBAL_OWNER`]), sorted by owner.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<S> {
    pub topic_sets: Vec<TopicSet<S>>,
    pub hyper: Hyperparams<S>,
    pub elbo_trace: Vec<S>,
}

impl<S: Scalar> ModelState<S> {
    pub fn topic_set(&self, owner: &str) -> Option<&TopicSet<S>> {
        self.topic_sets.iter().find(|t| t.owner == owner)
    }

    pub fn owners(&self) -> Vec<&str> {
        self.topic_sets.iter().map(|t| t.owner.as_str()).collect()
    }

    pub fn dim(&self) -> usize {
        self.topic_sets.first().map_or(0, TopicSet::dim)
    }
}
