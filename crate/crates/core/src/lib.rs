//! Topic embeddings learned on top of frozen word embeddings.
//!
//! Each topic is a vector in the word-embedding space. A word's probability
//! under topic `k` is its unigram probability tilted by `exp(v_w · t_k + r_k)`,
//! where the residual `r_k` normalizes the distribution. Documents carry a
//! Dirichlet-distributed mixture over topics; inference is mean-field
//! variational EM with a projected gradient M-step.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! `*64` aliases below are what the CLI uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod generator;
pub mod relevance;
pub mod representation;
pub mod scalar;
pub mod special;
pub mod topic_model;

pub use corpus::{Corpus, Document, Vocabulary};
pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use topic_model::{DocVariational, Hyperparams, ModelState, TopicSet};

pub type EmbeddingMatrix64 = EmbeddingMatrix<f64>;
pub type EmbeddingMatrix32 = EmbeddingMatrix<f32>;
pub type TopicSet64 = TopicSet<f64>;
pub type TopicSet32 = TopicSet<f32>;
pub type DocVariational64 = DocVariational<f64>;
pub type DocVariational32 = DocVariational<f32>;
pub type Hyperparams64 = Hyperparams<f64>;
pub type Hyperparams32 = Hyperparams<f32>;
pub type ModelState64 = ModelState<f64>;
pub type ModelState32 = ModelState<f32>;
pub type MergedTopicSpace64 = representation::MergedTopicSpace<f64>;
