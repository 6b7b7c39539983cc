//! Synthetic corpora sampled from the topic-embedding generative process.
//! Used as a recovery oracle and as test fixtures.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::topic_model::TopicSet;
use crate::Scalar;

/// Owner name of a planted topic set for an unlabeled corpus.
pub const PLANTED_OWNER: &str = "planted";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_topics: usize,
    pub dim: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub doc_length: usize,
    /// Dirichlet concentration, one entry per topic.
    pub alpha: Vec<f64>,
    pub gamma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(num_topics: usize, dim: usize, vocab_size: usize, num_docs: usize, doc_length: usize) -> Self {
        Self {
            num_topics,
            dim,
            vocab_size,
            num_docs,
            doc_length,
            alpha: vec![0.1; num_topics],
            gamma: 7.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("K", self.num_topics),
            ("N", self.dim),
            ("W", self.vocab_size),
            ("M", self.num_docs),
            ("doc_length", self.doc_length),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c < 1) {
            return Err(Error::InvalidHyperparams(format!("{name} must be at least 1")));
        }
        if self.alpha.len() != self.num_topics {
            return Err(Error::InvalidHyperparams(format!(
                "alpha has {} entries, expected K = {}",
                self.alpha.len(),
                self.num_topics
            )));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidHyperparams("alpha entries must be > 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus<S> {
    pub corpus: Corpus,
    pub embeddings: EmbeddingMatrix<S>,
    pub unigram: Vec<S>,
    /// One planted set per class; a single set for an unlabeled corpus.
    pub planted: Vec<TopicSet<S>>,
    /// Planted mixing proportions per document.
    pub phi: Vec<Array1<S>>,
    /// Planted topic of every token.
    pub assignments: Vec<Vec<usize>>,
}

/// Uniform draw from the solid ball of radius `gamma` in `dim` dimensions.
pub fn sample_from_hyperball<S: Scalar, R: Rng + ?Sized>(dim: usize, gamma: S, rng: &mut R) -> Array1<S> {
    loop {
        let dir: Array1<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.dot(&dir).sqrt();
        if norm > 0.0 {
            let u: f64 = rng.random();
            let radius = u.powf(1.0 / dim as f64);
            return dir.mapv(|x| gamma * S::lit(radius * x / norm));
        }
    }
}

/// `P(w | k)` over the whole vocabulary, as f64 sampling weights.
pub fn word_distribution<S: Scalar>(
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    topic: usize,
) -> Vec<f64> {
    let logits = embeddings.vectors().dot(&topic_set.topic(topic));
    logits
        .iter()
        .zip(unigram)
        .map(|(&l, &u)| (u * (l + topic_set.residuals[topic]).exp()).as_f64())
        .collect()
}

fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("alpha validated").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        return draws.iter().map(|x| x / total).collect();
    }
    // every gamma draw underflowed; fall back to a vertex
    let mut one_hot = vec![0.0; alpha.len()];
    one_hot[rng.random_range(0..alpha.len())] = 1.0;
    one_hot
}

fn planted_topics<S: Scalar, R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    owner: String,
    rng: &mut R,
) -> Result<TopicSet<S>> {
    let mut topics = Array2::zeros((spec.dim, spec.num_topics));
    for k in 1..spec.num_topics {
        topics
            .column_mut(k)
            .assign(&sample_from_hyperball(spec.dim, S::lit(spec.gamma), rng));
    }
    TopicSet::from_topics(topics, embeddings, unigram, owner)
}

/// Samples an unlabeled corpus. Word embeddings are standard Gaussian draws
/// unless `embeddings` is given (it must have `vocab_size` rows of `dim` columns).
pub fn generate_synthetic_corpus<S: Scalar>(
    spec: &SyntheticSpec,
    embeddings: Option<&EmbeddingMatrix<S>>,
) -> Result<SyntheticCorpus<S>> {
    generate(spec, 1, embeddings)
}

/// Samples `num_classes` classes of `spec.num_docs` documents each. Every class
/// has its own planted topic set; embeddings and unigram are shared.
/// Labels are `class0`, `class1`, ...
pub fn generate_labeled_corpus<S: Scalar>(
    spec: &SyntheticSpec,
    num_classes: usize,
    embeddings: Option<&EmbeddingMatrix<S>>,
) -> Result<SyntheticCorpus<S>> {
    if num_classes < 1 {
        return Err(Error::InvalidHyperparams("need at least one class".into()));
    }
    generate(spec, num_classes, embeddings)
}

fn generate<S: Scalar>(
    spec: &SyntheticSpec,
    num_classes: usize,
    embeddings: Option<&EmbeddingMatrix<S>>,
) -> Result<SyntheticCorpus<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let embeddings = match embeddings {
        Some(e) if e.len() != spec.vocab_size || e.dim() != spec.dim => {
            return Err(Error::DimensionMismatch(format!(
                "embeddings are {}x{}, spec wants {}x{}",
                e.len(),
                e.dim(),
                spec.vocab_size,
                spec.dim
            )))
        }
        Some(e) => e.clone(),
        None => {
            let v = Array2::from_shape_simple_fn((spec.vocab_size, spec.dim), || {
                S::lit(rng.sample::<f64, _>(StandardNormal))
            });
            EmbeddingMatrix::new(v)?
        }
    };
    let p = 1.0 / spec.vocab_size as f64;
    let words: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i}")).collect();
    let vocabulary = Vocabulary::from_parts(words, vec![p; spec.vocab_size])?;
    let unigram: Vec<S> = vocabulary.unigram_as();

    let labeled = num_classes > 1;
    let mut planted = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let owner = if labeled {
            format!("class{c}")
        } else {
            PLANTED_OWNER.to_string()
        };
        planted.push(planted_topics(spec, &embeddings, &unigram, owner, &mut rng)?);
    }

    let mut documents = Vec::with_capacity(num_classes * spec.num_docs);
    let mut phis = Vec::with_capacity(num_classes * spec.num_docs);
    let mut assignments = Vec::with_capacity(num_classes * spec.num_docs);
    for set in &planted {
        let samplers: Vec<WeightedIndex<f64>> = (0..spec.num_topics)
            .map(|k| {
                WeightedIndex::new(word_distribution(set, &embeddings, &unigram, k))
                    .map_err(|e| Error::Invalid(format!("topic {k} word distribution: {e}")))
            })
            .collect::<Result<_>>()?;
        for _ in 0..spec.num_docs {
            let phi = sample_dirichlet(&spec.alpha, &mut rng);
            let topic_picker = WeightedIndex::new(&phi).expect("normalized proportions");
            let z: Vec<usize> = (0..spec.doc_length).map(|_| topic_picker.sample(&mut rng)).collect();
            let tokens = z.iter().map(|&k| samplers[k].sample(&mut rng)).collect();
            assignments.push(z);
            documents.push(Document {
                doc_id: format!("doc{:05}", documents.len()),
                tokens,
                label: labeled.then(|| set.owner.clone()),
            });
            phis.push(phi.into_iter().map(S::lit).collect());
        }
    }
    Ok(SyntheticCorpus {
        corpus: Corpus { documents, vocabulary },
        embeddings,
        unigram,
        planted,
        phi: phis,
        assignments,
    })
}
