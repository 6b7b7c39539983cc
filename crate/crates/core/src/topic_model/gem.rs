use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::corpus::Document;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::representation::MergedTopicSpace;
use crate::Scalar;

use super::elbo::elbo_core;
use super::estep::{e_step_document, update_theta, EStepOutcome};
use super::init::{clustered_topics, TopicInit};
use super::mstep::{m_step, topic_gradient};
use super::{DocVariational, Hyperparams, ModelState, TopicSet};

/// Owner name of the single corpus-wide topic set.
pub const GLOBAL_OWNER: &str = "global";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicSharing {
    /// One topic set for the whole corpus.
    Global,
    /// One topic set per document label; every document must be labeled.
    PerCategory,
}

#[derive(Debug, Clone)]
pub struct FitResult<S> {
    pub model: ModelState<S>,
    /// Variational state of every training document against the final topics.
    pub doc_states: Vec<DocVariational<S>>,
    /// Index into `model.topic_sets` for every document.
    pub assignment: Vec<usize>,
}

/// Hooks into [`gem_fit_observed`]. The final E-step against the trained
/// topics is reported with `iteration = gem_iters + 1`.
pub trait GemObserver<S> {
    fn after_e_step(&mut self, _iteration: usize, _states: &[DocVariational<S>], _assignment: &[usize]) {}
    fn after_m_step(&mut self, _iteration: usize, _topic_sets: &[TopicSet<S>]) {}
}

impl<S> GemObserver<S> for () {}

/// Runs `hyper.gem_iters` rounds of {E-step over all documents, one M-step
/// per topic set} from all-zero topics, then a final E-step.
pub fn gem_fit<S: Scalar>(
    docs: &[Document],
    sharing: TopicSharing,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    hyper: &Hyperparams<S>,
) -> Result<FitResult<S>> {
    gem_fit_observed(docs, sharing, embeddings, unigram, hyper, &mut ())
}

pub fn gem_fit_observed<S: Scalar>(
    docs: &[Document],
    sharing: TopicSharing,
    embeddings: &EmbeddingMatrix<S>,
    unigram: &[S],
    hyper: &Hyperparams<S>,
    observer: &mut dyn GemObserver<S>,
) -> Result<FitResult<S>> {
    hyper.validate()?;
    if unigram.len() != embeddings.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} unigram probabilities for {} embedding rows",
            unigram.len(),
            embeddings.len()
        )));
    }
    if let Some(doc) = docs.iter().find(|d| d.tokens.iter().any(|&t| t >= embeddings.len())) {
        return Err(Error::Invalid(format!(
            "document `{}` has a token id outside the vocabulary",
            doc.doc_id
        )));
    }
    let (owners, assignment) = partition(docs, sharing)?;
    let dim = embeddings.dim();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); owners.len()];
    for (d, &g) in assignment.iter().enumerate() {
        members[g].push(d);
    }
    let mut topic_sets: Vec<TopicSet<S>> = match hyper.init {
        TopicInit::Zero => owners
            .iter()
            .map(|o| TopicSet::zeros(dim, hyper.num_topics, o.clone()))
            .collect(),
        TopicInit::Clustered => owners
            .iter()
            .zip(&members)
            .map(|(o, idx)| {
                let group: Vec<&[usize]> = idx.iter().map(|&d| docs[d].tokens.as_slice()).collect();
                clustered_topics(
                    &group,
                    embeddings,
                    unigram,
                    hyper.num_topics,
                    hyper.gamma,
                    hyper.seed,
                    o,
                )
            })
            .collect::<Result<_>>()?,
    };
    // first E-step is randomized while some non-null topic is still zero
    let symmetric = topic_sets.iter().any(|ts| {
        ts.topics
            .columns()
            .into_iter()
            .skip(1)
            .any(|c| c.iter().all(|x| x.is_zero()))
    });
    let active = vec![true; hyper.num_topics];
    let mut elbo_trace = Vec::with_capacity(hyper.gem_iters);

    for iteration in 1..=hyper.gem_iters {
        let seeded = iteration == 1 && symmetric;
        let states = e_step_all(docs, &assignment, &topic_sets, embeddings, hyper, &active, seeded)?;
        observer.after_e_step(iteration, &states, &assignment);

        for (set, idx) in topic_sets.iter_mut().zip(&members) {
            let grad = topic_gradient(
                idx.iter().map(|&d| (docs[d].tokens.as_slice(), &states[d])),
                set,
                embeddings,
                unigram,
            );
            let total_len: usize = idx.iter().map(|&d| docs[d].len()).sum();
            *set = m_step(set, &grad, iteration, total_len, hyper, embeddings, unigram)?;
        }
        observer.after_m_step(iteration, &topic_sets);

        let elbo = elbo_core(
            docs.iter()
                .zip(&states)
                .zip(&assignment)
                .map(|((doc, st), &g)| (doc.tokens.as_slice(), st, &topic_sets[g])),
            embeddings,
            &hyper.alpha,
        );
        log::info!("GEM iteration {iteration}: ELBO {elbo}");
        elbo_trace.push(elbo);
    }

    let doc_states = e_step_all(docs, &assignment, &topic_sets, embeddings, hyper, &active, false)?;
    observer.after_e_step(hyper.gem_iters + 1, &doc_states, &assignment);

    Ok(FitResult {
        model: ModelState {
            topic_sets,
            hyper: hyper.clone(),
            elbo_trace,
        },
        doc_states,
        assignment,
    })
}

fn partition(docs: &[Document], sharing: TopicSharing) -> Result<(Vec<String>, Vec<usize>)> {
    match sharing {
        TopicSharing::Global => Ok((vec![GLOBAL_OWNER.to_string()], vec![0; docs.len()])),
        TopicSharing::PerCategory => {
            let mut owners: Vec<String> = Vec::new();
            for doc in docs {
                match &doc.label {
                    Some(l) => owners.push(l.clone()),
                    None => {
                        return Err(Error::Invalid(format!(
                            "per-category topics need labels; document `{}` has none",
                            doc.doc_id
                        )))
                    }
                }
            }
            owners.sort();
            owners.dedup();
            if owners.is_empty() {
                return Err(Error::EmptyVocabulary);
            }
            let assignment = docs
                .iter()
                .map(|d| {
                    let label = d.label.as_deref().expect("checked above");
                    owners
                        .binary_search_by(|o| o.as_str().cmp(label))
                        .expect("owner exists")
                })
                .collect();
            Ok((owners, assignment))
        }
    }
}

fn e_step_all<S: Scalar>(
    docs: &[Document],
    assignment: &[usize],
    topic_sets: &[TopicSet<S>],
    embeddings: &EmbeddingMatrix<S>,
    hyper: &Hyperparams<S>,
    active: &[bool],
    seeded: bool,
) -> Result<Vec<DocVariational<S>>> {
    let outcomes: Vec<EStepOutcome<S>> = docs
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let set = &topic_sets[assignment[d]];
            if seeded {
                Ok(EStepOutcome {
                    state: random_state(doc.len(), &hyper.alpha, hyper.seed, d as u64),
                    alternations: 0,
                    converged: true,
                })
            } else {
                e_step_document(&doc.tokens, set, embeddings, hyper, active)
            }
        })
        .collect::<Result<_>>()?;
    let stalled = outcomes.iter().filter(|o| !o.converged).count();
    if stalled > 0 {
        log::debug!("{stalled} documents hit e_max");
    }
    Ok(outcomes.into_iter().map(|o| o.state).collect())
}

/// Responsibilities drawn per token from a flat Dirichlet, seeded per
/// document, with the matching θ = Σ_j π_j + α.
fn random_state<S: Scalar>(len: usize, alpha: &[S], seed: u64, doc: u64) -> DocVariational<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(doc);
    let mut pi = Array2::zeros((len, alpha.len()));
    for mut row in pi.rows_mut() {
        let draws: Vec<f64> = alpha.iter().map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        for (p, x) in row.iter_mut().zip(draws) {
            *p = S::lit(x / total);
        }
    }
    let theta = update_theta(&pi, alpha);
    DocVariational { pi, theta }
}

/// One E-step of a new document against the merged topic space; topics stay frozen.
pub fn infer_new_document<S: Scalar>(
    tokens: &[usize],
    merged: &MergedTopicSpace<S>,
    embeddings: &EmbeddingMatrix<S>,
    hyper: &Hyperparams<S>,
) -> Result<DocVariational<S>> {
    let mut local = hyper.clone();
    local.num_topics = merged.num_topics();
    local.alpha = merged.alpha.clone();
    let active = vec![true; local.num_topics];
    Ok(e_step_document(tokens, &merged.space, embeddings, &local, &active)?.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn doc(tokens: Vec<usize>, label: Option<&str>) -> Document {
        Document {
            doc_id: format!("{tokens:?}"),
            tokens,
            label: label.map(str::to_string),
        }
    }

    #[test]
    fn zero_iterations_keep_zero_topics() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let u = [0.3, 0.3, 0.4];
        let mut hyper = Hyperparams::<f64>::new(3);
        hyper.gem_iters = 0;
        let docs = vec![doc(vec![0, 1, 2], None), doc(vec![2, 2], None)];
        let fit = gem_fit(&docs, TopicSharing::Global, &v, &u, &hyper).unwrap();
        assert_eq!(fit.model.topic_sets.len(), 1);
        assert!(fit.model.topic_sets[0].topics.iter().all(|&x| x == 0.0));
        assert!(fit.model.elbo_trace.is_empty());
        assert_eq!(fit.doc_states.len(), 2);
        assert!(fit.doc_states[0].pi.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn per_category_requires_labels() {
        let v = EmbeddingMatrix::new(array![[1.0]]).unwrap();
        let hyper = Hyperparams::<f64>::new(2);
        let docs = vec![doc(vec![0], Some("a")), doc(vec![0], None)];
        assert!(gem_fit(&docs, TopicSharing::PerCategory, &v, &[1.0], &hyper).is_err());
    }

    #[test]
    fn per_category_sets_sorted_by_label() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mut hyper = Hyperparams::<f64>::new(2);
        hyper.gem_iters = 3;
        let docs = vec![
            doc(vec![0, 0, 1], Some("zeta")),
            doc(vec![1, 1], Some("alpha")),
            doc(vec![0], Some("zeta")),
        ];
        let fit = gem_fit(&docs, TopicSharing::PerCategory, &v, &[0.5, 0.5], &hyper).unwrap();
        assert_eq!(fit.model.owners(), vec!["alpha", "zeta"]);
        assert_eq!(fit.assignment, vec![1, 0, 1]);
        assert_eq!(fit.model.elbo_trace.len(), 3);
    }

    #[test]
    fn fit_is_deterministic() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.2], [-0.5, 1.0], [0.3, -0.8], [0.9, 0.9]]).unwrap();
        let u = [0.25; 4];
        let mut hyper = Hyperparams::<f64>::new(3);
        hyper.gem_iters = 5;
        let docs = vec![
            doc(vec![0, 3, 3, 0], None),
            doc(vec![1, 2, 2], None),
            doc(vec![1, 0], None),
        ];
        let a = gem_fit(&docs, TopicSharing::Global, &v, &u, &hyper).unwrap();
        let b = gem_fit(&docs, TopicSharing::Global, &v, &u, &hyper).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.doc_states, b.doc_states);
    }

    #[test]
    fn random_state_is_stochastic_and_seeded() {
        let alpha = [0.1, 0.2, 0.3];
        let st: DocVariational<f64> = random_state(10, &alpha, 4, 2);
        for row in st.pi.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((st.theta.sum() - 10.6).abs() < 1e-12);
        assert_ne!(st.pi.row(0), st.pi.row(1));
        assert_eq!(st, random_state(10, &alpha, 4, 2));
        assert_ne!(st, random_state(10, &alpha, 4, 3));
    }

    #[test]
    fn clustered_start_on_one_document_still_separates_topics() {
        let v = EmbeddingMatrix::new(array![[1.0, 0.2], [-0.5, 1.0], [0.3, -0.8], [0.9, 0.9]]).unwrap();
        let u = [0.25; 4];
        let mut hyper = Hyperparams::<f64>::new(3);
        hyper.gem_iters = 5;
        hyper.init = TopicInit::Clustered;
        let docs = vec![doc(vec![0, 3, 3, 0, 1, 2, 2], None)];
        let fit = gem_fit(&docs, TopicSharing::Global, &v, &u, &hyper).unwrap();
        let t = &fit.model.topic_sets[0].topics;
        assert_ne!(t.column(1), t.column(2));
    }

    #[test]
    fn clustered_start_fits_distinct_topics() {
        let v = EmbeddingMatrix::new(array![[2.0, 0.0], [0.0, 2.0], [-2.0, 0.0], [0.0, -2.0]]).unwrap();
        let u = [0.25; 4];
        let mut hyper = Hyperparams::<f64>::new(3);
        hyper.gem_iters = 0;
        hyper.init = TopicInit::Clustered;
        let docs: Vec<Document> = (0..6)
            .map(|i| doc(if i % 2 == 0 { vec![0, 0, 0, 1] } else { vec![2, 2, 2, 3] }, None))
            .chain(std::iter::once(doc(vec![0, 1, 2, 3], None)))
            .collect();
        let fit = gem_fit(&docs, TopicSharing::Global, &v, &u, &hyper).unwrap();
        let t = &fit.model.topic_sets[0].topics;
        assert!(t.column(0).iter().all(|&x| x == 0.0));
        let (a, b) = (t.column(1), t.column(2));
        assert!(a.dot(&b) < 0.0, "{t:?}");
    }
}
