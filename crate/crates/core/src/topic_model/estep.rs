use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::special::digamma;
use crate::Scalar;

use super::elbo::doc_elbo;
use super::{DocVariational, Hyperparams, TopicSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EStepOutcome<S> {
    pub state: DocVariational<S>,
    /// Number of π/θ alternations performed.
    pub alternations: usize,
    /// False when `e_max` alternations ran without reaching `e_tol`.
    pub converged: bool,
}

/// π_jk ∝ exp(ψ(θ_k) + v_wj · t_k + r_k) over active topics; inactive entries are 0.
pub fn update_pi<S: Scalar>(
    tokens: &[usize],
    theta: &Array1<S>,
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    active: &[bool],
) -> Result<Array2<S>> {
    let scores = topic_set.token_scores(embeddings, tokens);
    update_pi_from_scores(scores.view(), theta, active)
}

/// Responsibility update given precomputed `v_w · t_k + r_k` scores (L×K).
pub fn update_pi_from_scores<S: Scalar>(
    scores: ArrayView2<'_, S>,
    theta: &Array1<S>,
    active: &[bool],
) -> Result<Array2<S>> {
    let k = scores.ncols();
    debug_assert_eq!(theta.len(), k);
    debug_assert_eq!(active.len(), k);
    if !active.iter().any(|&a| a) {
        return Err(Error::NoActiveTopics);
    }
    let psi: Vec<S> = theta.iter().map(|&t| digamma(t)).collect();
    let mut pi = Array2::zeros(scores.raw_dim());
    for (mut row, score_row) in pi.rows_mut().into_iter().zip(scores.rows()) {
        let mut max = S::neg_infinity();
        for t in 0..k {
            if active[t] {
                let e = psi[t] + score_row[t];
                row[t] = e;
                max = max.max(e);
            }
        }
        let mut total = S::zero();
        for t in 0..k {
            if active[t] {
                let e = (row[t] - max).exp();
                row[t] = e;
                total += e;
            }
        }
        row.mapv_inplace(|x| x / total);
    }
    Ok(pi)
}

/// θ_k = Σ_j π_jk + α_k.
pub fn update_theta<S: Scalar>(pi: &Array2<S>, alpha: &[S]) -> Array1<S> {
    let mut theta = pi.sum_axis(Axis(0));
    theta.zip_mut_with(&Array1::from(alpha.to_vec()), |t, &a| *t += a);
    theta
}

/// Uninformative start: α_k + L / K_active on active topics, α_k elsewhere.
pub fn initial_theta<S: Scalar>(len: usize, alpha: &[S], active: &[bool]) -> Array1<S> {
    let n_active = active.iter().filter(|&&a| a).count().max(1);
    let share = S::from_usize_lossy(len) / S::from_usize_lossy(n_active);
    alpha
        .iter()
        .zip(active)
        .map(|(&a, &on)| if on { a + share } else { a })
        .collect()
}

fn run_e_step<S: Scalar>(
    scores: ArrayView2<'_, S>,
    alpha: &[S],
    active: &[bool],
    mut theta: Array1<S>,
    tol: S,
    max_alternations: usize,
    mut observe: impl FnMut(&Array2<S>, &Array1<S>),
) -> Result<EStepOutcome<S>> {
    let mut pi = Array2::zeros(scores.raw_dim());
    let mut converged = false;
    let mut alternations = 0;
    while alternations < max_alternations {
        pi = update_pi_from_scores(scores, &theta, active)?;
        observe(&pi, &theta);
        let next = update_theta(&pi, alpha);
        observe(&pi, &next);
        let delta = theta
            .iter()
            .zip(next.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max);
        theta = next;
        alternations += 1;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("E-step stopped after {alternations} alternations without converging");
    }
    Ok(EStepOutcome {
        state: DocVariational { pi, theta },
        alternations,
        converged,
    })
}

/// Coordinate ascent on one document's (π, θ) with the topic set frozen.
pub fn e_step_document<S: Scalar>(
    tokens: &[usize],
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    hyper: &Hyperparams<S>,
    active: &[bool],
) -> Result<EStepOutcome<S>> {
    let theta0 = initial_theta(tokens.len(), &hyper.alpha, active);
    e_step_document_from(tokens, topic_set, embeddings, hyper, active, theta0)
}

/// Same as [`e_step_document`], starting from a caller-supplied θ.
pub fn e_step_document_from<S: Scalar>(
    tokens: &[usize],
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    hyper: &Hyperparams<S>,
    active: &[bool],
    theta0: Array1<S>,
) -> Result<EStepOutcome<S>> {
    check_alpha(hyper, topic_set)?;
    let scores = topic_set.token_scores(embeddings, tokens);
    run_e_step(
        scores.view(),
        &hyper.alpha,
        active,
        theta0,
        hyper.e_tol,
        hyper.e_max,
        |_, _| {},
    )
}

/// Runs [`e_step_document`] and also returns the document's ELBO
/// contribution after every half-update (π, then θ, per alternation).
pub fn e_step_document_traced<S: Scalar>(
    tokens: &[usize],
    topic_set: &TopicSet<S>,
    embeddings: &EmbeddingMatrix<S>,
    hyper: &Hyperparams<S>,
    active: &[bool],
) -> Result<(EStepOutcome<S>, Vec<S>)> {
    check_alpha(hyper, topic_set)?;
    let scores = topic_set.token_scores(embeddings, tokens);
    let theta0 = initial_theta(tokens.len(), &hyper.alpha, active);
    let mut trace = Vec::new();
    let outcome = run_e_step(
        scores.view(),
        &hyper.alpha,
        active,
        theta0,
        hyper.e_tol,
        hyper.e_max,
        |pi, theta| {
            let state = DocVariational {
                pi: pi.clone(),
                theta: theta.clone(),
            };
            trace.push(doc_elbo(scores.view(), &state, &hyper.alpha));
        },
    )?;
    Ok((outcome, trace))
}

fn check_alpha<S: Scalar>(hyper: &Hyperparams<S>, topic_set: &TopicSet<S>) -> Result<()> {
    if hyper.alpha.len() != topic_set.num_topics() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} entries but topic set has {} topics",
            hyper.alpha.len(),
            topic_set.num_topics()
        )));
    }
    Ok(())
}
