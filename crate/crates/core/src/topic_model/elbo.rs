use ndarray::ArrayView2;

use crate::embedding::EmbeddingMatrix;
use crate::special::{digamma, ln_gamma};
use crate::Scalar;

use super::{DocVariational, TopicSet};

/// One document's share of the variational objective, up to the additive
/// constant that does not depend on (π, θ, T).
///
/// `scores` holds `v_wj · t_k + r_k` for each token (L×K).
pub fn doc_elbo<S: Scalar>(scores: ArrayView2<'_, S>, state: &DocVariational<S>, alpha: &[S]) -> S {
    let theta = &state.theta;
    let k_count = theta.len();
    let theta0: S = theta.sum();
    let psi0 = digamma(theta0);
    let mass = state.topic_mass();
    let one = S::one();

    let mut total = S::zero();
    // E[log p(φ | α)] + E[log p(z | φ)] without the log-Beta(α) constant
    for k in 0..k_count {
        total += (mass[k] + alpha[k] - one) * (digamma(theta[k]) - psi0);
    }
    // Tr(Tᵀ Σ_j v_wj π_jᵀ) + rᵀ Σ_j π_j
    for (p, s) in state.pi.iter().zip(scores.iter()) {
        total += *p * *s;
    }
    // Dirichlet entropy
    let mut entropy = -ln_gamma(theta0) + (theta0 - S::from_usize_lossy(k_count)) * psi0;
    for &t in theta {
        entropy = entropy + ln_gamma(t) - (t - one) * digamma(t);
    }
    // categorical entropy, 0 · log 0 = 0
    for &p in &state.pi {
        if p > S::zero() {
            entropy -= p * p.ln();
        }
    }
    total + entropy
}

/// Sum of [`doc_elbo`] over `(tokens, state, topic set)` triples.
pub fn elbo_core<'a, S, I>(items: I, embeddings: &EmbeddingMatrix<S>, alpha: &[S]) -> S
where
    S: Scalar,
    I: IntoIterator<Item = (&'a [usize], &'a DocVariational<S>, &'a TopicSet<S>)>,
{
    items
        .into_iter()
        .map(|(tokens, state, ts)| {
            let scores = ts.token_scores(embeddings, tokens);
            doc_elbo(scores.view(), state, alpha)
        })
        .fold(S::zero(), |a, b| a + b)
}
