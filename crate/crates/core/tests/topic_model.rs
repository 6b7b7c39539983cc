use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use topicvec::generator::{generate_synthetic_corpus, word_distribution, SyntheticSpec};
use topicvec::representation::merge_topic_sets;
use topicvec::topic_model::{e_step_document, elbo_core, gem_fit, infer_new_document, TopicInit, TopicSharing};
use topicvec::{DocVariational, EmbeddingMatrix, Hyperparams, TopicSet};

struct Instance {
    v: EmbeddingMatrix<f64>,
    u: Vec<f64>,
    ts: TopicSet<f64>,
}

fn instance(rng: &mut ChaCha8Rng, w: usize, n: usize, k: usize) -> Instance {
    let v = EmbeddingMatrix::new(Array2::from_shape_fn((w, n), |_| rng.random_range(-1.0..1.0))).unwrap();
    let raw: Vec<f64> = (0..w).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let u: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let topics = Array2::from_shape_fn((n, k), |(_, c)| if c == 0 { 0.0 } else { rng.random_range(-1.5..1.5) });
    let ts = TopicSet::from_topics(topics, &v, &u, "g").unwrap();
    Instance { v, u, ts }
}

/// log P(w | k) by direct summation, no shifting.
fn naive_log_prob(inst: &Instance, w: usize, k: usize) -> f64 {
    let t = inst.ts.topics.column(k);
    let z: f64 = (0..inst.u.len()).map(|s| inst.u[s] * inst.v.row(s).dot(&t).exp()).sum();
    inst.u[w].ln() + inst.v.row(w).dot(&t) - z.ln()
}

/// Coordinate ascent written out with plain loops.
fn oracle_e_step(inst: &Instance, tokens: &[usize], alpha: &[f64], rounds: usize) -> Vec<f64> {
    let k = alpha.len();
    let l = tokens.len() as f64;
    let mut theta: Vec<f64> = alpha.iter().map(|a| a + l / k as f64).collect();
    for _ in 0..rounds {
        let mut next = alpha.to_vec();
        for &w in tokens {
            let e: Vec<f64> = (0..k)
                .map(|c| (digamma(theta[c]) + naive_log_prob(inst, w, c)).exp())
                .collect();
            let z: f64 = e.iter().sum();
            for c in 0..k {
                next[c] += e[c] / z;
            }
        }
        theta = next;
    }
    theta
}

#[test]
fn e_step_matches_long_run_oracle() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = instance(&mut rng, 5, 2, 2);
        let tokens: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
        let mut hyper = Hyperparams::<f64>::new(2);
        hyper.e_tol = 1e-12;
        hyper.e_max = 200;
        let got = e_step_document(&tokens, &inst.ts, &inst.v, &hyper, &[true, true]).unwrap();
        let want = oracle_e_step(&inst, &tokens, &hyper.alpha, 200);
        for (g, w) in got.state.theta.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6, "seed {seed}: {g} vs {w}");
        }
    }
}

fn naive_elbo(inst: &Instance, docs: &[(Vec<usize>, DocVariational<f64>)], alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for (tokens, st) in docs {
        let k = st.theta.len();
        let theta0: f64 = st.theta.iter().sum();
        let e_log_phi: Vec<f64> = st.theta.iter().map(|&t| digamma(t) - digamma(theta0)).collect();
        for c in 0..k {
            total += (alpha[c] - 1.0) * e_log_phi[c];
        }
        for (j, &w) in tokens.iter().enumerate() {
            for c in 0..k {
                let p = st.pi[[j, c]];
                // log u_w is a constant of the objective and left out
                total += p * (e_log_phi[c] + naive_log_prob(inst, w, c) - inst.u[w].ln());
                if p > 0.0 {
                    total -= p * p.ln();
                }
            }
        }
        let ln_beta: f64 = st.theta.iter().map(|&t| ln_gamma(t)).sum::<f64>() - ln_gamma(theta0);
        total += ln_beta + (theta0 - k as f64) * digamma(theta0)
            - st.theta.iter().map(|&t| (t - 1.0) * digamma(t)).sum::<f64>();
    }
    total
}

#[test]
fn elbo_matches_naive_summation() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let (w, k) = (12, 3);
        let inst = instance(&mut rng, w, 3, k);
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..2.0)).collect();
        let docs: Vec<(Vec<usize>, DocVariational<f64>)> = (0..3)
            .map(|_| {
                let len = rng.random_range(0..8);
                let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(0..w)).collect();
                let mut pi = Array2::from_shape_fn((len, k), |_| rng.random_range(0.01..1.0));
                for mut row in pi.rows_mut() {
                    let s = row.sum();
                    row /= s;
                }
                let theta = Array1::from_shape_fn(k, |_| rng.random_range(0.1..5.0));
                (tokens, DocVariational { pi, theta })
            })
            .collect();
        let got = elbo_core(docs.iter().map(|(t, s)| (t.as_slice(), s, &inst.ts)), &inst.v, &alpha);
        let want = naive_elbo(&inst, &docs, &alpha);
        assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
    }
}

fn recovery_fixture() -> topicvec::generator::SyntheticCorpus<f64> {
    let mut spec = SyntheticSpec::new(5, 10, 50, 200, 100);
    spec.seed = 2024;
    generate_synthetic_corpus(&spec, None).unwrap()
}

#[test]
fn elbo_trace_rises_from_third_iteration() {
    let s = recovery_fixture();
    let mut hyper = Hyperparams::<f64>::new(5);
    hyper.init = TopicInit::Clustered;
    hyper.lambda0 = 0.01;
    let fit = gem_fit(
        &s.corpus.documents,
        TopicSharing::Global,
        &s.embeddings,
        &s.unigram,
        &hyper,
    )
    .unwrap();
    let trace = &fit.model.elbo_trace;
    assert_eq!(trace.len(), 100);
    for l in 3..trace.len() {
        assert!(
            trace[l] >= trace[l - 1] - 1e-9 * trace[l - 1].abs(),
            "iteration {}: {} after {}",
            l + 1,
            trace[l],
            trace[l - 1]
        );
    }
}

#[test]
fn reinferred_training_document_matches_training_state() {
    let s = recovery_fixture();
    let mut hyper = Hyperparams::<f64>::new(5);
    hyper.gem_iters = 10;
    let docs = &s.corpus.documents[..40];
    let fit = gem_fit(docs, TopicSharing::Global, &s.embeddings, &s.unigram, &hyper).unwrap();
    let merged = merge_topic_sets(&fit.model, &s.embeddings, &s.unigram).unwrap();
    for (doc, st) in docs.iter().zip(&fit.doc_states) {
        let again = infer_new_document(&doc.tokens, &merged, &s.embeddings, &hyper).unwrap();
        for (a, b) in again.theta.iter().zip(&st.theta) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(
            again,
            infer_new_document(&doc.tokens, &merged, &s.embeddings, &hyper).unwrap()
        );
    }
    let empty = infer_new_document(&[], &merged, &s.embeddings, &hyper).unwrap();
    assert_eq!(empty.theta.to_vec(), merged.alpha);
    assert_eq!(empty.pi.nrows(), 0);
}

#[test]
fn generated_tokens_follow_topic_distributions() {
    let mut spec = SyntheticSpec::new(3, 4, 20, 100, 1000);
    spec.seed = 11;
    let s = generate_synthetic_corpus::<f64>(&spec, None).unwrap();
    let mut counts = vec![vec![0usize; 20]; 3];
    for (doc, z) in s.corpus.documents.iter().zip(&s.assignments) {
        for (&w, &k) in doc.tokens.iter().zip(z) {
            counts[k][w] += 1;
        }
    }
    assert_eq!(counts.iter().flatten().sum::<usize>(), 100_000);
    for (k, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            continue;
        }
        let p = word_distribution(&s.planted[0], &s.embeddings, &s.unigram, k);
        for (w, &c) in row.iter().enumerate() {
            let freq = c as f64 / n as f64;
            let se = (p[w] * (1.0 - p[w]) / n as f64).sqrt();
            assert!(
                (freq - p[w]).abs() <= 3.0 * se,
                "topic {k} word {w}: {freq} vs {}",
                p[w]
            );
        }
    }
}
