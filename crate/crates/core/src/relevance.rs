//! Word–topic relevance and topic-cloud export.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::representation::doc_topic_proportions;
use crate::topic_model::{DocVariational, TopicSet};
use crate::Scalar;

/// `freq · cos(v_w, t_k)`; zero when either vector is zero (in particular the null topic).
pub fn word_topic_relevance<S: Scalar>(
    word: usize,
    topic: usize,
    embeddings: &EmbeddingMatrix<S>,
    topic_set: &TopicSet<S>,
    freq: usize,
) -> S {
    let v = embeddings.row(word);
    let t = topic_set.topic(topic);
    let norms = v.dot(&v).sqrt() * t.dot(&t).sqrt();
    if norms.is_zero() {
        return S::zero();
    }
    S::from_usize_lossy(freq) * v.dot(&t) / norms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRelevance {
    pub word: String,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudTopic {
    pub topic_id: usize,
    /// Share among the exported topics.
    pub proportion: f64,
    pub words: Vec<WordRelevance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCloud {
    pub topics: Vec<CloudTopic>,
}

impl TopicCloud {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }
}

/// Picks the `top_n_topics` non-null topics with the largest proportion and,
/// for each, the `top_n_words` distinct document words by relevance.
/// Proportions are renormalized over the selected topics.
pub fn build_topic_cloud<S: Scalar>(
    tokens: &[usize],
    state: &DocVariational<S>,
    embeddings: &EmbeddingMatrix<S>,
    topic_set: &TopicSet<S>,
    vocabulary: &Vocabulary,
    top_n_topics: usize,
    top_n_words: usize,
) -> TopicCloud {
    let proportions = doc_topic_proportions(state);
    let mut ranked: Vec<usize> = (1..topic_set.num_topics()).collect();
    ranked.sort_by(|&a, &b| {
        proportions[b]
            .partial_cmp(&proportions[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    ranked.truncate(top_n_topics);
    let selected_mass: S = ranked.iter().map(|&k| proportions[k]).sum();

    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in tokens {
        *freq.entry(t).or_default() += 1;
    }

    let topics = ranked
        .iter()
        .map(|&k| {
            let mut words: Vec<(usize, S)> = freq
                .iter()
                .map(|(&w, &f)| (w, word_topic_relevance(w, k, embeddings, topic_set, f)))
                .collect();
            words.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            words.truncate(top_n_words);
            CloudTopic {
                topic_id: k,
                proportion: (proportions[k] / selected_mass).as_f64(),
                words: words
                    .into_iter()
                    .map(|(w, r)| WordRelevance {
                        word: vocabulary.word(w).to_string(),
                        relevance: r.as_f64(),
                    })
                    .collect(),
            }
        })
        .collect();
    TopicCloud { topics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fixture() -> (EmbeddingMatrix<f64>, TopicSet<f64>) {
        let v = EmbeddingMatrix::new(array![[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let ts = TopicSet::from_topics(array![[0.0, 3.0, 0.0], [0.0, 0.0, 5.0]], &v, &[0.3, 0.3, 0.4], "g").unwrap();
        (v, ts)
    }

    #[test]
    fn relevance_definition() {
        let (v, ts) = fixture();
        assert!((word_topic_relevance(0, 1, &v, &ts, 1) - 1.0).abs() < 1e-15);
        assert_eq!(word_topic_relevance(1, 1, &v, &ts, 7), 0.0);
        assert_eq!(word_topic_relevance(0, 0, &v, &ts, 3), 0.0);
        let half = word_topic_relevance(2, 1, &v, &ts, 1);
        assert!((word_topic_relevance(2, 1, &v, &ts, 2) - 2.0 * half).abs() < 1e-15);
    }

    #[test]
    fn frequency_three_cosine_half() {
        let v = EmbeddingMatrix::new(array![[1.0, 3f64.sqrt()]]).unwrap();
        let ts = TopicSet::from_topics(array![[0.0, 1.0], [0.0, 0.0]], &v, &[1.0], "g").unwrap();
        assert!((word_topic_relevance(0, 1, &v, &ts, 3) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cloud_structure() {
        let (v, ts) = fixture();
        let vocab = Vocabulary::from_parts(vec!["x".into(), "y".into(), "z".into()], vec![0.3, 0.3, 0.4]).unwrap();
        let state = DocVariational {
            pi: array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
            theta: array![0.1, 2.1, 1.1],
        };
        let tokens = [0, 1, 0];
        let cloud = build_topic_cloud(&tokens, &state, &v, &ts, &vocab, 2, 5);
        assert_eq!(cloud.topics.len(), 2);
        assert_eq!(cloud.topics[0].topic_id, 1);
        let total: f64 = cloud.topics.iter().map(|t| t.proportion).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(cloud.topics[0].proportion >= cloud.topics[1].proportion);
        for t in &cloud.topics {
            assert!(t.words.iter().all(|w| w.word == "x" || w.word == "y"));
            assert!(t.words.windows(2).all(|p| p[0].relevance >= p[1].relevance));
        }
        assert_eq!(cloud.topics[0].words[0].word, "x");
        assert!((cloud.topics[0].words[0].relevance - 2.0).abs() < 1e-12);

        let bare = build_topic_cloud(&tokens, &state, &v, &ts, &vocab, 2, 0);
        assert!(bare.topics.iter().all(|t| t.words.is_empty()));
        assert_eq!(bare.topics[0].proportion, cloud.topics[0].proportion);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = TopicCloud {
            topics: vec![CloudTopic {
                topic_id: 3,
                proportion: 1.0,
                words: vec![WordRelevance {
                    word: "drug".into(),
                    relevance: 0.8125,
                }],
            }],
        };
        let p = dir.path().join("cloud.json");
        cloud.write_json(&p).unwrap();
        assert_eq!(TopicCloud::read_json(&p).unwrap(), cloud);
    }
}
