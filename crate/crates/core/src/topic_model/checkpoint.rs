//! Binary model checkpoint.
//!
//! Layout: the 8-byte magic `TOPICVEC`, a little-endian `u64` header length,
//! a JSON header, then for each topic set (in header order) the N×K topic
//! matrix row-major followed by the K residuals, all little-endian `f64`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

use super::{Hyperparams, ModelState, TopicInit, TopicSet};

const MAGIC: &[u8; 8] = b"TOPICVEC";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    dim: usize,
    num_topics: usize,
    owners: Vec<String>,
    alpha: Vec<f64>,
    gamma: f64,
    lambda0: f64,
    length_threshold: usize,
    gem_iters: usize,
    e_tol: f64,
    e_max: usize,
    seed: u64,
    #[serde(default)]
    init: TopicInit,
    vocab_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub model: ModelState<S>,
    pub vocab_hash: String,
}

impl<S: Scalar> Checkpoint<S> {
    /// Fails unless the checkpoint was trained against a vocabulary with this hash.
    pub fn verify_vocabulary(&self, hash: &str) -> Result<()> {
        if self.vocab_hash != hash {
            return Err(Error::VocabularyHash {
                expected: self.vocab_hash.clone(),
                found: hash.to_string(),
            });
        }
        Ok(())
    }
}

pub fn write_checkpoint<S: Scalar>(path: &Path, model: &ModelState<S>, vocab_hash: &str) -> Result<()> {
    fs::write(path, encode(model, vocab_hash)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn encode<S: Scalar>(model: &ModelState<S>, vocab_hash: &str) -> Result<Vec<u8>> {
    let h = &model.hyper;
    let dim = model.dim();
    if let Some(bad) = model
        .topic_sets
        .iter()
        .find(|t| t.dim() != dim || t.num_topics() != h.num_topics)
    {
        return Err(Error::Checkpoint(format!(
            "topic set `{}` is {}x{}, expected {dim}x{}",
            bad.owner,
            bad.dim(),
            bad.num_topics(),
            h.num_topics
        )));
    }
    let header = Header {
        version: FORMAT_VERSION,
        dim,
        num_topics: h.num_topics,
        owners: model.topic_sets.iter().map(|t| t.owner.clone()).collect(),
        alpha: h.alpha.iter().map(|a| a.as_f64()).collect(),
        gamma: h.gamma.as_f64(),
        lambda0: h.lambda0.as_f64(),
        length_threshold: h.length_threshold,
        gem_iters: h.gem_iters,
        e_tol: h.e_tol.as_f64(),
        e_max: h.e_max,
        seed: h.seed,
        init: h.init,
        vocab_hash: vocab_hash.to_string(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + model.topic_sets.len() * (dim + 1) * h.num_topics * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for set in &model.topic_sets {
        for x in set.topics.rows().into_iter().flatten() {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
        for x in &set.residuals {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

fn decode<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let err = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(err("not a topicvec checkpoint"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| err("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..body_start]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
    }
    let (n, k) = (header.dim, header.num_topics);
    let per_set = (n * k + k) * 8;
    let expected = body_start + per_set * header.owners.len();
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut floats = bytes[body_start..]
        .chunks_exact(8)
        .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    let mut topic_sets = Vec::with_capacity(header.owners.len());
    for owner in &header.owners {
        let topics = Array2::from_shape_vec((n, k), floats.by_ref().take(n * k).collect()).expect("length checked");
        let residuals: Array1<S> = floats.by_ref().take(k).collect();
        topic_sets.push(TopicSet {
            topics,
            residuals,
            owner: owner.clone(),
        });
    }
    let hyper = Hyperparams {
        num_topics: k,
        alpha: header.alpha.iter().map(|&a| S::lit(a)).collect(),
        gamma: S::lit(header.gamma),
        lambda0: S::lit(header.lambda0),
        length_threshold: header.length_threshold,
        gem_iters: header.gem_iters,
        e_tol: S::lit(header.e_tol),
        e_max: header.e_max,
        seed: header.seed,
        init: header.init,
    };
    hyper.validate()?;
    Ok(Checkpoint {
        model: ModelState {
            topic_sets,
            hyper,
            elbo_trace: Vec::new(),
        },
        vocab_hash: header.vocab_hash,
    })
}
