//! Pre-trained word embeddings: text loader (optionally gzip-compressed)
//! and alignment to a vocabulary's id order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::{Array1, Array2, ArrayView1};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::Scalar;

/// W×N matrix whose row `i` is the embedding of word `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<S> {
    vectors: Array2<S>,
}

impl<S: Scalar> EmbeddingMatrix<S> {
    pub fn new(vectors: Array2<S>) -> Result<Self> {
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::Embedding("embedding contains non-finite entries".into()));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &Array2<S> {
        &self.vectors
    }

    pub fn row(&self, word: usize) -> ArrayView1<'_, S> {
        self.vectors.row(word)
    }

    /// Number of words W.
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    /// Embedding dimension N.
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Gathers the rows of `tokens` into an L×N matrix.
    pub fn gather(&self, tokens: &[usize]) -> Array2<S> {
        let mut out = Array2::zeros((tokens.len(), self.dim()));
        for (mut dst, &t) in out.rows_mut().into_iter().zip(tokens) {
            dst.assign(&self.vectors.row(t));
        }
        out
    }

    /// Unigram-weighted mean embedding Σ_s u_s v_s.
    pub fn weighted_mean(&self, unigram: &[S]) -> Array1<S> {
        self.vectors.t().dot(&ArrayView1::from(unigram))
    }

    pub fn cast<T: Scalar>(&self) -> EmbeddingMatrix<T> {
        EmbeddingMatrix {
            vectors: self.vectors.mapv(|x| T::lit(x.as_f64())),
        }
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let reader: Box<dyn Read> = if gz {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

fn looks_like_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
}

/// Loads `word f1 ... fN` lines, with an optional leading `W N` header.
/// Files ending in `.gz` are decompressed. Duplicate words keep their first row.
pub fn load_embeddings<S: Scalar>(path: &Path) -> Result<(Vec<String>, EmbeddingMatrix<S>)> {
    let reader = open_maybe_gz(path)?;
    let mut words = Vec::new();
    let mut data: Vec<S> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut header_dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        if words.is_empty() && header_dim.is_none() && dim.is_none() && looks_like_header(&fields) {
            header_dim = Some(fields[1].parse().expect("checked"));
            continue;
        }
        let row_dim = fields.len() - 1;
        if row_dim == 0 {
            return Err(parse_err("embedding row has no components".into()));
        }
        let expected = dim.or(header_dim).unwrap_or(row_dim);
        if row_dim != expected {
            return Err(parse_err(format!(
                "inconsistent dimension: expected {expected} components, found {row_dim}"
            )));
        }
        dim = Some(expected);
        let word = fields[0];
        if let Some(first) = seen.get(word) {
            log::warn!(
                "{}:{lineno}: duplicate embedding for `{word}` (first at row {first}), keeping first",
                path.display()
            );
            continue;
        }
        for f in &fields[1..] {
            let x: S = f.parse().map_err(|_| parse_err(format!("bad number `{f}`")))?;
            if !x.is_finite() {
                return Err(parse_err(format!("non-finite component `{f}`")));
            }
            data.push(x);
        }
        seen.insert(word.to_string(), lineno);
        words.push(word.to_string());
    }
    let Some(dim) = dim else {
        return Err(Error::Embedding(format!(
            "{}: embedding file has no rows",
            path.display()
        )));
    };
    let vectors = Array2::from_shape_vec((words.len(), dim), data).expect("row-major shape");
    Ok((words, EmbeddingMatrix { vectors }))
}

/// Writes embeddings with a `W N` header, components in shortest round-trip form.
pub fn write_embeddings<S: Scalar>(path: &Path, words: &[String], embeddings: &EmbeddingMatrix<S>) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{} {}", embeddings.len(), embeddings.dim()).expect("write to vec");
    for (w, row) in words.iter().zip(embeddings.vectors.rows()) {
        out.extend_from_slice(w.as_bytes());
        for x in row {
            write!(out, " {x}").expect("write to vec");
        }
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Permutes embedding rows into vocabulary id order.
pub fn align<S: Scalar>(
    vocab: &Vocabulary,
    words: &[String],
    embeddings: &EmbeddingMatrix<S>,
) -> Result<EmbeddingMatrix<S>> {
    let position: HashMap<&str, usize> = words.iter().enumerate().rev().map(|(i, w)| (w.as_str(), i)).collect();
    let missing: Vec<&str> = vocab
        .words()
        .iter()
        .map(String::as_str)
        .filter(|w| !position.contains_key(w))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings {
            count: missing.len(),
            sample: missing.iter().take(10).copied().collect::<Vec<_>>().join(", "),
        });
    }
    let mut vectors = Array2::zeros((vocab.len(), embeddings.dim()));
    for (mut dst, w) in vectors.rows_mut().into_iter().zip(vocab.words()) {
        dst.assign(&embeddings.row(position[w.as_str()]));
    }
    Ok(EmbeddingMatrix { vectors })
}
