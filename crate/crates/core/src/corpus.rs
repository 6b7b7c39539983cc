//! Text ingestion: tokenization, vocabulary with unigram distribution, and
//! on-disk corpus layouts.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Scalar;

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Pseudo-count added to every observed word when estimating unigrams from the corpus.
pub const UNIGRAM_SMOOTHING: f64 = 0.5;

/// Lowercases, splits on non-alphanumeric characters, and drops stopwords
/// and tokens outside `keep_set`.
pub fn preprocess(raw: &str, stopwords: &HashSet<String>, keep_set: &HashSet<String>) -> Vec<String> {
    tokenize(raw)
        .filter(|t| !stopwords.contains(t) && keep_set.contains(t))
        .collect()
}

fn tokenize(raw: &str) -> impl Iterator<Item = String> + '_ {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Stopword list shipped with the crate.
pub fn builtin_stopwords() -> HashSet<String> {
    parse_word_list(BUILTIN_STOPWORDS)
}

/// Reads a stopword file: one token per line.
pub fn read_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Reads a unigram file: `word prob` per line.
pub fn read_unigram_file(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        let (Some(word), Some(prob), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err("expected `word prob`".into()));
        };
        let prob: f64 = prob
            .parse()
            .map_err(|_| parse_err(format!("bad probability `{prob}`")))?;
        if !(prob.is_finite() && prob >= 0.0) {
            return Err(parse_err(format!("probability must be finite and >= 0, got {prob}")));
        }
        out.push((word.to_string(), prob));
    }
    Ok(out)
}

/// Word ↔ id map plus the unigram distribution over the working vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unigram: Vec<f64>,
}

impl Vocabulary {
    /// Builds a vocabulary from words in id order and their probabilities.
    /// Probabilities must be strictly positive; they are renormalized only
    /// if they do not already sum to one within 1e-12.
    pub fn from_parts(words: Vec<String>, mut unigram: Vec<f64>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if words.len() != unigram.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} words but {} unigram probabilities",
                words.len(),
                unigram.len()
            )));
        }
        if let Some(i) = unigram.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Invalid(format!(
                "unigram probability of `{}` must be positive, got {}",
                words[i], unigram[i]
            )));
        }
        let total: f64 = unigram.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            unigram.iter_mut().for_each(|p| *p /= total);
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary word `{w}`")));
            }
        }
        Ok(Self { words, index, unigram })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn unigram_probs(&self) -> &[f64] {
        &self.unigram
    }

    pub fn unigram_as<S: Scalar>(&self) -> Vec<S> {
        self.unigram.iter().map(|&p| S::lit(p)).collect()
    }

    pub fn word_set(&self) -> HashSet<String> {
        self.words.iter().cloned().collect()
    }

    /// SHA-256 over words (in id order) and the bit patterns of their probabilities.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (w, p) in self.words.iter().zip(&self.unigram) {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
            hasher.update(p.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Maps tokens to ids, silently dropping tokens outside the vocabulary.
    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().filter_map(|t| self.id(t)).collect()
    }

    /// Writes the vocabulary in unigram-file form (`word prob`), id order.
    pub fn write_unigram_file(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (w, p) in self.words.iter().zip(&self.unigram) {
            out.push_str(w);
            out.push(' ');
            out.push_str(&p.to_string());
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a vocabulary previously written by [`Vocabulary::write_unigram_file`].
    pub fn read_unigram_file(path: &Path) -> Result<Self> {
        let (words, probs) = read_unigram_file(path)?.into_iter().unzip();
        Self::from_parts(words, probs)
    }
}

/// Builds the vocabulary over every observed token, in first-occurrence order.
///
/// With `external_unigrams`, probabilities are that map restricted to the
/// observed words and renormalized; every observed word must have a positive
/// entry. Otherwise corpus counts with add-0.5 smoothing are used.
pub fn build_vocabulary<T: AsRef<str>>(
    sequences: &[Vec<T>],
    external_unigrams: Option<&HashMap<String, f64>>,
) -> Result<Vocabulary> {
    let mut words: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut counts: Vec<f64> = Vec::new();
    for seq in sequences {
        for tok in seq {
            let tok = tok.as_ref();
            match index.get(tok) {
                Some(&i) => counts[i] += 1.0,
                None => {
                    index.insert(tok, words.len());
                    words.push(tok.to_string());
                    counts.push(1.0);
                }
            }
        }
    }
    if words.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let weights: Vec<f64> = match external_unigrams {
        Some(map) => {
            let mut missing = Vec::new();
            let w: Vec<f64> = words
                .iter()
                .map(|word| match map.get(word) {
                    Some(&p) if p > 0.0 => p,
                    _ => {
                        missing.push(word.as_str());
                        0.0
                    }
                })
                .collect();
            if !missing.is_empty() {
                return Err(Error::Invalid(format!(
                    "{} observed words lack a positive external unigram probability: {}",
                    missing.len(),
                    missing.iter().take(10).copied().collect::<Vec<_>>().join(", ")
                )));
            }
            w
        }
        None => counts.iter().map(|c| c + UNIGRAM_SMOOTHING).collect(),
    };
    let total: f64 = weights.iter().sum();
    let unigram = weights.iter().map(|w| w / total).collect();
    Vocabulary::from_parts(words, unigram)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<usize>,
    pub label: Option<String>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.documents.iter().filter_map(|d| d.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }
}

/// A document before tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Each subdirectory is a label; each file within it a document.
    DirPerCategory,
    /// Each line is `label<TAB>text`; a line without a tab is an unlabeled document.
    LabeledLines,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dir-per-category" => Ok(Self::DirPerCategory),
            "labeled-lines" => Ok(Self::LabeledLines),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DirPerCategory => "dir-per-category",
            Self::LabeledLines => "labeled-lines",
        })
    }
}

/// Stopword and keep-set filter applied to raw text.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub stopwords: HashSet<String>,
    pub keep_set: HashSet<String>,
}

impl Preprocessor {
    pub fn new(stopwords: HashSet<String>, keep_set: HashSet<String>) -> Self {
        Self { stopwords, keep_set }
    }

    pub fn apply(&self, raw: &str) -> Vec<String> {
        preprocess(raw, &self.stopwords, &self.keep_set)
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads documents without tokenizing. Directory and file order is sorted by name.
pub fn load_raw_documents(path: &Path, format: CorpusFormat) -> Result<Vec<RawDocument>> {
    match format {
        CorpusFormat::DirPerCategory => {
            let mut docs = Vec::new();
            for sub in sorted_entries(path)? {
                if !sub.is_dir() {
                    log::warn!("skipping {}: not a category directory", sub.display());
                    continue;
                }
                let label = file_name(&sub);
                for file in sorted_entries(&sub)? {
                    if !file.is_file() {
                        continue;
                    }
                    let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
                    docs.push(RawDocument {
                        doc_id: format!("{label}/{}", file_name(&file)),
                        text: String::from_utf8_lossy(&bytes).into_owned(),
                        label: Some(label.clone()),
                    });
                }
            }
            Ok(docs)
        }
        CorpusFormat::LabeledLines => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok(text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, line)| {
                    let (label, text) = match line.split_once('\t') {
                        Some((label, text)) => (Some(label.trim().to_string()), text),
                        None => (None, line),
                    };
                    RawDocument {
                        doc_id: format!("line{}", i + 1),
                        text: text.to_string(),
                        label,
                    }
                })
                .collect())
        }
    }
}

/// Loads, preprocesses, and indexes a corpus, building its vocabulary.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    preprocessor: &Preprocessor,
    external_unigrams: Option<&HashMap<String, f64>>,
) -> Result<Corpus> {
    let raw = load_raw_documents(path, format)?;
    corpus_from_raw(raw, preprocessor, external_unigrams)
}

pub fn corpus_from_raw(
    raw: Vec<RawDocument>,
    preprocessor: &Preprocessor,
    external_unigrams: Option<&HashMap<String, f64>>,
) -> Result<Corpus> {
    let token_seqs: Vec<Vec<String>> = raw.iter().map(|d| preprocessor.apply(&d.text)).collect();
    let vocabulary = build_vocabulary(&token_seqs, external_unigrams)?;
    let documents = raw
        .into_iter()
        .zip(&token_seqs)
        .map(|(d, toks)| Document {
            doc_id: d.doc_id,
            tokens: vocabulary.encode(toks.iter().map(String::as_str)),
            label: d.label,
        })
        .collect();
    Ok(Corpus { documents, vocabulary })
}

/// Indexes documents against an existing vocabulary; out-of-vocabulary tokens are dropped.
pub fn encode_documents(raw: Vec<RawDocument>, preprocessor: &Preprocessor, vocabulary: &Vocabulary) -> Vec<Document> {
    raw.into_iter()
        .map(|d| {
            let toks = preprocessor.apply(&d.text);
            Document {
                doc_id: d.doc_id,
                tokens: vocabulary.encode(toks.iter().map(String::as_str)),
                label: d.label,
            }
        })
        .collect()
}

/// Writes documents in labeled-lines form, one per line. Unlabeled documents
/// are written without a label column.
pub fn write_labeled_lines(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let text: Vec<&str> = doc.tokens.iter().map(|&t| corpus.vocabulary.word(t)).collect();
        match doc.label.as_deref() {
            Some(label) => writeln!(out, "{label}\t{}", text.join(" ")),
            None => writeln!(out, "{}", text.join(" ")),
        }
        .expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
