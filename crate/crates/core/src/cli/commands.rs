use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::{
    build_vocabulary, builtin_stopwords, corpus_from_raw, encode_documents, load_raw_documents, read_stopwords,
    read_unigram_file, write_labeled_lines, CorpusFormat, Document, Preprocessor, Vocabulary,
};
use crate::embedding::{align, load_embeddings, write_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::eval::{
    export_features, import_features, macro_metrics, train_linear_classifier, ClassificationReport, TrainConfig,
};
use crate::generator::{generate_labeled_corpus, SyntheticSpec};
use crate::relevance::{build_topic_cloud, TopicCloud};
use crate::representation::{combined_features, doc_topic_proportions_with, mean_word_vector, merge_topic_sets};
use crate::topic_model::{gem_fit, infer_new_document, read_checkpoint, write_checkpoint, ModelState, TopicSharing};

use super::config::{Representation, RunConfig, Sharing, Split};

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub elbo: PathBuf,
    pub model: ModelState<f64>,
}

#[derive(Debug, Clone)]
pub struct FeaturesOutput {
    pub path: PathBuf,
    pub rows: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct TopicsOutput {
    pub path: PathBuf,
    pub cloud: TopicCloud,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub path: PathBuf,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub phi: PathBuf,
}

fn corpus_format(cfg: &RunConfig, path: &Path) -> CorpusFormat {
    cfg.corpus_format.unwrap_or(if path.is_dir() {
        CorpusFormat::DirPerCategory
    } else {
        CorpusFormat::LabeledLines
    })
}

fn stopwords(cfg: &RunConfig) -> Result<HashSet<String>> {
    match &cfg.stopwords {
        Some(p) => read_stopwords(p),
        None => Ok(builtin_stopwords()),
    }
}

fn external_unigrams(cfg: &RunConfig) -> Result<Option<HashMap<String, f64>>> {
    cfg.unigrams
        .as_deref()
        .map(|p| read_unigram_file(p).map(|v| v.into_iter().collect()))
        .transpose()
}

fn create_output_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn label_of(doc: &Document) -> String {
    doc.label.clone().unwrap_or_else(|| "unlabeled".to_string())
}

/// Vocabulary, checkpoint, and aligned embeddings of a trained model.
struct Trained {
    model: ModelState<f64>,
    vocab: Vocabulary,
    embeddings: EmbeddingMatrix<f64>,
}

fn load_trained(checkpoint: &Path, vocab: &Path, embeddings: &Path) -> Result<Trained> {
    let ckpt = read_checkpoint::<f64>(checkpoint)?;
    let vocab = Vocabulary::read_unigram_file(vocab)?;
    ckpt.verify_vocabulary(&vocab.content_hash())?;
    let (words, raw) = load_embeddings::<f64>(embeddings)?;
    let embeddings = align(&vocab, &words, &raw)?;
    if embeddings.dim() != ckpt.model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint topics have dimension {}, embeddings {}",
            ckpt.model.dim(),
            embeddings.dim()
        )));
    }
    Ok(Trained {
        model: ckpt.model,
        vocab,
        embeddings,
    })
}

pub fn check_train(cfg: &RunConfig) -> Result<()> {
    cfg.require_existing("corpus", &cfg.corpus)?;
    cfg.require_existing("embeddings", &cfg.embeddings)?;
    cfg.optional_existing("stopwords", &cfg.stopwords)?;
    cfg.optional_existing("unigrams", &cfg.unigrams)?;
    Ok(())
}

/// Loads the corpus, aligns embeddings, fits topics, and writes the checkpoint,
/// the vocabulary, and the ELBO trace (`elbo.txt`, one value per line).
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    check_train(cfg)?;
    let corpus_path = cfg.require("corpus", &cfg.corpus)?;
    let (words, raw_embeddings) = load_embeddings::<f64>(cfg.require("embeddings", &cfg.embeddings)?)?;
    let keep: HashSet<String> = words.iter().cloned().collect();
    let pre = Preprocessor::new(stopwords(cfg)?, keep);
    let raw = load_raw_documents(corpus_path, corpus_format(cfg, corpus_path))?;
    let mut corpus = corpus_from_raw(raw, &pre, external_unigrams(cfg)?.as_ref())?;
    let before = corpus.documents.len();
    corpus.documents.retain(|d| !d.is_empty());
    if corpus.documents.len() < before {
        log::warn!(
            "dropped {} documents that are empty after preprocessing",
            before - corpus.documents.len()
        );
    }
    let embeddings = align(&corpus.vocabulary, &words, &raw_embeddings)?;
    let sharing = match cfg.per_category {
        Sharing::On => TopicSharing::PerCategory,
        Sharing::Off => TopicSharing::Global,
        Sharing::Auto if corpus.documents.iter().all(|d| d.label.is_some()) => TopicSharing::PerCategory,
        Sharing::Auto => TopicSharing::Global,
    };
    log::info!(
        "training on {} documents, {} tokens, vocabulary {}, {sharing:?} topics",
        corpus.documents.len(),
        corpus.total_tokens(),
        corpus.vocabulary.len()
    );
    let unigram = corpus.vocabulary.unigram_as::<f64>();
    let fit = gem_fit(&corpus.documents, sharing, &embeddings, &unigram, &cfg.hyper)?;

    create_output_dir(cfg)?;
    let checkpoint = cfg.checkpoint_path();
    let vocab = cfg.vocab_path();
    let elbo = cfg.output_dir.join("elbo.txt");
    ensure_parent(&checkpoint)?;
    ensure_parent(&vocab)?;
    write_checkpoint(&checkpoint, &fit.model, &corpus.vocabulary.content_hash())?;
    corpus.vocabulary.write_unigram_file(&vocab)?;
    let mut trace = String::new();
    for value in &fit.model.elbo_trace {
        writeln!(trace, "{value}").expect("write to string");
    }
    fs::write(&elbo, trace).map_err(|e| Error::io(&elbo, e))?;
    Ok(TrainOutput {
        checkpoint,
        vocab,
        elbo,
        model: fit.model,
    })
}

pub fn check_features(cfg: &RunConfig) -> Result<()> {
    cfg.require_existing("checkpoint", &cfg.checkpoint)?;
    cfg.require_existing("vocab", &cfg.vocab)?;
    cfg.require_existing("embeddings", &cfg.embeddings)?;
    cfg.optional_existing("stopwords", &cfg.stopwords)?;
    match cfg.split {
        Split::Train => cfg.require_existing("corpus", &cfg.corpus)?,
        Split::Test => cfg.require_existing("test_corpus", &cfg.test_corpus)?,
    };
    Ok(())
}

/// Writes one feature row per document of the chosen split. Topic
/// proportions come from one E-step against the merged topic space.
pub fn cmd_features(cfg: &RunConfig) -> Result<FeaturesOutput> {
    check_features(cfg)?;
    let trained = load_trained(
        cfg.require("checkpoint", &cfg.checkpoint)?,
        cfg.require("vocab", &cfg.vocab)?,
        cfg.require("embeddings", &cfg.embeddings)?,
    )?;
    let corpus_path = match cfg.split {
        Split::Train => cfg.require("corpus", &cfg.corpus)?,
        Split::Test => cfg.require("test_corpus", &cfg.test_corpus)?,
    };
    let pre = Preprocessor::new(stopwords(cfg)?, trained.vocab.word_set());
    let raw = load_raw_documents(corpus_path, corpus_format(cfg, corpus_path))?;
    let docs = encode_documents(raw, &pre, &trained.vocab);
    let emb = &trained.embeddings;

    let rows: Vec<Vec<f64>> = match cfg.representation {
        Representation::BagOfWords => docs
            .iter()
            .map(|d| {
                let mut counts = vec![0.0; trained.vocab.len()];
                for &t in &d.tokens {
                    counts[t] += 1.0;
                }
                counts
            })
            .collect(),
        Representation::MeanWordVector => docs.iter().map(|d| mean_word_vector(&d.tokens, emb).to_vec()).collect(),
        Representation::TopicVec | Representation::Combined => {
            let unigram = trained.vocab.unigram_as::<f64>();
            let merged = merge_topic_sets(&trained.model, emb, &unigram)?;
            let states = docs
                .par_iter()
                .map(|d| infer_new_document(&d.tokens, &merged, emb, &trained.model.hyper))
                .collect::<Result<Vec<_>>>()?;
            docs.iter()
                .zip(&states)
                .map(|(d, st)| {
                    let p = doc_topic_proportions_with(st, cfg.estimator);
                    if cfg.representation == Representation::Combined {
                        combined_features(&p, &mean_word_vector(&d.tokens, emb)).to_vec()
                    } else {
                        p.to_vec()
                    }
                })
                .collect()
        }
    };
    let dim = match cfg.representation {
        Representation::BagOfWords => trained.vocab.len(),
        Representation::MeanWordVector => emb.dim(),
        Representation::TopicVec | Representation::Combined => rows.first().map_or(0, Vec::len),
    };
    let mut features = Array2::zeros((rows.len(), dim));
    for (mut dst, row) in features.rows_mut().into_iter().zip(&rows) {
        dst.assign(&ndarray::ArrayView1::from(row.as_slice()));
    }
    let labels: Vec<String> = docs.iter().map(label_of).collect();

    create_output_dir(cfg)?;
    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(format!("features_{}.txt", cfg.split)));
    ensure_parent(&path)?;
    export_features(&features, &labels, &path)?;
    Ok(FeaturesOutput {
        path,
        rows: rows.len(),
        dim,
    })
}

pub fn check_topics(cfg: &RunConfig) -> Result<()> {
    cfg.require_existing("doc", &cfg.doc)?;
    cfg.require_existing("embeddings", &cfg.embeddings)?;
    cfg.optional_existing("stopwords", &cfg.stopwords)?;
    cfg.optional_existing("unigrams", &cfg.unigrams)?;
    if cfg.checkpoint.is_some() {
        cfg.require_existing("checkpoint", &cfg.checkpoint)?;
        cfg.require_existing("vocab", &cfg.vocab)?;
    }
    Ok(())
}

/// Topic cloud of one document. With a checkpoint, the document is inferred
/// against the merged trained topics; otherwise `k` topics are trained on the
/// document alone.
pub fn cmd_topics(cfg: &RunConfig) -> Result<TopicsOutput> {
    check_topics(cfg)?;
    let doc_path = cfg.require("doc", &cfg.doc)?;
    let bytes = fs::read(doc_path).map_err(|e| Error::io(doc_path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let empty = || Error::Invalid(format!("{} is empty after preprocessing", doc_path.display()));

    let cloud = match &cfg.checkpoint {
        Some(ckpt) => {
            let trained = load_trained(
                ckpt,
                cfg.require("vocab", &cfg.vocab)?,
                cfg.require("embeddings", &cfg.embeddings)?,
            )?;
            let pre = Preprocessor::new(stopwords(cfg)?, trained.vocab.word_set());
            let tokens = trained.vocab.encode(pre.apply(&text).iter().map(String::as_str));
            if tokens.is_empty() {
                return Err(empty());
            }
            let unigram = trained.vocab.unigram_as::<f64>();
            let merged = merge_topic_sets(&trained.model, &trained.embeddings, &unigram)?;
            let state = infer_new_document(&tokens, &merged, &trained.embeddings, &trained.model.hyper)?;
            build_topic_cloud(
                &tokens,
                &state,
                &trained.embeddings,
                &merged.space,
                &trained.vocab,
                cfg.top_n_topics,
                cfg.top_n_words,
            )
        }
        None => {
            let (words, raw_embeddings) = load_embeddings::<f64>(cfg.require("embeddings", &cfg.embeddings)?)?;
            let pre = Preprocessor::new(stopwords(cfg)?, words.iter().cloned().collect());
            let toks = pre.apply(&text);
            if toks.is_empty() {
                return Err(empty());
            }
            let vocab = build_vocabulary(std::slice::from_ref(&toks), external_unigrams(cfg)?.as_ref())?;
            let embeddings = align(&vocab, &words, &raw_embeddings)?;
            let doc = Document {
                doc_id: doc_path.display().to_string(),
                tokens: vocab.encode(toks.iter().map(String::as_str)),
                label: None,
            };
            let unigram = vocab.unigram_as::<f64>();
            let fit = gem_fit(
                std::slice::from_ref(&doc),
                TopicSharing::Global,
                &embeddings,
                &unigram,
                &cfg.hyper,
            )?;
            build_topic_cloud(
                &doc.tokens,
                &fit.doc_states[0],
                &embeddings,
                &fit.model.topic_sets[0],
                &vocab,
                cfg.top_n_topics,
                cfg.top_n_words,
            )
        }
    };
    create_output_dir(cfg)?;
    let path = cfg.output.clone().unwrap_or_else(|| cfg.output_dir.join("topics.json"));
    ensure_parent(&path)?;
    cloud.write_json(&path)?;
    Ok(TopicsOutput { path, cloud })
}

pub fn check_eval(cfg: &RunConfig) -> Result<()> {
    cfg.require_existing("train_features", &cfg.train_features)?;
    cfg.require_existing("test_features", &cfg.test_features)?;
    Ok(())
}

/// Trains the classifier on the training features and scores the test features.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutput> {
    check_eval(cfg)?;
    let train = import_features(cfg.require("train_features", &cfg.train_features)?)?;
    let test = import_features(cfg.require("test_features", &cfg.test_features)?)?;
    if train.features.ncols() != test.features.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "training features have dimension {}, test features {}",
            train.features.ncols(),
            test.features.ncols()
        )));
    }
    let config = TrainConfig {
        l1_penalty: cfg.l1_penalty,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        seed: cfg.hyper.seed,
    };
    let clf = train_linear_classifier(&train.features, &train.labels, &config)?;
    let predicted = clf.predict_all(&test.features);
    let report = macro_metrics(&predicted, &test.labels)?;
    create_output_dir(cfg)?;
    let path = cfg.output.clone().unwrap_or_else(|| cfg.output_dir.join("report.json"));
    ensure_parent(&path)?;
    report.write_json(&path)?;
    Ok(EvalOutput { path, report })
}

/// Samples a synthetic corpus and writes `corpus.tsv`, `embeddings.txt`,
/// `vocab.txt`, the planted topics as `planted.ckpt`, and the planted
/// proportions as `phi.txt` (one document per line).
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthOutput> {
    let spec = SyntheticSpec {
        num_topics: cfg.hyper.num_topics,
        dim: cfg.dim,
        vocab_size: cfg.vocab_size,
        num_docs: cfg.num_docs,
        doc_length: cfg.doc_length,
        alpha: cfg.hyper.alpha.clone(),
        gamma: cfg.hyper.gamma,
        seed: cfg.hyper.seed,
    };
    spec.validate()?;
    if cfg.classes < 1 {
        return Err(Error::Invalid("classes must be at least 1".into()));
    }
    let s = generate_labeled_corpus::<f64>(&spec, cfg.classes, None)?;
    create_output_dir(cfg)?;
    let out = SynthOutput {
        corpus: cfg.output_dir.join("corpus.tsv"),
        embeddings: cfg.output_dir.join("embeddings.txt"),
        checkpoint: cfg.output_dir.join("planted.ckpt"),
        vocab: cfg.output_dir.join("vocab.txt"),
        phi: cfg.output_dir.join("phi.txt"),
    };
    write_labeled_lines(&s.corpus, &out.corpus)?;
    write_embeddings(&out.embeddings, s.corpus.vocabulary.words(), &s.embeddings)?;
    s.corpus.vocabulary.write_unigram_file(&out.vocab)?;
    let planted = ModelState {
        topic_sets: s.planted,
        hyper: cfg.hyper.clone(),
        elbo_trace: Vec::new(),
    };
    write_checkpoint(&out.checkpoint, &planted, &s.corpus.vocabulary.content_hash())?;
    let mut phi = String::new();
    for p in &s.phi {
        let cells: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        writeln!(phi, "{}", cells.join(" ")).expect("write to string");
    }
    fs::write(&out.phi, phi).map_err(|e| Error::io(&out.phi, e))?;
    Ok(out)
}
