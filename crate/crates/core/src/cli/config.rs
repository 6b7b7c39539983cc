//! Run configuration: defaults, then a flat `key = value` file, then
//! `TOPICVEC_*` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::CorpusFormat;
use crate::error::{Error, Result};
use crate::representation::ProportionEstimator;
use crate::topic_model::Hyperparams;

pub const ENV_PREFIX: &str = "TOPICVEC_";

macro_rules! config_keys {
    ($($field:ident => $help:literal),* $(,)?) => {
        /// Long flags, one per config key.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct ConfigArgs {
            /// Flat `key = value` configuration file
            #[arg(long, value_name = "PATH")]
            pub config: Option<PathBuf>,
            $(
                #[doc = $help]
                #[arg(long, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl ConfigArgs {
            /// Flag values that were given, keyed by config key.
            pub fn overrides(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.clone()));
                    }
                )*
                out
            }
        }

        /// Every recognized config key.
        pub const KEYS: &[&str] = &[$(stringify!($field)),*];
    };
}

config_keys! {
    k => "Topics per topic set, null topic included",
    alpha => "Dirichlet concentration: one value, or K comma-separated values",
    gamma => "Radius of the topic-embedding ball",
    lambda0 => "Initial learning rate",
    l0 => "Document-length threshold of the learning-rate schedule",
    gem_iters => "Number of GEM iterations",
    e_tol => "E-step convergence tolerance on theta",
    e_max => "Maximum E-step alternations per document",
    seed => "Random seed",
    init => "Starting topics: zero or clustered",
    threads => "Worker threads, 0 for all cores",
    corpus => "Training corpus path",
    test_corpus => "Held-out corpus path",
    corpus_format => "auto, dir-per-category or labeled-lines",
    embeddings => "Word embedding file (text, optionally .gz)",
    stopwords => "Stopword list, one word per line",
    unigrams => "External unigram file, `word probability` per line",
    checkpoint => "Model checkpoint path",
    vocab => "Vocabulary file path",
    output_dir => "Directory for output files",
    output => "Output file of the command",
    per_category => "auto, on or off",
    split => "train or test",
    representation => "topicvec, meanwv, tv+meanwv or bow",
    estimator => "dirichlet-mean or mean-responsibility",
    doc => "Document for topic extraction",
    top_n_topics => "Topics in the topic cloud",
    top_n_words => "Words per topic in the topic cloud",
    train_features => "Training feature file",
    test_features => "Test feature file",
    l1_penalty => "L1 penalty of the classifier",
    epochs => "Classifier training epochs",
    learning_rate => "Classifier learning rate",
    dim => "Synthetic embedding dimension",
    vocab_size => "Synthetic vocabulary size",
    num_docs => "Synthetic documents per class",
    doc_length => "Synthetic words per document",
    classes => "Synthetic classes",
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    /// Per-category when every training document is labeled.
    Auto,
    On,
    Off,
}

impl FromStr for Sharing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "on" | "true" | "yes" => Ok(Self::On),
            "off" | "false" | "no" => Ok(Self::Off),
            _ => Err("expected auto, on or off".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    TopicVec,
    MeanWordVector,
    Combined,
    BagOfWords,
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "topicvec" => Ok(Self::TopicVec),
            "meanwv" => Ok(Self::MeanWordVector),
            "tv+meanwv" => Ok(Self::Combined),
            "bow" => Ok(Self::BagOfWords),
            _ => Err("expected topicvec, meanwv, tv+meanwv or bow".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            _ => Err("expected train or test".into()),
        }
    }
}

impl Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparams<f64>,
    pub threads: usize,
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    /// `None` picks by path type: directory or file.
    pub corpus_format: Option<CorpusFormat>,
    pub embeddings: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub unigrams: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub output: Option<PathBuf>,
    pub per_category: Sharing,
    pub split: Split,
    pub representation: Representation,
    pub estimator: ProportionEstimator,
    pub doc: Option<PathBuf>,
    pub top_n_topics: usize,
    pub top_n_words: usize,
    pub train_features: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub l1_penalty: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dim: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub doc_length: usize,
    pub classes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::new(15),
            threads: 0,
            corpus: None,
            test_corpus: None,
            corpus_format: None,
            embeddings: None,
            stopwords: None,
            unigrams: None,
            checkpoint: None,
            vocab: None,
            output_dir: PathBuf::from("."),
            output: None,
            per_category: Sharing::Auto,
            split: Split::Train,
            representation: Representation::TopicVec,
            estimator: ProportionEstimator::DirichletMean,
            doc: None,
            top_n_topics: 6,
            top_n_words: 10,
            train_features: None,
            test_features: None,
            l1_penalty: 1e-4,
            epochs: 50,
            learning_rate: 0.1,
            dim: 10,
            vocab_size: 50,
            num_docs: 200,
            doc_length: 100,
            classes: 1,
        }
    }
}

/// Parses `key = value` lines. `#` starts a comment; keys may use `-` or `_`.
pub fn parse_config_text(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push((normalize_key(key.trim()), value.trim().to_string()));
    }
    Ok(out)
}

fn normalize_key(key: &str) -> String {
    key.to_ascii_lowercase().replace('-', "_")
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Invalid(format!("config key `{key}`: cannot parse `{value}`: {e}")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Layers the config file, the environment, and flag overrides over the defaults.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(&str, String)],
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        if let Some(file) = file {
            let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            for (k, v) in parse_config_text(&text, file)? {
                if !KEYS.contains(&k.as_str()) {
                    return Err(Error::Invalid(format!("{}: unknown config key `{k}`", file.display())));
                }
                values.insert(k, v);
            }
        }
        for (name, v) in env {
            if let Some(k) = name.strip_prefix(ENV_PREFIX) {
                let k = normalize_key(k);
                if KEYS.contains(&k.as_str()) {
                    values.insert(k, v);
                }
            }
        }
        for (k, v) in overrides {
            values.insert(normalize_key(k), v.clone());
        }
        Self::from_values(&values)
    }

    pub fn from_values(values: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        let mut alpha: Option<Vec<f64>> = None;
        for (key, v) in values {
            let v = v.as_str();
            let h = &mut c.hyper;
            match key.as_str() {
                "k" => h.num_topics = parse(key, v)?,
                "alpha" => alpha = Some(v.split(',').map(|a| parse(key, a.trim())).collect::<Result<_>>()?),
                "gamma" => h.gamma = parse(key, v)?,
                "lambda0" => h.lambda0 = parse(key, v)?,
                "l0" => h.length_threshold = parse(key, v)?,
                "gem_iters" => h.gem_iters = parse(key, v)?,
                "e_tol" => h.e_tol = parse(key, v)?,
                "e_max" => h.e_max = parse(key, v)?,
                "seed" => h.seed = parse(key, v)?,
                "init" => h.init = parse(key, v)?,
                "threads" => c.threads = parse(key, v)?,
                "corpus" => c.corpus = path(v),
                "test_corpus" => c.test_corpus = path(v),
                "corpus_format" => {
                    c.corpus_format = match v {
                        "auto" => None,
                        other => Some(parse(key, other)?),
                    }
                }
                "embeddings" => c.embeddings = path(v),
                "stopwords" => c.stopwords = path(v),
                "unigrams" => c.unigrams = path(v),
                "checkpoint" => c.checkpoint = path(v),
                "vocab" => c.vocab = path(v),
                "output_dir" => c.output_dir = PathBuf::from(v),
                "output" => c.output = path(v),
                "per_category" => c.per_category = parse(key, v)?,
                "split" => c.split = parse(key, v)?,
                "representation" => c.representation = parse(key, v)?,
                "estimator" => {
                    c.estimator = match v {
                        "dirichlet-mean" => ProportionEstimator::DirichletMean,
                        "mean-responsibility" => ProportionEstimator::MeanResponsibility,
                        _ => {
                            return Err(Error::Invalid(format!(
                                "config key `estimator`: expected dirichlet-mean or mean-responsibility, got `{v}`"
                            )))
                        }
                    }
                }
                "doc" => c.doc = path(v),
                "top_n_topics" => c.top_n_topics = parse(key, v)?,
                "top_n_words" => c.top_n_words = parse(key, v)?,
                "train_features" => c.train_features = path(v),
                "test_features" => c.test_features = path(v),
                "l1_penalty" => c.l1_penalty = parse(key, v)?,
                "epochs" => c.epochs = parse(key, v)?,
                "learning_rate" => c.learning_rate = parse(key, v)?,
                "dim" => c.dim = parse(key, v)?,
                "vocab_size" => c.vocab_size = parse(key, v)?,
                "num_docs" => c.num_docs = parse(key, v)?,
                "doc_length" => c.doc_length = parse(key, v)?,
                "classes" => c.classes = parse(key, v)?,
                other => return Err(Error::Invalid(format!("unknown config key `{other}`"))),
            }
        }
        let k = c.hyper.num_topics;
        c.hyper.alpha = match alpha {
            Some(a) if a.len() == 1 => vec![a[0]; k],
            Some(a) => a,
            None => vec![0.1; k],
        };
        c.validate()?;
        Ok(c)
    }

    /// Checks every value independent of the command.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.l1_penalty >= 0.0 && self.l1_penalty.is_finite()) {
            return Err(Error::Invalid(format!(
                "l1_penalty must be >= 0, got {}",
                self.l1_penalty
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// The path under `key`, which must be set.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("config key `{key}` is required")))
    }

    /// Like [`require`](Self::require), and the path must exist.
    pub fn require_existing<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        let p = self.require(key, value)?;
        if !p.exists() {
            return Err(Error::Invalid(format!(
                "config key `{key}`: {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }

    pub fn optional_existing<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<Option<&'a Path>> {
        match value {
            Some(_) => self.require_existing(key, value).map(Some),
            None => Ok(None),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model.ckpt"))
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.vocab.clone().unwrap_or_else(|| self.output_dir.join("vocab.txt"))
    }
}
