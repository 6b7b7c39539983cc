use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use topicvec::cli::{run_with_env, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};
use topicvec::corpus::Vocabulary;
use topicvec::eval::{import_features, ClassificationReport};
use topicvec::relevance::TopicCloud;
use topicvec::topic_model::read_checkpoint;

fn run(args: &[&str]) -> i32 {
    run_with_env(std::iter::once("topicvec").chain(args.iter().copied()), Vec::new())
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> i32 {
    run_with_env(
        std::iter::once("topicvec").chain(args.iter().copied()),
        env.iter().map(|(k, v)| (k.to_string(), v.to_string())),
    )
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Two labeled classes, K = 3, N = 4, W = 30.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        let out = f.path("synth");
        let code = run(&[
            "synth",
            "--k",
            "3",
            "--dim",
            "4",
            "--vocab-size",
            "30",
            "--num-docs",
            "12",
            "--doc-length",
            "40",
            "--classes",
            "2",
            "--seed",
            "5",
            "--output-dir",
            &out,
        ]);
        assert_eq!(code, EXIT_OK);
        f
    }

    fn path(&self, p: &str) -> String {
        self.dir.path().join(p).display().to_string()
    }

    fn train(&self, out: &str, gem_iters: &str) -> i32 {
        let corpus = self.path("synth/corpus.tsv");
        let emb = self.path("synth/embeddings.txt");
        let out = self.path(out);
        run(&[
            "train",
            "--k",
            "3",
            "--gem-iters",
            gem_iters,
            "--corpus",
            &corpus,
            "--embeddings",
            &emb,
            "--output-dir",
            &out,
        ])
    }

    fn features(&self, model: &str, representation: &str, output: &str) -> i32 {
        let corpus = self.path("synth/corpus.tsv");
        let emb = self.path("synth/embeddings.txt");
        let ckpt = self.path(&format!("{model}/model.ckpt"));
        let vocab = self.path(&format!("{model}/vocab.txt"));
        let output = self.path(output);
        run(&[
            "features",
            "--checkpoint",
            &ckpt,
            "--vocab",
            &vocab,
            "--embeddings",
            &emb,
            "--test-corpus",
            &corpus,
            "--split",
            "test",
            "--representation",
            representation,
            "--output",
            &output,
        ])
    }
}

#[test]
fn trained_checkpoint_reads_back_with_matching_vocabulary() {
    let f = Fixture::new();
    assert_eq!(f.train("model", "5"), EXIT_OK);
    let ckpt = read_checkpoint::<f64>(Path::new(&f.path("model/model.ckpt"))).unwrap();
    let vocab = Vocabulary::read_unigram_file(Path::new(&f.path("model/vocab.txt"))).unwrap();
    ckpt.verify_vocabulary(&vocab.content_hash()).unwrap();
    assert_eq!(ckpt.model.topic_sets.len(), 2);
    assert_eq!(ckpt.model.dim(), 4);
    let trace = fs::read_to_string(f.path("model/elbo.txt")).unwrap();
    assert_eq!(trace.lines().count(), 5);
}

#[test]
fn zero_iterations_write_zero_topics() {
    let f = Fixture::new();
    assert_eq!(f.train("model", "0"), EXIT_OK);
    let ckpt = read_checkpoint::<f64>(Path::new(&f.path("model/model.ckpt"))).unwrap();
    for set in &ckpt.model.topic_sets {
        assert!(set.topics.iter().all(|&x| x == 0.0));
        assert!(set.residuals.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn validation_errors_exit_before_compute() {
    let f = Fixture::new();
    let corpus = f.path("synth/corpus.tsv");
    let emb = f.path("synth/embeddings.txt");
    let out = f.path("never");
    let missing = f.path("nope.txt");
    assert_eq!(
        run(&[
            "train",
            "--corpus",
            &corpus,
            "--embeddings",
            &missing,
            "--output-dir",
            &out
        ]),
        EXIT_INVALID
    );
    assert_eq!(run(&["train", "--corpus", &corpus, "--output-dir", &out]), EXIT_INVALID);
    for bad in [
        ["--alpha", "0"],
        ["--alpha", "-0.5"],
        ["--gamma", "0"],
        ["--k", "0"],
        ["--k", "x"],
    ] {
        let code = run(&[
            "train",
            "--corpus",
            &corpus,
            "--embeddings",
            &emb,
            "--output-dir",
            &out,
            &format!("{}={}", bad[0], bad[1]),
        ]);
        assert_eq!(code, EXIT_INVALID, "{bad:?}");
    }
    assert_eq!(
        run(&["features", "--representation", "tfidf", "--checkpoint", &corpus]),
        EXIT_INVALID
    );
    assert_eq!(run(&["frobnicate"]), EXIT_INVALID);
    assert!(!PathBuf::from(&out).exists());
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let f = Fixture::new();
    let conf = f.path("run.conf");
    fs::write(&conf, "k = 4\ngem_iters = 2\n").unwrap();
    let corpus = f.path("synth/corpus.tsv");
    let emb = f.path("synth/embeddings.txt");
    let out = f.path("model");
    let base = [
        "train",
        "--config",
        &conf,
        "--corpus",
        &corpus,
        "--embeddings",
        &emb,
        "--output-dir",
        &out,
    ];
    assert_eq!(run_env(&base, &[("TOPICVEC_K", "2")]), EXIT_OK);
    let ckpt = read_checkpoint::<f64>(Path::new(&f.path("model/model.ckpt"))).unwrap();
    assert_eq!(ckpt.model.hyper.num_topics, 2);
    assert_eq!(ckpt.model.hyper.gem_iters, 2);
    let mut flagged = base.to_vec();
    flagged.extend_from_slice(&["--k", "3"]);
    assert_eq!(run_env(&flagged, &[("TOPICVEC_K", "2")]), EXIT_OK);
    let ckpt = read_checkpoint::<f64>(Path::new(&f.path("model/model.ckpt"))).unwrap();
    assert_eq!(ckpt.model.hyper.num_topics, 3);
}

#[test]
fn feature_dimensions_follow_the_representation() {
    let f = Fixture::new();
    assert_eq!(f.train("model", "5"), EXIT_OK);
    assert_eq!(f.features("model", "tv+meanwv", "combined.txt"), EXIT_OK);
    let combined = import_features(Path::new(&f.path("combined.txt"))).unwrap();
    assert_eq!(combined.features.ncols(), (2 * 2 + 1) + 4);
    assert_eq!(combined.features.nrows(), 24);

    assert_eq!(f.features("model", "bow", "bow.txt"), EXIT_OK);
    let bow = import_features(Path::new(&f.path("bow.txt"))).unwrap();
    let vocab = Vocabulary::read_unigram_file(Path::new(&f.path("model/vocab.txt"))).unwrap();
    assert_eq!(bow.features.ncols(), vocab.len());

    assert_eq!(f.features("model", "topicvec", "tv.txt"), EXIT_OK);
    let tv = import_features(Path::new(&f.path("tv.txt"))).unwrap();
    for row in tv.features.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn commands_are_bit_reproducible() {
    let f = Fixture::new();
    assert_eq!(f.train("a", "5"), EXIT_OK);
    assert_eq!(f.train("b", "5"), EXIT_OK);
    for file in ["model.ckpt", "vocab.txt", "elbo.txt"] {
        assert_eq!(
            fs::read(f.path(&format!("a/{file}"))).unwrap(),
            fs::read(f.path(&format!("b/{file}"))).unwrap(),
            "{file}"
        );
    }
    assert_eq!(f.features("a", "tv+meanwv", "fa.txt"), EXIT_OK);
    assert_eq!(f.features("a", "tv+meanwv", "fb.txt"), EXIT_OK);
    assert_eq!(fs::read(f.path("fa.txt")).unwrap(), fs::read(f.path("fb.txt")).unwrap());
}

#[test]
fn topic_cloud_from_checkpoint_and_stopword_document() {
    let f = Fixture::new();
    assert_eq!(f.train("model", "5"), EXIT_OK);
    let emb = f.path("synth/embeddings.txt");
    let ckpt = f.path("model/model.ckpt");
    let vocab = f.path("model/vocab.txt");
    let doc = f.path("doc.txt");
    let out = f.path("cloud.json");
    fs::write(&doc, "w1 w2 w3 w1 w4 w5 w1").unwrap();
    let code = run(&[
        "topics",
        "--checkpoint",
        &ckpt,
        "--vocab",
        &vocab,
        "--embeddings",
        &emb,
        "--doc",
        &doc,
        "--top-n-topics",
        "3",
        "--top-n-words",
        "2",
        "--output",
        &out,
    ]);
    assert_eq!(code, EXIT_OK);
    let cloud = TopicCloud::read_json(Path::new(&out)).unwrap();
    assert_eq!(cloud.topics.len(), 3);
    for pair in cloud.topics.windows(2) {
        assert!(pair[0].proportion >= pair[1].proportion);
    }
    let present = ["w1", "w2", "w3", "w4", "w5"];
    for t in &cloud.topics {
        assert!(t.words.len() <= 2);
        assert!(t.words.iter().all(|w| present.contains(&w.word.as_str())));
    }

    fs::write(&doc, "the and of THE a").unwrap();
    let code = run(&[
        "topics",
        "--checkpoint",
        &ckpt,
        "--vocab",
        &vocab,
        "--embeddings",
        &emb,
        "--doc",
        &doc,
        "--output",
        &out,
    ]);
    assert_eq!(code, EXIT_RUNTIME);
    let code = run(&["topics", "--embeddings", &emb, "--doc", &doc, "--output", &out]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn eval_on_separable_features_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let rows = "# features: 3\na 1:1 3:0.2\na 1:0.9\na 1:1.1 3:0.1\nb 2:1\nb 2:0.8 3:0.3\nb 2:1.2\n";
    fs::write(p("train.txt"), rows).unwrap();
    fs::write(p("test.txt"), rows).unwrap();
    let (train, test, report) = (p("train.txt"), p("test.txt"), p("report.json"));
    let code = run(&[
        "eval",
        "--train-features",
        &train,
        "--test-features",
        &test,
        "--output",
        &report,
    ]);
    assert_eq!(code, EXIT_OK);
    let parsed = ClassificationReport::read_json(Path::new(&report)).unwrap();
    assert_eq!(parsed.macro_f1, 1.0);
    assert_eq!(parsed.macro_precision, 1.0);
    assert_eq!(parsed.macro_recall, 1.0);
    let reparsed: ClassificationReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed, reparsed);

    fs::write(p("wide.txt"), "# features: 5\na 5:1\nb 1:1\n").unwrap();
    let wide = p("wide.txt");
    let code = run(&[
        "eval",
        "--train-features",
        &train,
        "--test-features",
        &wide,
        "--output",
        &report,
    ]);
    assert_eq!(code, EXIT_RUNTIME);
}
