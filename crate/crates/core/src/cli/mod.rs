//! Command-line front end: `train`, `features`, `topics`, `eval`, `synth`.
//!
//! Exit codes: 0 on success, 1 when arguments or configuration are invalid,
//! 2 when a command fails while running.

pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use crate::error::Error;

pub use commands::{cmd_eval, cmd_features, cmd_synth, cmd_topics, cmd_train};
pub use config::{ConfigArgs, Representation, RunConfig, Sharing, Split, ENV_PREFIX};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "topicvec",
    version,
    about = "Topic embeddings over pre-trained word embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit topic embeddings and write a checkpoint, vocabulary and ELBO trace
    Train(ConfigArgs),
    /// Export document features for a train or test split
    Features(ConfigArgs),
    /// Export the topic cloud of one document
    Topics(ConfigArgs),
    /// Train the classifier on one feature file and score another
    Eval(ConfigArgs),
    /// Sample a synthetic corpus with planted topics
    Synth(ConfigArgs),
}

impl Command {
    fn args(&self) -> &ConfigArgs {
        match self {
            Self::Train(a) | Self::Features(a) | Self::Topics(a) | Self::Eval(a) | Self::Synth(a) => a,
        }
    }
}

fn validation(cmd: &Command, cfg: &RunConfig) -> Result<(), Error> {
    match cmd {
        Command::Train(_) => commands::check_train(cfg),
        Command::Features(_) => commands::check_features(cfg),
        Command::Topics(_) => commands::check_topics(cfg),
        Command::Eval(_) => commands::check_eval(cfg),
        Command::Synth(_) => Ok(()),
    }
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<(), Error> {
    match cmd {
        Command::Train(_) => {
            let out = cmd_train(cfg)?;
            println!("checkpoint {}", out.checkpoint.display());
            println!("vocab {}", out.vocab.display());
            println!("elbo {}", out.elbo.display());
        }
        Command::Features(_) => {
            let out = cmd_features(cfg)?;
            println!(
                "features {} ({} rows, dimension {})",
                out.path.display(),
                out.rows,
                out.dim
            );
        }
        Command::Topics(_) => {
            let out = cmd_topics(cfg)?;
            for t in &out.cloud.topics {
                let words: Vec<&str> = t.words.iter().map(|w| w.word.as_str()).collect();
                println!("topic {} {} {}", t.topic_id, t.proportion, words.join(" "));
            }
            println!("topics {}", out.path.display());
        }
        Command::Eval(_) => {
            let out = cmd_eval(cfg)?;
            print!("{}", out.report.render());
            println!("report {}", out.path.display());
        }
        Command::Synth(_) => {
            let out = cmd_synth(cfg)?;
            println!("corpus {}", out.corpus.display());
            println!("embeddings {}", out.embeddings.display());
            println!("planted {}", out.checkpoint.display());
        }
    }
    Ok(())
}

fn init_threads(threads: usize) {
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
}

/// Runs the CLI on explicit arguments and environment, returning the exit code.
pub fn run_with_env<I, T>(args: I, env: impl IntoIterator<Item = (String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args = cli.command.args();
    let cfg = match RunConfig::resolve(args.config.as_deref(), env, &args.overrides())
        .and_then(|cfg| validation(&cli.command, &cfg).map(|()| cfg))
    {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    init_threads(cfg.threads);
    match execute(&cli.command, &cfg) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Runs the CLI on the process arguments and environment.
pub fn run() -> i32 {
    run_with_env(std::env::args_os(), std::env::vars())
}
