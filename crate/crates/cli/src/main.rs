//! `pyrofocus` command-line driver.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 missing inputs,
//! 4 incompatible inputs. Errors go to stderr as a single line
//! `error[<kind>]: <message>`.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pyrofocus_cli::Failure;

use commands::{BenchArgs, EvalArgs, GenArgs, InferArgs, PreprocessArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "pyrofocus", version, about = "Two-stage wildfire patch classification and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene corpus.
    Gen(GenArgs),
    /// Label, split, scale and optionally augment a corpus.
    Preprocess(PreprocessArgs),
    /// Train a classifier or U-Net.
    Train(TrainArgs),
    /// Evaluate checkpoints on a split.
    Eval(EvalArgs),
    /// Time the single-stage and cascade pipelines.
    Bench(BenchArgs),
    /// Predict one scene; writes prediction planes and an overlay.
    Infer(InferArgs),
    /// Predict one scene and write only the overlay.
    Render(InferArgs),
}


fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return match f {
            Failure::Usage(_) => (f.code(), "usage"),
            Failure::Missing(_) => (f.code(), "missing"),
            Failure::Incompatible(_) => (f.code(), "incompatible"),
        };
    }
    if let Some(e) = err.downcast_ref::<pyrofocus::Error>() {
        use pyrofocus::Error as E;
        return match e {
            E::Incompatible(_) => (4, "incompatible"),
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => (3, "missing"),
            E::Io(_) => (2, "io"),
            E::Format { .. } => (2, "format"),
            E::Json(_) | E::Csv(_) => (2, "format"),
            _ => (2, "invalid"),
        };
    }
    if let Some(io) = err.downcast_ref::<std::io::Error>() {
        return if io.kind() == std::io::ErrorKind::NotFound {
            (3, "missing")
        } else {
            (2, "io")
        };
    }
    (2, "error")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Infer(a) => commands::infer(a, true),
        Command::Render(a) => commands::infer(a, false),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}
