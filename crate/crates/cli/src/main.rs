use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "nsl", version, about = "Nodal curves, sheaves on rational trees and error-charge reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(clap::Args, Debug, Clone)]
struct Input {
    /// Input JSON file.
    #[arg(value_name = "FILE", required_unless_present = "input")]
    file: Option<PathBuf>,
    #[arg(short, long, value_name = "FILE", conflicts_with = "file")]
    input: Option<PathBuf>,
}

impl Input {
    fn path(&self) -> &PathBuf {
        self.input.as_ref().or(self.file.as_ref()).expect("clap enforces an input")
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Arithmetic genus of a curve graph.
    Genus(Input),
    /// Tree predicates of a curve graph or of a subcurve.
    Tree(Input),
    /// Global sections of a sheaf on a rational tree.
    H0 {
        #[command(flatten)]
        input: Input,
        /// Also run the section-space oracle with a seeded gluing.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Positivity class and global generation.
    Positivity {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Central charge of a charge datum.
    Charge(Input),
    /// Slope of a charge datum.
    Slope(Input),
    /// Stability of a total charge against declared subobjects.
    Stability(Input),
    /// Error charge of an FM datum.
    Err(Input),
    /// Run the reduction loop.
    Reduce {
        #[command(flatten)]
        input: Input,
        /// Use the seeded move generator.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full trace here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Boundedness audit of a scenario or datum.
    Audit {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Random reduction runs with audits.
    Fuzz {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: u64,
    },
}

pub(crate) const EXIT_REPORT_FAIL: u8 = 1;
pub(crate) const EXIT_STUCK: u8 = 2;
pub(crate) const EXIT_CERTIFICATE: u8 = 3;
pub(crate) const EXIT_USAGE: u8 = 64;
pub(crate) const EXIT_SCHEMA: u8 = 65;

pub(crate) struct Outcome {
    pub code: u8,
    pub body: Value,
}

impl Outcome {
    pub fn ok(body: Value) -> Outcome {
        Outcome { code: 0, body }
    }

    pub fn fail(code: u8, message: impl std::fmt::Display) -> Outcome {
        Outcome {
            code,
            body: json!({ "error": message.to_string() }),
        }
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::Object(m) => m
            .iter()
            .map(|(k, x)| format!("{k}: {}", scalar(x)))
            .collect::<Vec<_>>()
            .join("\n"),
        other => scalar(other),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("NSL_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = commands::dispatch(cli.command);
    let rendered = match cli.format {
        Format::Json => out.body.to_string(),
        Format::Text => text(&out.body),
    };
    if out.body.get("error").is_some() && out.body.as_object().is_some_and(|m| m.len() == 1) {
        eprintln!("{}", scalar(&out.body["error"]));
    } else {
        println!("{rendered}");
    }
    ExitCode::from(out.code)
}
