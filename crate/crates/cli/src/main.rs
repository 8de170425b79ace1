//! Batch command-line interface for the structured uncertainty similarity
//! toolkit: fit component models, score and map image pairs, sample fitted
//! distributions, generate calibrated augmentations, learn component
//! weights, run dataset evaluations, and reconstruct images through the
//! score. Results go to stdout as JSON; diagnostics go to stderr as JSON.

mod args;
mod cache;
mod commands;
mod config;

use args::Args;
use suss_core::Error;

const USAGE: &str = "\
suss - structured uncertainty similarity scoring

usage: suss <command> [flags]

commands:
  fit <image>                 fit the four component models and write containers
  score --ref R --cand C      score a candidate against a reference
  map --ref R --cand C --out M.png
                              write the per-pixel score map
  sample --params P.supn      draw samples from a fitted component
  augment <image> --family F --level L | --plan plan.json
                              generate calibrated augmentations
  fit-weights --features F.csv | --triplets T.csv
                              learn component weights from 2AFC data
  eval --manifest M.csv --mode 2afc|mos
                              run a dataset evaluation
  reconstruct --target T --out R.png
                              ascend the score from a perturbed start

global flags:
  --config FILE --seed N --workers N --output-dir DIR --weights FILE
  --fit-steps N (override fit iteration count)

environment:
  SUSS_CACHE_DIR              cache directory for on-demand reference fits
";

/// Structured warning line on stderr.
pub(crate) fn warn(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "warning": kind, "message": message })
    );
}

fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        "io" | "decode" => 2,
        "shape" | "invalid" => 3,
        "numeric" => 4,
        _ => 1,
    }
}

fn main() {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    if raw.is_empty() || raw[0] == "help" || raw[0] == "--help" {
        print!("{USAGE}");
        return;
    }
    let command = raw[0].clone();
    let rest = &raw[1..];
    let outcome = Args::parse(rest).and_then(|args| match command.as_str() {
        "fit" => commands::cmd_fit(&args),
        "score" => commands::cmd_score(&args),
        "map" => commands::cmd_map(&args),
        "sample" => commands::cmd_sample(&args),
        "augment" => commands::cmd_augment(&args),
        "fit-weights" => commands::cmd_fit_weights(&args),
        "eval" => commands::cmd_eval(&args),
        "reconstruct" => commands::cmd_reconstruct(&args),
        other => Err(Error::Invalid(format!("unknown command '{other}'"))),
    });
    if let Err(err) = outcome {
        eprintln!(
            "{}",
            serde_json::json!({ "error": err.kind(), "message": err.to_string() })
        );
        std::process::exit(exit_code(&err));
    }
}
