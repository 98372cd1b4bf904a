//! `orlicz`: batch pipelines over the orlicz-core library.
//!
//! One process runs one command described by a JSON config. Exit status is
//! 0 on success, 2 when the input fails validation and 3 when a numerical
//! stage fails. Diagnostics go to stderr as JSON lines.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use commands::{print_summary, run, Context};
use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "orlicz", version, about = "Musielak-Orlicz calculus and De Giorgi pipelines")]
struct Args {
    /// JSON pipeline config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts; the config's directory by default.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

pub(crate) fn diag(level: &str, event: &str, fields: Value) {
    let mut obj = json!({ "level": level, "event": event });
    if let (Some(o), Value::Object(f)) = (obj.as_object_mut(), fields) {
        o.extend(f);
    }
    eprintln!("{obj}");
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    diag("error", "failed", json!({ "kind": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn exit_code(e: &orlicz_core::Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(EXIT_VALIDATION, "usage", e.to_string());
        }
    };
    if let Some(k) = args.threads {
        if k == 0 {
            return fail(EXIT_VALIDATION, "usage", "--threads must be positive".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return fail(EXIT_VALIDATION, "usage", e.to_string());
        }
    }

    let bytes = match std::fs::read(&args.config) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_VALIDATION, "io", format!("{}: {e}", args.config.display())),
    };
    let mut value: Value = match serde_json::from_slice(&bytes) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_VALIDATION, "config", e.to_string()),
    };
    if let (Some(seed), Some(obj)) = (args.seed, value.as_object_mut()) {
        obj.insert("seed".into(), json!(seed));
    }
    // the effective config in canonical (sorted-key) form identifies the run
    let canonical = serde_json::to_vec(&value).expect("serializable");
    let digest: [u8; 32] = Sha256::digest(&canonical).into();
    let cfg = match PipelineConfig::deserialize(&value) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_VALIDATION, "config", e.to_string()),
    };

    let config_dir = args
        .config
        .parent()
        .map(|p| if p.as_os_str().is_empty() { PathBuf::from(".") } else { p.to_path_buf() })
        .unwrap_or_else(|| PathBuf::from("."));
    let output_dir = args.output_dir.clone().unwrap_or_else(|| config_dir.clone());
    if let Err(e) = std::fs::create_dir_all(&output_dir) {
        return fail(EXIT_VALIDATION, "io", format!("{}: {e}", output_dir.display()));
    }
    let seed = value.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let ctx = Context { config_path: args.config.clone(), config_dir, output_dir, digest, seed };

    diag("info", "start", json!({ "command": cfg.name(), "config_sha256": ctx.digest_hex() }));
    match run(&cfg, &ctx) {
        Ok(outcome) => {
            print_summary(cfg.name(), &ctx, &outcome);
            match outcome.error {
                Some(e) => fail(exit_code(&e), e.kind(), e.to_string()),
                None => {
                    diag("info", "done", json!({ "command": cfg.name() }));
                    ExitCode::SUCCESS
                }
            }
        }
        Err(e) => fail(exit_code(&e), e.kind(), e.to_string()),
    }
}
