//! Command-line entry point: one subcommand per stage plus `synth` and `run`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{ConfigInvalid, RunConfig};
use crate::harness::cmd_synth;
use crate::pipeline::{run_all, run_stage, PipelineError, Stage};

#[derive(Debug, Parser)]
#[command(name = "hooklens", version, about = "Hook-period video ad analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the manifest and write assets.jsonl
    Ingest(CommonArgs),
    /// Decode, trim to the hook, sample frames, extract acoustic features
    Extract(CommonArgs),
    /// Query the MLLM backend for methodology insights
    Insights(CommonArgs),
    /// Embed rationales and cluster them into topics
    Topics(CommonArgs),
    /// Assemble features, split, fit the boosted trees, evaluate
    Train(CommonArgs),
    /// Importance ranking, partial dependence CSVs and SVGs, run report
    Explain(CommonArgs),
    /// Generate the synthetic corpus described by the config's synth section
    Synth(CommonArgs),
    /// Run every stage in order
    Run(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Run config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads (config key `workers`); 0 uses all cores
    #[arg(long)]
    pub workers: Option<usize>,
    /// Global seed (config key `seed`)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory (config key `output_dir`)
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Manifest path (config key `manifest_path`)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Any other config key, e.g. `--set predictor.gbdt.n_trees=100`
    #[arg(long = "set", value_name = "KEY=JSON")]
    pub set: Vec<String>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Ingest(a)
            | Command::Extract(a)
            | Command::Insights(a)
            | Command::Topics(a)
            | Command::Train(a)
            | Command::Explain(a)
            | Command::Synth(a)
            | Command::Run(a) => a,
        }
    }
}

/// Values that are not valid JSON are taken as strings.
fn parse_override(raw: &str) -> Result<(String, Value), ConfigInvalid> {
    let (k, v) = raw.split_once('=').ok_or_else(|| ConfigInvalid {
        path: "--set".into(),
        reason: format!("expected KEY=VALUE, got {raw:?}"),
    })?;
    let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), v))
}

pub fn load_config(a: &CommonArgs) -> Result<RunConfig, ConfigInvalid> {
    let mut overrides = a.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(w) = a.workers {
        overrides.push(("workers".into(), json!(w)));
    }
    if let Some(s) = a.seed {
        overrides.push(("seed".into(), json!(s)));
    }
    if let Some(p) = &a.output_dir {
        overrides.push(("output_dir".into(), json!(absolute(p))));
    }
    if let Some(p) = &a.manifest {
        overrides.push(("manifest_path".into(), json!(absolute(p))));
    }
    RunConfig::load(&a.config, &overrides)
}

/// Command-line paths are relative to the working directory, not the config.
fn absolute(p: &std::path::Path) -> String {
    std::path::absolute(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .display()
        .to_string()
}

pub fn execute(cmd: &Command) -> Result<Value, PipelineError> {
    let cfg = load_config(cmd.args())?;
    match cmd {
        Command::Ingest(_) => run_stage(cfg, Stage::Ingest),
        Command::Extract(_) => run_stage(cfg, Stage::Extract),
        Command::Insights(_) => run_stage(cfg, Stage::Insights),
        Command::Topics(_) => run_stage(cfg, Stage::Topics),
        Command::Train(_) => run_stage(cfg, Stage::Train),
        Command::Explain(_) => run_stage(cfg, Stage::Explain),
        Command::Synth(_) => cmd_synth(&cfg),
        Command::Run(_) => run_all(cfg),
    }
}

/// Prints the one-line JSON summary (stdout) or error (stderr) and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "exit_code": e.exit_code() }));
            e.exit_code()
        }
    }
}
