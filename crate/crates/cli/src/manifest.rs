//! Run manifests: one per invocation, written as `<out>/manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{Command, OutArgs};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const THREADS_ENV: &str = "MCSEG_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Ok,
    Failed,
}

/// Every computation runs on one thread with a fixed reduction order;
/// `requested` records the `MCSEG_THREADS` cap for reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threads {
    pub requested: Option<usize>,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Fully resolved command line; replaying it reproduces the outputs.
    pub command: Command,
    pub seed: Option<u64>,
    /// Derived settings (network, optimizer, phantom settings) with every
    /// default filled in.
    pub config: Value,
    pub threads: Threads,
    pub inputs: Vec<PathBuf>,
    /// Paths relative to the output directory.
    pub outputs: Vec<PathBuf>,
    pub timings_ms: Vec<StageTiming>,
    pub status: Status,
    pub error: Option<Failure>,
    /// Subcommand-specific results.
    pub summary: Value,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Core(mcseg_core::Error::Io { path: path.into(), source: e }))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.into(),
            detail: e.to_string(),
        })
    }
}

pub fn threads_from_env() -> CliResult<Threads> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(CliError::usage(format!("{THREADS_ENV}={s:?} is not a positive integer"))),
        },
        Err(_) => None,
    };
    Ok(Threads { requested, used: 1 })
}

/// Refuses a non-empty directory unless `--force` was given.
pub fn prepare_out(out: &OutArgs) -> CliResult<()> {
    let dir = &out.out;
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::usage(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir)
            .map_err(|e| mcseg_core::Error::Io { path: dir.clone(), source: e })?
            .next()
            .is_some();
        if non_empty && !out.force {
            return Err(CliError::usage(format!(
                "output directory {} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| mcseg_core::Error::Io { path: dir.clone(), source: e })?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| mcseg_core::Error::Io { path: parent.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| mcseg_core::Error::Io { path: path.into(), source: e }.into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Bookkeeping for one invocation: stage timings, inputs, outputs.
pub struct Run {
    manifest: RunManifest,
    out: PathBuf,
    out_ready: bool,
}

impl Run {
    pub fn new(command: &Command, threads: Threads) -> Self {
        let mut command = command.clone();
        let out = command.out_mut().map(|o| o.out.clone()).unwrap_or_default();
        Self {
            manifest: RunManifest {
                tool: "mcseg".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                subcommand: command.name().into(),
                command,
                seed: None,
                config: Value::Null,
                threads,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings_ms: Vec::new(),
                status: Status::Running,
                error: None,
                summary: Value::Null,
            },
            out,
            out_ready: false,
        }
    }

    pub fn prepare(&mut self, out: &OutArgs) -> CliResult<()> {
        prepare_out(out)?;
        self.out_ready = true;
        Ok(())
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn set_config(&mut self, config: Value) {
        self.manifest.config = config;
    }

    pub fn set_summary(&mut self, summary: Value) {
        self.manifest.summary = summary;
    }

    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.manifest.inputs.push(p.into());
    }

    pub fn output(&mut self, rel: impl Into<PathBuf>) {
        self.manifest.outputs.push(rel.into());
    }

    /// Writes JSON under the output directory and records it.
    pub fn emit_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> CliResult<()> {
        write_json(&self.path(&rel), value)?;
        self.output(rel.as_ref());
        Ok(())
    }

    pub fn emit_text(&mut self, rel: impl AsRef<Path>, text: &str) -> CliResult<()> {
        write_text(&self.path(&rel), text)?;
        self.output(rel.as_ref());
        Ok(())
    }

    /// Runs `f` as a named stage: its wall time is recorded and any error is
    /// attributed to it (the innermost stage wins).
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        eprintln!("[mcseg] {name}");
        let start = Instant::now();
        let result = f(self);
        self.manifest.timings_ms.push(StageTiming {
            stage: name.into(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        result.map_err(|e| e.in_stage(name))
    }

    /// Seals the manifest and writes it next to the outputs when the output
    /// directory was prepared.
    pub fn finish(mut self, result: &CliResult<()>) -> RunManifest {
        match result {
            Ok(()) => self.manifest.status = Status::Ok,
            Err(e) => {
                self.manifest.status = Status::Failed;
                self.manifest.error = Some(Failure {
                    stage: e.stage().map(str::to_owned),
                    message: e.to_string(),
                    exit_code: e.exit_code(),
                });
            }
        }
        if self.out_ready {
            if let Err(e) = write_json(&self.out.join(MANIFEST_FILE), &self.manifest) {
                eprintln!("[mcseg] could not write the run manifest: {e}");
            }
        }
        self.manifest
    }
}
