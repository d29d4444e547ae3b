//! Subcommand implementations and the helpers they share.

mod baseline;
mod bench;
mod eval;
mod pca;
mod pipeline;
mod predict;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use mcseg_core::fcn::{save_checkpoint, build_fcn, Network, NetworkConfig};
use mcseg_core::metrics::{compute_metrics, confusion, main_tissue_metrics, ConfusionMatrix, MetricsReport};
use mcseg_core::pca::PcaModel;
use mcseg_core::trainer::{train as fit, LossReport, Sample as TrainSample, Strategy, TrainConfig, TrainRun};
use mcseg_core::volume_io::{save_labels, save_pgm, save_ppm};
use mcseg_core::LabelMap;
use serde::{Deserialize, Serialize};

use crate::args::{BaselineCommand, Command, TrainOpts};
use crate::error::{CliError, CliResult};
use crate::manifest::{threads_from_env, Run, RunManifest};

pub use bench::BenchReport;
pub use pipeline::{TableRow, TABLE_HEADER};

/// Runs one command and writes its manifest. Replays dispatch to the
/// recorded command.
pub fn execute(command: Command) -> (Option<RunManifest>, CliResult<()>) {
    let command = match command {
        Command::Replay(r) => match RunManifest::load(&r.manifest) {
            Ok(m) => {
                let mut cmd = m.command;
                if let Some(out) = cmd.out_mut() {
                    if let Some(dir) = r.out {
                        out.out = dir;
                    }
                    out.force |= r.force;
                }
                cmd
            }
            Err(e) => return (None, Err(e)),
        },
        c => c,
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => return (None, Err(e)),
    };
    let mut run = Run::new(&command, threads);
    let result = dispatch(&command, &mut run);
    if let Err(e) = &result {
        eprintln!("[mcseg] error: {e}");
    }
    (Some(run.finish(&result)), result)
}

fn dispatch(command: &Command, run: &mut Run) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth::run(a, run),
        Command::Pca(a) => pca::run(a, run),
        Command::Train(a) => train::run(a, run),
        Command::Predict(a) => predict::run(a, run),
        Command::Eval(a) => eval::run(a, run),
        Command::Baseline(BaselineCommand::Knn(a)) => baseline::knn(a, run),
        Command::Baseline(BaselineCommand::Fcm(a)) => baseline::fcm(a, run),
        Command::Pipeline(a) => pipeline::run(a, run),
        Command::Bench(a) => bench::run(a, run),
        Command::Replay(_) => Err(CliError::usage("a manifest cannot record a replay")),
    }
}

pub fn strategy_label(s: Strategy) -> &'static str {
    match s {
        Strategy::FullyBp => "Fully-BP",
        Strategy::IgnoreBound => "Ignore-Bound",
    }
}

pub fn checkpoint_dir(iteration: u64) -> PathBuf {
    PathBuf::from(format!("iter_{iteration:06}"))
}

/// Checkpoint iterations at 20%, 50% and 100% of the run.
pub fn default_checkpoints(iters: u64) -> Vec<u64> {
    let mut v: Vec<u64> = [2u64, 5, 10].iter().map(|f| (iters * f + 5) / 10).filter(|&i| i > 0).collect();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTraining {
    pub network: NetworkConfig,
    pub optimizer: TrainConfig,
    pub checkpoints: Vec<u64>,
    pub band_width: usize,
    pub pca_k: usize,
}

pub fn resolve_training(o: &TrainOpts, strategy: Strategy, n_classes: usize) -> CliResult<ResolvedTraining> {
    if o.pca_k == 0 {
        return Err(CliError::usage("--pca-k must be at least 1"));
    }
    if o.iters == 0 {
        return Err(CliError::usage("--iters must be at least 1"));
    }
    let network = NetworkConfig::preset(&o.preset, o.pca_k, n_classes)?.with_seed(o.seed);
    network.validate()?;
    let mut optimizer = TrainConfig {
        strategy,
        iterations: o.iters,
        eval_every: o.eval_every,
        seed: o.seed,
        ..TrainConfig::default()
    };
    if o.classic {
        optimizer = optimizer.classic();
    }
    if let Some(v) = o.lr {
        optimizer.learning_rate = v;
    }
    if let Some(v) = o.momentum {
        optimizer.momentum = v;
    }
    if let Some(v) = o.weight_decay {
        optimizer.weight_decay = v;
    }
    if let Some(v) = o.loss_mode {
        optimizer.loss_mode = v.into();
    }
    if o.no_clip {
        optimizer.clip_norm = None;
    } else if let Some(v) = o.clip_norm {
        optimizer.clip_norm = Some(v);
    }
    optimizer.validate()?;
    let checkpoints = match &o.checkpoints {
        Some(list) => {
            let mut v = list.clone();
            v.sort_unstable();
            v.dedup();
            if v.iter().any(|&i| i == 0 || i > o.iters) {
                return Err(CliError::usage(format!("checkpoints must lie in 1..={}", o.iters)));
            }
            v
        }
        None => default_checkpoints(o.iters),
    };
    Ok(ResolvedTraining {
        network,
        optimizer,
        checkpoints,
        band_width: o.band_width,
        pca_k: o.pca_k,
    })
}

pub fn loss_csv(history: &[LossReport]) -> String {
    let mut out = String::from("iteration,train_loss,test_loss\n");
    for r in history {
        let test = r.test_loss.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.iteration, r.train_loss, test));
    }
    out
}

/// Trains from a fresh network, checkpointing under `<rel>/checkpoints` and
/// writing `<rel>/loss.csv`, also when training aborts.
pub fn train_and_checkpoint(
    run: &mut Run,
    rel: &Path,
    resolved: &ResolvedTraining,
    train: &[TrainSample],
    test: Option<&TrainSample>,
) -> CliResult<(Network<f32>, TrainRun)> {
    let mut net = build_fcn::<f32>(&resolved.network)?;
    let ckpt_root = run.path(rel.join("checkpoints"));
    let mut saved = Vec::new();
    let result = fit(&mut net, train, test, &resolved.optimizer, &mut |it, n| {
        if resolved.checkpoints.contains(&it) {
            save_checkpoint(&ckpt_root.join(checkpoint_dir(it)), n, it)?;
            saved.push(it);
        }
        Ok(())
    });
    for it in saved {
        run.output(rel.join("checkpoints").join(checkpoint_dir(it)));
    }
    let (history, outcome) = match result {
        Ok(r) => (r.history.clone(), Ok(r)),
        Err(abort) => (abort.partial.history, Err(CliError::Core(abort.error))),
    };
    run.emit_text(rel.join("loss.csv"), &loss_csv(&history))?;
    Ok((net, outcome?))
}

/// `<prefix>.mcv`, `.pgm` and `.ppm`.
pub fn save_prediction(run: &mut Run, prefix: &Path, labels: &LabelMap) -> CliResult<()> {
    type Writer = fn(&Path, &LabelMap) -> mcseg_core::Result<()>;
    let writers: [(&str, Writer); 3] = [
        ("mcv", |p, l| save_labels(p, l)),
        ("pgm", |p, l| save_pgm(p, l)),
        ("ppm", |p, l| save_ppm(p, l)),
    ];
    for (ext, f) in writers {
        let rel = prefix.with_extension(ext);
        let path = run.path(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| mcseg_core::Error::Io { path: parent.into(), source: e })?;
        }
        f(&path, labels)?;
        run.output(rel);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPair {
    pub all_classes: MetricsReport,
    pub main_tissues: MetricsReport,
}

impl MetricsPair {
    pub fn from_confusion(cm: &ConfusionMatrix, background: usize) -> CliResult<Self> {
        Ok(Self {
            all_classes: compute_metrics(cm)?,
            main_tissues: main_tissue_metrics(cm, background)?,
        })
    }

    pub fn evaluate(gt: &LabelMap, pred: &LabelMap) -> CliResult<(Self, ConfusionMatrix)> {
        let cm = confusion(gt, pred)?;
        Ok((Self::from_confusion(&cm, 0)?, cm))
    }

    /// The eight table columns: all-classes then main-tissue
    /// (mean IU, fw IU, pixel acc, mean acc).
    pub fn columns(&self) -> [f64; 8] {
        let (a, m) = (&self.all_classes, &self.main_tissues);
        [
            a.mean_iu, a.fw_iu, a.pixel_acc, a.mean_acc, m.mean_iu, m.fw_iu, m.pixel_acc, m.mean_acc,
        ]
    }
}

/// Writes `<prefix>.json` with both metric variants and
/// `<prefix>_confusion.csv`.
pub fn emit_metrics(run: &mut Run, prefix: &Path, gt: &LabelMap, pred: &LabelMap) -> CliResult<MetricsPair> {
    let (pair, cm) = MetricsPair::evaluate(gt, pred)?;
    run.emit_json(prefix.with_extension("json"), &pair)?;
    let stem = prefix.file_name().and_then(|s| s.to_str()).unwrap_or("metrics");
    run.emit_text(prefix.with_file_name(format!("{stem}_confusion.csv")), &cm.to_csv())?;
    Ok(pair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub channels: usize,
    pub k: usize,
    pub singular_values: Vec<f64>,
    /// Present when every component was fitted.
    pub cumulative_ratios: Option<Vec<f64>>,
    pub iterations: Vec<usize>,
}

impl PcaReport {
    pub fn new(m: &PcaModel) -> Self {
        Self {
            channels: m.channel_count(),
            k: m.k(),
            singular_values: m.singular_values().to_vec(),
            cumulative_ratios: mcseg_core::pca::cumulative_ratios(m).ok(),
            iterations: m.iterations().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_checkpoints_scale_with_the_run() {
        assert_eq!(default_checkpoints(1000), vec![200, 500, 1000]);
        assert_eq!(default_checkpoints(30000), vec![6000, 15000, 30000]);
        assert_eq!(default_checkpoints(1), vec![1]);
        assert_eq!(default_checkpoints(3), vec![1, 2, 3]);
    }

    #[test]
    fn loss_csv_leaves_missing_test_loss_blank() {
        let h = vec![LossReport { iteration: 0, train_loss: 1.5, test_loss: None, train_pixels: 4, test_pixels: 0 }];
        assert_eq!(loss_csv(&h), "iteration,train_loss,test_loss\n0,1.5,\n");
    }
}
