use std::path::Path;

use mcseg_core::trainer::{Sample as TrainSample, Strategy};
use mcseg_core::volume_io::ignore_boundary;
use serde_json::json;

use super::{resolve_training, train_and_checkpoint, PcaReport, ResolvedTraining};
use crate::args::TrainArgs;
use crate::dataset::{reduce, Dataset, Reduced};
use crate::error::CliResult;
use crate::manifest::Run;

/// Training labels for a strategy: the junction band is ignored only
/// under ignore-bound.
pub fn training_pair(r: &Reduced, strategy: Strategy, band_width: usize) -> TrainSample {
    let labels = match strategy {
        Strategy::FullyBp => r.labels.clone(),
        Strategy::IgnoreBound => ignore_boundary(&r.labels, band_width),
    };
    (r.volume.clone(), labels)
}

/// Per-sample PCA for every sample, with a report each under `pca/`.
pub fn reduce_all(run: &mut Run, data: &Dataset, k: usize) -> CliResult<(Vec<Reduced>, Reduced)> {
    run.stage("pca", |run| {
        let mut train = Vec::with_capacity(data.train.len());
        for s in &data.train {
            let r = reduce(s, k)?;
            run.emit_json(Path::new("pca").join(format!("{}.json", r.name)), &PcaReport::new(&r.model))?;
            train.push(r);
        }
        let test = reduce(&data.test, k)?;
        run.emit_json(Path::new("pca").join(format!("{}.json", test.name)), &PcaReport::new(&test.model))?;
        Ok((train, test))
    })
}

pub fn train_strategy(
    run: &mut Run,
    rel: &Path,
    resolved: &ResolvedTraining,
    train: &[Reduced],
    test: &Reduced,
) -> CliResult<serde_json::Value> {
    let strategy = resolved.optimizer.strategy;
    let pairs: Vec<TrainSample> = train.iter().map(|r| training_pair(r, strategy, resolved.band_width)).collect();
    let test_pair = training_pair(test, strategy, resolved.band_width);
    let (_, outcome) = train_and_checkpoint(run, rel, resolved, &pairs, Some(&test_pair))?;
    Ok(json!({
        "strategy": strategy,
        "final": outcome.history.last(),
        "checkpoints": resolved.checkpoints,
    }))
}

pub fn run(a: &TrainArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.data);
    run.set_seed(a.train.seed);
    let data = Dataset::load(&a.data)?;
    let resolved = resolve_training(&a.train, a.strategy.into(), data.index.n_classes)?;
    resolved.network.check_input(data.test.volume.height(), data.test.volume.width())?;
    run.set_config(serde_json::to_value(&resolved).expect("config serializes"));
    run.prepare(&a.out)?;
    let (train, test) = reduce_all(run, &data, resolved.pca_k)?;
    let summary = run.stage("train", |run| train_strategy(run, Path::new(""), &resolved, &train, &test))?;
    run.set_summary(summary);
    Ok(())
}
