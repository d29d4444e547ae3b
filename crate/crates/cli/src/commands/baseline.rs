use std::path::Path;

use mcseg_core::baselines::{fit_medians_from_samples, fuzzy_cmeans, hard_assign, knn_segment, FcmOptions, KnnRule, MedianModel};
use mcseg_core::pca::{reduce_volume, PcaOptions};
use mcseg_core::volume_io::load_volume;
use mcseg_core::LabelMap;
use serde_json::json;

use super::{emit_metrics, save_prediction, MetricsPair};
use crate::args::{FcmArgs, KnnArgs};
use crate::dataset::{reduce, Dataset, Reduced};
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

pub fn knn_rule(farthest: bool) -> KnnRule {
    if farthest {
        KnnRule::Farthest
    } else {
        KnnRule::Nearest
    }
}

/// Class medians over the reduced training samples (full labels).
pub fn medians(train: &[Reduced]) -> CliResult<MedianModel> {
    let pairs: Vec<_> = train.iter().map(|r| (r.volume.clone(), r.labels.clone())).collect();
    Ok(fit_medians_from_samples(&pairs)?)
}

/// Segments the test sample and writes `<rel>/pred.*`, `<rel>/medians.json`
/// and `<rel>/metrics.json`.
pub fn knn_stage(run: &mut Run, rel: &Path, train: &[Reduced], test: &Reduced, rule: KnnRule) -> CliResult<MetricsPair> {
    let model = medians(train)?;
    let seg = knn_segment(&test.volume, &model, rule)?;
    save_prediction(run, &rel.join("pred"), &seg.labels)?;
    run.emit_json(
        rel.join("medians.json"),
        &json!({ "rule": rule, "medians": model.medians(), "zero_vectors": seg.zero_vectors }),
    )?;
    emit_metrics(run, &rel.join("metrics"), &test.labels, &seg.labels)
}

pub fn knn(a: &KnnArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.data);
    if a.pca_k == 0 {
        return Err(CliError::usage("--pca-k must be at least 1"));
    }
    let rule = knn_rule(a.farthest);
    run.set_config(json!({ "rule": rule, "pca_k": a.pca_k }));
    run.prepare(&a.out)?;
    let data = run.stage("load", |_| Dataset::load(&a.data))?;
    let (train, test) = run.stage("pca", |_| {
        let train = data.train.iter().map(|s| reduce(s, a.pca_k)).collect::<CliResult<Vec<_>>>()?;
        Ok((train, reduce(&data.test, a.pca_k)?))
    })?;
    let pair = run.stage("knn", |run| knn_stage(run, Path::new(""), &train, &test, rule))?;
    run.set_summary(json!({ "columns": pair.columns() }));
    Ok(())
}

pub fn fcm(a: &FcmArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.input);
    run.set_seed(a.seed);
    if a.clusters == 0 || a.clusters > 254 {
        return Err(CliError::usage("--clusters must lie in 1..=254"));
    }
    if !(a.fuzzifier > 1.0 && a.fuzzifier.is_finite()) {
        return Err(CliError::usage("--fuzzifier must exceed 1"));
    }
    let opts = FcmOptions {
        clusters: a.clusters,
        fuzzifier: a.fuzzifier,
        tol: a.tol,
        max_iter: a.max_iter,
        seed: a.seed,
    };
    run.set_config(json!({ "fcm": opts, "pca_k": a.pca_k }));
    run.prepare(&a.out)?;
    let volume = run.stage("load", |_| Ok(load_volume(&a.input)?))?;
    let volume = if a.pca_k > 0 {
        run.stage("pca", |_| Ok(reduce_volume(&volume, &PcaOptions::with_k(a.pca_k))?.0))?
    } else {
        volume
    };
    let x: Vec<Vec<f64>> = (0..volume.pixels()).map(|p| volume.pixel_vector(p)).collect();
    let state = run.stage("cluster", |_| Ok(fuzzy_cmeans(&x, &opts)?))?;
    let labels = hard_assign(&state).into_iter().map(|c| c as u8).collect();
    let labels = LabelMap::new(volume.height(), volume.width(), a.clusters, labels)?;
    save_prediction(run, Path::new("clusters"), &labels)?;
    run.emit_json(
        "fcm.json",
        &json!({
            "centers": state.centers,
            "iterations": state.iterations,
            "converged": state.converged,
            "objective": state.objective,
        }),
    )?;
    run.set_summary(json!({ "iterations": state.iterations, "converged": state.converged }));
    Ok(())
}
