use std::time::Instant;

use mcseg_core::baselines::{knn_segment, KnnRule};
use mcseg_core::fcn::{build_fcn, load_checkpoint, volume_tensor, Network, NetworkConfig};
use mcseg_core::MultiChannelVolume;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::baseline::medians;
use crate::args::BenchArgs;
use crate::dataset::{reduce, Dataset};
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Median forward time of the checkpointed network.
    pub fcn_forward_ms: f64,
    /// Median time to classify every pixel of the same input by KNN.
    pub knn_scan_ms: f64,
    pub fcn_forward_runs_ms: Vec<f64>,
    pub knn_scan_runs_ms: Vec<f64>,
    /// `knn_scan_ms / fcn_forward_ms`.
    pub knn_over_fcn: f64,
    pub runs: usize,
    pub preset: String,
    /// Channels, height, width of the timed input.
    pub input: [usize; 3],
    pub full_forward_ms: Option<f64>,
    pub full_forward_runs_ms: Option<Vec<f64>>,
    /// Informational; nothing here fails the run.
    pub warnings: Vec<String>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn time_runs(runs: usize, mut f: impl FnMut() -> CliResult<()>) -> CliResult<Vec<f64>> {
    f()?; // warm-up, not recorded
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            f()?;
            Ok(start.elapsed().as_secs_f64() * 1e3)
        })
        .collect()
}

fn forward_runs(net: &Network<f32>, v: &MultiChannelVolume, runs: usize) -> CliResult<Vec<f64>> {
    let x = volume_tensor::<f32>(v);
    time_runs(runs, || {
        net.forward(&x)?;
        Ok(())
    })
}

pub fn run(a: &BenchArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.checkpoint);
    run.input(&a.data);
    if a.runs == 0 {
        return Err(CliError::usage("--runs must be at least 1"));
    }
    if !a.checkpoint.join("manifest.json").is_file() {
        return Err(mcseg_core::Error::Format(format!(
            "{} is not a checkpoint directory (no manifest.json)",
            a.checkpoint.display()
        ))
        .into());
    }
    run.prepare(&a.out)?;
    let (net, ckpt) = run.stage("load", |_| Ok(load_checkpoint(&a.checkpoint)?))?;
    run.set_seed(ckpt.seed);
    run.set_config(json!({ "runs": a.runs, "full": a.full, "network": net.config() }));
    let data = Dataset::load(&a.data)?;
    let k = net.config().input_channels;
    let (train, test) = run.stage("pca", |_| {
        let train = data.train.iter().map(|s| reduce(s, k)).collect::<CliResult<Vec<_>>>()?;
        Ok((train, reduce(&data.test, k)?))
    })?;
    let model = medians(&train)?;

    let fcn = run.stage("fcn", |_| forward_runs(&net, &test.volume, a.runs))?;
    let knn = run.stage("knn", |_| {
        time_runs(a.runs, || {
            knn_segment(&test.volume, &model, KnnRule::Nearest)?;
            Ok(())
        })
    })?;
    let full = if a.full {
        Some(run.stage("full", |_| {
            let cfg = NetworkConfig::full(k, net.config().n_classes).with_seed(ckpt.seed);
            let full_net = build_fcn::<f32>(&cfg)?;
            forward_runs(&full_net, &test.volume, a.runs)
        })?)
    } else {
        None
    };

    let (fcn_ms, knn_ms) = (median(&fcn), median(&knn));
    let full_ms = full.as_deref().map(median);
    let (basis, basis_ms) = match full_ms {
        Some(ms) => ("full".to_string(), ms),
        None => (net.config().preset.clone(), fcn_ms),
    };
    let mut warnings = Vec::new();
    if basis_ms >= knn_ms {
        warnings.push(format!(
            "FCN forward ({basis_ms:.1} ms, {basis} preset) is not faster than the KNN scan ({knn_ms:.1} ms)"
        ));
    }
    if full_ms.is_none() {
        warnings.push("full preset not timed; pass --full to compare at full network scale".into());
    }
    for w in &warnings {
        eprintln!("[mcseg] note: {w}");
    }
    let report = BenchReport {
        fcn_forward_ms: fcn_ms,
        knn_scan_ms: knn_ms,
        fcn_forward_runs_ms: fcn,
        knn_scan_runs_ms: knn,
        knn_over_fcn: knn_ms / fcn_ms,
        runs: a.runs,
        preset: net.config().preset.clone(),
        input: [test.volume.channels(), test.volume.height(), test.volume.width()],
        full_forward_ms: full_ms,
        full_forward_runs_ms: full,
        warnings,
    };
    run.emit_json("bench.json", &report)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    run.set_summary(json!({ "fcn_forward_ms": fcn_ms, "knn_scan_ms": knn_ms }));
    Ok(())
}
