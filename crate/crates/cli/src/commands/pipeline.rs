use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mcseg_core::fcn::load_checkpoint;
use mcseg_core::trainer::predict;
use mcseg_core::volume_io::ignore_boundary;
use mcseg_core::LabelMap;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::baseline::{knn_rule, knn_stage};
use super::synth::{phantom_template, write_dataset};
use super::train::{reduce_all, train_strategy};
use super::{checkpoint_dir, emit_metrics, resolve_training, save_prediction, strategy_label};
use crate::args::PipelineArgs;
use crate::dataset::{Dataset, DatasetIndex};
use crate::error::CliResult;
use crate::manifest::Run;

pub const TABLE_HEADER: &str = "method,iteration,all_mean_iu,all_fw_iu,all_pixel_acc,all_mean_acc,\
main_mean_iu,main_fw_iu,main_pixel_acc,main_mean_acc";

/// One comparison row: all-classes then main-tissue
/// (mean IU, fw IU, pixel acc, mean acc).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub iteration: Option<u64>,
    pub metrics: [f64; 8],
}

impl TableRow {
    pub fn mean_iu(&self) -> f64 {
        self.metrics[0]
    }

    pub fn csv_line(&self) -> String {
        let mut line = format!(
            "{},{}",
            self.method,
            self.iteration.map(|i| i.to_string()).unwrap_or_default()
        );
        for v in self.metrics {
            let _ = write!(line, ",{v:.6}");
        }
        line
    }
}

fn table_csv(rows: &[TableRow]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn run(a: &PipelineArgs, run: &mut Run) -> CliResult<()> {
    run.set_seed(a.train.seed);
    let (n_classes, dims) = match &a.data {
        Some(dir) => {
            run.input(dir);
            (DatasetIndex::load(dir)?.n_classes, None)
        }
        None => {
            let t = phantom_template(&a.phantom)?;
            (t.n_classes, Some((t.height, t.width)))
        }
    };
    let strategies = a.strategy.strategies();
    let resolved = strategies
        .iter()
        .map(|&s| resolve_training(&a.train, s, n_classes))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some((h, w)) = dims {
        resolved[0].network.check_input(h, w)?;
    }
    let rule = knn_rule(a.farthest);
    run.set_config(json!({
        "training": resolved,
        "phantom": a.data.is_none().then(|| phantom_template(&a.phantom).ok()).flatten(),
        "knn_rule": rule,
    }));
    run.prepare(&a.out)?;

    let data = match &a.data {
        Some(dir) => run.stage("load", |_| Dataset::load(dir))?,
        None => {
            let index = run.stage("synth", |run| write_dataset(run, Path::new("data"), &a.phantom, a.train.seed))?;
            Dataset::from_index(&run.path("data"), index)?
        }
    };
    let test_dims = (data.test.volume.height(), data.test.volume.width());
    resolved[0].network.check_input(test_dims.0, test_dims.1)?;
    let (train, test) = reduce_all(run, &data, a.train.pca_k)?;

    let mut rows = Vec::new();
    let mut trained = Vec::new();
    for r in &resolved {
        let strategy = r.optimizer.strategy;
        let dir = PathBuf::from(strategy.name());
        let summary = run.stage(&format!("train:{}", strategy.name()), |run| train_strategy(run, &dir, r, &train, &test))?;
        trained.push(summary);
        run.stage(&format!("evaluate:{}", strategy.name()), |run| {
            for &it in &r.checkpoints {
                let ckpt = run.path(dir.join("checkpoints").join(checkpoint_dir(it)));
                let (net, _) = load_checkpoint(&ckpt)?;
                let pred = predict(&net, &test.volume)?;
                let name = checkpoint_dir(it);
                save_prediction(run, &dir.join("predictions").join(&name), &pred)?;
                let pair = emit_metrics(run, &dir.join("metrics").join(&name), &test.labels, &pred)?;
                rows.push(TableRow {
                    method: strategy_label(strategy).into(),
                    iteration: Some(it),
                    metrics: pair.columns(),
                });
            }
            Ok(())
        })?;
    }

    let knn = run.stage("knn", |run| knn_stage(run, Path::new("knn"), &train, &test, rule))?;
    rows.push(TableRow {
        method: "KNN".into(),
        iteration: None,
        metrics: knn.columns(),
    });
    let uniform = run.stage("uniform", |run| {
        let zeros = LabelMap::filled(test_dims.0, test_dims.1, n_classes, 0)?;
        emit_metrics(run, Path::new("uniform0/metrics"), &test.labels, &zeros)
    })?;
    rows.push(TableRow {
        method: "Uniform-0".into(),
        iteration: None,
        metrics: uniform.columns(),
    });

    run.stage("report", |run| {
        save_prediction(run, Path::new("ground_truth"), &test.labels)?;
        let band = resolved.first().map_or(1, |r| r.band_width);
        save_prediction(run, Path::new("ground_truth_banded"), &ignore_boundary(&test.labels, band))?;
        let table = table_csv(&rows);
        run.emit_text("table.csv", &table)?;
        run.emit_json("report.json", &json!({ "test_sample": test.name, "rows": rows }))?;
        print!("{table}");
        Ok(())
    })?;
    run.set_summary(json!({
        "dataset": data.index,
        "training": trained,
        "rows": rows,
    }));
    Ok(())
}
