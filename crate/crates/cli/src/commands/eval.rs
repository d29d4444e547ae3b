use mcseg_core::metrics::confusion;
use mcseg_core::volume_io::load_labels;
use serde_json::json;

use super::MetricsPair;
use crate::args::EvalArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

pub fn run(a: &EvalArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.gt);
    run.input(&a.pred);
    if a.classes == 0 || a.classes > 254 || a.background >= a.classes {
        return Err(CliError::usage("need 1..=254 classes and a background class below the class count"));
    }
    run.set_config(json!({ "classes": a.classes, "background": a.background }));
    run.prepare(&a.out)?;
    let gt = load_labels(&a.gt, Some(a.classes))?;
    let pred = load_labels(&a.pred, Some(a.classes))?;
    let pair = run.stage("metrics", |_| {
        let cm = confusion(&gt, &pred)?;
        let pair = MetricsPair::from_confusion(&cm, a.background)?;
        Ok((pair, cm))
    })?;
    run.emit_json("metrics.json", &pair.0)?;
    run.emit_text("confusion.csv", &pair.1.to_csv())?;
    run.set_summary(json!({ "columns": pair.0.columns() }));
    Ok(())
}
