use std::path::Path;

use mcseg_core::pca::{fit_pca, flatten, normalize_0_255, transform, PcaOptions};
use mcseg_core::volume_io::{load_volume, save_volume};
use serde_json::json;

use super::PcaReport;
use crate::args::PcaArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

/// Fits every component so `sv.json` lists the whole spectrum, then keeps
/// the leading `k` for the reduced volume.
pub fn run(a: &PcaArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.input);
    run.prepare(&a.out)?;
    let volume = run.stage("load", |_| Ok(load_volume(&a.input)?))?;
    if a.k == 0 || a.k > volume.channels() {
        return Err(CliError::usage(format!("--k must lie in 1..={}", volume.channels())));
    }
    let opts = PcaOptions::with_k(volume.channels());
    run.set_seed(opts.seed);
    run.set_config(json!({ "pca": opts, "keep": a.k, "normalize": !a.no_normalize }));
    let full = run.stage("fit", |_| Ok(fit_pca(&flatten(&volume), &opts)?))?;
    let reduced = run.stage("transform", |_| {
        let projected = transform(&volume, &full.truncated(a.k)?)?;
        Ok(if a.no_normalize { projected } else { normalize_0_255(&projected)? })
    })?;
    save_volume(run.path("reduced.mcv"), &reduced)?;
    run.output("reduced.mcv");
    let report = PcaReport::new(&full);
    run.emit_json(Path::new("sv.json"), &report)?;
    run.set_summary(json!({
        "explained_ratio": report.cumulative_ratios.as_ref().map(|r| r[a.k - 1]),
    }));
    Ok(())
}
