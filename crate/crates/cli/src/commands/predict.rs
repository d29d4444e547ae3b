use std::path::Path;

use mcseg_core::fcn::load_checkpoint;
use mcseg_core::pca::{reduce_volume, PcaOptions};
use mcseg_core::trainer::predict;
use mcseg_core::volume_io::load_volume;
use serde_json::json;

use super::save_prediction;
use crate::args::PredictArgs;
use crate::error::CliResult;
use crate::manifest::Run;

pub fn run(a: &PredictArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.checkpoint);
    run.input(&a.input);
    run.prepare(&a.out)?;
    let (net, manifest) = run.stage("load", |_| Ok(load_checkpoint(&a.checkpoint)?))?;
    run.set_seed(manifest.seed);
    let volume = load_volume(&a.input)?;
    let want = net.config().input_channels;
    let reduced = volume.channels() != want;
    let input = if reduced {
        run.stage("pca", |_| Ok(reduce_volume(&volume, &PcaOptions::with_k(want))?.0))?
    } else {
        volume
    };
    run.set_config(json!({ "network": net.config(), "checkpoint_iteration": manifest.iteration, "pca_reduced": reduced }));
    let labels = run.stage("predict", |_| Ok(predict(&net, &input)?))?;
    save_prediction(run, Path::new("pred"), &labels)
}
