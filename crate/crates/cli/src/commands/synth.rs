use std::path::Path;

use mcseg_core::rng::derive_seed;
use mcseg_core::volume_io::{generate_phantom, save_labels, save_ppm, save_volume, PhantomSpec};
use serde_json::json;

use crate::args::{PhantomArgs, SynthArgs};
use crate::dataset::{sample_name, DatasetIndex, SampleEntry, Split, LABELS_DIR, VOLUMES_DIR};
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

pub fn phantom_template(p: &PhantomArgs) -> CliResult<PhantomSpec> {
    if p.n < 2 {
        return Err(CliError::usage("--n must be at least 2: one test sample and one or more training samples"));
    }
    let spec = PhantomSpec::new(p.height, p.width, p.noise, 0);
    spec.validate()?;
    Ok(spec)
}

/// Writes `n` phantoms under `<rel>/volumes` and `<rel>/labels` (plus color
/// previews) with seeds derived from `seed`; the last one is the test sample.
pub fn write_dataset(run: &mut Run, rel: &Path, p: &PhantomArgs, seed: u64) -> CliResult<DatasetIndex> {
    let template = phantom_template(p)?;
    let mut samples = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let name = sample_name(i);
        let spec = PhantomSpec {
            seed: derive_seed(seed, i as u64),
            ..template.clone()
        };
        let (volume, labels) = generate_phantom(&spec)?;
        let entry = SampleEntry {
            volume: Path::new(VOLUMES_DIR).join(format!("{name}.mcv")),
            labels: Path::new(LABELS_DIR).join(format!("{name}.mcv")),
            name: name.clone(),
            seed: Some(spec.seed),
            split: if i + 1 == p.n { Split::Test } else { Split::Train },
        };
        for dir in [VOLUMES_DIR, LABELS_DIR, "previews"] {
            let d = run.path(rel.join(dir));
            std::fs::create_dir_all(&d).map_err(|e| mcseg_core::Error::Io { path: d, source: e })?;
        }
        save_volume(run.path(rel.join(&entry.volume)), &volume)?;
        save_labels(run.path(rel.join(&entry.labels)), &labels)?;
        let preview = rel.join("previews").join(format!("{name}.ppm"));
        save_ppm(run.path(&preview), &labels)?;
        run.output(rel.join(&entry.volume));
        run.output(rel.join(&entry.labels));
        run.output(preview);
        samples.push(entry);
    }
    Ok(DatasetIndex {
        n_classes: template.n_classes,
        master_seed: Some(seed),
        phantom: Some(template),
        samples,
    })
}

pub fn run(a: &SynthArgs, run: &mut Run) -> CliResult<()> {
    run.set_seed(a.seed);
    let template = phantom_template(&a.phantom)?;
    run.set_config(json!({ "phantom": template }));
    run.prepare(&a.out)?;
    let index = run.stage("synth", |run| write_dataset(run, Path::new(""), &a.phantom, a.seed))?;
    run.set_summary(json!({ "dataset": index }));
    Ok(())
}
