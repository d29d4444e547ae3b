//! Dataset directories: `volumes/<name>.mcv`, `labels/<name>.mcv` and the
//! run manifest of the `synth` call that wrote them.

use std::fs;
use std::path::{Path, PathBuf};

use mcseg_core::pca::{reduce_volume, PcaModel, PcaOptions};
use mcseg_core::volume_io::{load_labels, load_volume, PhantomSpec, DEFAULT_CLASSES};
use mcseg_core::{LabelMap, MultiChannelVolume};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::MANIFEST_FILE;

pub const VOLUMES_DIR: &str = "volumes";
pub const LABELS_DIR: &str = "labels";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub name: String,
    /// Relative to the dataset directory.
    pub volume: PathBuf,
    pub labels: PathBuf,
    pub seed: Option<u64>,
    pub split: Split,
}

/// Stored as `summary.dataset` in the synth manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub n_classes: usize,
    pub master_seed: Option<u64>,
    /// Phantom settings shared by all samples; each sample's seed is listed
    /// with the sample.
    pub phantom: Option<PhantomSpec>,
    pub samples: Vec<SampleEntry>,
}

pub fn sample_name(i: usize) -> String {
    format!("sample_{i:02}")
}

impl DatasetIndex {
    /// Reads the synth manifest, or without one pairs `volumes/*.mcv` with
    /// same-named label maps in name order, the last being the test sample.
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| mcseg_core::Error::Io { path: path.clone(), source: e })?;
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Json {
                path: path.clone(),
                detail: e.to_string(),
            })?;
            let index = value
                .get("summary")
                .and_then(|s| s.get("dataset"))
                .ok_or_else(|| CliError::Json {
                    path: path.clone(),
                    detail: "not a dataset manifest (no summary.dataset)".into(),
                })?;
            return serde_json::from_value(index.clone()).map_err(|e| CliError::Json {
                path,
                detail: e.to_string(),
            });
        }
        let vdir = dir.join(VOLUMES_DIR);
        let entries = fs::read_dir(&vdir).map_err(|e| mcseg_core::Error::Io { path: vdir.clone(), source: e })?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "mcv").then(|| p.file_stem()?.to_str().map(str::to_owned))?
            })
            .collect();
        names.sort();
        let n = names.len();
        let samples = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| SampleEntry {
                volume: Path::new(VOLUMES_DIR).join(format!("{name}.mcv")),
                labels: Path::new(LABELS_DIR).join(format!("{name}.mcv")),
                name,
                seed: None,
                split: if i + 1 == n { Split::Test } else { Split::Train },
            })
            .collect();
        let index = Self {
            n_classes: DEFAULT_CLASSES,
            master_seed: None,
            phantom: None,
            samples,
        };
        index.check(dir)?;
        Ok(index)
    }

    fn check(&self, dir: &Path) -> CliResult<()> {
        let tests = self.samples.iter().filter(|s| s.split == Split::Test).count();
        let trains = self.samples.len() - tests;
        if tests != 1 || trains == 0 {
            return Err(CliError::Core(mcseg_core::Error::Format(format!(
                "{}: need one test sample and at least one training sample, found {tests} and {trains}",
                dir.display()
            ))));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub volume: MultiChannelVolume,
    pub labels: LabelMap,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub index: DatasetIndex,
    pub train: Vec<Sample>,
    pub test: Sample,
}

impl Dataset {
    pub fn load(dir: &Path) -> CliResult<Self> {
        Self::from_index(dir, DatasetIndex::load(dir)?)
    }

    pub fn from_index(dir: &Path, index: DatasetIndex) -> CliResult<Self> {
        index.check(dir)?;
        let mut train = Vec::new();
        let mut test = None;
        for e in &index.samples {
            let volume = load_volume(dir.join(&e.volume))?;
            let labels = load_labels(dir.join(&e.labels), Some(index.n_classes))?;
            if !labels.same_dims(&volume) {
                return Err(mcseg_core::Error::Format(format!(
                    "{}: labels are {}x{} but the volume is {}x{}",
                    e.name,
                    labels.height(),
                    labels.width(),
                    volume.height(),
                    volume.width()
                ))
                .into());
            }
            let s = Sample { name: e.name.clone(), volume, labels };
            match e.split {
                Split::Train => train.push(s),
                Split::Test => test = Some(s),
            }
        }
        Ok(Self {
            dir: dir.into(),
            index,
            train,
            test: test.expect("checked above"),
        })
    }

    pub fn all(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(std::iter::once(&self.test))
    }
}

/// A sample after per-sample PCA and joint normalization.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub name: String,
    pub volume: MultiChannelVolume,
    pub labels: LabelMap,
    pub model: PcaModel,
}

pub fn reduce(s: &Sample, k: usize) -> CliResult<Reduced> {
    let (volume, model) = reduce_volume(&s.volume, &PcaOptions::with_k(k))?;
    Ok(Reduced {
        name: s.name.clone(),
        volume,
        labels: s.labels.clone(),
        model,
    })
}
