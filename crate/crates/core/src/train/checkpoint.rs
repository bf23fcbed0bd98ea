//! Per-epoch checkpoints: weights and ADAM moments in the OVRW container,
//! everything else in a JSON sidecar.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::{AdamConfig, AdamState, ScheduleState};
use super::TrainConfig;
use crate::container::{read_tensors, write_tensors, Tensor};
use crate::error::{OvrError, Result};
use crate::io::{write_atomic, write_json};
use crate::model::WeightSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub steps: usize,
    pub seed: u64,
    pub train_size: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub schedule: ScheduleState,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weights: WeightSet,
    pub adam: AdamState,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    meta: CheckpointMeta,
    adam: AdamConfig,
    adam_t: u64,
    weights_file: String,
    moments_file: String,
}

fn stem(epoch: usize) -> String {
    format!("epoch_{epoch:03}")
}

/// Paths of the weights, moments and sidecar files of one epoch.
pub fn checkpoint_paths(dir: &Path, epoch: usize) -> (PathBuf, PathBuf, PathBuf) {
    let s = stem(epoch);
    (
        dir.join(format!("{s}.ovrw")),
        dir.join(format!("{s}.adam.ovrw")),
        dir.join(format!("{s}.json")),
    )
}

fn prefixed(prefix: &str, tensors: Vec<Tensor>) -> Vec<Tensor> {
    tensors
        .into_iter()
        .map(|mut t| {
            t.name = format!("{prefix}.{}", t.name);
            t
        })
        .collect()
}

fn unprefixed(prefix: &str, tensors: &[Tensor]) -> Vec<Tensor> {
    let p = format!("{prefix}.");
    tensors
        .iter()
        .filter_map(|t| {
            t.name.strip_prefix(&p).map(|name| Tensor {
                name: name.to_string(),
                ..t.clone()
            })
        })
        .collect()
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (weights, moments, sidecar) = checkpoint_paths(dir, ckpt.meta.epoch);
    ckpt.weights.save(&weights)?;
    let mut m = prefixed("m", ckpt.adam.m.to_tensors());
    m.extend(prefixed("v", ckpt.adam.v.to_tensors()));
    write_atomic(&moments, |out| write_tensors(out, &m))?;
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_json(
        &sidecar,
        &Sidecar {
            meta: ckpt.meta.clone(),
            adam: ckpt.adam.config,
            adam_t: ckpt.adam.t,
            weights_file: name(&weights),
            moments_file: name(&moments),
        },
    )
}

/// Loads a checkpoint from its JSON sidecar path.
pub fn load_checkpoint(sidecar: &Path) -> Result<Checkpoint> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    let dir = sidecar.parent().unwrap_or_else(|| Path::new("."));
    let weights = WeightSet::load(&dir.join(&side.weights_file))?;
    let tensors = read_tensors(BufReader::new(fs::File::open(dir.join(&side.moments_file))?))?;
    let m = WeightSet::from_tensors(&unprefixed("m", &tensors))?;
    let v = WeightSet::from_tensors(&unprefixed("v", &tensors))?;
    if m.shapes() != weights.shapes() || v.shapes() != weights.shapes() {
        return Err(OvrError::Format("optimizer moments do not match the weights".into()));
    }
    Ok(Checkpoint {
        weights,
        adam: AdamState {
            config: side.adam,
            m,
            v,
            t: side.adam_t,
        },
        meta: side.meta,
    })
}
