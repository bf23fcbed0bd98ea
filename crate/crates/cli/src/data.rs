//! Manifest rows and file loading shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ovr_core::io::{read_mono, read_wav};
use ovr_core::mixer::{spatialize, split_sources, IrSet, NoiseCapture, NoiseMode, NUM_DIRECTIONS};
use ovr_core::train::Example;
use ovr_core::Waveform;
use serde::{Deserialize, Serialize};

use crate::IrArgs;

pub const RATE: u32 = 16_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordingRow {
    pub outer: PathBuf,
    pub inear: PathBuf,
    pub intervals: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentRow {
    pub id: String,
    pub speech: PathBuf,
    pub intervals: PathBuf,
    /// Talker of the clean speech; their own table is skipped when drawing.
    #[serde(default)]
    pub talker: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRow {
    pub noisy: PathBuf,
    pub target: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRowSpec {
    pub id: String,
    pub speech: [PathBuf; 2],
    pub noise: PathBuf,
    #[serde(flatten)]
    pub mode: NoiseMode,
    pub seed: u64,
}

/// Resolves manifest paths relative to the manifest's directory.
pub fn resolve(manifest: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}

pub fn load_irs(args: &IrArgs) -> Result<IrSet> {
    match (&args.irs, args.synthetic_irs) {
        (Some(dir), _) => IrSet::load_dir(dir, RATE).with_context(|| format!("loading IRs from {}", dir.display())),
        (None, Some(seed)) => Ok(IrSet::synthetic(seed, 64, RATE)),
        (None, None) => bail!(crate::UsageError("one of --irs or --synthetic-irs is required".into())),
    }
}

/// Reads a noise file and renders it through the IRs. Pseudo-diffuse mode
/// takes an 8-channel file as 8 sources, or splits a mono file into 8
/// circularly offset sources.
pub fn load_noise(path: &Path, mode: NoiseMode, irs: &IrSet) -> Result<NoiseCapture> {
    let channels = read_wav(path, RATE).with_context(|| format!("reading noise {}", path.display()))?;
    let sources: Vec<Waveform> = match (mode, channels.len()) {
        (NoiseMode::Point(_), _) => vec![channels[0].clone()],
        (NoiseMode::PseudoDiffuse, NUM_DIRECTIONS) => channels,
        (NoiseMode::PseudoDiffuse, 1) => {
            let len = channels[0].len();
            split_sources(&channels[0], NUM_DIRECTIONS, len)
        }
        (NoiseMode::PseudoDiffuse, n) => bail!("diffuse noise needs 1 or 8 channels, {} has {n}", path.display()),
    };
    let refs: Vec<&Waveform> = sources.iter().collect();
    Ok(spatialize(&refs, irs, mode)?)
}

pub fn load_pair(outer: &Path, inear: &Path) -> Result<(Waveform, Waveform)> {
    let o = read_mono(outer, RATE).with_context(|| format!("reading {}", outer.display()))?;
    let i = read_mono(inear, RATE).with_context(|| format!("reading {}", inear.display()))?;
    if o.len() != i.len() {
        bail!("{} and {} differ in length", outer.display(), inear.display());
    }
    Ok((o, i))
}

pub fn load_examples(manifest: &Path) -> Result<Vec<Example>> {
    let rows: Vec<ExampleRow> = ovr_core::io::read_jsonl(manifest)
        .with_context(|| format!("reading manifest {}", manifest.display()))?;
    rows.iter()
        .map(|row| {
            let noisy_path = resolve(manifest, &row.noisy);
            let noisy = read_wav(&noisy_path, RATE).with_context(|| format!("reading {}", noisy_path.display()))?;
            let target_path = resolve(manifest, &row.target);
            let target = read_mono(&target_path, RATE).with_context(|| format!("reading {}", target_path.display()))?;
            let ex = Example { noisy, target };
            ex.validate()?;
            Ok(ex)
        })
        .collect()
}
