//! Log-spectral distance and the SNR-grid evaluation harness.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};
use crate::io::{write_atomic, write_json};
use crate::mixer::{mix_at_snr, MixSpec, NoiseCapture, NoiseMode};
use crate::model::FtJnf;
use crate::stft::{Stft, Waveform};
use crate::train::enhance;

pub const LSD_EPS: f64 = 1e-8;
pub const EVAL_SNRS_DB: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];

/// Mean over frames of the RMS over bins of the difference between
/// `20 log10(|X| + eps)` spectra, in dB.
pub fn lsd(reference: &Waveform, estimate: &Waveform, stft: &Stft) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(OvrError::Shape(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let r = stft.analyze(reference)?;
    let e = stft.analyze(estimate)?;
    let frames = r.num_frames();
    if frames == 0 {
        return Err(OvrError::Empty("LSD of empty signals".into()));
    }
    let db = |c: &realfft::num_complex::Complex64| 20.0 * (c.norm() + LSD_EPS).log10();
    let k = r.num_bins() as f64;
    let total: f64 = r
        .bins()
        .columns()
        .into_iter()
        .zip(e.bins().columns())
        .map(|(rc, ec)| {
            let ms: f64 = rc.iter().zip(ec).map(|(a, b)| (db(a) - db(b)).powi(2)).sum::<f64>() / k;
            ms.sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

/// Anything that turns the noisy `[outer, inear]` pair into an estimate of
/// the clean outer signal.
pub trait Enhancer {
    fn enhance(&self, noisy: &[Waveform]) -> Result<Waveform>;
}

/// Returns the noisy outer channel unchanged.
pub struct PassThrough;

impl Enhancer for PassThrough {
    fn enhance(&self, noisy: &[Waveform]) -> Result<Waveform> {
        noisy
            .first()
            .cloned()
            .ok_or_else(|| OvrError::Empty("no input channels".into()))
    }
}

pub struct ModelEnhancer<'a> {
    pub model: &'a FtJnf,
    pub stft: &'a Stft,
}

impl Enhancer for ModelEnhancer<'_> {
    fn enhance(&self, noisy: &[Waveform]) -> Result<Waveform> {
        enhance(self.model, self.stft, noisy)
    }
}

/// One test utterance: the own-voice pair and the noise to add to it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub own_outer: Waveform,
    pub own_inear: Waveform,
    pub noise: NoiseCapture,
    pub mode: NoiseMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub utterance_id: String,
    pub snr_db: f64,
    pub lsd_db: Option<f64>,
    /// Left empty here; kept so external perceptual scorers can fill them in.
    pub pesq: Option<f64>,
    pub estoi: Option<f64>,
    pub error: Option<String>,
}

impl EvalRow {
    fn new(id: &str, snr_db: f64, result: Result<f64>) -> Self {
        let (lsd_db, error) = match result {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        EvalRow {
            utterance_id: id.to_string(),
            snr_db,
            lsd_db,
            pesq: None,
            estoi: None,
            error,
        }
    }
}

/// Mixes the item at `snr_db`, enhances it and scores against the clean
/// outer signal.
pub fn score_item<E: Enhancer + ?Sized>(enhancer: &E, item: &EvalItem, snr_db: f64, stft: &Stft) -> Result<f64> {
    let spec = MixSpec {
        snr_db,
        mode: item.mode,
        seed: item.seed,
    };
    let mix = mix_at_snr(&item.own_outer, &item.own_inear, &item.noise, &spec)?;
    let estimate = enhancer.enhance(&[mix.outer, mix.inear])?;
    lsd(&item.own_outer, &estimate, stft)
}

/// Rows for one utterance over all SNRs. A load failure yields one error row
/// per SNR.
pub fn evaluate_item<E: Enhancer + ?Sized>(
    enhancer: &E,
    id: &str,
    item: &Result<EvalItem>,
    snrs: &[f64],
    stft: &Stft,
) -> Vec<EvalRow> {
    snrs.iter()
        .map(|&snr| {
            let result = match item {
                Ok(item) => score_item(enhancer, item, snr, stft),
                Err(e) => Err(OvrError::Format(format!("could not load {id}: {e}"))),
            };
            if let Err(e) = &result {
                log::warn!("{id} at {snr} dB: {e}");
            }
            EvalRow::new(id, snr, result)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Mean LSD over all scored rows.
    pub mean_lsd_db: Option<f64>,
    pub mean_lsd_by_snr: BTreeMap<String, f64>,
    pub mean_lsd_by_utterance: BTreeMap<String, f64>,
    pub failed_rows: usize,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let mut by_snr: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut by_utt: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut all = Vec::new();
        for row in &rows {
            if let Some(v) = row.lsd_db {
                all.push(v);
                by_snr.entry(format!("{}", row.snr_db)).or_default().push(v);
                by_utt.entry(row.utterance_id.clone()).or_default().push(v);
            }
        }
        let collapse = |m: BTreeMap<String, Vec<f64>>| {
            m.into_iter()
                .filter_map(|(k, v)| mean(&v).map(|x| (k, x)))
                .collect()
        };
        EvalReport {
            failed_rows: rows.len() - all.len(),
            mean_lsd_db: mean(&all),
            mean_lsd_by_snr: collapse(by_snr),
            mean_lsd_by_utterance: collapse(by_utt),
            rows,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// `utterance_id,snr_db,lsd_db`; failed rows have an empty LSD.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |out| {
            let mut w = csv::Writer::from_writer(out);
            let io = |e: csv::Error| OvrError::Format(format!("CSV: {e}"));
            w.write_record(["utterance_id", "snr_db", "lsd_db"]).map_err(io)?;
            for row in &self.rows {
                let lsd = row.lsd_db.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([row.utterance_id.as_str(), &row.snr_db.to_string(), &lsd])
                    .map_err(io)?;
            }
            w.flush()?;
            Ok(())
        })
    }
}

/// Scores every utterance at every SNR, in input order.
pub fn evaluate_grid<E, I>(enhancer: &E, items: I, snrs: &[f64], stft: &Stft) -> EvalReport
where
    E: Enhancer + ?Sized,
    I: IntoIterator<Item = (String, Result<EvalItem>)>,
{
    let rows = items
        .into_iter()
        .flat_map(|(id, item)| evaluate_item(enhancer, &id, &item, snrs, stft))
        .collect();
    EvalReport::from_rows(rows)
}
