//! Parameter and multiply-accumulate accounting, and real-time factor
//! measurement on the streaming path.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};
use crate::model::{streaming_infer, FtJnf, ModelConfig};
use crate::stft::{Stft, StftConfig, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub macs_per_second: u64,
    /// Processing time divided by audio duration; absent when not measured.
    pub realtime_factor: Option<f64>,
}

/// Which operations count as one MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacConvention {
    /// Matrix products only.
    MatmulOnly,
    /// Matrix products plus per-step bias adds and gate elementwise
    /// products, counted the way common PyTorch profilers count LSTM cells.
    #[default]
    Profiler,
}

/// Exact parameter count with two bias vectors per LSTM.
pub fn count_params(cfg: &ModelConfig) -> u64 {
    let (h_f, h_t, io) = (cfg.h_f as u64, cfg.h_t as u64, cfg.io_size() as u64);
    let f_lstm = 4 * h_f * (io + h_f) + 8 * h_f;
    let t_lstm = 4 * h_t * (h_f + h_t) + 8 * h_t;
    let dense = io * (h_t + 1);
    f_lstm + t_lstm + dense
}

fn lstm_step_macs(input: u64, hidden: u64, convention: MacConvention) -> u64 {
    let matmul = 4 * hidden * (input + hidden);
    match convention {
        MacConvention::MatmulOnly => matmul,
        // per gate: sum of both products plus two bias adds (3h);
        // cell update 3h; hidden output h
        MacConvention::Profiler => matmul + 4 * 3 * hidden + 3 * hidden + hidden,
    }
}

/// MACs for one STFT frame of the given number of bins.
pub fn count_macs_per_frame(cfg: &ModelConfig, num_bins: usize, convention: MacConvention) -> u64 {
    let (h_f, h_t, io) = (cfg.h_f as u64, cfg.h_t as u64, cfg.io_size() as u64);
    let per_bin = lstm_step_macs(io, h_f, convention)
        + lstm_step_macs(h_f, h_t, convention)
        + h_t * io;
    per_bin * num_bins as u64
}

pub fn count_macs_per_second(
    cfg: &ModelConfig,
    stft: &StftConfig,
    convention: MacConvention,
) -> u64 {
    let per_frame = count_macs_per_frame(cfg, stft.num_bins(), convention) as u128;
    let per_second = per_frame * stft.sample_rate_hz() as u128 / stft.frame_shift() as u128;
    per_second as u64
}

pub fn cost_report(cfg: &ModelConfig, stft: &StftConfig, convention: MacConvention) -> CostReport {
    CostReport {
        params: count_params(cfg),
        macs_per_second: count_macs_per_second(cfg, stft, convention),
        realtime_factor: None,
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median real-time factor of [`streaming_infer`] on seeded noise input.
/// One untimed warm-up run precedes the measured repetitions.
pub fn bench_realtime_factor(
    model: &FtJnf,
    stft: &Stft,
    audio_seconds: f64,
    repetitions: usize,
) -> Result<f64> {
    if repetitions < 3 {
        return Err(OvrError::Config("at least 3 repetitions are required".into()));
    }
    let rate = stft.config().sample_rate_hz();
    let len = (audio_seconds * rate as f64).round() as usize;
    if len == 0 {
        return Err(OvrError::Empty("benchmark audio has no samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let channels: Vec<Waveform> = (0..model.config().num_mics)
        .map(|_| Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), rate))
        .collect();
    let refs: Vec<&Waveform> = channels.iter().collect();
    let duration = len as f64 / rate as f64;
    let warm_len = len.min(rate as usize / 4).max(1);
    let warm: Vec<Waveform> = channels
        .iter()
        .map(|w| Waveform::new(w.samples[..warm_len].to_vec(), rate))
        .collect();
    streaming_infer(model, stft, &warm.iter().collect::<Vec<_>>())?;
    let mut factors = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = streaming_infer(model, stft, &refs)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(out);
        factors.push(elapsed / duration);
    }
    Ok(median(factors))
}
