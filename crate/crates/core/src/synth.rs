//! Synthetic talkers for tests, demos and toy training: phoneme-labeled
//! source-filter speech and matching in-ear recordings.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::num_complex::Complex64;

use crate::augment::{
    augment_utterance, intervals_to_track, pick_table, simulate_inear, PhonemeInterval, RtfAccumulator, RtfTable,
    SmoothingConfig, DEFAULT_MIN_FRAMES,
};
use crate::error::Result;
use crate::mixer::{mix_at_snr, spatialize, IrSet, MixSpec, NoiseMode, NUM_DIRECTIONS};
use crate::stft::{Stft, Waveform};
use crate::train::{sample_snr_db, Example};

/// Vowels with their first two formants in Hz, then one fricative.
const VOWELS: [(&str, f64, f64); 5] = [
    ("a", 750.0, 1250.0),
    ("e", 450.0, 1900.0),
    ("i", 300.0, 2300.0),
    ("o", 500.0, 900.0),
    ("u", 330.0, 800.0),
];
const FRICATIVE: &str = "s";

pub fn phoneme_inventory() -> Vec<&'static str> {
    VOWELS.iter().map(|v| v.0).chain([FRICATIVE]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTalker {
    pub id: String,
    pub f0_hz: f64,
    /// Formant scaling relative to the reference vowel table.
    pub formant_scale: f64,
    /// Cutoff of the body-conduction low-pass per phoneme, in Hz.
    pub inear_cutoff_hz: BTreeMap<String, f64>,
    /// Low-frequency gain of the in-ear path.
    pub inear_boost: f64,
}

impl SyntheticTalker {
    pub fn random(id: &str, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inear_cutoff_hz = phoneme_inventory()
            .into_iter()
            .map(|p| (p.to_string(), rng.gen_range(500.0..1500.0)))
            .collect();
        SyntheticTalker {
            id: id.to_string(),
            f0_hz: rng.gen_range(90.0..220.0),
            formant_scale: rng.gen_range(0.9..1.15),
            inear_cutoff_hz,
            inear_boost: rng.gen_range(1.5..3.0),
        }
    }

    /// True outer-to-in-ear RTF per phoneme: boosted first-order low-pass
    /// with a small delay.
    pub fn true_rtfs(&self, num_bins: usize, sample_rate_hz: u32) -> Result<RtfTable> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let response = |fc: f64| -> Vec<Complex64> {
            (0..num_bins)
                .map(|k| {
                    let f = nyquist * k as f64 / (num_bins - 1).max(1) as f64;
                    let lp = Complex64::new(1.0, f / fc).inv();
                    let delay = Complex64::from_polar(1.0, -2.0 * PI * f * 2.0 / sample_rate_hz as f64);
                    lp * delay * self.inear_boost
                })
                .collect()
        };
        let entries = self
            .inear_cutoff_hz
            .iter()
            .map(|(p, &fc)| (p.clone(), response(fc)))
            .collect();
        let mean_fc = self.inear_cutoff_hz.values().sum::<f64>() / self.inear_cutoff_hz.len().max(1) as f64;
        RtfTable::new(self.id.clone(), entries, response(mean_fc))
    }

    /// Clean outer-microphone speech with phoneme intervals. Words of 2 to 5
    /// phonemes are separated by short pauses.
    pub fn utterance(&self, seconds: f64, sample_rate_hz: u32, seed: u64) -> (Waveform, Vec<PhonemeInterval>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = sample_rate_hz as f64;
        let n = (seconds * fs).round() as usize;
        let mut samples = vec![0.0; n];
        let mut intervals = Vec::new();
        let inventory = phoneme_inventory();
        let mut t = rng.gen_range(0.02..0.1);
        let mut phase = 0.0;
        while t < seconds - 0.1 {
            let word_len = rng.gen_range(2..=5);
            for _ in 0..word_len {
                let dur = rng.gen_range(0.06..0.18);
                let end = (t + dur).min(seconds);
                let p = inventory[rng.gen_range(0..inventory.len())];
                let (i0, i1) = ((t * fs) as usize, ((end * fs) as usize).min(n));
                self.render_phoneme(p, &mut samples[i0..i1], fs, &mut phase, &mut rng);
                intervals.push(PhonemeInterval {
                    start: t,
                    end,
                    phoneme: p.to_string(),
                });
                t = end;
                if t >= seconds - 0.05 {
                    break;
                }
            }
            t += rng.gen_range(0.05..0.2);
        }
        let peak = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak > 0.0 {
            samples.iter_mut().for_each(|v| *v *= 0.5 / peak);
        }
        (Waveform::new(samples, sample_rate_hz), intervals)
    }

    fn render_phoneme(&self, p: &str, out: &mut [f64], fs: f64, phase: &mut f64, rng: &mut ChaCha8Rng) {
        let len = out.len();
        let ramp = (0.01 * fs) as usize;
        let env = |i: usize| {
            let a = (i as f64 / ramp.max(1) as f64).min(1.0);
            let b = ((len - i) as f64 / ramp.max(1) as f64).min(1.0);
            a * b
        };
        match VOWELS.iter().find(|v| v.0 == p) {
            Some(&(_, f1, f2)) => {
                let (f1, f2) = (f1 * self.formant_scale, f2 * self.formant_scale);
                let f0 = self.f0_hz * rng.gen_range(0.95..1.05);
                let harmonics = ((fs / 2.0 - 200.0) / f0) as usize;
                // amplitude per harmonic from two resonance peaks and a spectral tilt
                let gains: Vec<f64> = (1..=harmonics)
                    .map(|h| {
                        let f = h as f64 * f0;
                        let peak = |fc: f64, bw: f64| 1.0 / (1.0 + ((f - fc) / bw).powi(2));
                        (peak(f1, 90.0) + 0.6 * peak(f2, 120.0) + 0.05) / h as f64
                    })
                    .collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let ph = *phase + 2.0 * PI * f0 * i as f64 / fs;
                    let v: f64 = gains.iter().enumerate().map(|(h, g)| g * ((h + 1) as f64 * ph).sin()).sum();
                    *o += env(i) * v;
                }
                *phase = (*phase + 2.0 * PI * f0 * len as f64 / fs) % (2.0 * PI);
            }
            None => {
                // first-difference of white noise: a crude high-pass hiss
                let mut prev = 0.0;
                for (i, o) in out.iter_mut().enumerate() {
                    let w: f64 = rng.gen_range(-1.0..1.0);
                    *o += env(i) * 0.15 * (w - prev);
                    prev = w;
                }
            }
        }
    }

    /// Noise-free paired recording: the in-ear channel is the outer speech
    /// through this talker's true per-phoneme RTFs.
    pub fn recording(&self, seconds: f64, stft: &Stft, seed: u64) -> Result<(Waveform, Waveform, Vec<PhonemeInterval>)> {
        let cfg = stft.config();
        let (outer, intervals) = self.utterance(seconds, cfg.sample_rate_hz(), seed);
        let spec = stft.analyze(&outer)?;
        let track = intervals_to_track(&intervals, spec.num_frames(), cfg);
        let table = self.true_rtfs(cfg.num_bins(), cfg.sample_rate_hz())?;
        let inear = stft.synthesize(&simulate_inear(&spec, &track, &table, SmoothingConfig::default())?)?;
        Ok((outer, inear, intervals))
    }
}

/// Seeded white noise.
pub fn white_noise(len: usize, sample_rate_hz: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), sample_rate_hz)
}

/// Seeded noise with a 1/f-like tilt (leaky-integrated white noise).
pub fn babble_like_noise(len: usize, sample_rate_hz: u32, seed: u64) -> Waveform {
    let white = white_noise(len, sample_rate_hz, seed);
    let mut state = 0.0;
    let samples = white
        .samples
        .iter()
        .map(|w| {
            state = 0.95 * state + w;
            state
        })
        .collect();
    Waveform::new(samples, sample_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDataConfig {
    pub num_train: usize,
    pub num_val: usize,
    pub example_secs: f64,
    /// Length of each noise-free paired recording used for RTF estimation.
    pub recording_secs: f64,
    pub recordings_per_talker: usize,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        ToyDataConfig {
            num_train: 16,
            num_val: 4,
            example_secs: 3.0,
            recording_secs: 3.0,
            recordings_per_talker: 3,
            seed: 0,
        }
    }
}

/// Estimates one RTF table per talker from its synthetic recordings.
pub fn estimate_talker_tables(talkers: &[SyntheticTalker], stft: &Stft, cfg: &ToyDataConfig) -> Result<Vec<RtfTable>> {
    talkers
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let mut acc = RtfAccumulator::new(stft.config().num_bins());
            for r in 0..cfg.recordings_per_talker {
                let seed = cfg.seed ^ ((ti as u64) << 32) ^ (r as u64 + 1);
                let (outer, inear, intervals) = t.recording(cfg.recording_secs, stft, seed)?;
                let so = stft.analyze(&outer)?;
                let si = stft.analyze(&inear)?;
                let track = intervals_to_track(&intervals, so.num_frames(), stft.config());
                acc.add(&so, &si, &track)?;
            }
            acc.finish(&t.id, DEFAULT_MIN_FRAMES)
        })
        .collect()
}

/// Training and validation examples: clean speech of one talker, in-ear
/// channel simulated with another talker's estimated RTFs, point or
/// pseudo-diffuse noise through synthetic IRs at an SNR drawn uniformly from
/// the training range.
pub fn toy_dataset(talkers: &[SyntheticTalker], stft: &Stft, cfg: &ToyDataConfig) -> Result<(Vec<Example>, Vec<Example>)> {
    let tables = estimate_talker_tables(talkers, stft, cfg)?;
    let rate = stft.config().sample_rate_hz();
    let irs = IrSet::synthetic(cfg.seed, 64, rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let len = (cfg.example_secs * rate as f64).round() as usize;
    let mut examples = Vec::with_capacity(cfg.num_train + cfg.num_val);
    for _ in 0..cfg.num_train + cfg.num_val {
        let talker = &talkers[rng.gen_range(0..talkers.len())];
        let (clean, intervals) = talker.utterance(cfg.example_secs, rate, rng.gen());
        let table = pick_table(&tables, Some(&talker.id), &mut rng)?;
        let (outer, inear) = augment_utterance(&clean, &intervals, table, SmoothingConfig::default(), stft)?;
        let mode = if rng.gen_bool(0.5) {
            NoiseMode::Point(rng.gen_range(0..NUM_DIRECTIONS))
        } else {
            NoiseMode::PseudoDiffuse
        };
        let sources: Vec<Waveform> = (0..mode.num_sources())
            .map(|_| babble_like_noise(len, rate, rng.gen()))
            .collect();
        let refs: Vec<&Waveform> = sources.iter().collect();
        let noise = spatialize(&refs, &irs, mode)?;
        let spec = MixSpec {
            snr_db: sample_snr_db(&mut rng),
            mode,
            seed: rng.gen(),
        };
        let mix = mix_at_snr(&outer, &inear, &noise, &spec)?;
        examples.push(Example {
            noisy: vec![mix.outer, mix.inear],
            target: outer,
        });
    }
    let val = examples.split_off(cfg.num_train);
    Ok((examples, val))
}
