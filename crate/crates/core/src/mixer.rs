//! Two-channel noisy captures: spatialized noise added to own voice at a
//! target SNR measured at the outer microphone.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};
use crate::io::read_mono;
use crate::stft::Waveform;

pub const NUM_DIRECTIONS: usize = 8;

/// Above this many taps convolution goes through the FFT.
const DIRECT_CONV_MAX_TAPS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct IrPair {
    pub outer: Vec<f64>,
    pub inear: Vec<f64>,
}

impl IrPair {
    pub fn new(outer: Vec<f64>, inear: Vec<f64>) -> Result<Self> {
        if outer.len() != inear.len() || outer.is_empty() {
            return Err(OvrError::Shape(format!(
                "IR pair lengths {} and {} must be equal and non-zero",
                outer.len(),
                inear.len()
            )));
        }
        if !outer.iter().chain(&inear).all(|v| v.is_finite()) {
            return Err(OvrError::NonFinite("impulse response"));
        }
        Ok(IrPair { outer, inear })
    }

    pub fn unit_impulse() -> Self {
        IrPair {
            outer: vec![1.0],
            inear: vec![1.0],
        }
    }
}

/// Impulse responses from 8 horizontal directions in 45 degree steps.
#[derive(Debug, Clone, PartialEq)]
pub struct IrSet {
    directions: Vec<Option<IrPair>>,
    pub sample_rate_hz: u32,
}

impl IrSet {
    pub fn new(directions: Vec<Option<IrPair>>, sample_rate_hz: u32) -> Result<Self> {
        if directions.len() != NUM_DIRECTIONS {
            return Err(OvrError::Shape(format!(
                "expected {NUM_DIRECTIONS} directions, got {}",
                directions.len()
            )));
        }
        Ok(IrSet {
            directions,
            sample_rate_hz,
        })
    }

    pub fn uniform(pair: IrPair, sample_rate_hz: u32) -> Self {
        IrSet {
            directions: vec![Some(pair); NUM_DIRECTIONS],
            sample_rate_hz,
        }
    }

    /// Random sparse FIRs: a direct path within the first 8 taps followed by
    /// a few decaying reflections. The in-ear response is attenuated.
    pub fn synthetic(seed: u64, taps: usize, sample_rate_hz: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = taps.max(1);
        let sparse = |gain: f64, rng: &mut ChaCha8Rng| {
            let mut h = vec![0.0; taps];
            let direct = rng.gen_range(0..taps.min(8));
            h[direct] = gain;
            for _ in 0..6 {
                let t = rng.gen_range(direct..taps);
                let decay = (-(t as f64) / (taps as f64 / 3.0)).exp();
                h[t] += gain * decay * rng.gen_range(-0.5..0.5);
            }
            h
        };
        let directions = (0..NUM_DIRECTIONS)
            .map(|_| {
                let outer = sparse(1.0, &mut rng);
                let inear = sparse(0.2, &mut rng);
                Some(IrPair { outer, inear })
            })
            .collect();
        IrSet {
            directions,
            sample_rate_hz,
        }
    }

    /// Reads `dir{d}_outer.wav` / `dir{d}_inear.wav`. Directions without both
    /// files are left empty.
    pub fn load_dir(dir: &Path, sample_rate_hz: u32) -> Result<Self> {
        let mut directions = Vec::with_capacity(NUM_DIRECTIONS);
        for d in 0..NUM_DIRECTIONS {
            let outer = dir.join(format!("dir{d}_outer.wav"));
            let inear = dir.join(format!("dir{d}_inear.wav"));
            if outer.exists() && inear.exists() {
                let o = read_mono(&outer, sample_rate_hz)?;
                let i = read_mono(&inear, sample_rate_hz)?;
                directions.push(Some(IrPair::new(o.samples, i.samples)?));
            } else {
                directions.push(None);
            }
        }
        if directions.iter().all(Option::is_none) {
            return Err(OvrError::Empty(format!("no impulse responses in {}", dir.display())));
        }
        Ok(IrSet {
            directions,
            sample_rate_hz,
        })
    }

    pub fn direction(&self, d: usize) -> Result<&IrPair> {
        self.directions
            .get(d)
            .and_then(Option::as_ref)
            .ok_or(OvrError::MissingDirection(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "direction")]
pub enum NoiseMode {
    Point(usize),
    #[serde(rename = "diffuse")]
    PseudoDiffuse,
}

impl NoiseMode {
    pub fn num_sources(&self) -> usize {
        match self {
            NoiseMode::Point(_) => 1,
            NoiseMode::PseudoDiffuse => NUM_DIRECTIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub snr_db: f64,
    #[serde(flatten)]
    pub mode: NoiseMode,
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(OvrError::Config("SNR must be finite".into()));
        }
        if let NoiseMode::Point(d) = self.mode {
            if d >= NUM_DIRECTIONS {
                return Err(OvrError::MissingDirection(d));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCapture {
    pub outer: Waveform,
    pub inear: Waveform,
}

impl NoiseCapture {
    pub fn new(outer: Waveform, inear: Waveform) -> Result<Self> {
        if outer.len() != inear.len() || outer.sample_rate_hz != inear.sample_rate_hz {
            return Err(OvrError::Shape("noise channels differ in length or rate".into()));
        }
        Ok(NoiseCapture { outer, inear })
    }

    pub fn len(&self) -> usize {
        self.outer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    fn scaled(&self, g: f64) -> NoiseCapture {
        let s = |w: &Waveform| Waveform::new(w.samples.iter().map(|v| g * v).collect(), w.sample_rate_hz);
        NoiseCapture {
            outer: s(&self.outer),
            inear: s(&self.inear),
        }
    }
}

/// Causal convolution truncated to the length of `x`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    if h.len() <= DIRECT_CONV_MAX_TAPS {
        return (0..x.len())
            .map(|n| {
                let taps = h.len().min(n + 1);
                (0..taps).map(|j| h[j] * x[n - j]).sum()
            })
            .collect();
    }
    let size = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let spectrum = |v: &[f64]| {
        let mut buf = vec![0.0; size];
        buf[..v.len()].copy_from_slice(v);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("buffer sizes match the plan");
        out
    };
    let mut prod: Vec<_> = spectrum(x).iter().zip(spectrum(h)).map(|(a, b)| a * b).collect();
    let mut y = vec![0.0; size];
    inv.process(&mut prod, &mut y).expect("buffer sizes match the plan");
    y.truncate(x.len());
    y.iter_mut().for_each(|v| *v /= size as f64);
    y
}

/// Renders the sources through the IRs without any level normalization.
/// Point mode takes one source, pseudo-diffuse one per direction.
pub fn spatialize_unnormalized(sources: &[&Waveform], irs: &IrSet, mode: NoiseMode) -> Result<NoiseCapture> {
    if sources.len() != mode.num_sources() {
        return Err(OvrError::Shape(format!(
            "{mode:?} needs {} noise sources, got {}",
            mode.num_sources(),
            sources.len()
        )));
    }
    let len = sources[0].len();
    let rate = sources[0].sample_rate_hz;
    if sources.iter().any(|s| s.len() != len || s.sample_rate_hz != rate) {
        return Err(OvrError::Shape("noise sources differ in length or rate".into()));
    }
    if rate != irs.sample_rate_hz {
        return Err(OvrError::SampleRate {
            expected: irs.sample_rate_hz,
            found: rate,
        });
    }
    let directions: Vec<usize> = match mode {
        NoiseMode::Point(d) => vec![d],
        NoiseMode::PseudoDiffuse => (0..NUM_DIRECTIONS).collect(),
    };
    let mut outer = vec![0.0; len];
    let mut inear = vec![0.0; len];
    for (src, d) in sources.iter().zip(directions) {
        let pair = irs.direction(d)?;
        for (acc, v) in outer.iter_mut().zip(convolve(&src.samples, &pair.outer)) {
            *acc += v;
        }
        for (acc, v) in inear.iter_mut().zip(convolve(&src.samples, &pair.inear)) {
            *acc += v;
        }
    }
    NoiseCapture::new(Waveform::new(outer, rate), Waveform::new(inear, rate))
}

/// Point sources are rendered as is; the pseudo-diffuse sum is scaled to unit
/// RMS at the outer channel.
pub fn spatialize(sources: &[&Waveform], irs: &IrSet, mode: NoiseMode) -> Result<NoiseCapture> {
    let capture = spatialize_unnormalized(sources, irs, mode)?;
    match mode {
        NoiseMode::Point(_) => Ok(capture),
        NoiseMode::PseudoDiffuse => {
            let p = capture.outer.power();
            if p <= 0.0 {
                return Err(OvrError::ZeroPower("pseudo-diffuse noise"));
            }
            Ok(capture.scaled(1.0 / p.sqrt()))
        }
    }
}

/// Crops or loops the capture to `len` samples starting at a random circular
/// offset.
pub fn fit_noise<R: Rng>(noise: &NoiseCapture, len: usize, rng: &mut R) -> Result<NoiseCapture> {
    if noise.is_empty() {
        return Err(OvrError::Empty("noise capture has no samples".into()));
    }
    let n = noise.len();
    let offset = rng.gen_range(0..n);
    let take = |w: &Waveform| {
        let samples = (0..len).map(|i| w.samples[(offset + i) % n]).collect();
        Waveform::new(samples, w.sample_rate_hz)
    };
    NoiseCapture::new(take(&noise.outer), take(&noise.inear))
}

/// Splits a mono recording into `count` equally long sources taken at evenly
/// spaced circular offsets, for use as pseudo-diffuse sources.
pub fn split_sources(noise: &Waveform, count: usize, len: usize) -> Vec<Waveform> {
    let n = noise.len().max(1);
    (0..count)
        .map(|c| {
            let offset = c * n / count.max(1);
            let samples = (0..len)
                .map(|i| noise.samples.get((offset + i) % n).copied().unwrap_or(0.0))
                .collect();
            Waveform::new(samples, noise.sample_rate_hz)
        })
        .collect()
}

/// Noise gain that puts `own_power / (g^2 noise_power)` at `snr_db`.
pub fn snr_gain(own_power: f64, noise_power: f64, snr_db: f64) -> Result<f64> {
    if noise_power <= 0.0 {
        return Err(OvrError::ZeroPower("noise"));
    }
    if own_power <= 0.0 {
        return Err(OvrError::ZeroPower("own voice"));
    }
    Ok((own_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub outer: Waveform,
    pub inear: Waveform,
    /// The noise actually added, after fitting and scaling.
    pub noise: NoiseCapture,
    pub gain: f64,
}

/// Adds `noise` to the own-voice pair at `spec.snr_db`, measured over the
/// whole utterance at the outer channel. Noise of the wrong length is fitted
/// with [`fit_noise`] seeded from `spec.seed`; the same gain scales both
/// noise channels.
pub fn mix_at_snr(own_outer: &Waveform, own_inear: &Waveform, noise: &NoiseCapture, spec: &MixSpec) -> Result<Mixture> {
    spec.validate()?;
    if own_outer.len() != own_inear.len() || own_outer.sample_rate_hz != own_inear.sample_rate_hz {
        return Err(OvrError::Shape("own-voice channels differ in length or rate".into()));
    }
    if noise.outer.sample_rate_hz != own_outer.sample_rate_hz {
        return Err(OvrError::SampleRate {
            expected: own_outer.sample_rate_hz,
            found: noise.outer.sample_rate_hz,
        });
    }
    let fitted = if noise.len() == own_outer.len() {
        noise.clone()
    } else {
        fit_noise(noise, own_outer.len(), &mut ChaCha8Rng::seed_from_u64(spec.seed))?
    };
    let gain = snr_gain(own_outer.power(), fitted.outer.power(), spec.snr_db)?;
    let noise = fitted.scaled(gain);
    let add = |s: &Waveform, v: &Waveform| {
        Waveform::new(s.samples.iter().zip(&v.samples).map(|(a, b)| a + b).collect(), s.sample_rate_hz)
    };
    Ok(Mixture {
        outer: add(own_outer, &noise.outer),
        inear: add(own_inear, &noise.inear),
        noise,
        gain,
    })
}

/// `10 log10(sum s^2 / sum v^2)`
pub fn measure_snr(signal: &Waveform, noise: &Waveform) -> Result<f64> {
    if signal.len() != noise.len() {
        return Err(OvrError::Shape(format!(
            "signal has {} samples, noise {}",
            signal.len(),
            noise.len()
        )));
    }
    let e = noise.energy();
    if e <= 0.0 {
        return Err(OvrError::ZeroPower("noise"));
    }
    Ok(10.0 * (signal.energy() / e).log10())
}

/// One line of a mix manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifestRow {
    /// `[outer, inear]` own-voice files
    pub speech: [String; 2],
    pub noise: String,
    #[serde(flatten)]
    pub spec: MixSpec,
}
