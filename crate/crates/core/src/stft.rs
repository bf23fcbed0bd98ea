//! Square-root Hann STFT with 50% overlap.
//!
//! Frames are centered: frame `l` has its center at sample `l * frame_shift`,
//! and the signal is extended at both ends by reflection (without repeating the
//! edge sample). A signal of `n` samples yields `ceil(n / frame_shift)` frames.
//! Synthesis overlap-adds the windowed inverse transforms and divides by the
//! summed squared window, which is exactly 1 everywhere except in the last
//! half frame.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_FRAME_LEN: usize = 512;

/// Below this summed squared window a synthesized sample is set to zero.
const ENVELOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStftConfig", into = "RawStftConfig")]
pub struct StftConfig {
    sample_rate_hz: u32,
    frame_len: usize,
}

#[derive(Serialize, Deserialize)]
struct RawStftConfig {
    sample_rate_hz: u32,
    frame_len: usize,
    frame_shift: usize,
    num_bins: usize,
}

impl TryFrom<RawStftConfig> for StftConfig {
    type Error = OvrError;

    fn try_from(raw: RawStftConfig) -> Result<Self> {
        let cfg = StftConfig::new(raw.sample_rate_hz, raw.frame_len)?;
        if raw.frame_shift != cfg.frame_shift() || raw.num_bins != cfg.num_bins() {
            return Err(OvrError::Config(
                "frame_shift must be frame_len/2 and num_bins frame_len/2+1".into(),
            ));
        }
        Ok(cfg)
    }
}

impl From<StftConfig> for RawStftConfig {
    fn from(cfg: StftConfig) -> Self {
        RawStftConfig {
            sample_rate_hz: cfg.sample_rate_hz,
            frame_len: cfg.frame_len,
            frame_shift: cfg.frame_shift(),
            num_bins: cfg.num_bins(),
        }
    }
}

impl Default for StftConfig {
    /// 16 kHz, 32 ms frames, 16 ms shift.
    fn default() -> Self {
        StftConfig {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            frame_len: DEFAULT_FRAME_LEN,
        }
    }
}

impl StftConfig {
    pub fn new(sample_rate_hz: u32, frame_len: usize) -> Result<Self> {
        if frame_len < 2 || frame_len % 2 != 0 {
            return Err(OvrError::Config(format!(
                "frame length must be even and at least 2, got {frame_len}"
            )));
        }
        if sample_rate_hz == 0 {
            return Err(OvrError::Config("sample rate must be positive".into()));
        }
        Ok(StftConfig {
            sample_rate_hz,
            frame_len,
        })
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn frame_shift(&self) -> usize {
        self.frame_len / 2
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames produced for a signal of `num_samples` samples.
    pub fn num_frames(&self, num_samples: usize) -> usize {
        num_samples.div_ceil(self.frame_shift())
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate_hz as f64 / self.frame_shift() as f64
    }

    /// Center time of frame `l` in seconds.
    pub fn frame_center_secs(&self, frame: usize) -> f64 {
        (frame * self.frame_shift()) as f64 / self.sample_rate_hz as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Waveform {
            samples,
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        Waveform::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.samples.iter().all(|s| s.is_finite()) {
            Ok(())
        } else {
            Err(OvrError::NonFinite(what))
        }
    }
}

/// Complex STFT coefficients of one channel, indexed `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Array2<Complex64>,
    config: StftConfig,
    num_samples: usize,
}

impl Spectrogram {
    pub fn new(bins: Array2<Complex64>, config: StftConfig, num_samples: usize) -> Result<Self> {
        let expected = (config.num_bins(), config.num_frames(num_samples));
        if bins.dim() != expected {
            return Err(OvrError::Shape(format!(
                "spectrogram of {num_samples} samples must be {expected:?}, got {:?}",
                bins.dim()
            )));
        }
        if bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(OvrError::NonFinite("spectrogram"));
        }
        Ok(Spectrogram {
            bins,
            config,
            num_samples,
        })
    }

    pub fn zeros(config: StftConfig, num_samples: usize) -> Self {
        Spectrogram {
            bins: Array2::zeros((config.num_bins(), config.num_frames(num_samples))),
            config,
            num_samples,
        }
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.bins
    }

    pub fn into_bins(self) -> Array2<Complex64> {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.bins.ncols()
    }

    /// Length of the waveform this spectrogram synthesizes back to.
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.bins.dim() == other.bins.dim() && self.num_samples == other.num_samples
    }
}

/// Periodic Hann window, square-rooted: `sqrt(0.5 - 0.5 cos(2 pi n / N))`.
pub fn make_window(config: &StftConfig) -> Vec<f64> {
    let n = config.frame_len();
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
        .collect()
}

/// Maps any integer index onto `[0, len)` by mirror reflection about the
/// first and last sample.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Weight of bin `k` in a one-sided spectrum of an `n`-point real transform.
fn one_sided_weight(k: usize, n: usize) -> f64 {
    if k == 0 || 2 * k == n {
        1.0
    } else {
        2.0
    }
}

/// Planned STFT analysis/synthesis pair for one configuration.
#[derive(Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("config", &self.config).finish()
    }
}

impl Stft {
    pub fn new(config: StftConfig) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        Stft {
            window: make_window(&config),
            forward: planner.plan_fft_forward(config.frame_len()),
            inverse: planner.plan_fft_inverse(config.frame_len()),
            config,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn check_rate(&self, rate: u32) -> Result<()> {
        if rate != self.config.sample_rate_hz() {
            return Err(OvrError::SampleRate {
                expected: self.config.sample_rate_hz(),
                found: rate,
            });
        }
        Ok(())
    }

    pub fn analyze(&self, x: &Waveform) -> Result<Spectrogram> {
        self.check_rate(x.sample_rate_hz)?;
        if x.is_empty() {
            return Err(OvrError::Empty("cannot analyze an empty waveform".into()));
        }
        x.ensure_finite("waveform")?;
        Ok(self.analyze_samples(&x.samples))
    }

    /// Analysis without rate checks. `x` must be non-empty.
    pub fn analyze_samples(&self, x: &[f64]) -> Spectrogram {
        assert!(!x.is_empty(), "analyze_samples on empty input");
        let n = self.config.frame_len();
        let shift = self.config.frame_shift();
        let half = n as isize / 2;
        let num_frames = self.config.num_frames(x.len());
        let mut bins = Array2::zeros((self.config.num_bins(), num_frames));
        let mut frame = vec![0.0; n];
        let mut spectrum = self.forward.make_output_vec();
        for l in 0..num_frames {
            let start = (l * shift) as isize - half;
            for (j, (v, w)) in frame.iter_mut().zip(&self.window).enumerate() {
                *v = x[reflect_index(start + j as isize, x.len())] * w;
            }
            self.forward
                .process(&mut frame, &mut spectrum)
                .expect("buffer sizes fixed by plan");
            bins.column_mut(l)
                .iter_mut()
                .zip(&spectrum)
                .for_each(|(b, s)| *b = *s);
        }
        Spectrogram {
            bins,
            config: self.config,
            num_samples: x.len(),
        }
    }

    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Waveform> {
        if spec.config != self.config {
            return Err(OvrError::Shape("spectrogram config differs from STFT".into()));
        }
        let expected = (self.config.num_bins(), self.config.num_frames(spec.num_samples));
        if spec.bins.dim() != expected {
            return Err(OvrError::Shape(format!(
                "expected {expected:?} bins, got {:?}",
                spec.bins.dim()
            )));
        }
        Ok(Waveform::new(
            self.synthesize_bins(&spec.bins, spec.num_samples),
            self.config.sample_rate_hz(),
        ))
    }

    /// Windowed inverse transform of one frame, scaled by `1/N`.
    pub fn synthesize_frame(&self, frame_bins: &[Complex64]) -> Vec<f64> {
        let n = self.config.frame_len();
        let mut spectrum: Vec<Complex64> = frame_bins.to_vec();
        // The inverse real transform ignores these parts.
        spectrum[0].im = 0.0;
        spectrum[n / 2].im = 0.0;
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut spectrum, &mut out)
            .expect("buffer sizes fixed by plan");
        let scale = 1.0 / n as f64;
        out.iter_mut()
            .zip(&self.window)
            .for_each(|(o, w)| *o *= w * scale);
        out
    }

    /// Windowed forward transform of one raw (unwindowed) frame.
    pub fn analyze_frame(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<f64> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| x * w)
            .collect();
        let mut spectrum = self.forward.make_output_vec();
        self.forward
            .process(&mut buf, &mut spectrum)
            .expect("buffer sizes fixed by plan");
        spectrum
    }

    /// Summed squared window over the padded synthesis buffer.
    fn envelope(&self, num_frames: usize) -> Vec<f64> {
        let n = self.config.frame_len();
        let shift = self.config.frame_shift();
        let mut env = vec![0.0; (num_frames.max(1) - 1) * shift + n];
        for l in 0..num_frames {
            for (e, w) in env[l * shift..l * shift + n].iter_mut().zip(&self.window) {
                *e += w * w;
            }
        }
        env
    }

    fn synthesize_bins(&self, bins: &Array2<Complex64>, num_samples: usize) -> Vec<f64> {
        let n = self.config.frame_len();
        let shift = self.config.frame_shift();
        let half = n / 2;
        let num_frames = bins.ncols();
        let env = self.envelope(num_frames);
        let mut buf = vec![0.0; env.len()];
        let mut column = vec![Complex64::new(0.0, 0.0); bins.nrows()];
        for l in 0..num_frames {
            column
                .iter_mut()
                .zip(bins.column(l))
                .for_each(|(c, b)| *c = *b);
            let frame = self.synthesize_frame(&column);
            for (b, v) in buf[l * shift..l * shift + n].iter_mut().zip(&frame) {
                *b += v;
            }
        }
        (0..num_samples)
            .map(|t| {
                let p = t + half;
                match (buf.get(p), env.get(p)) {
                    (Some(b), Some(&e)) if e > ENVELOPE_FLOOR => b / e,
                    _ => 0.0,
                }
            })
            .collect()
    }

    /// Transpose of [`Stft::analyze_samples`] as a real-linear map: takes
    /// `dL/dRe + i dL/dIm` per bin and returns `dL/dx` per sample.
    pub fn analyze_adjoint(&self, grad: &Array2<Complex64>, num_samples: usize) -> Vec<f64> {
        let n = self.config.frame_len();
        let shift = self.config.frame_shift();
        let half = n as isize / 2;
        let mut out = vec![0.0; num_samples];
        let mut spectrum = vec![Complex64::new(0.0, 0.0); self.config.num_bins()];
        let mut frame = self.inverse.make_output_vec();
        for l in 0..grad.ncols() {
            for (k, (s, g)) in spectrum.iter_mut().zip(grad.column(l)).enumerate() {
                *s = g / one_sided_weight(k, n);
            }
            spectrum[0].im = 0.0;
            spectrum[n / 2].im = 0.0;
            self.inverse
                .process(&mut spectrum, &mut frame)
                .expect("buffer sizes fixed by plan");
            let start = (l * shift) as isize - half;
            for (j, (v, w)) in frame.iter().zip(&self.window).enumerate() {
                out[reflect_index(start + j as isize, num_samples)] += v * w;
            }
        }
        out
    }

    /// Transpose of synthesis: maps `dL/dy` per output sample to
    /// `dL/dRe + i dL/dIm` per bin.
    pub fn synthesize_adjoint(&self, grad: &[f64], num_frames: usize) -> Array2<Complex64> {
        let n = self.config.frame_len();
        let shift = self.config.frame_shift();
        let half = n / 2;
        let env = self.envelope(num_frames);
        let mut gbuf = vec![0.0; env.len()];
        for (t, g) in grad.iter().enumerate() {
            let p = t + half;
            if p < env.len() && env[p] > ENVELOPE_FLOOR {
                gbuf[p] = g / env[p];
            }
        }
        let mut out = Array2::zeros((self.config.num_bins(), num_frames));
        let mut frame = vec![0.0; n];
        let mut spectrum = self.forward.make_output_vec();
        let scale = 1.0 / n as f64;
        for l in 0..num_frames {
            for (j, (f, w)) in frame.iter_mut().zip(&self.window).enumerate() {
                *f = gbuf[l * shift + j] * w;
            }
            self.forward
                .process(&mut frame, &mut spectrum)
                .expect("buffer sizes fixed by plan");
            for (k, (o, s)) in out.column_mut(l).iter_mut().zip(&spectrum).enumerate() {
                *o = s * (one_sided_weight(k, n) * scale);
            }
            out[[0, l]].im = 0.0;
            out[[n / 2, l]].im = 0.0;
        }
        out
    }
}

pub fn analyze(x: &Waveform, config: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*config).analyze(x)
}

pub fn synthesize(spec: &Spectrogram, config: &StftConfig) -> Result<Waveform> {
    Stft::new(*config).synthesize(spec)
}
