//! FT-JNF mask estimator: an LSTM across frequency within each frame, an
//! LSTM across frames for each frequency, then a dense layer with `tanh`
//! producing one complex mask per input channel.
//!
//! Channel order is `[outer, inear]` for two-microphone models; a
//! one-microphone model takes only the in-ear channel.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, Axis};
use realfft::num_complex::Complex64;

use super::config::ModelConfig;
use super::lstm::{backward_sequence, forward_sequence, SequenceCache};
use super::weights::{DenseWeights, WeightSet};
use crate::error::{OvrError, Result};
use crate::stft::{reflect_index, Spectrogram, Stft, Waveform};

/// Complex masks, one `(K, L)` grid per input channel, real and imaginary
/// parts in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub masks: Vec<Array2<Complex64>>,
}

impl MaskPair {
    /// Mask for the first channel (outer, or in-ear for one-mic models).
    pub fn outer(&self) -> &Array2<Complex64> {
        &self.masks[0]
    }

    pub fn inear(&self) -> Option<&Array2<Complex64>> {
        self.masks.get(1)
    }

    pub fn max_abs_component(&self) -> f64 {
        self.masks
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0f64, |acc, c| acc.max(c.re.abs()).max(c.im.abs()))
    }
}

/// Activations retained by [`FtJnf::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    f_lstm: SequenceCache,
    t_lstm: SequenceCache,
    /// `tanh` outputs, `[L, K, 2M]`.
    activations: Array3<f64>,
}

#[derive(Debug, Clone)]
pub struct FtJnf {
    config: ModelConfig,
    weights: WeightSet,
}

fn dense_tanh(dense: &DenseWeights, hidden: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::zeros((hidden.nrows(), dense.w.nrows()));
    for mut row in z.rows_mut() {
        row.assign(&dense.b);
    }
    general_mat_mul(1.0, hidden, &dense.w.t(), 1.0, &mut z);
    z.mapv_inplace(f64::tanh);
    z
}

impl FtJnf {
    pub fn new(config: ModelConfig, weights: WeightSet) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        Ok(FtJnf { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightSet {
        &mut self.weights
    }

    pub fn into_weights(self) -> WeightSet {
        self.weights
    }

    fn check_inputs(&self, noisy: &[&Spectrogram]) -> Result<(usize, usize)> {
        if noisy.len() != self.config.num_mics {
            return Err(OvrError::Shape(format!(
                "model expects {} channels, got {}",
                self.config.num_mics,
                noisy.len()
            )));
        }
        let first = noisy[0];
        if noisy.iter().any(|s| !s.same_shape(first)) {
            return Err(OvrError::Shape("channels differ in shape".into()));
        }
        if noisy
            .iter()
            .any(|s| s.bins().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()))
        {
            return Err(OvrError::NonFinite("model input"));
        }
        Ok(first.bins().dim())
    }

    /// Input features `[K, L, 2M]`: real and imaginary parts per channel.
    fn features(&self, noisy: &[&Spectrogram]) -> Result<Array3<f64>> {
        let (k, l) = self.check_inputs(noisy)?;
        let mut x = Array3::zeros((k, l, self.config.io_size()));
        for (m, spec) in noisy.iter().enumerate() {
            for ((kk, ll), c) in spec.bins().indexed_iter() {
                x[[kk, ll, 2 * m]] = c.re;
                x[[kk, ll, 2 * m + 1]] = c.im;
            }
        }
        Ok(x)
    }

    fn activations_to_masks(&self, act: &Array3<f64>) -> MaskPair {
        let (l, k, _) = act.dim();
        let masks = (0..self.config.num_mics)
            .map(|m| {
                Array2::from_shape_fn((k, l), |(kk, ll)| {
                    Complex64::new(act[[ll, kk, 2 * m]], act[[ll, kk, 2 * m + 1]])
                })
            })
            .collect();
        MaskPair { masks }
    }

    pub fn forward(&self, noisy: &[&Spectrogram]) -> Result<MaskPair> {
        Ok(self.forward_cached(noisy)?.0)
    }

    pub fn forward_cached(&self, noisy: &[&Spectrogram]) -> Result<(MaskPair, ForwardCache)> {
        let features = self.features(noisy)?;
        let (k, l, _) = features.dim();
        let f_lstm = forward_sequence(&self.weights.f_lstm, features);
        let t_in = f_lstm
            .outputs()
            .view()
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned();
        let t_lstm = forward_sequence(&self.weights.t_lstm, t_in);
        let hidden = t_lstm
            .outputs()
            .view()
            .into_shape_with_order((l * k, self.config.h_t))
            .expect("standard layout")
            .to_owned();
        let activations = dense_tanh(&self.weights.dense, &hidden)
            .into_shape_with_order((l, k, self.config.io_size()))
            .expect("row count is l * k");
        let masks = self.activations_to_masks(&activations);
        Ok((
            masks,
            ForwardCache {
                f_lstm,
                t_lstm,
                activations,
            },
        ))
    }

    /// Weight gradients given `dL/dRe + i dL/dIm` for every mask bin.
    pub fn backward(&self, cache: &ForwardCache, d_masks: &[Array2<Complex64>]) -> WeightSet {
        let (l, k, io) = cache.activations.dim();
        let mut dz = Array2::zeros((l * k, io));
        for (m, dm) in d_masks.iter().enumerate() {
            for ((kk, ll), d) in dm.indexed_iter() {
                let row = ll * k + kk;
                let a_re = cache.activations[[ll, kk, 2 * m]];
                let a_im = cache.activations[[ll, kk, 2 * m + 1]];
                dz[[row, 2 * m]] = d.re * (1.0 - a_re * a_re);
                dz[[row, 2 * m + 1]] = d.im * (1.0 - a_im * a_im);
            }
        }
        let hidden = cache
            .t_lstm
            .outputs()
            .view()
            .into_shape_with_order((l * k, self.config.h_t))
            .expect("standard layout");
        let mut grads = WeightSet::zeros(&self.config);
        general_mat_mul(1.0, &dz.t(), &hidden, 0.0, &mut grads.dense.w);
        grads.dense.b = dz.sum_axis(Axis(0));
        let mut d_hidden = Array2::zeros((l * k, self.config.h_t));
        general_mat_mul(1.0, &dz, &self.weights.dense.w, 0.0, &mut d_hidden);
        let d_hidden = d_hidden
            .into_shape_with_order((l, k, self.config.h_t))
            .expect("row count is l * k");
        let (d_t_in, t_grads) = backward_sequence(&self.weights.t_lstm, &cache.t_lstm, &d_hidden);
        let d_f_out = d_t_in
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned();
        let (_, f_grads) = backward_sequence(&self.weights.f_lstm, &cache.f_lstm, &d_f_out);
        grads.t_lstm = t_grads;
        grads.f_lstm = f_grads;
        grads
    }

    /// Analysis, mask estimation, masking and synthesis for one utterance.
    pub fn infer_utterance(&self, noisy: &[&Waveform], stft: &Stft) -> Result<Waveform> {
        let first = noisy
            .first()
            .ok_or_else(|| OvrError::Empty("no input channels".into()))?;
        if noisy.iter().any(|w| w.len() != first.len()) {
            return Err(OvrError::Shape("channels differ in length".into()));
        }
        let specs = noisy
            .iter()
            .map(|w| stft.analyze(w))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Spectrogram> = specs.iter().collect();
        let masks = self.forward(&refs)?;
        let estimate = apply_masks(&refs, &masks)?;
        stft.synthesize(&estimate)
    }

    pub fn streaming<'a>(&'a self, stft: &'a Stft) -> Result<StreamingEnhancer<'a>> {
        StreamingEnhancer::new(self, stft)
    }
}

/// Bin-wise `sum_m M_m * Y_m`.
pub fn apply_masks(noisy: &[&Spectrogram], masks: &MaskPair) -> Result<Spectrogram> {
    if noisy.is_empty() || noisy.len() != masks.masks.len() {
        return Err(OvrError::Shape(format!(
            "{} channels but {} masks",
            noisy.len(),
            masks.masks.len()
        )));
    }
    let first = noisy[0];
    let mut out = Spectrogram::zeros(*first.config(), first.num_samples());
    for (spec, mask) in noisy.iter().zip(&masks.masks) {
        if !spec.same_shape(first) || mask.dim() != spec.bins().dim() {
            return Err(OvrError::Shape("mask and spectrogram shapes differ".into()));
        }
        out.bins_mut()
            .zip_mut_with(&(mask * spec.bins()), |o, v| *o += v);
    }
    Ok(out)
}

/// Frame-synchronous enhancer fed one hop of samples per channel at a time.
///
/// Output lags the input by one hop. Feeding an utterance through
/// [`StreamingEnhancer::push`] and [`StreamingEnhancer::finish`] reproduces
/// [`FtJnf::infer_utterance`] on the whole utterance.
pub struct StreamingEnhancer<'a> {
    model: &'a FtJnf,
    stft: &'a Stft,
    h: Array2<f64>,
    c: Array2<f64>,
    /// Per channel, the last `frame_len` input samples.
    window_buf: Vec<Vec<f64>>,
    overlap: Vec<f64>,
    interior_env: Vec<f64>,
    frames_done: usize,
}

impl<'a> StreamingEnhancer<'a> {
    pub fn new(model: &'a FtJnf, stft: &'a Stft) -> Result<Self> {
        let cfg = stft.config();
        if model.config.num_bins != cfg.num_bins() {
            return Err(OvrError::Config(format!(
                "model built for {} bins, STFT has {}",
                model.config.num_bins,
                cfg.num_bins()
            )));
        }
        let shift = cfg.frame_shift();
        let w = stft.window();
        let interior_env = (0..shift)
            .map(|j| w[j + shift] * w[j + shift] + w[j] * w[j])
            .collect();
        Ok(StreamingEnhancer {
            model,
            stft,
            h: Array2::zeros((cfg.num_bins(), model.config.h_t)),
            c: Array2::zeros((cfg.num_bins(), model.config.h_t)),
            window_buf: vec![vec![0.0; cfg.frame_len()]; model.config.num_mics],
            overlap: vec![0.0; cfg.frame_len()],
            interior_env,
            frames_done: 0,
        })
    }

    /// Clears all recurrent and overlap state.
    pub fn reset(&mut self) {
        self.h.fill(0.0);
        self.c.fill(0.0);
        self.window_buf.iter_mut().for_each(|b| b.fill(0.0));
        self.overlap.fill(0.0);
        self.frames_done = 0;
    }

    pub fn frames_done(&self) -> usize {
        self.frames_done
    }

    /// Masks for one frame of noisy spectra, advancing the time-direction
    /// state.
    pub fn process_spectra(&mut self, frames: &[&[Complex64]]) -> Result<Vec<Vec<Complex64>>> {
        let k = self.stft.config().num_bins();
        let cfg = &self.model.config;
        if frames.len() != cfg.num_mics || frames.iter().any(|f| f.len() != k) {
            return Err(OvrError::Shape(format!(
                "expected {} channels of {k} bins",
                cfg.num_mics
            )));
        }
        let mut x = Array3::zeros((k, 1, cfg.io_size()));
        for (m, frame) in frames.iter().enumerate() {
            for (kk, c) in frame.iter().enumerate() {
                if !c.re.is_finite() || !c.im.is_finite() {
                    return Err(OvrError::NonFinite("streaming input"));
                }
                x[[kk, 0, 2 * m]] = c.re;
                x[[kk, 0, 2 * m + 1]] = c.im;
            }
        }
        let f_out = forward_sequence(&self.model.weights.f_lstm, x)
            .into_outputs()
            .into_shape_with_order((k, cfg.h_f))
            .expect("one frame");
        let mut gates = Array2::zeros((k, 4 * cfg.h_t));
        let mut h_new = Array2::zeros((k, cfg.h_t));
        let mut c_new = Array2::zeros((k, cfg.h_t));
        self.model.weights.t_lstm.step_into(
            f_out.view(),
            self.h.view(),
            self.c.view(),
            gates.view_mut(),
            h_new.view_mut(),
            c_new.view_mut(),
        );
        self.h = h_new;
        self.c = c_new;
        let act = dense_tanh(&self.model.weights.dense, &self.h);
        Ok((0..cfg.num_mics)
            .map(|m| {
                (0..k)
                    .map(|kk| Complex64::new(act[[kk, 2 * m]], act[[kk, 2 * m + 1]]))
                    .collect()
            })
            .collect())
    }

    fn process_window(&mut self) -> Result<()> {
        let spectra: Vec<Vec<Complex64>> = self
            .window_buf
            .iter()
            .map(|b| self.stft.analyze_frame(b))
            .collect();
        let refs: Vec<&[Complex64]> = spectra.iter().map(|s| s.as_slice()).collect();
        let masks = self.process_spectra(&refs)?;
        let mut enhanced = vec![Complex64::new(0.0, 0.0); spectra[0].len()];
        for (spec, mask) in spectra.iter().zip(&masks) {
            for ((e, y), m) in enhanced.iter_mut().zip(spec).zip(mask) {
                *e += m * y;
            }
        }
        let synth = self.stft.synthesize_frame(&enhanced);
        self.overlap
            .iter_mut()
            .zip(&synth)
            .for_each(|(o, s)| *o += s);
        self.frames_done += 1;
        Ok(())
    }

    /// Emits the first half of the overlap buffer and shifts it.
    fn emit(&mut self, shift: usize) -> Vec<f64> {
        let out = if self.frames_done > 1 {
            self.overlap[..shift]
                .iter()
                .zip(&self.interior_env)
                .map(|(o, e)| o / e)
                .collect()
        } else {
            Vec::new()
        };
        self.overlap.copy_within(shift.., 0);
        self.overlap[shift..].fill(0.0);
        out
    }

    /// Feeds one hop (`frame_shift` samples) per channel; returns the
    /// previous hop's enhanced samples (empty on the first call).
    pub fn push(&mut self, hop: &[&[f64]]) -> Result<Vec<f64>> {
        let shift = self.stft.config().frame_shift();
        if hop.len() != self.window_buf.len() || hop.iter().any(|h| h.len() != shift) {
            return Err(OvrError::Shape(format!(
                "push expects {} channels of {shift} samples",
                self.window_buf.len()
            )));
        }
        for (buf, samples) in self.window_buf.iter_mut().zip(hop) {
            if self.frames_done == 0 {
                // Left edge by reflection; position 0 has zero window weight.
                buf[0] = 0.0;
                for j in 1..shift {
                    buf[j] = samples[shift - j];
                }
            } else {
                buf.copy_within(shift.., 0);
            }
            buf[shift..].copy_from_slice(samples);
        }
        self.process_window()?;
        Ok(self.emit(shift))
    }

    /// Flushes the stream. `tail` holds the final partial hop per channel
    /// (fewer than `frame_shift` samples, possibly none). Returns every
    /// remaining output sample, then resets.
    pub fn finish(&mut self, tail: &[&[f64]]) -> Result<Vec<f64>> {
        let shift = self.stft.config().frame_shift();
        let remainder = tail.first().map_or(0, |t| t.len());
        if tail.len() != self.window_buf.len()
            || remainder >= shift
            || tail.iter().any(|t| t.len() != remainder)
        {
            return Err(OvrError::Shape("tail must be a partial hop per channel".into()));
        }
        let total = self.frames_done * shift + remainder;
        let mut out = Vec::new();
        if remainder > 0 {
            let l = self.frames_done;
            let known_start = (l * shift) as isize - shift as isize;
            for (buf, t) in self.window_buf.iter_mut().zip(tail) {
                // samples from known_start up to the end of the signal
                let mut known: Vec<f64> = if l == 0 {
                    Vec::new()
                } else {
                    buf[shift..].to_vec()
                };
                known.extend_from_slice(t);
                let offset = if l == 0 { 0 } else { known_start };
                let fetch = |i: isize| {
                    let idx = reflect_index(i, total) as isize - offset;
                    known.get(idx as usize).copied().unwrap_or(0.0)
                };
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = fetch(known_start + j as isize);
                }
            }
            self.process_window()?;
            out.extend(self.emit(shift));
        }
        if self.frames_done > 0 {
            let w = self.stft.window();
            let last_len = total - (self.frames_done - 1) * shift;
            out.extend((0..last_len).map(|j| {
                let env = w[j + shift] * w[j + shift];
                if env > 1e-12 {
                    self.overlap[j] / env
                } else {
                    0.0
                }
            }));
        }
        self.reset();
        Ok(out)
    }
}

/// Runs a whole utterance through the streaming enhancer hop by hop.
pub fn streaming_infer(model: &FtJnf, stft: &Stft, noisy: &[&Waveform]) -> Result<Waveform> {
    let first = noisy
        .first()
        .ok_or_else(|| OvrError::Empty("no input channels".into()))?;
    if noisy.iter().any(|w| w.len() != first.len()) {
        return Err(OvrError::Shape("channels differ in length".into()));
    }
    let shift = stft.config().frame_shift();
    let mut stream = model.streaming(stft)?;
    let n = first.len();
    let full = n / shift;
    let mut out = Vec::with_capacity(n);
    for h in 0..full {
        let hop: Vec<&[f64]> = noisy
            .iter()
            .map(|w| &w.samples[h * shift..(h + 1) * shift])
            .collect();
        out.extend(stream.push(&hop)?);
    }
    let tail: Vec<&[f64]> = noisy.iter().map(|w| &w.samples[full * shift..]).collect();
    out.extend(stream.finish(&tail)?);
    Ok(Waveform::new(out, first.sample_rate_hz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_stft() -> Stft {
        // K = 3
        Stft::new(StftConfig::new(16_000, 4).unwrap())
    }

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000)
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Plain scalar LSTM step, independent of the batched implementation.
    fn scalar_step(w: &super::super::LstmWeights, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hid = h.len();
        let pre = |row: usize| {
            let mut z = w.b_ih[row] + w.b_hh[row];
            for (j, xv) in x.iter().enumerate() {
                z += w.w_ih[[row, j]] * xv;
            }
            for (j, hv) in h.iter().enumerate() {
                z += w.w_hh[[row, j]] * hv;
            }
            z
        };
        let mut h2 = vec![0.0; hid];
        let mut c2 = vec![0.0; hid];
        for u in 0..hid {
            let i = sig(pre(u));
            let f = sig(pre(hid + u));
            let g = pre(2 * hid + u).tanh();
            let o = sig(pre(3 * hid + u));
            c2[u] = f * c[u] + i * g;
            h2[u] = o * c2[u].tanh();
        }
        (h2, c2)
    }

    /// Scalar re-implementation of the whole mask graph; returns
    /// `masks[m][k][l]` as (re, im).
    fn scalar_forward(w: &WeightSet, inputs: &[Vec<Vec<Complex64>>]) -> Vec<Vec<Vec<(f64, f64)>>> {
        let mics = inputs.len();
        let k_bins = inputs[0].len();
        let frames = inputs[0][0].len();
        let h_f = w.f_lstm.hidden_size();
        let h_t = w.t_lstm.hidden_size();
        // F-LSTM per frame
        let mut f_out = vec![vec![vec![0.0; h_f]; frames]; k_bins];
        for l in 0..frames {
            let (mut h, mut c) = (vec![0.0; h_f], vec![0.0; h_f]);
            for k in 0..k_bins {
                let x: Vec<f64> = (0..mics)
                    .flat_map(|m| [inputs[m][k][l].re, inputs[m][k][l].im])
                    .collect();
                let (h2, c2) = scalar_step(&w.f_lstm, &x, &h, &c);
                h = h2;
                c = c2;
                f_out[k][l] = h.clone();
            }
        }
        let mut out = vec![vec![vec![(0.0, 0.0); frames]; k_bins]; mics];
        for k in 0..k_bins {
            let (mut h, mut c) = (vec![0.0; h_t], vec![0.0; h_t]);
            for l in 0..frames {
                let (h2, c2) = scalar_step(&w.t_lstm, &f_out[k][l], &h, &c);
                h = h2;
                c = c2;
                let dense = |row: usize| {
                    let mut z = w.dense.b[row];
                    for (j, hv) in h.iter().enumerate() {
                        z += w.dense.w[[row, j]] * hv;
                    }
                    z.tanh()
                };
                for (m, mask) in out.iter_mut().enumerate() {
                    mask[k][l] = (dense(2 * m), dense(2 * m + 1));
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let stft = tiny_stft();
        let cfg = ModelConfig::new(2, 2, 2, 3).unwrap();
        for seed in 0..3 {
            let model = FtJnf::new(cfg, WeightSet::init(&cfg, seed)).unwrap();
            // L = 2 frames
            let outer = stft.analyze_samples(&random_wave(4, 10 + seed).samples);
            let inear = stft.analyze_samples(&random_wave(4, 20 + seed).samples);
            assert_eq!(outer.bins().dim(), (3, 2));
            let masks = model.forward(&[&outer, &inear]).unwrap();
            let to_nested = |s: &Spectrogram| -> Vec<Vec<Complex64>> {
                (0..3).map(|k| (0..2).map(|l| s.bins()[[k, l]]).collect()).collect()
            };
            let oracle = scalar_forward(model.weights(), &[to_nested(&outer), to_nested(&inear)]);
            for m in 0..2 {
                for k in 0..3 {
                    for l in 0..2 {
                        let got = masks.masks[m][[k, l]];
                        let (re, im) = oracle[m][k][l];
                        assert!((got.re - re).abs() < 1e-10 && (got.im - im).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_model_gives_zero_masks() {
        let cfg = ModelConfig::new(3, 2, 2, 257).unwrap();
        let model = FtJnf::new(cfg, WeightSet::zeros(&cfg)).unwrap();
        let stft = Stft::new(StftConfig::default());
        let y = stft.analyze_samples(&random_wave(1000, 1).samples);
        let masks = model.forward(&[&y, &y]).unwrap();
        assert_eq!(masks.outer().dim(), (257, 4));
        assert_eq!(masks.max_abs_component(), 0.0);
        let out = model
            .infer_utterance(&[&random_wave(1000, 1), &random_wave(1000, 2)], &stft)
            .unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.peak() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = ModelConfig::new(2, 2, 2, 3).unwrap();
        let model = FtJnf::new(cfg, WeightSet::zeros(&cfg)).unwrap();
        let stft = tiny_stft();
        let a = stft.analyze_samples(&[0.0; 8]);
        let b = stft.analyze_samples(&[0.0; 6]);
        assert!(model.forward(&[&a]).is_err());
        assert!(model.forward(&[&a, &b]).is_err());
        let mut bad = a.clone();
        bad.bins_mut()[[0, 0]] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(model.forward(&[&a, &bad]), Err(OvrError::NonFinite(_))));
        let other = ModelConfig::new(3, 2, 2, 3).unwrap();
        assert!(FtJnf::new(other, WeightSet::zeros(&cfg)).is_err());
    }

    #[test]
    fn apply_masks_examples() {
        let cfg = StftConfig::new(16_000, 4).unwrap();
        let grid = |v: Complex64| Spectrogram::new(Array2::from_elem((3, 1), v), cfg, 2).unwrap();
        let y_o = grid(Complex64::new(1.0, 1.0));
        let y_i = grid(Complex64::new(2.0, 0.0));
        let mask = |a: Complex64, b: Complex64| MaskPair {
            masks: vec![Array2::from_elem((3, 1), a), Array2::from_elem((3, 1), b)],
        };
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        assert_eq!(apply_masks(&[&y_o, &y_i], &mask(one, zero)).unwrap(), y_o);
        let zeroed = apply_masks(&[&y_o, &y_i], &mask(zero, zero)).unwrap();
        assert!(zeroed.bins().iter().all(|c| *c == zero));
        let mixed = apply_masks(
            &[&y_o, &y_i],
            &mask(Complex64::new(0.5, 0.0), Complex64::new(0.25, 0.25)),
        )
        .unwrap();
        assert!(mixed.bins().iter().all(|c| (c - Complex64::new(1.0, 1.0)).norm() < 1e-15));
        assert!(apply_masks(&[&y_o], &mask(one, zero)).is_err());
    }

    #[test]
    fn large_outer_bias_passes_outer_through() {
        let cfg = ModelConfig::new(4, 4, 2, 257).unwrap();
        let mut weights = WeightSet::zeros(&cfg);
        weights.dense.b[0] = 40.0;
        let model = FtJnf::new(cfg, weights).unwrap();
        let stft = Stft::new(StftConfig::default());
        let outer = random_wave(3000, 4);
        let inear = random_wave(3000, 5);
        let out = model.infer_utterance(&[&outer, &inear], &stft).unwrap();
        let err = out
            .samples
            .iter()
            .zip(&outer.samples)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "err={err}");
    }

    #[test]
    fn streaming_matches_batch() {
        let stft = Stft::new(StftConfig::default());
        let cfg = ModelConfig::new(6, 5, 2, 257).unwrap();
        let model = FtJnf::new(cfg, WeightSet::init(&cfg, 7)).unwrap();
        for (len, seed) in [(256usize, 1u64), (300, 2), (2560, 3), (2600, 4), (100, 5), (1, 6)] {
            let outer = random_wave(len, seed);
            let inear = random_wave(len, seed + 100);
            let batch = model.infer_utterance(&[&outer, &inear], &stft).unwrap();
            let stream = streaming_infer(&model, &stft, &[&outer, &inear]).unwrap();
            assert_eq!(stream.len(), len);
            let err = batch
                .samples
                .iter()
                .zip(&stream.samples)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-10, "len={len} err={err}");
        }
    }

    #[test]
    fn stream_reset_reproduces_fresh_output() {
        let stft = Stft::new(StftConfig::default());
        let cfg = ModelConfig::new(4, 3, 2, 257).unwrap();
        let model = FtJnf::new(cfg, WeightSet::init(&cfg, 8)).unwrap();
        let a = random_wave(256, 1);
        let b = random_wave(256, 2);
        let mut stream = model.streaming(&stft).unwrap();
        let first = stream.process_spectra(&[
            &stft.analyze_frame(&[a.samples.clone(), b.samples.clone()].concat()),
            &stft.analyze_frame(&[b.samples.clone(), a.samples.clone()].concat()),
        ]).unwrap();
        stream.push(&[&a.samples, &b.samples]).unwrap();
        stream.reset();
        let again = stream.process_spectra(&[
            &stft.analyze_frame(&[a.samples.clone(), b.samples.clone()].concat()),
            &stft.analyze_frame(&[b.samples.clone(), a.samples.clone()].concat()),
        ]).unwrap();
        assert_eq!(first, again);
        assert!(stream.push(&[&a.samples[..10], &b.samples[..10]]).is_err());
    }
}
