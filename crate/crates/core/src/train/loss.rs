//! Combined L1 loss in the time domain and on the re-analyzed STFT.

use ndarray::Array2;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};
use crate::stft::Stft;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub time: f64,
    pub real: f64,
    pub imag: f64,
    pub magnitude: f64,
    /// Magnitudes are `sqrt(re^2 + im^2 + eps^2)`.
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            time: 1.0,
            real: 1.0,
            imag: 1.0,
            magnitude: 1.0,
            eps: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.time, self.real, self.imag, self.magnitude];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
            return Err(OvrError::Config(
                "loss weights must be finite, non-negative and not all zero".into(),
            ));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(OvrError::Config("loss epsilon must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// `sign` with `sign(0) = 0`, the subgradient used for every L1 term.
fn l1_slope(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn smooth_abs(c: Complex64, eps: f64) -> f64 {
    (c.norm_sqr() + eps * eps).sqrt()
}

/// Loss value and, when `want_grad`, `dL/d estimate` per sample.
pub(crate) fn loss_with_grad(
    estimate: &[f64],
    target: &[f64],
    cfg: &LossConfig,
    stft: &Stft,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    cfg.validate()?;
    if estimate.len() != target.len() {
        return Err(OvrError::Shape(format!(
            "estimate has {} samples, target {}",
            estimate.len(),
            target.len()
        )));
    }
    let n = estimate.len();
    if n == 0 {
        return Err(OvrError::Empty("loss on empty signals".into()));
    }
    let time = estimate.iter().zip(target).map(|(e, t)| (e - t).abs()).sum::<f64>() / n as f64;
    let est = stft.analyze_samples(estimate);
    let tgt = stft.analyze_samples(target);
    let count = est.bins().len() as f64;
    let (mut re, mut im, mut mag) = (0.0, 0.0, 0.0);
    let mut d_spec = want_grad.then(|| Array2::<Complex64>::zeros(est.bins().dim()));
    for (idx, (e, t)) in est.bins().indexed_iter().map(|(i, e)| (i, (e, tgt.bins()[i]))) {
        let dre = e.re - t.re;
        let dim = e.im - t.im;
        let me = smooth_abs(*e, cfg.eps);
        let dmag = me - smooth_abs(t, cfg.eps);
        re += dre.abs();
        im += dim.abs();
        mag += dmag.abs();
        if let Some(g) = d_spec.as_mut() {
            let s = cfg.magnitude * l1_slope(dmag) / me;
            g[idx] = Complex64::new(
                cfg.real * l1_slope(dre) + s * e.re,
                cfg.imag * l1_slope(dim) + s * e.im,
            ) / count;
        }
    }
    let loss = cfg.time * time + (cfg.real * re + cfg.imag * im + cfg.magnitude * mag) / count;
    if !loss.is_finite() {
        return Err(OvrError::NonFinite("loss"));
    }
    let grad = d_spec.map(|g| {
        let mut grad = stft.analyze_adjoint(&g, n);
        for (d, (e, t)) in grad.iter_mut().zip(estimate.iter().zip(target)) {
            *d += cfg.time * l1_slope(e - t) / n as f64;
        }
        grad
    });
    Ok((loss, grad))
}

/// Weighted sum of mean absolute errors: time samples, then real parts,
/// imaginary parts and magnitudes of the STFT of both signals.
pub fn loss_combined_l1(estimate: &[f64], target: &[f64], cfg: &LossConfig, stft: &Stft) -> Result<f64> {
    Ok(loss_with_grad(estimate, target, cfg, stft, false)?.0)
}

/// `dL/d estimate` of [`loss_combined_l1`].
pub fn loss_gradient(estimate: &[f64], target: &[f64], cfg: &LossConfig, stft: &Stft) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = loss_with_grad(estimate, target, cfg, stft, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_signals_have_zero_loss_and_gradient() {
        let stft = Stft::new(StftConfig::default());
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.01).sin()).collect();
        let (l, g) = loss_gradient(&x, &x, &LossConfig::default(), &stft).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_is_symmetric() {
        let stft = Stft::new(StftConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a: Vec<f64> = (0..777).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..777).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = LossConfig::default();
        let ab = loss_combined_l1(&a, &b, &cfg, &stft).unwrap();
        let ba = loss_combined_l1(&b, &a, &cfg, &stft).unwrap();
        assert!((ab - ba).abs() < 1e-12 * ab);
    }

    #[test]
    fn constant_estimate_against_silence() {
        let stft = Stft::new(StftConfig::default());
        let est = vec![0.5; 512];
        let tgt = vec![0.0; 512];
        let time_only = LossConfig {
            real: 0.0,
            imag: 0.0,
            magnitude: 0.0,
            ..LossConfig::default()
        };
        assert!((loss_combined_l1(&est, &tgt, &time_only, &stft).unwrap() - 0.5).abs() < 1e-15);

        // direct evaluation of the STFT terms with an independent DFT
        let window: Vec<f64> = (0..512)
            .map(|n| (std::f64::consts::PI * n as f64 / 512.0).sin())
            .collect();
        let (mut re, mut im, mut mag, mut count) = (0.0, 0.0, 0.0, 0.0);
        for l in 0..2 {
            let start = l as isize * 256 - 256;
            for k in 0..257 {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, w) in window.iter().enumerate() {
                    let t = start + j as isize;
                    let idx = if t < 0 { -t } else if t > 511 { 2 * 511 - t } else { t };
                    let ph = -2.0 * std::f64::consts::PI * (k * j) as f64 / 512.0;
                    acc += Complex64::from_polar(w * est[idx as usize], ph);
                }
                re += acc.re.abs();
                im += acc.im.abs();
                mag += (acc.norm_sqr() + 1e-16).sqrt() - 1e-8;
                count += 1.0;
            }
        }
        let expected = 0.5 + (re + im + mag) / count;
        let got = loss_combined_l1(&est, &tgt, &LossConfig::default(), &stft).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let zero = LossConfig {
            time: 0.0,
            real: 0.0,
            imag: 0.0,
            magnitude: 0.0,
            eps: 1e-8,
        };
        assert!(zero.validate().is_err());
        let negative = LossConfig {
            time: -1.0,
            ..LossConfig::default()
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let stft = Stft::new(StftConfig::new(16_000, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tgt: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = LossConfig::default();
        let (_, g) = loss_gradient(&est, &tgt, &cfg, &stft).unwrap();
        let h = 1e-6;
        for i in 0..est.len() {
            let mut p = est.clone();
            p[i] += h;
            let mut m = est.clone();
            m[i] -= h;
            let fd = (loss_combined_l1(&p, &tgt, &cfg, &stft).unwrap()
                - loss_combined_l1(&m, &tgt, &cfg, &stft).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }
}
