use std::fs;
use std::io::BufReader;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::lstm::LstmWeights;
use crate::container::{read_tensors, write_tensors, Tensor};
use crate::error::{OvrError, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights {
    /// `[out, in]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// All trainable tensors of the FT-JNF graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub f_lstm: LstmWeights,
    pub t_lstm: LstmWeights,
    pub dense: DenseWeights,
}

pub const TENSOR_NAMES: [&str; 10] = [
    "f_lstm.W_ih",
    "f_lstm.W_hh",
    "f_lstm.b_ih",
    "f_lstm.b_hh",
    "t_lstm.W_ih",
    "t_lstm.W_hh",
    "t_lstm.b_ih",
    "t_lstm.b_hh",
    "dense.W",
    "dense.b",
];

impl WeightSet {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        WeightSet {
            f_lstm: LstmWeights::zeros(cfg.io_size(), cfg.h_f),
            t_lstm: LstmWeights::zeros(cfg.h_f, cfg.h_t),
            dense: DenseWeights {
                w: Array2::zeros((cfg.io_size(), cfg.h_t)),
                b: Array1::zeros(cfg.io_size()),
            },
        }
    }

    /// Deterministic initialization from a seed.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_lstm = LstmWeights::init(cfg.io_size(), cfg.h_f, &mut rng);
        let t_lstm = LstmWeights::init(cfg.h_f, cfg.h_t, &mut rng);
        let bound = 1.0 / (cfg.h_t as f64).sqrt();
        let w = Array2::from_shape_simple_fn((cfg.io_size(), cfg.h_t), || {
            rng.gen_range(-bound..bound)
        });
        let b = Array1::from_shape_simple_fn(cfg.io_size(), || rng.gen_range(-bound..bound));
        WeightSet {
            f_lstm,
            t_lstm,
            dense: DenseWeights { w, b },
        }
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        self.f_lstm.validate(cfg.io_size(), cfg.h_f)?;
        self.t_lstm.validate(cfg.h_f, cfg.h_t)?;
        if self.dense.w.dim() != (cfg.io_size(), cfg.h_t) || self.dense.b.len() != cfg.io_size() {
            return Err(OvrError::Shape("dense weights do not match config".into()));
        }
        Ok(())
    }

    /// Recovers `(h_f, h_t, num_mics)` from tensor shapes.
    pub fn infer_config(&self, num_bins: usize) -> Result<ModelConfig> {
        let io = self.f_lstm.input_size();
        if io % 2 != 0 {
            return Err(OvrError::Shape(format!("odd F-LSTM input size {io}")));
        }
        let cfg = ModelConfig::new(
            self.f_lstm.hidden_size(),
            self.t_lstm.hidden_size(),
            io / 2,
            num_bins,
        )?;
        self.validate(&cfg)?;
        Ok(cfg)
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn shapes(&self) -> [Vec<usize>; 10] {
        let m = |a: &Array2<f64>| a.shape().to_vec();
        let v = |a: &Array1<f64>| vec![a.len()];
        [
            m(&self.f_lstm.w_ih),
            m(&self.f_lstm.w_hh),
            v(&self.f_lstm.b_ih),
            v(&self.f_lstm.b_hh),
            m(&self.t_lstm.w_ih),
            m(&self.t_lstm.w_hh),
            v(&self.t_lstm.b_ih),
            v(&self.t_lstm.b_hh),
            m(&self.dense.w),
            v(&self.dense.b),
        ]
    }

    pub fn slices(&self) -> [(&'static str, &[f64]); 10] {
        fn flat(s: Option<&[f64]>) -> &[f64] {
            s.expect("weights are contiguous")
        }
        [
            (TENSOR_NAMES[0], flat(self.f_lstm.w_ih.as_slice())),
            (TENSOR_NAMES[1], flat(self.f_lstm.w_hh.as_slice())),
            (TENSOR_NAMES[2], flat(self.f_lstm.b_ih.as_slice())),
            (TENSOR_NAMES[3], flat(self.f_lstm.b_hh.as_slice())),
            (TENSOR_NAMES[4], flat(self.t_lstm.w_ih.as_slice())),
            (TENSOR_NAMES[5], flat(self.t_lstm.w_hh.as_slice())),
            (TENSOR_NAMES[6], flat(self.t_lstm.b_ih.as_slice())),
            (TENSOR_NAMES[7], flat(self.t_lstm.b_hh.as_slice())),
            (TENSOR_NAMES[8], flat(self.dense.w.as_slice())),
            (TENSOR_NAMES[9], flat(self.dense.b.as_slice())),
        ]
    }

    pub fn slices_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        let WeightSet {
            f_lstm,
            t_lstm,
            dense,
        } = self;
        fn flat(s: Option<&mut [f64]>) -> &mut [f64] {
            s.expect("weights are contiguous")
        }
        [
            (TENSOR_NAMES[0], flat(f_lstm.w_ih.as_slice_mut())),
            (TENSOR_NAMES[1], flat(f_lstm.w_hh.as_slice_mut())),
            (TENSOR_NAMES[2], flat(f_lstm.b_ih.as_slice_mut())),
            (TENSOR_NAMES[3], flat(f_lstm.b_hh.as_slice_mut())),
            (TENSOR_NAMES[4], flat(t_lstm.w_ih.as_slice_mut())),
            (TENSOR_NAMES[5], flat(t_lstm.w_hh.as_slice_mut())),
            (TENSOR_NAMES[6], flat(t_lstm.b_ih.as_slice_mut())),
            (TENSOR_NAMES[7], flat(t_lstm.b_hh.as_slice_mut())),
            (TENSOR_NAMES[8], flat(dense.w.as_slice_mut())),
            (TENSOR_NAMES[9], flat(dense.b.as_slice_mut())),
        ]
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &WeightSet) {
        for ((_, dst), (_, src)) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.slices()
            .iter()
            .zip(self.shapes())
            .map(|((name, data), dims)| Tensor::from_f64(name, &dims, data))
            .collect()
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| OvrError::Format(format!("missing tensor {name}")))
        };
        let matrix = |name: &str| -> Result<Array2<f64>> {
            let t = find(name)?;
            match t.dims.as_slice() {
                &[r, c] => Ok(Array2::from_shape_vec((r, c), t.to_f64()).expect("dims checked")),
                _ => Err(OvrError::Format(format!("{name} must be rank 2"))),
            }
        };
        let vector = |name: &str| -> Result<Array1<f64>> {
            let t = find(name)?;
            match t.dims.as_slice() {
                &[_] => Ok(Array1::from(t.to_f64())),
                _ => Err(OvrError::Format(format!("{name} must be rank 1"))),
            }
        };
        let lstm = |prefix: &str| -> Result<LstmWeights> {
            Ok(LstmWeights {
                w_ih: matrix(&format!("{prefix}.W_ih"))?,
                w_hh: matrix(&format!("{prefix}.W_hh"))?,
                b_ih: vector(&format!("{prefix}.b_ih"))?,
                b_hh: vector(&format!("{prefix}.b_hh"))?,
            })
        };
        let weights = WeightSet {
            f_lstm: lstm("f_lstm")?,
            t_lstm: lstm("t_lstm")?,
            dense: DenseWeights {
                w: matrix("dense.W")?,
                b: vector("dense.b")?,
            },
        };
        weights.infer_config(0)?;
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors = self.to_tensors();
        write_atomic(path, |out| write_tensors(out, &tensors))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tensors = read_tensors(BufReader::new(fs::File::open(path)?))?;
        Self::from_tensors(&tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_config() {
        let cfg = ModelConfig::new(8, 4, 2, 257).unwrap();
        let w = WeightSet::zeros(&cfg);
        let shapes = w.shapes();
        assert_eq!(shapes[0], vec![32, 4]);
        assert_eq!(shapes[1], vec![32, 8]);
        assert_eq!(shapes[4], vec![16, 8]);
        assert_eq!(shapes[5], vec![16, 4]);
        assert_eq!(shapes[8], vec![4, 4]);
        assert_eq!(shapes[9], vec![4]);
        assert_eq!(w.infer_config(257).unwrap(), cfg);
    }

    #[test]
    fn init_is_seeded_and_biases_forget_gate() {
        let cfg = ModelConfig::new(4, 3, 2, 5).unwrap();
        let a = WeightSet::init(&cfg, 1);
        assert_eq!(a, WeightSet::init(&cfg, 1));
        assert_ne!(a, WeightSet::init(&cfg, 2));
        let bound = 0.5;
        let forget = a.f_lstm.b_ih.slice(ndarray::s![4..8]);
        assert!(forget.iter().all(|&b| b > 1.0 - bound && b < 1.0 + bound));
    }

    #[test]
    fn container_round_trip_loses_only_f32_precision() {
        let cfg = ModelConfig::new(4, 3, 1, 5).unwrap();
        let w = WeightSet::init(&cfg, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ovrw");
        w.save(&path).unwrap();
        let back = WeightSet::load(&path).unwrap();
        for ((_, a), (_, b)) in w.slices().iter().zip(back.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        assert_eq!(back.infer_config(5).unwrap(), cfg);
    }

    #[test]
    fn missing_tensor_is_rejected() {
        let cfg = ModelConfig::new(2, 2, 2, 3).unwrap();
        let mut tensors = WeightSet::zeros(&cfg).to_tensors();
        tensors.pop();
        assert!(WeightSet::from_tensors(&tensors).is_err());
    }
}
