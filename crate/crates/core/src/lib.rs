pub mod augment;
pub mod complexity;
pub mod container;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixer;
pub mod model;
pub mod stft;
pub mod synth;
pub mod train;

pub use error::{OvrError, Result};
pub use realfft::num_complex::Complex64;
pub use stft::{Spectrogram, Stft, StftConfig, Waveform};
