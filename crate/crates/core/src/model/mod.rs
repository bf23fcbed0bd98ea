pub mod config;
pub mod ftjnf;
pub mod lstm;
pub mod weights;

pub use config::{ModelConfig, Variant};
pub use ftjnf::{apply_masks, streaming_infer, ForwardCache, FtJnf, MaskPair, StreamingEnhancer};
pub use lstm::{lstm_cell_step, LstmWeights};
pub use weights::{DenseWeights, WeightSet, TENSOR_NAMES};
