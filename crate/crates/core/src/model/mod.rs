//! The three architectures (max-pooled and attention-pooled C-BGRU, and the
//! CNN baseline without the recurrent layer), their loss, and persistence.

mod checkpoint;
mod config;
pub mod gradcheck;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Pooling};
pub use gradcheck::{run_gradcheck, BlockResult, GradcheckConfig, GradcheckReport};
pub use network::{ForwardTrace, Mode, Model, Prediction, SampleTrace};
pub use params::{ParamKind, ParamMut, ParamRef, ParamSet, Params};
