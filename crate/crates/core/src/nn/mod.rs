//! Parameters, initialization, optimization and persistence.

pub mod checkpoint;
pub mod init;
pub mod registry;
pub mod sgd;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use init::{bilinear_deconv_init, bilinear_kernel, msra_init, msra_init_seeded};
pub use registry::{Bindings, Gradients, Param, ParamRegistry, Role};
pub use sgd::{lr_at, sgd_step, SgdConfig, SgdState};
