//! Body segmentation with multi-scale fusion and fashion-year classification,
//! built on a small tape-based autodiff engine.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Training
//! runs in `f32`; gradient checks run in `f64`. The aliases below name the
//! common instantiations.

pub mod data;
pub mod error;
pub mod fashionnet;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod scalar;
pub mod segnet;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use fashionnet::{FashionNet, FashionNetConfig, LayerKind, LayerShape};
pub use gradcheck::{finite_diff_gradcheck, GradCheckConfig, GradCheckReport};
pub use layers::Preset;
pub use metrics::{accuracy, confusion, iou, mean_iou, ConfusionMatrix, MetricReport};
pub use nn::{ParamRegistry, Role, SgdConfig, SgdState};
pub use ops::Mode;
pub use scalar::Scalar;
pub use segnet::{SegNet, SegNetConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type Registry32 = ParamRegistry<f32>;
pub type Registry64 = ParamRegistry<f64>;
pub type SegNet32 = SegNet<f32>;
pub type SegNet64 = SegNet<f64>;
pub type FashionNet32 = FashionNet<f32>;
pub type FashionNet64 = FashionNet<f64>;
