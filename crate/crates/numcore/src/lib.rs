//! Deterministic CPU numerics: tensors, tape autodiff, Adam, the
//! warmup/decay learning-rate schedule and the label-smoothed loss.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod loss;
pub mod optim;
pub mod scalar;
pub mod schedule;
pub mod tensor;

pub use error::{NumError, Result};
pub use gradcheck::{grad_check, CheckParam, GradCheckConfig, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use kernels::AttnLayout;
pub use loss::{label_smoothed_nll, SmoothedNll};
pub use optim::{adam_step, AdamConfig, AdamState, Moments, ParamUpdate};
pub use scalar::{gemm, Scalar};
pub use schedule::{lr_at, LrSchedule};
pub use tensor::{BitPattern, Tensor};
