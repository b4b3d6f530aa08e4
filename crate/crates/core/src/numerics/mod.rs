//! Dense tensors and a tape-based reverse-mode gradient engine, in `f64`.

mod params;
mod tape;
mod tensor;

pub use params::ParamStore;
pub use tape::{concat, Bound, Gradients, Tape, Var, LAYERNORM_EPS};
pub use tensor::Tensor;

pub(crate) use tensor::{sigmoid, softmax_in_place};
