//! Minimal dense-tensor kernel: the layers the sequence labeler needs, each
//! with a hand-written backward pass, plus a finite-difference checker.

pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod norm;
pub mod param;
mod tensor;

pub use attention::MultiHeadAttention;
pub use checkpoint::ParamContainer;
pub use dense::{relu, relu_backward, sigmoid, Dense};
pub use dropout::{dropout_forward, Mode};
pub use lstm::{BiLstm, LstmDirection};
pub use norm::LayerNorm;
pub use param::Parameters;
pub use tensor::Tensor;
