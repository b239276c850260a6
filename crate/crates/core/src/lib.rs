//! Convolutional sparse coding with a locally competitive solver, learned
//! dictionaries, a matched denoising-autoencoder baseline, and the metrics
//! that quantify how interpretable the two representations are.
//!
//! The crate is organized around a small dense tensor layer:
//!
//! - [`tensor`] — images, dictionaries, activation maps, and the two strided
//!   linear maps (analysis and synthesis) everything else composes.
//! - [`lca`] — the competitive solver that drives coefficients to a sparse
//!   fixed point of the reconstruction-plus-L1 objective.
//! - [`train`] — alternating inference / Hebbian update dictionary learning.
//! - [`ae`] — the denoising convolutional autoencoder baseline trained by
//!   backpropagation.
//! - [`metrics`] — sparsity, usage, and cross-correlation statistics.
//! - [`corpus`] — synthetic information-graphic generation and PNG ingestion.
//! - [`viz`] — dictionary montages, activation overlays, coefficient charts,
//!   histograms.
//! - [`checkpoint`] — the binary model/activation file format and helpers.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (f32 or f64); the
//! tensor types default their scalar parameter to f64, which is the precision
//! used by the CLI and every on-disk format.

pub mod ae;
pub mod checkpoint;
pub mod corpus;
pub mod lca;
pub mod metrics;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod viz;

pub use scalar::Scalar;
pub use tensor::{ActivationTensor, Dictionary, ImageTensor, TensorError};

/// Which of the two model families produced a code or checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SparseCoding,
    Autoencoder,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::SparseCoding => "sparse-coding",
            ModelKind::Autoencoder => "autoencoder",
        }
    }
}
