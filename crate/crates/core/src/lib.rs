//! Truncated path-signature and logsignature transforms for sequential
//! data, with a fused multiply-exponentiate kernel, Lyndon-word bases,
//! handwritten reverse-mode gradients, and constant-time interval queries
//! over precomputed path indexes.
//!
//! Layout convention throughout: tensors are stored level-major, levels
//! 1..=N, with words in lexicographic order inside each level. The scalar
//! (level 0) is implicit: 1 for group elements, 0 for Lie elements.
//!
//! The `parallel` feature (on by default) enables rayon-based data
//! parallelism over batches and within long streams; without it every
//! code path is sequential with identical results.

pub mod backward;
pub mod cost_model;
pub mod error;
pub mod gradcheck;
pub mod logsignature;
pub mod lyndon;
pub mod path_index;
pub mod signature;
pub mod tensor_algebra;

pub use backward::{
    fused_mul_exp_backward, mul_backward, signature_backward, signature_backward_output,
    SignatureGradOut, SignatureGradient,
};
pub use cost_model::{conventional_cost, counted_fused_mul_exp, fused_cost, MultiplicationCount};
pub use error::{Error, Result};
pub use gradcheck::{gradcheck_logsignature, gradcheck_signature};
pub use logsignature::{
    logsig_length, logsignature, logsignature_backward, project_log_tensor, LogSigGradOut,
    LogSigMode, LogSigOutput,
};
pub use lyndon::{
    enumerate_lyndon_words, is_lyndon, lyndon_basis, lyndon_triangular_solve, mobius, phi_expand,
    psi_project, reconstruct_from_brackets, standard_factorization, witt_dimension, LyndonBasis,
};
pub use path_index::{BuildStats, PathIndex};
pub use signature::{
    batch_signature, increments, multi_signature_combine, signature, signature_combine, Basepoint,
    Batch, Parallelism, SignatureOptions, SignatureOutput, Stream,
};
pub use tensor_algebra::{
    fused_exp_mul, fused_mul_exp, fused_mul_exp_inplace, group_inverse, group_mul, nonunit_mul,
    tensor_exp, tensor_log, FreeTensor, TruncationSpec,
};
