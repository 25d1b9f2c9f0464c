//! Dense linear algebra: storage, products, norms, orthonormal factors,
//! the Jacobi SVD oracle, and the keyed RNG.

mod decomp;
mod matrix;
mod rng;

pub use decomp::{gram_schmidt, jacobi_svd, jacobi_svd_full, Svd};
pub use matrix::{
    frobenius_norm, gemm, matmul, spectral_norm_estimate, transpose, Matrix, Op, Real,
};
pub use rng::{stream_key, Rng};
