//! Dense factorizations: SVD, QR and symmetric eigendecomposition.

pub mod eig;
pub mod qr;
pub mod svd;

pub use eig::{sym_eigen, sym_lambda_min, sym_sqrt};
pub use qr::qr_thin;
pub use svd::{
    pinv, pinv_apply, pinv_solve_least_norm, singular_values, svd_truncated, SvdFactors,
    DEFAULT_RANK_TOL,
};
