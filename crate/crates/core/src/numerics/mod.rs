//! Numerical primitives: SVD-based linear algebra, distribution functions,
//! and seeded random sampling.
//!
//! Every routine here is deterministic; anything stochastic takes an explicit
//! `u64` seed and uses a counter-derived ChaCha12 stream, so results are
//! reproducible independent of call order or threading.

pub mod dist;
pub mod linalg;
pub mod rng;

pub use dist::{
    chi2_cdf, chi2_quantile, empirical_cdf, empirical_quantile, f_cdf, f_quantile, kolmogorov_sf,
    normal_cdf, standard_normal_samples, weighted_chi2_quantile, weighted_chi2_samples,
    WeightedChiSquare,
};
pub use linalg::{
    default_rank_tol, expm, numerical_rank, orthonormal_completion, pinv, psd_eigenvalues,
    psd_factor, singular_values, spectral_norm, unvec_col, vec_col,
};
pub use rng::{derive_seed, rng_gaussian, rng_uniform, seeded_rng, standard_normal_matrix};
