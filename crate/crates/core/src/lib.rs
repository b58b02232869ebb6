//! Mean-parity fair regression in reproducing kernel Hilbert spaces.
//!
//! A regression function is mean-parity fair when its conditional mean given
//! each sensitive group equals its overall mean. On a training sample this is
//! a finite set of linear constraints on the kernel weights; the crate builds
//! a basis for the directions that violate them, projects them out, and solves
//! the resulting least-squares problem in closed form.
//!
//! ```no_run
//! use mpfair_core::prelude::*;
//!
//! let data = gen_synthetic(&SyntheticConfig::default(), 7).unwrap();
//! let k_s = default_sensitive_kernel(data.k, SensitiveFlavor::Delta).unwrap();
//! let joint = KernelSpec::composed(KernelSpec::Linear, k_s.clone(), CompositionMode::Sum);
//! let kxs = gram(&joint, &data.rows).unwrap();
//! let ks = gram(&k_s, &data.rows).unwrap();
//! let basis = build_fair_basis(&kxs, &ks, DEFAULT_RTOL).unwrap();
//! let p = projection_matrix(&basis, &kxs).unwrap();
//! let w = fit_fair(&kxs, &data.y, 0.0, &p, DEFAULT_RTOL).unwrap();
//! ```

pub mod data;
pub mod error;
pub mod fair_subspace;
pub mod kernels;
pub mod metrics;
pub mod numerics;
pub mod solvers;

pub use error::{FairError, Result};

pub mod prelude {
    pub use crate::data::{
        center_targets, gen_synthetic, load_csv, split, subsample, CsvSchema, DataSet, Link,
        Provenance, SensitiveEncoding, SyntheticConfig,
    };
    pub use crate::error::FairError;
    pub use crate::fair_subspace::{
        build_fair_basis, build_fair_basis_from_factor, check_assumption1, check_assumption1_with,
        fair_group_mean_residual, group_means, projection_matrix, Assumption1Report, FairBasis,
        ProjectionMatrix, SensitiveFactor,
    };
    pub use crate::kernels::{
        cross_gram, default_sensitive_kernel, eval_kernel, gram, CompositionMode, KernelSpec,
        SampleRow, SensitiveFlavor,
    };
    pub use crate::metrics::{cov_norm, dpd, mpd, mse, smd, w1_empirical, MetricReport, Split};
    pub use crate::numerics::{
        center_gram, centering_matrix, mat_vec, numerical_rank, pinv, pinv_sym, sym_eig, DenseMatrix,
        EigenResult, DEFAULT_RTOL,
    };
    pub use crate::solvers::{
        constant_baseline, fit_fair, fit_fpr, fit_gradient, fit_gradient_monitored, fit_tradeoff,
        fit_unconstrained, fitted_values, mse_bound_terms, predict, BoundTerms, FittedModel,
        GradientFit, LossSpec, ModelVariant, OptimizerConfig, OptimizerKind,
    };
}
