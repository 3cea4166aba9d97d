//! Numerical checks for nonexistence of nonnegative supersolutions of
//! `L_K u >= u^q` on R^n, where `L_K` is an integro-differential operator of order
//! `2s` with an even kernel sandwiched between multiples of `|z|^{-n-2s}`.
//!
//! The quadrature core evaluates `L_K u(x)` from the symmetrized second difference;
//! the remaining modules build the cutoff, mass, iteration and sharpness checks on top.

mod adaptive;
mod balls;
pub mod error;
pub mod field;
pub mod gauss;
pub mod geometry;
pub mod iteration;
pub mod kernels;
pub mod mass;
pub mod operator;
pub mod quadrature;
pub mod sharpness;

pub use error::{Error, Result};
pub use field::{bubble, constant, cosine, power_decay, FieldSpec, ScalarField, Smoothness};
pub use iteration::{
    check_far_lq, classify, critical_scan, critical_tail_split, iterate_exponents,
    iterate_recurrence, CriticalScan, CriticalSplit, IterationTrace, Regime, RegimeInput,
    RegimeReport,
};
pub use kernels::{
    fractional_constant, make_anisotropic_kernel, make_fractional_kernel, make_table_kernel,
    validate_kernel, Kernel, KernelKind, KernelParams, ValidationReport,
};
pub use mass::{
    mass, mass_profile, tail_functional, verify_dyadic_inequality, verify_growth_bound,
    DyadicCheck, GrowthReport, MassProfile, TailEstimate,
};
pub use operator::{
    apply_operator, cutoff_lp_integral, make_bump, pairing, verify_cutoff_bound,
    weak_supersolution_residual, CutoffBoundReport, CutoffFamily, Pairing, WeakResidual,
};
pub use quadrature::{pv_integrate, second_difference, QuadResult, QuadratureConfig};
pub use sharpness::{calibrate_c, pointwise_margin, Calibration, MarginReport, SharpnessProfile};
