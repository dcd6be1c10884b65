//! actlab — an activation-function analysis lab.
//!
//! The crate studies how the choice of activation function interacts with
//! weight initialization in deep fully-connected networks, from three
//! angles:
//!
//! * **Closed forms** ([`activations`], [`init`]): six activation
//!   functions with exact derivatives and linear-regime coefficients
//!   `(alpha, beta) = (f'(0+), f(0))`, plus the initialization schemes
//!   whose variances those coefficients are meant to balance.
//! * **Variance propagation** ([`varprop`]): analytic per-layer recursions
//!   for activation and gradient variances in the linear regime, verified
//!   against Monte Carlo estimates over random initializations — including
//!   the vanishing-gradient behavior of the plain sigmoid.
//! * **Training experiments** ([`network`], [`train`]): a small MLP with
//!   reverse-mode backpropagation (finite-difference checked), trained with
//!   SGD on synthetic cluster data or IDX-format image files to compare
//!   activations under identical seeds.
//!
//! The `actlab` binary (see [`cli`]) exposes all of this as subcommands
//! that write deterministic CSV/JSON artifacts.

// Parameter validation deliberately writes `!(x > 0.0)` instead of
// `x <= 0.0`: the negated form is also true for NaN, which must be
// rejected everywhere a positive quantity is required.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod cli;
pub mod error;
pub mod init;
pub mod network;
pub mod tensor;
pub mod train;
pub mod varprop;

pub use activations::{Activation, LinearRegime, DEFAULT_LEAK};
pub use error::{Error, Result};
pub use init::{init_bias, InitKind, InitScheme};
pub use network::{ForwardTape, Gradients, Network, NetworkConfig};
pub use tensor::{Matrix, Rng};
pub use train::{
    compare_activations, epochs_to_reach_loss, load_idx, synth_classification, CompareArm, Dataset,
    LrSchedule, Split, TrainConfig, TrainRecord, TrainRun, TrainStatus,
};
pub use varprop::{
    backward_variance, empirical_linear_profile, empirical_profile, forward_variance,
    linear_offdiag_ratios, wy_second_moment_analytic, wy_second_moment_empirical, LinearNetSpec,
    ProfileSource, VarianceProfile,
};
