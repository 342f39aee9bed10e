//! Peak localization of separable, unimodal two-dimensional fields from sparse
//! noisy samples.
//!
//! The core loop samples a grid at random, completes the sampled matrix to
//! rank one, and bounds the location of the peak along each axis with a
//! unimodal-cone feasibility test on the dominant singular vectors. Repeating
//! this on the shrinking box gives a coarse-to-fine search ([`run_pamcur`]).
//!
//! Index conventions: all matrix and vector indices are 0-based. A matrix
//! `H[i, j]` has rows along the `row` field coordinate and columns along the
//! `col` coordinate, so the left singular vector `u` localizes rows and `v`
//! localizes columns.

pub mod baselines;
pub mod completion;
pub mod elevation;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod localize;
pub mod pamcur;
pub mod sampling;
pub mod unimodal;

pub use completion::{
    complete_nuclear, complete_rank_r, dominant_svd, snr, zeta_bound, CompletionConfig,
    CompletionMethod, CompletionResult, SingularTriplet,
};
pub use error::{Error, Result};
pub use fields::{discretize, Field, GridSpec, Profile, SeparableField};
pub use geometry::{CellGrid, Point, Rect};
pub use localize::{
    eta, eta_floor, localize_axis, pamcur_stage, LocalizationBox, StageResult, ZetaMode,
};
pub use pamcur::{run_pamcur, RunConfig, RunResult, StageTrace};
pub use sampling::{observe, sample_budget, sample_uniform, NoiseModel, SampleSet};
pub use unimodal::{
    best_unimodal_fit, cone_support, isotonic_fit, project_unimodal_peak, Direction, UnimodalFit,
};
