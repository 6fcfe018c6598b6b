//! Tabular robust average-reward reinforcement learning.
//!
//! * [`mdp`]: kernels, policies, gains, relative values, robust Bellman residuals.
//! * [`uncertainty`]: exact support functions for contamination, total
//!   variation, chi-square, KL and Wasserstein balls.
//! * [`estimators`]: unbiased sampled estimates of the support function and
//!   the robust Bellman operators (single-sample and multi-level Monte-Carlo).
//! * [`learners`]: robust RVI TD and robust RVI Q-learning.
//! * [`planners`]: model-based robust relative value iteration.
//! * [`environments`]: benchmark MDPs.

pub mod environments;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod mdp;
pub mod planners;
pub mod search;
pub mod uncertainty;

pub use error::{Error, Result};
pub use mdp::{GainBias, OffsetFn, Policy, QFn, TabularMdp};
pub use uncertainty::{RectangularSet, UncertaintyModel, UncertaintySetSpec};
