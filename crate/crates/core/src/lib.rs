//! Key fusing for exposure-resilient secret communication.
//!
//! A key source may leak individual keys to an eavesdropper without the
//! legitimate parties noticing. Fusing several independent keys through a
//! binary operation that is bijective in each argument (a Latin square over
//! the key space) yields a key whose min-entropy is at least the largest
//! min-entropy among the inputs, so the fused key stays secret unless every
//! input leaked.
//!
//! Modules:
//!
//! - [`keyspace`]: key spaces, distributions, Shannon and min-entropy, the
//!   `(n; l)` leak predicate.
//! - [`kft`]: key-fusing transformations and exact fusion of distributions.
//! - [`window`]: FIFO key queue and the assignment of raw keys to messages.
//! - [`exposure`]: seeded Monte Carlo simulation of session compromise.
//! - [`sop`]: closed-form secret outage probability and its inverse.
//! - [`cli`]: the `keyfuse` command-line front end.

#![deny(unsafe_code)]

pub mod cli;
mod error;
pub mod exposure;
pub mod keyspace;
pub mod kft;
pub mod sop;
pub mod window;

pub use error::{Error, Result};
pub use exposure::{
    fused_entropy_given_leaks, simulate_session, simulate_session_with_workers, window_compromised,
    ExposureModel, SessionConfig, SessionOutcome,
};
pub use keyspace::{KeyDistribution, KeySpace, NlSource};
pub use kft::{BaseOp, KftKind, KftSpec, Laws, Permutation};
pub use sop::{allowed_exposure, sop_closed_form, sop_curve, SopPoint, SopQuery};
pub use window::{assign_windows, fused_message_keys, KeyQueue, WindowPlan, WindowPolicy};
