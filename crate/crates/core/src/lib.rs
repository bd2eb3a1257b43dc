//! Pseudonymity auditing for hash-slice username schemes.
//!
//! The toolkit demonstrates, on synthetic forums with known ground truth,
//! how a scheme that slices a few hex characters out of `hash(topic ++
//! address)` leaks the addresses behind pseudonymous posts. It brute-forces
//! candidate addresses per topic, scores per-address candidate counts
//! against a Poisson-binomial null with noise-calibrated thresholds, and
//! validates the resulting attributions with bogon, uniformity, and
//! ground-truth checks.

pub mod analytics;
pub mod attribute;
pub mod enumerate;
pub mod error;
pub mod formats;
pub mod hash;
pub mod pbnull;
pub mod scheme;
pub mod store;
pub mod synth;
pub mod textnorm;
pub mod timestamps;
pub mod validate;

pub use error::{Error, Result};
pub use hash::HashKind;
pub use scheme::{Address, RegimeTable, SchemeConfig, TopicId, Username};
