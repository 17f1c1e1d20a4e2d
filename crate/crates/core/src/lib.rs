//! Joint measurability of finite-dimensional POVMs: compatibility SDPs with
//! dual certificates, minimal parent supports, boundary sampling, steering
//! conversions and probabilistic parents.
//!
//! ```
//! use jmeas_core::catalog::example_noisy_pauli;
//! use jmeas_core::compat::{decide_compatibility, Verdict};
//!
//! let sharp = decide_compatibility(&example_noisy_pauli(0.9).unwrap()).unwrap();
//! assert_eq!(sharp.verdict, Verdict::Incompatible);
//! let noisy = decide_compatibility(&example_noisy_pauli(0.6).unwrap()).unwrap();
//! let parent = noisy.parent.expect("compatible sets come with a parent");
//! assert!(parent.marginal_deviation(&example_noisy_pauli(0.6).unwrap()) < 1e-6);
//! ```

pub mod boundary;
pub mod caratheodory;
pub mod catalog;
pub mod compat;
pub mod error;
pub mod exec;
pub mod hermitian;
pub mod povm;
pub mod prob_parent;
pub mod random;
pub mod sdp;
pub mod search;
pub mod steering;

pub use error::{Error, Result};
