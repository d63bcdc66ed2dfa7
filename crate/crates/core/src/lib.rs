//! Probabilistic regression of angles with von Mises predictive densities.
//!
//! The crate covers the whole pipeline for circular targets:
//!
//! * [`circmath`]: angles, biternions, `log I₀`, circular summaries;
//! * [`vonmises`] and [`mixture`]: the densities themselves;
//! * [`neuralnet`]: a small dense-network engine with reverse-mode
//!   gradients, Adam and a finite-difference checker;
//! * [`heads`]: fixed-κ, learned-κ, finite-mixture and latent-variable
//!   (CVAE / simplified CVAE) output heads with their losses;
//! * [`decision`]: Bayes-optimal point prediction and evaluation metrics;
//! * [`harness`]: synthetic tasks with known densities, training, random
//!   search and model persistence.
//!
//! ```
//! use vmreg::{Angle, VonMises};
//!
//! let d = VonMises::new(Angle::new(1.0), 4.0)?;
//! let at_mode = d.log_pdf(Angle::new(1.0));
//! let opposite = d.log_pdf(Angle::new(1.0 + std::f64::consts::PI));
//! assert!(at_mode - opposite > 7.9);
//! # Ok::<(), vmreg::Error>(())
//! ```

pub mod circmath;
pub mod decision;
mod error;
pub mod harness;
pub mod heads;
pub mod mixture;
pub mod neuralnet;
pub mod rng;
pub mod validation;
pub mod vonmises;

pub use circmath::{Angle, Biternion, CircularSummary, KAPPA_MAX};
pub use error::{Error, Result};
pub use mixture::VonMisesMixture;
pub use vonmises::VonMises;

/// Chapters of the guide under `book/src`, compiled here so that every code
/// listing in the book runs as a doctest.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/angles.md")]
    pub mod angles {}
    #[doc = include_str!("../../../book/src/von-mises.md")]
    pub mod von_mises {}
    #[doc = include_str!("../../../book/src/mixtures.md")]
    pub mod mixtures {}
    #[doc = include_str!("../../../book/src/heads.md")]
    pub mod heads {}
    #[doc = include_str!("../../../book/src/latent.md")]
    pub mod latent {}
    #[doc = include_str!("../../../book/src/decisions.md")]
    pub mod decisions {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
