//! Simulation and analysis of reversible photon scattering from a trapped-ion
//! spin.
//!
//! A heralded photon, analysed in polarization and time-stamped against the
//! Larmor precession, announces which operator acted on the spin. This crate
//! models the branch operators ([`scattering`]), runs seeded shot-level Monte
//! Carlo with the heralded correction and an error budget ([`engine`]), and
//! reconstructs processes and Ramsey fringes from the resulting counts
//! ([`tomography`]). [`spin`] holds the underlying qubit algebra.
//!
//! ```
//! use scatter_reversal::engine::{run_experiment, sequence, ExperimentConfig, Outcome};
//!
//! let records = run_experiment(&ExperimentConfig::ideal(1_000, 5), &sequence("corrected_45")?)?;
//! assert!(records.iter().all(|r| r.outcome == Outcome::Up));
//! # Ok::<(), scatter_reversal::Error>(())
//! ```

pub mod engine;
pub mod error;
pub mod scattering;
pub mod spin;
pub mod tomography;

pub use error::{Error, Result};

// The guide's code blocks run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spin-algebra.md")]
    mod spin_algebra {}
    #[doc = include_str!("../../../book/src/scattering.md")]
    mod scattering {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/tomography.md")]
    mod tomography {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
