//! Tests of first-order separability for spatio-temporal point patterns.
//!
//! A pattern on `W × T` is first-order separable when its intensity factors as
//! `ρ(u, t) = ρ_space(u) ρ_time(t) / n`. The crate provides
//!
//! - windows, patterns and evaluation grids ([`geometry`]),
//! - edge-corrected Gaussian kernel intensity estimates ([`kernels`]),
//! - the discrepancy statistics `S`, `S_space`, `S_time`, `S_d` ([`stats`]),
//! - global envelopes with extreme rank length p-values ([`envelope`]),
//! - block permutation tests ([`permutation`]) and the χ² test ([`chisq`]),
//! - burst and log-Gaussian Cox simulators ([`sim`]),
//! - a simulated-annealing reconstruction test for clustered data ([`recon`]),
//! - repeated simulation studies ([`experiment`]) and file formats ([`io`]).
//!
//! With the default `parallel` feature replicate loops run on the rayon pool;
//! results do not depend on the number of threads.

pub mod chisq;
pub mod envelope;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod permutation;
pub mod recon;
pub mod sim;
pub mod stats;
mod parallel;
pub mod util;

pub use error::{Error, Result};
pub use parallel::current_num_threads;
