//! Tilted graph states built from heralded photon emitters with mismatched
//! leakage profiles.
//!
//! The crate is organised by concern: [`leakage`] models the emission-time
//! densities, [`heralding`] turns click pairs into tilted entanglement,
//! [`tilted_graph`] tracks the resulting graphs symbolically, [`procedures`]
//! repairs and fuses them, and [`growth`] strings it all together. [`oracle`]
//! holds brute-force reference simulations used by the tests.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use num_complex::Complex64 as C64;

pub mod crosscheck;
pub mod error;
pub mod growth;
pub mod heralding;
pub mod io;
pub mod leakage;
pub mod metrics;
pub mod oracle;
pub mod procedures;
pub mod rng;
pub mod tilted_graph;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/leakage.md")]
    mod leakage {}
    #[doc = include_str!("../../../book/src/heralding.md")]
    mod heralding {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/growth.md")]
    mod growth {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
