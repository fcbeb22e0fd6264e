pub mod configuration;
pub mod continuum;
pub mod density;
pub mod error;
pub mod kernels;
pub mod lab;
pub mod microdynamics;
pub mod wasserstein;
mod sum;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/kernels.md")]
mod book_kernels {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/configuration.md")]
mod book_configuration {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/microdynamics.md")]
mod book_microdynamics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/continuum.md")]
mod book_continuum {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/wasserstein.md")]
mod book_wasserstein {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/acceptance.md")]
mod book_acceptance {}
