//! Optimal transport distances between discrete measures.
//!
//! `W_p` for finite `p` is solved exactly by a network simplex, `W_∞` by threshold
//! bisection with max-flow feasibility. Continuous densities enter through [`quantize`],
//! whose displacement bound is the error bar of any distance computed from it.

mod bottleneck;
mod exact;
mod measure;
mod neighbors;
mod quantize;
mod simplex;
mod sobolev;

pub use bottleneck::{wasserstein_inf, wasserstein_inf_with};
pub use exact::{wasserstein_p, wasserstein_p_with, OtOptions};
pub use measure::{Coupling, DiscreteMeasure, Transfer, MASS_TOLERANCE};
pub use quantize::{quantize, QUANTIZE_THRESHOLD};
pub use sobolev::sobolev_w12_distance;

/// `W_p` for `p ∈ [1, ∞]`.
pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> crate::Result<(f64, Coupling)> {
    if p.is_infinite() && p > 0.0 {
        wasserstein_inf(mu, nu)
    } else {
        wasserstein_p(mu, nu, p)
    }
}
