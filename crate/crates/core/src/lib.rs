//! Length spectra, marked length spectra and automorphism checks for compact
//! Riemannian nilmanifolds `Γ\G` of step at most three.
//!
//! The exact layers (`algebra`, `group`, `morphisms`) are generic over
//! [`Scalar`]; the numerical layers (`geometry`, shooting in `spectra`) are
//! generic over [`num_traits::Float`]. The aliases below fix the usual choices.

pub mod algebra;
pub mod catalog;
pub mod geometry;
pub mod group;
pub mod intlattice;
pub mod linalg;
pub mod morphisms;
pub mod report;
pub mod scalar;
pub mod spectra;

pub use num_rational::BigRational;
pub use scalar::{ExactScalar, Scalar};

/// Arbitrary-precision rational.
pub type Rational = BigRational;
/// Machine-word rational, for tight enumeration loops.
pub type SmallRational = num_rational::Ratio<i64>;

pub type Algebra = algebra::StructureConstants<Rational>;
pub type FloatAlgebra = algebra::StructureConstants<f64>;
pub type Group = group::NilpotentGroup<Rational>;
pub type Element = group::GroupElement<Rational>;
pub type Lattice = group::Lattice<Rational>;
pub type Frame = geometry::AdaptedFrame<f64>;
pub type Metric = geometry::MetricSpec;

/// Worker threads for scans: `NILSPEC_THREADS` if set, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("NILSPEC_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
