//! Quantum-style representations of numbers as states of base-`k` digit
//! strings, and everything built on top of them:
//!
//! - [`numeral`] — exact basis states `|γ,s⟩` of signed base-`k` strings,
//!   their rational values, digit-level arithmetic, and base conversion
//!   with repeating-expansion detection.
//! - [`qstate`] — sparse complex superpositions over those basis states,
//!   inner products, basis-wise lifted arithmetic, the componentwise
//!   closeness probability, and single-qukit gauge transforms.
//! - [`cauchy`] — sequences of states, the windowed Cauchy test and its
//!   probabilistic form, sequence equivalence, and canonical digit-stream
//!   representatives of real and complex numbers.
//! - [`frame`] — the (stage, base, gauge)-indexed frame graph, per-frame
//!   space-time lattices, and parent-frame images of numbers and lattice
//!   points as tuples of hybrid-system states.
//! - [`dynamics`] — pluggable energy models on numeral states, energy
//!   sequences along Cauchy sequences, and the explicit discrete
//!   Schrodinger step on lattices in both index and image-label
//!   coordinates, with a dense unitary reference propagator.
//!
//! All values are immutable after construction and all operations are pure
//! functions, so everything here is safe to share across threads.

pub mod cauchy;
pub mod dynamics;
pub mod frame;
pub mod numeral;
pub mod qstate;

pub use cauchy::{CauchyStatus, CauchyVerdict, CauchyWindow, ComplexRep, NumeralSequence, RealRep};
pub use dynamics::{
    BoundaryMode, EnergyModel, HamiltonianSpec, HybridSystem, Potential, SystemRole, Trajectory,
    WaveFunction,
};
pub use frame::{FrameGraph, FrameId, HybridTupleImage, Lattice, LatticeImage, LatticePoint};
pub use numeral::{Converted, NumeralState, PeriodicExpansion, RationalValue, Sign};
pub use qstate::{ArithOp, GaugeMap, StringSuperposition};

/// Complex amplitude type used for all quantum-side coefficients.
pub type Complex64 = num::complex::Complex<f64>;

// The guide chapters under book/ double as doc-tests so their snippets can
// never drift from the API. mdbook itself cannot run Rust snippets, so the
// chapters are included here and `cargo test --doc` does the work.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/numerals.md")]
    mod numerals {}
    #[doc = include_str!("../../../book/src/superpositions.md")]
    mod superpositions {}
    #[doc = include_str!("../../../book/src/cauchy-reals.md")]
    mod cauchy_reals {}
    #[doc = include_str!("../../../book/src/frames-lattices.md")]
    mod frames_lattices {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
}
