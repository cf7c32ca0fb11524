//! Separable wave Hamiltonians and bound states in the continuum (BICs).
//!
//! A Hamiltonian that splits into a sum of operators acting on distinct
//! coordinates is diagonalized by products of 1D eigenstates. When a product
//! of *bound* 1D states lands above the energy where delocalized states of
//! the full system begin, it is a bound state in the continuum: perfectly
//! localized, embedded in the continuous spectrum, and decoupled from it by
//! separability alone. This crate builds such systems, certifies their BICs,
//! and quantifies how symmetry-shaped perturbations steer the resulting
//! resonant radiation into chosen directions and dimensionalities.
//!
//! The pieces, bottom to top:
//!
//! - [`grid`] / [`tridiag`] / [`dense2d`]: uniform grids, a Sturm-bisection
//!   eigensolver for symmetric tridiagonal operators, trapezoidal quadrature,
//!   and a dense 2D diagonalization oracle used for cross-checks.
//! - [`eigen1d`]: bound states, parities, box continua and densities of
//!   states of one separated axis.
//! - [`separable`]: product states, continuum thresholds, BIC certification,
//!   degenerate-channel enumeration.
//! - [`coupling`]: perturbation matrix elements, Fermi golden-rule partial
//!   widths, parity selection rules, second-order amplitudes.
//! - [`tdse2d`]: time-dependent propagation of the perturbed 2D system with
//!   absorbing boundaries, flux detectors, and decay-rate fits.
//! - [`lattice`]: tight-binding chains with on-site defects and BICs on 2D
//!   product lattices.
//! - [`scenarios`]: turnkey configurations of the physical systems the crate
//!   models, unit conversions, convention calibration, and artifact export.

pub mod coupling;
pub mod dense2d;
pub mod eigen1d;
pub mod error;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod scenarios;
pub mod separable;
pub mod tdse2d;
pub mod tridiag;

pub use error::{Error, ErrorClass, Result};
pub use grid::Grid1D;

// The guide chapters double as doc-tests so their code stays honest.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(intro, "../../../book/src/intro.md");
    chapter!(grids, "../../../book/src/grids-and-eigensolvers.md");
    chapter!(wells, "../../../book/src/wells-and-spectra.md");
    chapter!(bics, "../../../book/src/product-states-and-bics.md");
    chapter!(coupling, "../../../book/src/perturbations-and-golden-rule.md");
    chapter!(time_domain, "../../../book/src/time-domain.md");
    chapter!(lattices, "../../../book/src/lattices.md");
    chapter!(scenarios, "../../../book/src/scenarios-and-cli.md");
}
