//! Numerical functional calculus for cone (Fuchs-type) differential operators.
//!
//! The crate is organised along the path a computation takes:
//!
//! * [`symbols`]: operators in mode-diagonal form, conormal polynomials,
//!   indicial roots, ellipticity and the extension gap;
//! * [`discretize`]: log-radial grids, the weight isometry and per-mode matrices;
//! * [`geometry`]: sectors and the truncated keyhole contour;
//! * [`calculus`]: resolvents, complex and imaginary powers, norm scans and
//!   the Hardy-inequality checker;
//! * [`pde`]: the heat equation and a quasilinear diffusion stepper.

// NaN must fail range checks, hence `!(x > 0.0)` style comparisons; banded
// kernels index several arrays per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod banded;
pub mod calculus;
pub mod discretize;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod pde;
pub mod poly;
pub mod symbols;

pub use error::{Error, Result};

// The guide's examples run as doctests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod guide_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/roots.md")]
mod guide_roots {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/powers.md")]
mod guide_powers {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/scans.md")]
mod guide_scans {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/hardy.md")]
mod guide_hardy {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evolution.md")]
mod guide_evolution {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod guide_cli {}
#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
