//! Deterministic numerical kernels shared by every other module.

pub mod fourier;
pub mod grid;
pub mod hermite;
pub mod poly;
pub mod quad;
pub mod roots;

pub use fourier::fourier_invert;
pub use grid::{linspace, GridFunction, TailModel};
pub use hermite::{gauss_hermite, gaussian_expectation, hermite_he, hermite_he_all};
pub use poly::Poly;
pub use quad::{
    integrate, integrate_line, integrate_many, integrate_line_with, simpson, GaussianEnvelope, QuadOptions,
    QuadratureResult,
};
pub use roots::invert_monotone;
