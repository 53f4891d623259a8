//! Surfaces of revolution and their Laplace–Beltrami eigenpairs.

pub mod profile;
pub mod radial;
pub mod spectrum;
pub mod tridiag;

pub use profile::{CubicSpline, EndpointKind, ProfileSpec, Samples, SurfaceProfile};
pub use radial::{eval_eigenfunction, solve_radial, RadialEigenfunction, RadialOperator, MIN_GRID_POINTS};
pub use spectrum::{build_spectrum, SpectrumEntry, SpectrumTable};
pub use tridiag::SymTridiagonal;
