//! Numerics for the linearized Vlasov–Poisson–Boltzmann operator: Hermite
//! Galerkin discretization of the collision operator, per-mode spectral
//! analysis, hydrodynamic branch tracking, transport coefficients, semigroup
//! propagation and diffusion-limit convergence experiments.

pub mod collision;
pub mod dispersion;
pub mod error;
pub mod fit;
pub mod hermite;
pub mod limit_lab;
pub mod linalg;
pub mod mode_operator;
pub mod quadrature;
pub mod scalar;
pub mod semigroup;
pub mod transport;
pub mod velocity_space;

pub use error::{Result, VpbError};

/// Working real type of the spectral stack.
pub type Real = f64;
/// Working complex type of the spectral stack.
pub type Complex = num_complex::Complex<f64>;
pub type RVec = nalgebra::DVector<Real>;
pub type CVec = nalgebra::DVector<Complex>;
pub type RMat = nalgebra::DMatrix<Real>;
pub type CMat = nalgebra::DMatrix<Complex>;

/// Coefficient field of a velocity-space vector: real or complex double.
pub trait Coeff: nalgebra::ComplexField<RealField = f64> + Copy {}
impl<T: nalgebra::ComplexField<RealField = f64> + Copy> Coeff for T {}
