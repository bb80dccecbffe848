//! Boundary feedback stabilization of random linear hyperbolic balance laws.
//!
//! Uncertain coefficients are represented by generalized polynomial chaos
//! (gPC) expansions, possibly obtained from a Karhunen-Loève decomposition of
//! a Gaussian random field. The random 2×2 system in Riemann coordinates is
//! projected onto the gPC basis, which yields a larger deterministic
//! hyperbolic system with countably many characteristic families. A weighted
//! L² Lyapunov function for that system bounds the mean squared deviation
//! from the desired state.
//!
//! Module map:
//!
//! * [`gpc`] orthogonal polynomials, multi-index sets, quadrature, triple products
//! * [`randfield`] covariance kernels, conditioning, KL decomposition
//! * [`galerkin`] assembly of the stochastic Galerkin system
//! * [`lyapunov`] weights, dissipativity condition, decay rate certificates
//! * [`material`] viscoplastic stress-strain models and the feedback law
//! * [`solver`] upwind / explicit Euler time integration with ghost cells
//! * [`config`] experiment configuration and the end-to-end pipeline

pub mod config;
pub mod error;
pub mod galerkin;
pub mod gpc;
pub mod linalg;
pub mod lyapunov;
pub mod material;
pub mod randfield;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
