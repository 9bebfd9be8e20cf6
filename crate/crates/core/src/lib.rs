//! Gaussian process inference under linear-functional observations.
//!
//! Observations may be point values, derivatives, weighted integrals or
//! Fourier coefficients of the latent function. The posterior can be formed
//! in one batch ([`posterior::condition`]) or by assimilating batches in
//! sequence ([`sequential::PosteriorState`]); both give the same Gaussian
//! process. [`oracle`] is an independent grid discretisation used to check
//! either route.
//!
//! ```
//! use opgp::functionals::{LinearFunctional, Weight};
//! use opgp::kernels::{Kernel, MeanFunction};
//! use opgp::posterior::condition;
//! use opgp::sequential::PosteriorState;
//!
//! # fn main() -> opgp::Result<()> {
//! let k = Kernel::matern52(0.4, 1.0)?;
//! let pts = [LinearFunctional::point(-0.6)?, LinearFunctional::point(0.7)?];
//! let area = LinearFunctional::integral(Weight::Constant(1.0), -1.0, 1.0, 200)?;
//! let slope = LinearFunctional::derivative(0.0)?;
//!
//! let all = [pts[0].clone(), pts[1].clone(), area.clone(), slope.clone()];
//! let gp = condition(&k, &MeanFunction::Zero, &all, &[0.2, -0.4, 0.5, 1.0])?;
//!
//! let state = PosteriorState::new(k, MeanFunction::Zero)
//!     .assimilate(&pts, &[0.2, -0.4])?
//!     .assimilate(&[area, slope], &[0.5, 1.0])?;
//! assert!((gp.mean(0.3) - state.mean(0.3)).abs() < 1e-10);
//! # Ok(())
//! # }
//! ```

pub mod config;
pub mod error;
pub mod experiment;
pub mod functionals;
pub mod gram;
pub mod kernels;
mod linalg;
pub mod oracle;
pub mod posterior;
pub mod quadrature;
pub mod rkhs_diag;
pub mod sequential;

pub use error::{Error, Result};
