//! Control-theoretic numerical kernels.

pub mod minpoly;
pub mod pbh;
pub mod riccati;
pub mod spectral;
pub mod sylvester;
pub mod zeros;

pub use minpoly::{minimal_polynomial, MinimalPolynomial};
pub use pbh::{pbh_detectable, pbh_stabilizable};
pub use riccati::{care_residual, solve_care, stabilizing_observer_gain, stabilizing_state_gain};
pub use spectral::{eigenvalues, is_hurwitz, set_distance, spectral_abscissa, DEFAULT_RANK_TOL};
pub use sylvester::{solve_lyapunov, solve_sylvester, sylvester_residual};
pub use zeros::{compute_delta, transmission_zeros, ZeroStructure};
