pub mod abel;
pub mod actions;
pub mod error;
pub mod hamiltonians;
pub mod moser;
pub mod moves;
pub mod ode;
pub mod pendulum;
pub mod quadrature;
pub mod series;
pub mod sturm;

pub use error::{Error, Result};
