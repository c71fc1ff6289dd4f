//! Numerical continuation for the Demailly–Hermitian–Einstein system on a
//! trivialized holomorphic vector bundle over the square torus `C/(Z + iZ)`.

pub mod bundle;
pub mod continuation;
pub mod diagnostics;
pub mod scenario;
pub mod error;
pub mod system;
pub mod torus;

pub use error::{Error, Result};
