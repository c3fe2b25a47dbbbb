pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod projectors;
pub mod random;
pub mod scenarios;
pub mod verify;

pub use error::{QslError, Result};
pub use linalg::{CMatrix, CVector};
