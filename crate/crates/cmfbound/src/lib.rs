pub mod acceptance;
pub mod cmf;
pub mod error;
pub mod local_caprini;
pub mod operator_k;
pub mod oracle;
pub mod phi_solver;
pub mod quad;
pub mod special_fn;

pub use error::{Error, Result};
