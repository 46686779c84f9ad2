pub mod approx;
pub mod data;
pub mod error;
pub mod eval;
pub mod mip;
pub mod net;
pub mod oracle;
pub mod plant;
pub mod qp;
pub mod run;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
