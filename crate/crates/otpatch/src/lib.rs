//! IO, parallel drivers, the fitting demo and the command-line surface for
//! the patch-wise optimal-transport loss library.

pub mod cli;
pub mod error;
pub mod fit;
pub mod parallel;
pub mod report;
pub mod suite;
pub mod volfile;

pub use error::DataError;
pub use volfile::{load_volume, save_volume};
