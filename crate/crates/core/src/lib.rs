pub mod birthdeath;
pub mod branching;
pub mod demography;
pub mod deterministic;
pub mod duality;
pub mod ensemble;
pub mod epidemics;
pub mod error;
pub mod genealogy;
pub mod numeric;
pub mod offspring;
pub mod rng;
pub mod simplex;
pub mod spatial;
pub mod stats;
pub mod trajectory;
pub mod wrightfisher;

pub use error::{Error, Result};
