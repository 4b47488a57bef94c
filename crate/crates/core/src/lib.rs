pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod dsn;
pub mod error;
pub mod evaluation;
pub mod imaging;
mod kv;
pub mod losses;
pub mod nets;
pub mod pipeline;
pub mod rng;
pub mod srn;
pub mod tensor;
pub mod train;
pub mod translator;

pub use error::{Error, Result};
pub use imaging::{Image, Scale};
pub use tensor::{Real, Tensor};
