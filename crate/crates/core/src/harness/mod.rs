mod config;
mod experiment;
mod measure;
mod saddle;
pub mod verify;

pub use config::*;
pub use experiment::*;
pub use measure::*;
pub use saddle::{find_saddle_init, SaddlePoint};
