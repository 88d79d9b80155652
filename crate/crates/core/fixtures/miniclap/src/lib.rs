//! A small command-line argument parser.

mod app;
mod arg;
mod error;
pub mod output;

pub use app::{App, ArgMatches};
pub use arg::Arg;
pub use error::{Error, ErrorKind};
