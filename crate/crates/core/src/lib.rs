//! Wave-packet reverse-time continuation and RTM-based inverse scattering.

pub mod config;
pub mod error;
pub mod fdref;
pub mod fio;
pub mod frame;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod model;
pub mod nufft;
pub mod pipeline;
pub mod rays;
pub mod rtc;

pub use error::{Error, Result};
pub use num_complex;
