//! Marked spatio-temporal point-process models of reading.
//!
//! A scanpath is modeled as a sequence of fixations `(onset, location,
//! duration)`. Onsets and locations follow a spatio-temporal Hawkes process
//! ([`saccade`]); durations follow a log-normal distribution whose log-mean
//! carries spillover from earlier fixations ([`duration`]). The remaining
//! modules fit these models by maximum likelihood ([`fit`]), sample from
//! them ([`simulate`]), and compare fitted models ([`eval`]).
//!
//! Model math is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what fitting uses.

pub mod data;
pub mod duration;
pub mod error;
pub mod eval;
pub mod events;
pub mod fit;
pub mod geometry;
pub mod params;
pub mod plot;
pub mod saccade;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = geometry::Point<f64>;
pub type Rect = geometry::Rect<f64>;
pub type SaccadeParams = saccade::SaccadeParams<f64>;
pub type SaccadeParams32 = saccade::SaccadeParams<f32>;
pub type DurationParams = duration::DurationParams<f64>;
pub type DurationParams32 = duration::DurationParams<f32>;
