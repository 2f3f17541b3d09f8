//! Simulation, stability certificates, weighted H2 norms, neural-ODE
//! embedding and generalization bounds for continuous-time LPV systems.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix the scalar for everyday use.

pub mod embed;
pub mod error;
pub mod pac;
pub mod rowmajor;
pub mod scalar;
pub mod quadrature;
pub mod signal;
pub mod stability;
pub mod simulate;
pub mod system;
pub mod volterra;

pub use error::{Error, Result};
pub use scalar::Real;
pub use signal::{Hold, SampledSignal, SchedulingSignal};
pub use simulate::{simulate, Trajectory};
pub use system::LpvSystem;

pub type LpvSystemF64 = system::LpvSystem<f64>;
pub type LpvSystemF32 = system::LpvSystem<f32>;
pub type SignalF64 = signal::SampledSignal<f64>;
pub type SignalF32 = signal::SampledSignal<f32>;
pub type SchedulingF64 = signal::SchedulingSignal<f64>;
pub type SchedulingF32 = signal::SchedulingSignal<f32>;
pub type TrajectoryF64 = simulate::Trajectory<f64>;
