//! A priori H2 error bounds between lumped-parameter and discretized
//! distributed-parameter mechanical models.

pub mod consistency;
pub mod dpm;
pub mod error;
pub mod h2;
pub mod linalg;
pub mod lpm;
pub mod mor;
pub mod scalar;
pub mod signal;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
pub use scalar::{Cplx, Real};
pub use signal::{input_energy_factor, InputSignal, SignalKind};
pub use system::{eval_transfer, second_order_to_state_space, SecondOrderSystem, StateSpaceSystem};

/// Double-precision instantiations, the default for all pipelines.
pub type SecondOrderSystemF64 = SecondOrderSystem<f64>;
pub type StateSpaceSystemF64 = StateSpaceSystem<f64>;
pub type RomFamilyF64 = mor::RomFamily<f64>;
pub type DpmModelF64 = dpm::DpmModel<f64>;

/// Single-precision instantiations for quick previews.
pub type SecondOrderSystemF32 = SecondOrderSystem<f32>;
pub type StateSpaceSystemF32 = StateSpaceSystem<f32>;
pub type RomFamilyF32 = mor::RomFamily<f32>;
pub type DpmModelF32 = dpm::DpmModel<f32>;
