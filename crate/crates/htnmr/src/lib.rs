//! Simulation toolkit for hydrogen-transfer microscale NMR with NV-ensemble readout.
//!
//! Target-nucleus information (J couplings and chemical shifts) is loaded into a
//! low-gamma nucleus, swapped onto hydrogens for detection, and compared against
//! direct interrogation of the target.

pub mod analytic;
pub mod molecule;
pub mod readout;
pub mod sensitivity;
pub mod sequence;
pub mod spectro;
pub mod spin;

use nalgebra::RealField;

/// Floating-point scalar used by the dense spin algebra: f32 or f64.
pub trait Real:
    RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub type SpinOperator = spin::SpinOperator<f64>;
pub type DensityMatrix = spin::DensityMatrix<f64>;
pub type SpinOperator32 = spin::SpinOperator<f32>;
pub type DensityMatrix32 = spin::DensityMatrix<f32>;
pub type SignalTrace = sequence::SignalTrace;

pub use molecule::{Environment, Molecule, Role};
pub use sequence::{EngineMode, SequenceConfig};
