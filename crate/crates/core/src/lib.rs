//! Numerics for bimodal degree-one circle maps: rotation intervals,
//! continued-fraction combinatorics, induced Markov maps and their
//! invariant densities.

pub mod cf;
pub mod circle;
pub mod conditions;
pub mod critical;
pub mod error;
pub mod exec;
pub mod frame;
pub mod harness;
pub mod inducing;
pub mod lift;
pub mod measures;
pub mod roots;
pub mod rotation;

pub use circle::CircleInterval;
pub use critical::{BimodalMap, CriticalData};
pub use error::{Error, Result};
pub use exec::Mode;
pub use lift::{ArnoldLift, Lift, MonotoneLaps, Precision, RigidRotation, TableLift};
