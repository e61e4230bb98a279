//! Matrix Lie group primitives: SO(3), SE2(3) and SOT(3).

pub mod se23;
pub mod so3;
pub mod sot3;

pub use se23::{integrate_inertial, ExtendedPose, Matrix9, Se23Tangent};
pub use so3::{hat, vee, Rot3};
pub use sot3::{ScaledRot, Sot3Tangent};
