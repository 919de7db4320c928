//! Exoatmospheric intercept simulation: a thruster-actuated 6-DOF missile
//! homing on a maneuvering target with a strapdown seeker, plus the
//! zero-effort-miss benchmark guidance and the episode runner shared by the
//! classical and learned controllers.

pub mod airframe;
pub mod dynamics;
pub mod engagement;
pub mod error;
pub mod guidance;
pub mod mathkit;
pub mod scenario;
pub mod seeker;

pub use error::{Result, SimError};
pub use mathkit::{Dcm, Mat3, Quaternion, RngStream, Vec3};
