//! Learned sintering-deformation simulator.

pub mod eval;
pub mod geometry;
pub mod graphbuild;
pub mod model;
pub mod oracle;
pub mod rollout;
pub mod store;
pub mod tensor;
pub mod training;
