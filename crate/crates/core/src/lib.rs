//! Collaborative safety filtering for networked multi-agent formations.
//!
//! Agents follow a spring-damper formation controller, filter their control
//! through high-order control barrier functions, and negotiate shares of each
//! other's control authority when a local filter alone cannot stay safe.

#![no_std]

extern crate alloc;

pub mod barrier;
pub mod capability;
pub mod error;
pub mod formation;
pub mod linalg;
pub mod lp;
pub mod polytope;
pub mod protocol;
pub mod qp;

pub use error::{Error, Result};
pub use linalg::{Mat2, Matrix, Vec2};
pub use polytope::{closest_points, project_onto_boundary_region, project_point, Polytope};
