//! Numerical laboratory for the cross curvature flow on negatively curved
//! 3-metrics: curvature calculus from sampled metrics, flow integrators (raw,
//! DeTurck, normalized), monotone-functional monitors, Gauss–Codazzi
//! integrability checks, isometric embedding into Minkowski space, and
//! principal-symbol analysis.

pub mod curvature;
pub mod error;
pub mod flow;
pub mod frame;
pub mod grid;
pub mod io;
pub mod minkowski;
pub mod monitor;
pub mod sym3;
pub mod symbol;
pub mod third_order;

pub use error::{Result, XcfError};
