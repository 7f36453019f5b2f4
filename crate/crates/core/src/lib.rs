//! Large-scale Euclidean TSP solver built from two decomposition passes.
//!
//! The [`grid`] phase tiles the plane, solves each cell with a [`subsolver`],
//! freezes the interior of each cell route, and coarsens the grid until one
//! cell remains; the frozen chains are handed to each solve as fixed edges
//! between their endpoints. The [`path`] phase then slides windows over the
//! tour, re-solves each window as a fixed-endpoint open path, and keeps only
//! strict improvements. [`pipeline`] wires both together with reporting.

pub mod construct;
pub mod geom;
pub mod grid;
pub mod instance;
pub mod open_path;
pub mod path;
pub mod pipeline;
pub mod report;
pub mod subsolver;
pub mod tour;
pub mod tsplib;

pub use geom::{Point, Rect};
pub use instance::{generate_random, Instance};
pub use tour::{tour_length, validate_tour, Tour};
