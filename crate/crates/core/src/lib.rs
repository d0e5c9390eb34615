//! Stratified atlases of the configuration space of two rigid point-sets
//! under pairwise distance-interval constraints, sampled through convex
//! Cayley parametrizations.

pub mod acg;
pub mod atlas;
pub mod cayley;
pub mod coverage;
pub mod geometry;
pub mod io;
pub mod model;
pub mod paths;
pub mod realization;
