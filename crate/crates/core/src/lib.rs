//! Tangent-bundle structures that make a given dynamical vector field a
//! second-order equation, with the regularized Kepler problem and
//! deformed oscillators as worked applications.

pub mod expr;
pub mod sampling;
pub mod geometry;
pub mod dynamics;
pub mod bundle;
pub mod conformal;
pub mod kepler;
pub mod foscillator;
pub mod motions;
pub mod scenarios;
