//! Finite element testbed for elliptic boundary value problems posed in
//! domains perforated by many small cavities.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] describes cavity layouts and audits their structural assumptions,
//! * [`mesh`] triangulates the perforated domain,
//! * [`fem`] assembles and solves the P1 problem with Dirichlet and nonlinear
//!   Robin cavities and measures local Poincaré constants,
//! * [`cell`] solves the periodic cell problems of the unit perforation,
//! * [`rates`] runs ε-sweeps and fits the observed decay rates,
//! * [`scenario`] reads the declarative experiment files used by the CLI.

pub mod cell;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod rates;
pub mod scenario;
pub mod sparse;

/// A point (or vector) in the plane.
pub type Point = [f64; 2];

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
