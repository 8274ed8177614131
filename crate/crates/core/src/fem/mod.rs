//! Finite-element spaces, quadrature, assembly and the sparse solve contract.

use thiserror::Error;

use crate::mesh::BoundaryMarker;

pub mod assemble;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod surface;

pub use assemble::{
    assemble_elasticity, assemble_poisson, assemble_stokes, assemble_stokes_with, p1_mass,
    p1_stiffness, StokesSystem,
};
pub use quadrature::{quadrature, EdgeRule, TriangleRule};
pub use space::{ElementGeometry, Field, FunctionSpace};
pub use sparse::{solve, CsrMatrix, LuSolver, SparseSystem, TripletBuilder};
pub use surface::{
    assemble_surface_helmholtz, l2_project, normal_load, surface_helmholtz_matrix, surface_load,
    surface_mass, surface_stiffness, SurfaceDensity,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("polynomial degree {0} is not supported")]
    UnsupportedDegree(usize),
    #[error("{0} components are not supported")]
    Components(usize),
    #[error("vector has {got} entries, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("matrix is {rows}x{cols} but the right-hand side has {rhs} entries")]
    Dimension {
        rows: usize,
        cols: usize,
        rhs: usize,
    },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("elasticity parameter mu must be positive, vertex {vertex} has {value}")]
    NonPositiveMu { vertex: usize, value: f64 },
    #[error("no boundary value given for marker {0:?}")]
    MissingMarker(BoundaryMarker),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent boundary data: {0}")]
    InconsistentBoundaryData(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}
