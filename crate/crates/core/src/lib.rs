pub mod fem;
pub mod mesh;
pub mod metrics;
pub mod optimizer;
pub mod shape_calculus;
pub mod stokes;
