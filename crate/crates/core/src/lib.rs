pub mod analytic;
pub mod curve;
pub mod obstacle;
pub mod optimizer;
pub mod structure;
pub mod uniqueness;
pub mod vecmath;
