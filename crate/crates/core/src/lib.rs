pub mod fields;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod renderer;
pub mod spectral;
pub mod trainer;
