pub mod conditioning;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod oracle;
pub mod render;
pub mod rng;
pub mod spc;
pub mod solver;
