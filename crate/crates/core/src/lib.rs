//! Parametric completion of incomplete point clouds into plane primitives.

pub mod assembly;
pub mod diffkit;
pub mod geom;
pub mod io;
pub mod matchloss;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod spatial;
pub mod synth;
pub mod trainer;

pub use geom::{CartesianPlane, PlanePrimitive, Point3, PolarPlane};
pub use mesh::PolyMesh;
pub use synth::{Level, Sample};
