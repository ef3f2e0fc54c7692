//! Geometry of the search space: the Grassmann manifold, the affine
//! measurement set and their product.

mod grassmann;
mod measurement;
mod product;

pub use grassmann::{grass_distance, grass_project, grass_retract, GrassmannPoint, GrassmannTangent};
pub use measurement::{AffineTangent, MeasurementSubspace, Sensing};
pub use product::{ProductManifold, ProductPoint, ProductTangent, XFactor};
