//! Triangle meshes, closest-point queries and signed distances.
//!
//! A point `p` near a watertight mesh decomposes as `p = sdf(p) * n + q`
//! where `q` is the closest surface point and `n` the outward unit
//! direction. Signs come from angle-weighted pseudonormals of the closest
//! feature (face, edge or vertex).

mod index;
mod mesh;
pub mod shapes;
mod triangle;

pub use index::{ClosestPointIndex, RayHit};
pub use mesh::{MeshError, TriangleMesh};
pub use triangle::{barycentric, closest_point_on_triangle, Feature, TriangleProjection};

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Faces with an area below this are rejected.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A point on the mesh surface, located by face and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face: usize,
    /// Weights of the face's nodes `(A, B, C)`.
    pub barycentric: [f64; 3],
    pub position: Vec3,
}

/// Decomposition of a query point into distance, direction and surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshDecomposition {
    /// Negative inside the mesh.
    pub signed_distance: f64,
    pub closest: SurfacePoint,
    /// Outward unit direction such that `p = signed_distance * direction + closest.position`.
    pub direction: Vec3,
}

impl MeshDecomposition {
    pub fn reconstruct(&self) -> Vec3 {
        self.closest.position + self.direction * self.signed_distance
    }
}
