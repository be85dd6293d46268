use super::{MeshError, Vec3, DEGENERATE_AREA};

/// Feature of a triangle that contains a projected point.
///
/// Edges are numbered `0 = AB`, `1 = BC`, `2 = CA`; vertices `0 = A`, `1 = B`, `2 = C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Face,
    Edge(u8),
    Vertex(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleProjection {
    pub barycentric: [f64; 3],
    pub position: Vec3,
    pub feature: Feature,
}

/// Barycentric coordinates of `p` (projected onto the triangle's plane).
///
/// Each weight is the ratio of the sub-triangle opposite its vertex to the
/// full triangle: `b_A = |PBC| / |ABC|`, `b_B = |PCA| / |ABC|`,
/// `b_C = |PAB| / |ABC|`. Areas are signed, so points outside the triangle
/// get negative weights.
pub fn barycentric(nodes: [Vec3; 3], p: Vec3) -> Result<[f64; 3], MeshError> {
    let [a, b, c] = nodes;
    let n = (b - a).cross(&(c - a));
    let n2 = n.norm_squared();
    let area = 0.5 * n2.sqrt();
    if !(area >= DEGENERATE_AREA) {
        return Err(MeshError::DegenerateTriangle { area });
    }
    let (pa, pb, pc) = (a - p, b - p, c - p);
    Ok([
        n.dot(&pb.cross(&pc)) / n2,
        n.dot(&pc.cross(&pa)) / n2,
        n.dot(&pa.cross(&pb)) / n2,
    ])
}

/// Closest point to `p` on the closed triangle `ABC`.
///
/// Region classification follows the Voronoi-region walk of Ericson,
/// *Real-Time Collision Detection* (5.1.5).
pub fn closest_point_on_triangle(nodes: [Vec3; 3], p: Vec3) -> TriangleProjection {
    let [a, b, c] = nodes;
    let at = |bary: [f64; 3], feature| TriangleProjection {
        barycentric: bary,
        position: a * bary[0] + b * bary[1] + c * bary[2],
        feature,
    };

    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return TriangleProjection { barycentric: [1.0, 0.0, 0.0], position: a, feature: Feature::Vertex(0) };
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return TriangleProjection { barycentric: [0.0, 1.0, 0.0], position: b, feature: Feature::Vertex(1) };
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return at([1.0 - t, t, 0.0], Feature::Edge(0));
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return TriangleProjection { barycentric: [0.0, 0.0, 1.0], position: c, feature: Feature::Vertex(2) };
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return at([1.0 - t, 0.0, t], Feature::Edge(2));
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return at([0.0, 1.0 - t, t], Feature::Edge(1));
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    at([1.0 - v - w, v, w], Feature::Face)
}
