//! Procedural closed meshes used by tests and the synthetic scene.

use std::collections::HashMap;

use super::{TriangleMesh, Vec3};

pub fn tetrahedron() -> TriangleMesh {
    let nodes = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    TriangleMesh::new(nodes, vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]]).expect("valid tetrahedron")
}

/// Axis-aligned cube with the given side length, centred at the origin.
pub fn cube(side: f64) -> TriangleMesh {
    let h = side / 2.0;
    let mut nodes = Vec::with_capacity(8);
    for i in 0..8 {
        let pick = |bit: usize| if i & bit != 0 { h } else { -h };
        nodes.push(Vec3::new(pick(1), pick(2), pick(4)));
    }
    let mut faces = Vec::with_capacity(12);
    for axis in 0..3 {
        let bit = 1 << axis;
        let (u, v) = (1 << ((axis + 1) % 3), 1 << ((axis + 2) % 3));
        for side_bit in [0, bit] {
            let quad = [side_bit, side_bit | u, side_bit | u | v, side_bit | v];
            let mut tris = [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]];
            let outward = if side_bit == 0 { -1.0 } else { 1.0 };
            for t in tris.iter_mut() {
                let n = (nodes[t[1]] - nodes[t[0]]).cross(&(nodes[t[2]] - nodes[t[0]]));
                if n[axis] * outward < 0.0 {
                    t.swap(1, 2);
                }
            }
            faces.extend(tris);
        }
    }
    TriangleMesh::new(nodes, faces).expect("valid cube")
}

/// Subdivided icosahedron projected onto a sphere.
///
/// `subdivisions = 0, 1, 2, 3` gives 12, 42, 162, 642 nodes.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut nodes: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                nodes.push(((nodes[a] + nodes[b]) * 0.5).normalize());
                nodes.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for n in nodes.iter_mut() {
        *n *= radius;
    }
    TriangleMesh::new(nodes, faces).expect("valid icosphere")
}

/// Icosphere scaled per axis into an ellipsoid ("tube") with the given semi-axes.
pub fn ellipsoid(subdivisions: usize, semi_axes: Vec3) -> TriangleMesh {
    let sphere = icosphere(subdivisions, 1.0);
    let nodes = sphere.nodes().iter().map(|n| n.component_mul(&semi_axes)).collect();
    sphere.with_nodes(nodes).expect("scaling keeps faces non-degenerate")
}
