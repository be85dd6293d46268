use super::triangle::{closest_point_on_triangle, Feature};
use super::{MeshDecomposition, SurfacePoint, TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let excess = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
            d2 += excess * excess;
        }
        d2
    }

    /// Slab test; returns the entry distance when the ray hits before `t_max`.
    fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for i in 0..3 {
            let a = (self.min[i] - origin[i]) * inv_dir[i];
            let b = (self.max[i] - origin[i]) * inv_dir[i];
            if a.is_nan() || b.is_nan() {
                // parallel ray starting on the slab boundary
                continue;
            }
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            t0 = if lo > t0 { lo } else { t0 };
            t1 = if hi < t1 { hi } else { t1 };
        }
        (t0 <= t1).then_some(t0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Result of a ray/mesh intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub point: SurfacePoint,
}

/// Bounding-volume hierarchy over the faces of a mesh plus the
/// angle-weighted pseudonormals used to sign distances.
///
/// Immutable after construction; all queries take `&self`.
#[derive(Debug, Clone)]
pub struct ClosestPointIndex {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    /// Face indices referenced by leaves.
    order: Vec<usize>,
    face_normals: Vec<Vec3>,
    /// Per face, pseudonormals of edges AB, BC, CA.
    edge_normals: Vec<[Vec3; 3]>,
    vertex_normals: Vec<Vec3>,
}

impl ClosestPointIndex {
    pub fn new(mesh: TriangleMesh) -> Self {
        let (face_normals, edge_normals, vertex_normals) = pseudonormals(&mesh);
        let face_bounds: Vec<Aabb> = (0..mesh.faces().len())
            .map(|f| {
                let mut b = Aabb::empty();
                for p in mesh.face_nodes(f) {
                    b.grow(&p);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3> =
            (0..mesh.faces().len()).map(|f| mesh.face_nodes(f).iter().sum::<Vec3>() / 3.0).collect();
        let mut order: Vec<usize> = (0..mesh.faces().len()).collect();
        let mut nodes = Vec::new();
        build(&mut nodes, &mut order, 0, mesh.faces().len(), &face_bounds, &centroids);
        Self { mesh, nodes, order, face_normals, edge_normals, vertex_normals }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.face_normals[face]
    }

    /// Closest surface point; ties between faces go to the lowest face index.
    pub fn closest_point(&self, p: &Vec3) -> SurfacePoint {
        self.closest(p).0
    }

    pub fn signed_distance(&self, p: &Vec3) -> MeshDecomposition {
        let (closest, feature) = self.closest(p);
        let pseudonormal = match feature {
            Feature::Face => self.face_normals[closest.face],
            Feature::Edge(e) => self.edge_normals[closest.face][e as usize],
            Feature::Vertex(v) => self.vertex_normals[self.mesh.faces()[closest.face][v as usize]],
        };
        let offset = p - closest.position;
        let distance = offset.norm();
        if distance < 1e-12 {
            return MeshDecomposition { signed_distance: 0.0, closest, direction: pseudonormal };
        }
        let sign = if offset.dot(&pseudonormal) < 0.0 { -1.0 } else { 1.0 };
        let signed_distance = sign * distance;
        MeshDecomposition { signed_distance, closest, direction: offset / signed_distance }
    }

    fn closest(&self, p: &Vec3) -> (SurfacePoint, Feature) {
        let mut best_d2 = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut best = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                Node::Leaf { bounds, start, end } => {
                    if bounds.distance_squared(p) > best_d2 {
                        continue;
                    }
                    for &face in &self.order[*start..*end] {
                        let proj = closest_point_on_triangle(self.mesh.face_nodes(face), *p);
                        let d2 = (p - proj.position).norm_squared();
                        if d2 < best_d2 || (d2 == best_d2 && face < best_face) {
                            best_d2 = d2;
                            best_face = face;
                            best = Some(proj);
                        }
                    }
                }
                Node::Inner { bounds, left, right } => {
                    if bounds.distance_squared(p) > best_d2 {
                        continue;
                    }
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // nearer child is popped first
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        let proj = best.expect("mesh has at least one face");
        (SurfacePoint { face: best_face, barycentric: proj.barycentric, position: proj.position }, proj.feature)
    }

    /// First intersection of the ray `origin + t * dir` with the surface, `t > 0`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best_t = f64::INFINITY;
        let mut best: Option<(usize, [f64; 3])> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().ray_entry(origin, &inv, best_t).is_none() {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &face in &self.order[*start..*end] {
                        if let Some((t, bary)) = ray_triangle(origin, dir, self.mesh.face_nodes(face)) {
                            if t < best_t || (t == best_t && best.is_some_and(|(f, _)| face < f)) {
                                best_t = t;
                                best = Some((face, bary));
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        best.map(|(face, barycentric)| {
            let [a, b, c] = self.mesh.face_nodes(face);
            let position = a * barycentric[0] + b * barycentric[1] + c * barycentric[2];
            RayHit { distance: best_t, point: SurfacePoint { face, barycentric, position } }
        })
    }
}

fn build(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    face_bounds: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let bounds = order[start..end].iter().fold(Aabb::empty(), |acc, &f| acc.merge(&face_bounds[f]));
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let mut cb = Aabb::empty();
    for &f in &order[start..end] {
        cb.grow(&centroids[f]);
    }
    let extent = cb.max - cb.min;
    let axis = extent.imax();
    let mid = (start + end) / 2;
    order[start..end].sort_by(|&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build(nodes, order, start, mid, face_bounds, centroids);
    let right = build(nodes, order, mid, end, face_bounds, centroids);
    nodes[id] = Node::Inner { bounds, left, right };
    id
}

/// Moller-Trumbore; returns distance and barycentric weights of the hit.
fn ray_triangle(origin: &Vec3, dir: &Vec3, [a, b, c]: [Vec3; 3]) -> Option<(f64, [f64; 3])> {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = inv * e2.dot(&q);
    (t > 1e-12).then_some((t, [1.0 - u - v, u, v]))
}

/// Face normals, per-face edge pseudonormals and angle-weighted vertex normals.
fn pseudonormals(mesh: &TriangleMesh) -> (Vec<Vec3>, Vec<[Vec3; 3]>, Vec<Vec3>) {
    use std::collections::HashMap;

    let faces = mesh.faces();
    let nodes = mesh.nodes();
    let face_normals: Vec<Vec3> = (0..faces.len())
        .map(|f| {
            let [a, b, c] = mesh.face_nodes(f);
            (b - a).cross(&(c - a)).normalize()
        })
        .collect();

    let mut vertex = vec![Vec3::zeros(); nodes.len()];
    let mut edge_sum: HashMap<(usize, usize), Vec3> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for i in 0..3 {
            let (v, next, prev) = (face[i], face[(i + 1) % 3], face[(i + 2) % 3]);
            let u = (nodes[next] - nodes[v]).normalize();
            let w = (nodes[prev] - nodes[v]).normalize();
            let angle = u.dot(&w).clamp(-1.0, 1.0).acos();
            vertex[v] += face_normals[f] * angle;
            *edge_sum.entry((v.min(next), v.max(next))).or_insert_with(Vec3::zeros) += face_normals[f];
        }
    }
    let edge_normals = faces
        .iter()
        .map(|face| {
            std::array::from_fn(|i| {
                let (a, b) = (face[i], face[(i + 1) % 3]);
                edge_sum[&(a.min(b), a.max(b))].normalize()
            })
        })
        .collect();
    let vertex_normals = vertex.into_iter().map(|n| n.normalize()).collect();
    (face_normals, edge_normals, vertex_normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mesh: &TriangleMesh, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for f in 0..mesh.faces().len() {
            let d2 = (p - closest_point_on_triangle(mesh.face_nodes(f), *p).position).norm_squared();
            if d2 < best.0 {
                best = (d2, f);
            }
        }
        (best.0.sqrt(), best.1)
    }

    fn random_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
        loop {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm_squared() <= 1.0 {
                return p * radius;
            }
        }
    }

    #[test]
    fn surface_point_has_zero_distance() {
        let index = ClosestPointIndex::new(shapes::icosphere(2, 1.0));
        let [a, b, c] = index.mesh().face_nodes(17);
        let centroid = (a + b + c) / 3.0;
        let d = index.signed_distance(&centroid);
        assert!(d.signed_distance.abs() < 1e-9);
        assert_eq!(d.closest.face, 17);
        assert!((d.direction - index.face_normal(17)).norm() < 1e-12);
    }

    #[test]
    fn origin_is_equidistant_from_icosphere() {
        let mesh = shapes::icosphere(1, 1.0);
        let index = ClosestPointIndex::new(mesh.clone());
        let q = index.closest_point(&Vec3::zeros());
        let (brute, _) = brute_force(&mesh, &Vec3::zeros());
        assert!(((q.position.norm()) - brute).abs() < 1e-12);
        // every face plane sits between the inscribed and circumscribed radius
        assert!(brute > 0.9 && brute <= 1.0);
    }

    #[test]
    fn cube_closest_point_and_sign() {
        let index = ClosestPointIndex::new(shapes::cube(1.0));
        let q = index.closest_point(&Vec3::new(2.0, 0.0, 0.0));
        assert!((q.position - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        let d = index.signed_distance(&Vec3::new(2.0, 0.0, 0.0));
        assert!((d.signed_distance - 1.5).abs() < 1e-12);
        // beyond a corner: vertex pseudonormal decides
        let d = index.signed_distance(&Vec3::new(0.6, 0.6, 0.6));
        assert!(d.signed_distance > 0.0);
        let d = index.signed_distance(&Vec3::new(0.45, 0.45, 0.45));
        assert!((d.signed_distance + 0.05).abs() < 1e-12);
    }

    #[test]
    fn bvh_matches_brute_force() {
        let mesh = shapes::ellipsoid(2, Vec3::new(0.6, 0.3, 0.4));
        let index = ClosestPointIndex::new(mesh.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = random_in_ball(&mut rng, 1.0);
            let fast = index.closest_point(&p);
            let (d, face) = brute_force(&mesh, &p);
            assert!(((p - fast.position).norm() - d).abs() < 1e-12);
            assert_eq!(fast.face, face);
        }
    }

    #[test]
    fn raycast_hits_sphere_front() {
        let index = ClosestPointIndex::new(shapes::icosphere(3, 0.5));
        let hit = index.raycast(&Vec3::new(0.0, 0.0, -3.0), &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(hit.distance > 2.5 - 1e-12 && hit.distance < 2.52, "{}", hit.distance);
        assert!(index.raycast(&Vec3::new(0.0, 0.8, -3.0), &Vec3::new(0.0, 0.0, 1.0)).is_none());
        let [a, b, c] = index.mesh().face_nodes(hit.point.face);
        let bary = hit.point.barycentric;
        assert!((a * bary[0] + b * bary[1] + c * bary[2] - hit.point.position).norm() < 1e-12);
    }
}
