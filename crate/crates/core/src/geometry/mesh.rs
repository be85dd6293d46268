use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Isometry3;
use thiserror::Error;

use super::{Vec3, DEGENERATE_AREA};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: non-triangular face with {count} vertices")]
    NonTriangular { line: usize, count: usize },
    #[error("face {face} references node {index}, mesh has {count} nodes")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("node {0} has a non-finite position")]
    NonFinite(usize),
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("degenerate triangle (area {area:e})")]
    DegenerateTriangle { area: f64 },
    #[error("mesh is not watertight; offending edges (a, b, face count): {edges:?}")]
    NotWatertight { edges: Vec<(usize, usize, usize)> },
    #[error("inconsistent winding: directed edge ({0}, {1}) appears twice")]
    InconsistentWinding(usize, usize),
    #[error("faces wind inward (enclosed volume {0:e})")]
    InwardWinding(f64),
    #[error("mesh has no faces")]
    Empty,
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A closed, consistently oriented triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    nodes: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
}

impl TriangleMesh {
    /// Builds and validates a mesh: indices in range, finite positions,
    /// non-degenerate faces, every edge shared by exactly two faces with
    /// opposite directions, positive enclosed volume.
    pub fn new(nodes: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (i, n) in nodes.iter().enumerate() {
            if !n.iter().all(|x| x.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= nodes.len() {
                    return Err(MeshError::IndexOutOfRange { face: f, index, count: nodes.len() });
                }
            }
        }
        check_face_areas(&nodes, &faces)?;

        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for face in &faces {
            for e in 0..3 {
                let (a, b) = (face[e], face[(e + 1) % 3]);
                *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        let mut bad: Vec<(usize, usize, usize)> = undirected
            .iter()
            .filter(|(_, &count)| count != 2)
            .map(|(&(a, b), &count)| (a, b, count))
            .collect();
        if !bad.is_empty() {
            bad.sort_unstable();
            return Err(MeshError::NotWatertight { edges: bad });
        }
        if let Some((a, b)) = directed.iter().filter(|(_, &c)| c > 1).map(|(&e, _)| e).min() {
            return Err(MeshError::InconsistentWinding(a, b));
        }

        let mut edges: Vec<[usize; 2]> = undirected.keys().map(|&(a, b)| [a, b]).collect();
        edges.sort_unstable();
        let mesh = Self { nodes, faces, edges };
        let volume = mesh.volume();
        if volume <= 0.0 {
            return Err(MeshError::InwardWinding(volume));
        }
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges `[a, b]` with `a < b`, sorted.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn face_nodes(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_nodes(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Enclosed volume by the divergence theorem; positive for outward winding.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| self.nodes[a].dot(&self.nodes[b].cross(&self.nodes[c])))
            .sum::<f64>()
            / 6.0
    }

    /// Same topology, new node positions (the re-posing operation).
    pub fn with_nodes(&self, nodes: Vec<Vec3>) -> Result<Self, MeshError> {
        if nodes.len() != self.nodes.len() {
            return Err(MeshError::TopologyMismatch(format!(
                "expected {} nodes, got {}",
                self.nodes.len(),
                nodes.len()
            )));
        }
        if let Some(i) = nodes.iter().position(|n| !n.iter().all(|x| x.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        check_face_areas(&nodes, &self.faces)?;
        Ok(Self { nodes, faces: self.faces.clone(), edges: self.edges.clone() })
    }

    pub fn transformed(&self, transform: &Isometry3<f64>) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|n| transform.transform_point(&(*n).into()).coords)
            .collect();
        Self { nodes, faces: self.faces.clone(), edges: self.edges.clone() }
    }

    pub fn same_topology(&self, other: &TriangleMesh) -> bool {
        self.nodes.len() == other.nodes.len() && self.faces == other.faces
    }

    /// Parses a Wavefront OBJ string. Only `v` and `f` records are read.
    pub fn from_obj_str(text: &str) -> Result<Self, MeshError> {
        let mut nodes = Vec::new();
        let mut faces = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let mut tokens = raw.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<f64> = tokens
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| MeshError::Parse { line, message: format!("bad vertex: {e}") })?;
                    if coords.len() != 3 {
                        return Err(MeshError::Parse { line, message: "vertex needs 3 coordinates".into() });
                    }
                    nodes.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let refs: Vec<&str> = tokens.collect();
                    if refs.len() != 3 {
                        return Err(MeshError::NonTriangular { line, count: refs.len() });
                    }
                    let mut face = [0usize; 3];
                    for (slot, r) in face.iter_mut().zip(&refs) {
                        *slot = parse_face_index(r, nodes.len())
                            .ok_or_else(|| MeshError::Parse { line, message: format!("bad face index `{r}`") })?;
                    }
                    faces.push(face);
                }
                _ => {}
            }
        }
        Self::new(nodes, faces)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        Self::from_obj_str(&std::fs::read_to_string(path)?)
    }

    /// OBJ text with shortest round-trip float formatting, so a reload is exact.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(out, "v {:?} {:?} {:?}", n.x, n.y, n.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.to_obj_string())?;
        Ok(())
    }
}

fn check_face_areas(nodes: &[Vec3], faces: &[[usize; 3]]) -> Result<(), MeshError> {
    for (f, &[a, b, c]) in faces.iter().enumerate() {
        let area = 0.5 * (nodes[b] - nodes[a]).cross(&(nodes[c] - nodes[a])).norm();
        if !(area >= DEGENERATE_AREA) {
            return Err(MeshError::DegenerateFace { face: f, area });
        }
    }
    Ok(())
}

/// `i`, `i/t`, `i//n`, `i/t/n`; 1-based, negative values count from the end.
fn parse_face_index(token: &str, node_count: usize) -> Option<usize> {
    let first = token.split('/').next()?;
    let value: i64 = first.parse().ok()?;
    match value {
        v if v > 0 => Some(v as usize - 1),
        v if v < 0 => (node_count as i64 + v).try_into().ok(),
        _ => None,
    }
}
