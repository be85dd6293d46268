//! Graph Laplacians of mesh connectivity and per-node positional codes.
//!
//! The Laplacian embedding solves `min tr(X^T L X)` subject to
//! `X^T D X = I_k`: its columns are the generalized eigenvectors of
//! `(L, D)` with the smallest non-zero eigenvalues. Only topology enters,
//! so the codes survive any re-posing of the mesh.

mod eigen;
mod file;

pub use eigen::symmetric_eigen;
pub use file::EMBEDDING_MAGIC;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::TriangleMesh;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("graph is disconnected ({components} components); eigenvalue 0 has multiplicity > 1")]
    Disconnected { components: usize },
    #[error("k must be < node count (k = {k}, n = {n})")]
    DimensionTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroDimension,
    #[error("unknown embedding kind `{0}`")]
    UnknownKind(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unweighted graph of mesh edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraph {
    neighbors: Vec<Vec<usize>>,
}

impl MeshGraph {
    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Dense row-major adjacency matrix `A`.
    pub fn adjacency_matrix(&self) -> Vec<f64> {
        let n = self.node_count();
        let mut a = vec![0.0; n * n];
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                a[i * n + j] = 1.0;
            }
        }
        a
    }

    /// Dense row-major `L = D - A`.
    pub fn laplacian_matrix(&self) -> Vec<f64> {
        let n = self.node_count();
        let mut l = self.adjacency_matrix();
        for x in l.iter_mut() {
            *x = -*x;
        }
        for i in 0..n {
            l[i * n + i] = self.degree(i) as f64;
        }
        l
    }

    /// Number of connected components (breadth-first flood fill).
    pub fn components(&self) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }
}

pub fn build_graph(mesh: &TriangleMesh) -> MeshGraph {
    let mut neighbors = vec![Vec::new(); mesh.nodes().len()];
    for &[a, b] in mesh.edges() {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for ns in neighbors.iter_mut() {
        ns.sort_unstable();
        ns.dedup();
    }
    MeshGraph { neighbors }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Laplacian,
    Random,
    Learnable,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 3] = [EmbeddingKind::Laplacian, EmbeddingKind::Random, EmbeddingKind::Learnable];

    fn code(self) -> u32 {
        match self {
            EmbeddingKind::Laplacian => 0,
            EmbeddingKind::Random => 1,
            EmbeddingKind::Learnable => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Laplacian => "laplacian",
            EmbeddingKind::Random => "random",
            EmbeddingKind::Learnable => "learnable",
        })
    }
}

impl FromStr for EmbeddingKind {
    type Err = SpectralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laplacian" | "lpe" => Ok(EmbeddingKind::Laplacian),
            "random" => Ok(EmbeddingKind::Random),
            "learnable" | "learned" => Ok(EmbeddingKind::Learnable),
            other => Err(SpectralError::UnknownKind(other.to_string())),
        }
    }
}

/// Per-node `k`-dimensional codes, stored row-major (`n x k`).
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEmbedding {
    pub kind: EmbeddingKind,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    data: Vec<f64>,
    /// Laplacian kind only: generalized eigenvalue of each column.
    eigenvalues: Vec<f64>,
    /// Laplacian kind only: max-abs factor each column was divided by.
    column_scales: Vec<f64>,
}

impl PositionalEmbedding {
    pub fn code(&self, node: usize) -> &[f64] {
        &self.data[node * self.k..(node + 1) * self.k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable codes; only the learnable kind is updated during training.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == EmbeddingKind::Learnable
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }

    /// Largest absolute code entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// The `D`-orthonormal eigenvectors before column rescaling.
    /// Equal to `data()` for non-Laplacian kinds.
    pub fn unscaled(&self) -> Vec<f64> {
        if self.column_scales.is_empty() {
            return self.data.clone();
        }
        let mut out = self.data.clone();
        for row in out.chunks_mut(self.k) {
            for (x, s) in row.iter_mut().zip(&self.column_scales) {
                *x *= s;
            }
        }
        out
    }

    /// Embedding with the same payload under another kind; used by ablations
    /// that force identical codes across kinds.
    pub fn relabeled(&self, kind: EmbeddingKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn from_parts(kind: EmbeddingKind, n: usize, k: usize, seed: u64, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * k, "embedding data must be n x k");
        Self { kind, n, k, seed, data, eigenvalues: Vec::new(), column_scales: Vec::new() }
    }
}

/// Laplacian positional embedding with `k` columns in `[-1, 1]`.
///
/// Columns come from the eigendecomposition of `D^-1/2 L D^-1/2`, mapped
/// back by `D^-1/2` so that `X^T D X = I`, skipping the constant vector.
/// Degenerate eigenvalues are ordered by the index of each vector's
/// largest-magnitude entry; each column is signed so that entry is positive,
/// then divided by its max-abs value.
pub fn laplacian_embedding(graph: &MeshGraph, k: usize) -> Result<PositionalEmbedding, SpectralError> {
    let n = graph.node_count();
    if k == 0 {
        return Err(SpectralError::ZeroDimension);
    }
    if k >= n {
        return Err(SpectralError::DimensionTooLarge { k, n });
    }
    let components = graph.components();
    if components > 1 {
        return Err(SpectralError::Disconnected { components });
    }

    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / (graph.degree(i) as f64).sqrt()).collect();
    let mut normalized = vec![0.0; n * n];
    for i in 0..n {
        normalized[i * n + i] = 1.0;
        for &j in graph.neighbors(i) {
            normalized[i * n + j] = -inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    let (values, vectors) = symmetric_eigen(normalized, n);

    // generalized eigenvectors x = D^-1/2 y, sign-fixed
    let mut pairs: Vec<(f64, usize, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut x: Vec<f64> = (0..n).map(|i| vectors[i * n + j] * inv_sqrt_deg[i]).collect();
            let peak = argmax_abs(&x);
            if x[peak] < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            (values[j], peak, x)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs[1].0 < 1e-10 {
        return Err(SpectralError::Disconnected { components: 2 });
    }
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[start].0 < 1e-8 * pairs[start].0.abs().max(1.0) {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
        start = end;
    }

    let chosen = &pairs[1..=k];
    let eigenvalues: Vec<f64> = chosen.iter().map(|p| p.0).collect();
    let column_scales: Vec<f64> = chosen.iter().map(|p| p.2[p.1].abs()).collect();
    let mut data = vec![0.0; n * k];
    for (j, (_, _, x)) in chosen.iter().enumerate() {
        for i in 0..n {
            data[i * k + j] = x[i] / column_scales[j];
        }
    }
    Ok(PositionalEmbedding { kind: EmbeddingKind::Laplacian, n, k, seed: 0, data, eigenvalues, column_scales })
}

fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

/// Codes drawn i.i.d. uniform in `[-1, 1]` from `seed`.
pub fn random_embedding(n: usize, k: usize, seed: u64) -> Result<PositionalEmbedding, SpectralError> {
    if k == 0 {
        return Err(SpectralError::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(PositionalEmbedding::from_parts(EmbeddingKind::Random, n, k, seed, data))
}

/// Random initial codes that the trainer optimizes jointly with the networks.
pub fn learnable_embedding(n: usize, k: usize, seed: u64) -> Result<PositionalEmbedding, SpectralError> {
    Ok(random_embedding(n, k, seed)?.relabeled(EmbeddingKind::Learnable))
}

/// Builds an embedding of the requested kind for `mesh`.
pub fn embed_mesh(
    mesh: &TriangleMesh,
    kind: EmbeddingKind,
    k: usize,
    seed: u64,
) -> Result<PositionalEmbedding, SpectralError> {
    let n = mesh.nodes().len();
    match kind {
        EmbeddingKind::Laplacian => laplacian_embedding(&build_graph(mesh), k),
        EmbeddingKind::Random => random_embedding(n, k, seed),
        EmbeddingKind::Learnable => learnable_embedding(n, k, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{shapes, TriangleMesh, Vec3};

    /// Cycle graph C_n built directly (not from a mesh).
    fn cycle(n: usize) -> MeshGraph {
        MeshGraph {
            neighbors: (0..n)
                .map(|i| {
                    let mut v = vec![(i + n - 1) % n, (i + 1) % n];
                    v.sort_unstable();
                    v
                })
                .collect(),
        }
    }

    fn d_gram(graph: &MeshGraph, x: &[f64], k: usize) -> Vec<f64> {
        let n = graph.node_count();
        let mut g = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                g[a * k + b] = (0..n).map(|i| x[i * k + a] * graph.degree(i) as f64 * x[i * k + b]).sum();
            }
        }
        g
    }

    #[test]
    fn tetrahedron_is_k4() {
        let g = build_graph(&shapes::tetrahedron());
        assert!((0..4).all(|i| g.degree(i) == 3));
        let l = g.laplacian_matrix();
        for i in 0..4 {
            assert_eq!(l[i * 4..(i + 1) * 4].iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn icosphere_degrees() {
        let g = build_graph(&shapes::icosphere(1, 1.0));
        let degrees: Vec<usize> = (0..g.node_count()).map(|i| g.degree(i)).collect();
        assert!(degrees.iter().all(|&d| d == 5 || d == 6));
        assert_eq!(degrees.iter().filter(|&&d| d == 5).count(), 12);
    }

    #[test]
    fn cycle_c4_matches_dense_oracle() {
        // Generalized problem on C4: every degree is 2, so eigenvectors of L.
        // L has eigenvalues 0, 2, 2, 4; the eigenspace of 2 is spanned by
        // (1, 0, -1, 0) and (0, 1, 0, -1); generalized eigenvalue = 2 / 2 = 1.
        let g = cycle(4);
        let emb = laplacian_embedding(&g, 1).unwrap();
        assert!((emb.eigenvalues()[0] - 1.0).abs() < 1e-12);
        let x = emb.unscaled();
        let gram = d_gram(&g, &x, 1);
        assert!((gram[0] - 1.0).abs() < 1e-6);
        // component orthogonal to the degenerate plane vanishes
        let plane_norm = (x[0] - x[2]).powi(2) / 2.0 + (x[1] - x[3]).powi(2) / 2.0;
        let total: f64 = x.iter().map(|v| v * v).sum();
        assert!((plane_norm - total).abs() < 1e-12);
        assert!(emb.data().iter().all(|v| v.abs() <= 1.0));
        assert!((emb.max_abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_quotients_equal_eigenvalues() {
        let mesh = shapes::icosphere(1, 1.0);
        let g = build_graph(&mesh);
        let k = 6;
        let emb = laplacian_embedding(&g, k).unwrap();
        let x = emb.unscaled();
        let l = g.laplacian_matrix();
        let n = g.node_count();
        for j in 0..k {
            let col: Vec<f64> = (0..n).map(|i| x[i * k + j]).collect();
            let lx: f64 = (0..n).map(|i| col[i] * (0..n).map(|m| l[i * n + m] * col[m]).sum::<f64>()).sum();
            let dx: f64 = (0..n).map(|i| col[i] * col[i] * g.degree(i) as f64).sum();
            assert!((lx / dx - emb.eigenvalues()[j]).abs() < 1e-6);
        }
        let gram = d_gram(&g, &x, k);
        for a in 0..k {
            for b in 0..k {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * k + b] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn first_icosphere_coordinate_has_two_sign_regions() {
        let mesh = shapes::icosphere(1, 1.0);
        let g = build_graph(&mesh);
        let emb = laplacian_embedding(&g, 4).unwrap();
        let sign: Vec<i8> = (0..g.node_count())
            .map(|i| {
                let v = emb.code(i)[0];
                if v > 1e-9 { 1 } else if v < -1e-9 { -1 } else { 0 }
            })
            .collect();
        // flood fill over same-sign neighbours; zero nodes split no region
        let mut seen = vec![false; g.node_count()];
        let mut regions = 0;
        for s in 0..g.node_count() {
            if seen[s] || sign[s] == 0 {
                continue;
            }
            regions += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &v in g.neighbors(u) {
                    if !seen[v] && sign[v] == sign[s] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        assert_eq!(regions, 2);
    }

    #[test]
    fn pose_invariance_is_bitwise() {
        let mesh = shapes::icosphere(2, 1.0);
        let moved: Vec<Vec3> = mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, p)| p * (1.0 + 0.1 * ((i as f64) * 0.7).sin()))
            .collect();
        let moved = mesh.with_nodes(moved).unwrap();
        let a = laplacian_embedding(&build_graph(&mesh), 8).unwrap();
        let b = laplacian_embedding(&build_graph(&moved), 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let mesh = shapes::icosphere(1, 1.0);
        let g = build_graph(&mesh);
        assert!(matches!(laplacian_embedding(&g, 42), Err(SpectralError::DimensionTooLarge { k: 42, n: 42 })));
        assert!(laplacian_embedding(&g, 42).unwrap_err().to_string().contains("k must be < node count"));
        // two disjoint tetrahedra are individually watertight but disconnected
        let t = shapes::tetrahedron();
        let mut nodes = t.nodes().to_vec();
        nodes.extend(t.nodes().iter().map(|p| p + Vec3::new(5.0, 0.0, 0.0)));
        let mut faces = t.faces().to_vec();
        faces.extend(t.faces().iter().map(|f| [f[0] + 4, f[1] + 4, f[2] + 4]));
        let two = TriangleMesh::new(nodes, faces).unwrap();
        assert!(matches!(
            laplacian_embedding(&build_graph(&two), 2),
            Err(SpectralError::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn random_embeddings() {
        let a = random_embedding(10, 4, 7).unwrap();
        assert_eq!(a, random_embedding(10, 4, 7).unwrap());
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a.data(), random_embedding(10, 4, 8).unwrap().data());
        let l = learnable_embedding(10, 4, 7).unwrap();
        assert_eq!(l.data(), a.data());
        assert!(l.is_trainable() && !a.is_trainable());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in EmbeddingKind::ALL {
            assert_eq!(kind.to_string().parse::<EmbeddingKind>().unwrap(), kind);
        }
        assert!("fourier".parse::<EmbeddingKind>().is_err());
    }
}
