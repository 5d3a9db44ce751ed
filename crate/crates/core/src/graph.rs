//! Skeleton graphs and their decomposition into branches.

use std::collections::HashMap;

use thiserror::Error;

use crate::morphology::NEIGHBOR_OFFSETS_26;
use crate::numeric::exact_sum;
use crate::skeleton::Skeleton;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(u32),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("edge ({0}, {1}) references a missing vertex")]
    MissingVertex(u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    /// Linear voxel index in the source grid.
    pub voxel: usize,
    /// Physical position of the voxel center (mm).
    pub position: [f64; 3],
    pub radius: f64,
}

/// Undirected graph over skeleton voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselGraph {
    vertices: Vec<Vertex>,
    /// Neighbors per vertex in ascending id order.
    adjacency: Vec<Vec<u32>>,
    /// Edges as `(a, b)` with `a < b`, sorted.
    edges: Vec<(u32, u32)>,
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl VesselGraph {
    /// Builds a graph from explicit vertices and undirected edges.
    pub fn from_edges(vertices: Vec<Vertex>, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let n = vertices.len() as u32;
        let mut adjacency = vec![Vec::new(); vertices.len()];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if a >= n || b >= n {
                return Err(GraphError::MissingVertex(a, b));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }
        for &(a, b) in &normalized {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            vertices,
            adjacency,
            edges: normalized,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: u32) -> &Vertex {
        &self.vertices[v as usize]
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adjacency[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adjacency[v as usize].len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_length(&self, a: u32, b: u32) -> f64 {
        distance(self.vertex(a).position, self.vertex(b).position)
    }

    /// Component id per vertex (ids in order of smallest member).
    pub fn components(&self) -> Vec<u32> {
        let mut comp = vec![u32::MAX; self.vertices.len()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.vertices.len() {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start as u32);
            while let Some(v) = stack.pop() {
                for &w in self.neighbors(v) {
                    if comp[w as usize] == u32::MAX {
                        comp[w as usize] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// One vertex per skeleton voxel, edges between 26-neighbors.
pub fn build_graph(skeleton: &Skeleton) -> VesselGraph {
    let dims = skeleton.dims;
    let spacing = skeleton.spacing;
    let mut id_of: HashMap<usize, u32> = HashMap::with_capacity(skeleton.len());
    let mut vertices = Vec::with_capacity(skeleton.len());
    for (k, (&voxel, &radius)) in skeleton.voxels.iter().zip(&skeleton.radius).enumerate() {
        let x = voxel % dims[0];
        let y = (voxel / dims[0]) % dims[1];
        let z = voxel / (dims[0] * dims[1]);
        id_of.insert(voxel, k as u32);
        vertices.push(Vertex {
            voxel,
            position: [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]],
            radius,
        });
    }
    let mut edges = Vec::new();
    for (k, &voxel) in skeleton.voxels.iter().enumerate() {
        let c = [
            (voxel % dims[0]) as i64,
            ((voxel / dims[0]) % dims[1]) as i64,
            (voxel / (dims[0] * dims[1])) as i64,
        ];
        for o in NEIGHBOR_OFFSETS_26 {
            let p = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if (0..3).any(|a| p[a] < 0 || p[a] >= dims[a] as i64) {
                continue;
            }
            let nvox = p[0] as usize + dims[0] * (p[1] as usize + dims[1] * p[2] as usize);
            if let Some(&j) = id_of.get(&nvox) {
                if j > k as u32 {
                    edges.push((k as u32, j));
                }
            }
        }
    }
    VesselGraph::from_edges(vertices, &edges).expect("26-neighbor edges are simple")
}

/// Maximal path whose interior vertices have degree 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    /// Vertex path; consecutive pairs are the branch edges. For a closed
    /// cycle the first and last vertex coincide.
    pub path: Vec<u32>,
    /// Physical length in mm.
    pub len: f64,
    /// Mean over edges of the mean endpoint radius, in mm.
    pub rad: f64,
}

impl Branch {
    pub fn endpoints(&self) -> (u32, u32) {
        (self.path[0], *self.path.last().expect("branches have edges"))
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.path.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn edge_count(&self) -> usize {
        self.path.len() - 1
    }
}

/// Edge-disjoint branches covering every edge of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSet {
    pub branches: Vec<Branch>,
    edge_branch: HashMap<(u32, u32), usize>,
}

impl BranchSet {
    /// Branch containing the undirected edge `(a, b)`.
    pub fn branch_of(&self, a: u32, b: u32) -> Option<&Branch> {
        self.edge_branch
            .get(&(a.min(b), a.max(b)))
            .map(|&i| &self.branches[i])
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }
}

fn make_branch(graph: &VesselGraph, id: usize, path: Vec<u32>) -> Branch {
    let lengths: Vec<f64> = path.windows(2).map(|w| graph.edge_length(w[0], w[1])).collect();
    let radii: Vec<f64> = path
        .windows(2)
        .map(|w| 0.5 * (graph.vertex(w[0]).radius + graph.vertex(w[1]).radius))
        .collect();
    Branch {
        id,
        len: exact_sum(&lengths),
        rad: exact_sum(&radii) / radii.len() as f64,
        path,
    }
}

/// Splits the graph into branches: chains walked from every vertex of
/// degree other than 2 (ascending id, neighbors ascending), then isolated
/// cycles from their smallest vertex.
pub fn decompose_branches(graph: &VesselGraph) -> BranchSet {
    let mut used: HashMap<(u32, u32), usize> = HashMap::with_capacity(graph.edges().len());
    let mut branches = Vec::new();
    let n = graph.vertex_count() as u32;

    // chains between non-degree-2 vertices first, then pure cycles
    let starts = (0..n).filter(|&v| graph.degree(v) != 2).chain(0..n);
    for v in starts {
        for &w in graph.neighbors(v) {
            if used.contains_key(&edge_key(v, w)) {
                continue;
            }
            let path = walk_chain(graph, v, w, &used);
            let id = branches.len();
            for e in path.windows(2) {
                used.insert(edge_key(e[0], e[1]), id);
            }
            branches.push(make_branch(graph, id, path));
        }
    }
    BranchSet {
        branches,
        edge_branch: used,
    }
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Follows degree-2 vertices from `start` through `first` until reaching a
/// vertex of another degree or returning to `start`.
fn walk_chain(graph: &VesselGraph, start: u32, first: u32, used: &HashMap<(u32, u32), usize>) -> Vec<u32> {
    let mut path = vec![start, first];
    let (mut prev, mut cur) = (start, first);
    while cur != start && graph.degree(cur) == 2 {
        let nb = graph.neighbors(cur);
        let next = if nb[0] == prev { nb[1] } else { nb[0] };
        if used.contains_key(&edge_key(cur, next)) {
            break;
        }
        path.push(next);
        prev = cur;
        cur = next;
    }
    path
}
