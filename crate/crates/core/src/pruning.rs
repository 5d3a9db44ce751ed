//! Vascular entry detection, recursive tree pruning and reconstruction of
//! the retained vessels.
//!
//! Pruning walks the vessel graph from a degree-1 seed. Along a chain the
//! walk simply continues; at a vertex with several unvisited neighbors every
//! child branch is compared with the current trunk branch: a child shorter
//! or thinner than `r_max` times the trunk is noise and is walked at the
//! same bifurcation level, any other child starts a new trunk one level
//! deeper. A walk stops on entering a vertex whose level equals `bif_max`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BranchSet, VesselGraph};
use crate::morphology::{connected_components, dilate_by_radii, erode, Connectivity, DilationMode};
use crate::volume::{BinaryMask, VolumeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PruneError {
    #[error("fewer than two persistent components with distinct origins were found")]
    InsufficientPersistentComponents,
    #[error("no degree-1 vertex is available for a vascular entry")]
    NoDegreeOneVertex,
    #[error("the vessel graph is empty")]
    EmptyGraph,
    #[error("seed vertex {vertex} has degree {degree}, expected 1")]
    RootDegreeNot1 { vertex: u32, degree: usize },
    #[error("invalid pruning parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneParams {
    pub bif_max: u32,
    pub r_max: f64,
}

impl Default for PruneParams {
    fn default() -> Self {
        Self { bif_max: 2, r_max: 0.2 }
    }
}

impl PruneParams {
    pub fn validate(&self) -> Result<(), PruneError> {
        if !(self.r_max >= 0.0 && self.r_max < 1.0) {
            return Err(PruneError::InvalidParams(format!("r_max {} outside [0, 1)", self.r_max)));
        }
        Ok(())
    }
}

/// One component lineage of the successive erosions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lineage {
    /// Id of the iteration-0 component this lineage descends from.
    pub ancestor: u32,
    pub birth: u32,
    /// Last erosion iteration at which the lineage is non-empty.
    pub last: u32,
    /// Centroid (mm) of the lineage's component at `last`.
    pub centroid: [f64; 3],
    pub size: usize,
}

impl Lineage {
    pub fn persistence(&self) -> u32 {
        self.last - self.birth
    }
}

/// Erodes `mask` until empty and tracks 26-connected component lineages.
///
/// A component continues the lineage of the component it was eroded from;
/// when a component splits, its largest child continues the lineage (ties:
/// smallest first voxel) and the other children start new lineages.
pub fn erosion_lineages(mask: &BinaryMask) -> Vec<Lineage> {
    let cc = connected_components(mask, Connectivity::TwentySix);
    let mut lineages: Vec<Lineage> = (0..cc.count)
        .map(|c| Lineage {
            ancestor: c as u32,
            birth: 0,
            last: 0,
            centroid: cc.centroids[c],
            size: cc.sizes[c],
        })
        .collect();
    // lineage index of every component at the previous iteration
    let mut owner: Vec<usize> = (0..cc.count).collect();
    let mut prev_labels = cc.labels;
    let mut current = mask.clone();
    let mut iteration = 0u32;

    loop {
        current = erode(&current);
        if current.is_all_false() {
            break;
        }
        iteration += 1;
        let cc = connected_components(&current, Connectivity::TwentySix);
        // children grouped by parent component, ordered by size desc then first voxel
        let mut children: Vec<(u32, usize, usize)> = (0..cc.count)
            .map(|c| {
                let parent = prev_labels.data()[cc.first_voxel[c]];
                (parent, c, cc.sizes[c])
            })
            .collect();
        children.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(b.2.cmp(&a.2))
                .then(cc.first_voxel[a.1].cmp(&cc.first_voxel[b.1]))
        });
        let mut next_owner = vec![usize::MAX; cc.count];
        let mut last_parent = u32::MAX;
        for &(parent, c, size) in &children {
            let lineage = if parent != last_parent {
                last_parent = parent;
                owner[parent as usize - 1]
            } else {
                let ancestor = lineages[owner[parent as usize - 1]].ancestor;
                lineages.push(Lineage {
                    ancestor,
                    birth: iteration,
                    last: iteration,
                    centroid: cc.centroids[c],
                    size,
                });
                lineages.len() - 1
            };
            let l = &mut lineages[lineage];
            l.last = iteration;
            l.centroid = cc.centroids[c];
            l.size = size;
            next_owner[c] = lineage;
        }
        owner = next_owner;
        prev_labels = cc.labels;
    }
    lineages
}

/// The two most persistent lineages with distinct ancestors, most
/// persistent first. Ties prefer the smaller ancestor, then earlier birth.
pub fn select_entry_lineages(lineages: &[Lineage]) -> Result<[Lineage; 2], PruneError> {
    let mut order: Vec<usize> = (0..lineages.len()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (&lineages[a], &lineages[b]);
        lb.persistence()
            .cmp(&la.persistence())
            .then(la.ancestor.cmp(&lb.ancestor))
            .then(la.birth.cmp(&lb.birth))
            .then(a.cmp(&b))
    });
    let first = *order.first().ok_or(PruneError::InsufficientPersistentComponents)?;
    let second = order
        .iter()
        .copied()
        .find(|&i| lineages[i].ancestor != lineages[first].ancestor)
        .ok_or(PruneError::InsufficientPersistentComponents)?;
    Ok([lineages[first].clone(), lineages[second].clone()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryPoints {
    /// Entry of the more persistent lineage.
    pub v_p: u32,
    pub v_h: u32,
    pub persistence: [u32; 2],
}

fn squared_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Vertex minimizing the distance to `point` among those accepted by
/// `filter`; ties go to the smallest id.
fn nearest_vertex(graph: &VesselGraph, point: [f64; 3], filter: impl Fn(u32) -> bool) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for v in 0..graph.vertex_count() as u32 {
        if !filter(v) {
            continue;
        }
        let d = squared_distance(graph.vertex(v).position, point);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Locates the two vascular entries: centroids of the two most persistent
/// erosion lineages, projected onto the nearest skeleton vertex, then moved
/// to the nearest degree-1 vertex of the same graph component.
pub fn find_entries(vessel_mask: &BinaryMask, graph: &VesselGraph) -> Result<EntryPoints, PruneError> {
    if graph.vertex_count() == 0 {
        return Err(PruneError::EmptyGraph);
    }
    let lineages = erosion_lineages(vessel_mask);
    let selected = select_entry_lineages(&lineages)?;
    let components = graph.components();
    let mut entries = [0u32; 2];
    for (k, lineage) in selected.iter().enumerate() {
        let projected = nearest_vertex(graph, lineage.centroid, |_| true).ok_or(PruneError::EmptyGraph)?;
        let comp = components[projected as usize];
        let taken = if k == 1 { Some(entries[0]) } else { None };
        let anchor = graph.vertex(projected).position;
        entries[k] = nearest_vertex(graph, anchor, |v| {
            graph.degree(v) == 1 && components[v as usize] == comp && Some(v) != taken
        })
        .ok_or(PruneError::NoDegreeOneVertex)?;
    }
    Ok(EntryPoints {
        v_p: entries[0],
        v_h: entries[1],
        persistence: [selected[0].persistence(), selected[1].persistence()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagKind {
    Trunk,
    Noise,
}

/// Classification of a branch reached by the traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchTag {
    pub kind: TagKind,
    /// Bifurcation level at which the branch was entered.
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedBranch {
    pub branch: usize,
    pub tag: BranchTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedTree {
    pub seed: u32,
    /// Visited vertices in visiting order.
    pub visited: Vec<u32>,
    /// Parallel to `visited`: whether the vertex was reached inside a noise subtree.
    pub via_noise: Vec<bool>,
    /// Branches reached by the traversal, in the order they were tagged.
    pub branches: Vec<RetainedBranch>,
}

impl PrunedTree {
    pub fn tag_of(&self, branch: usize) -> Option<BranchTag> {
        self.branches.iter().find(|b| b.branch == branch).map(|b| b.tag)
    }

    /// Visited vertices, optionally without those reached through noise.
    pub fn vertices(&self, drop_noise: bool) -> impl Iterator<Item = u32> + '_ {
        self.visited
            .iter()
            .zip(&self.via_noise)
            .filter(move |(_, &noise)| !(drop_noise && noise))
            .map(|(&v, _)| v)
    }
}

struct Frame {
    vertex: u32,
    bif: u32,
    len: f64,
    rad: f64,
    tag: BranchTag,
    started: bool,
    next: usize,
}

/// Runs the recursive pruning traversal from `root` with an explicit stack.
pub fn prune(graph: &VesselGraph, branches: &BranchSet, root: u32, params: &PruneParams) -> Result<PrunedTree, PruneError> {
    params.validate()?;
    let degree = graph.degree(root);
    if degree != 1 {
        return Err(PruneError::RootDegreeNot1 { vertex: root, degree });
    }
    let first = graph.neighbors(root)[0];
    let root_branch = branches.branch_of(root, first).expect("every edge has a branch");

    let mut visited = vec![false; graph.vertex_count()];
    let mut order = vec![root];
    let mut via_noise = vec![false];
    let mut tags: Vec<Option<BranchTag>> = vec![None; branches.len()];
    let mut retained = Vec::new();
    let mut tag_branch = |id: usize, tag: BranchTag, retained: &mut Vec<RetainedBranch>| {
        if tags[id].is_none() {
            tags[id] = Some(tag);
            retained.push(RetainedBranch { branch: id, tag });
        }
    };

    let root_tag = BranchTag { kind: TagKind::Trunk, level: 0 };
    tag_branch(root_branch.id, root_tag, &mut retained);
    visited[root as usize] = true;
    let mut stack = vec![Frame {
        vertex: root,
        bif: 0,
        len: root_branch.len,
        rad: root_branch.rad,
        tag: root_tag,
        started: false,
        next: 0,
    }];

    while let Some(top) = stack.last_mut() {
        let v = top.vertex;
        let neighbors = graph.neighbors(v);
        if !top.started {
            top.started = true;
            let unvisited = neighbors.iter().filter(|&&w| !visited[w as usize]).count();
            if top.bif == params.bif_max || unvisited == 0 {
                stack.pop();
                continue;
            }
            if unvisited == 1 {
                let w = *neighbors.iter().find(|&&w| !visited[w as usize]).expect("one unvisited");
                let b = branches.branch_of(v, w).expect("every edge has a branch");
                tag_branch(b.id, top.tag, &mut retained);
                visited[w as usize] = true;
                order.push(w);
                via_noise.push(top.tag.kind == TagKind::Noise);
                // pass-through: same level, same trunk
                top.vertex = w;
                top.started = false;
                top.next = 0;
                continue;
            }
        }
        // junction: visit the remaining unvisited neighbors in ascending order
        let Some(offset) = neighbors[top.next..].iter().position(|&w| !visited[w as usize]) else {
            stack.pop();
            continue;
        };
        let idx = top.next + offset;
        top.next = idx + 1;
        let w = neighbors[idx];
        let b = branches.branch_of(v, w).expect("every edge has a branch");
        let noise = b.len < params.r_max * top.len || b.rad < params.r_max * top.rad;
        let child = if noise {
            let tag = BranchTag { kind: TagKind::Noise, level: top.bif };
            Frame { vertex: w, bif: top.bif, len: top.len, rad: top.rad, tag, started: false, next: 0 }
        } else {
            let tag = BranchTag { kind: TagKind::Trunk, level: top.bif + 1 };
            Frame { vertex: w, bif: top.bif + 1, len: b.len, rad: b.rad, tag, started: false, next: 0 }
        };
        tag_branch(b.id, child.tag, &mut retained);
        visited[w as usize] = true;
        order.push(w);
        via_noise.push(child.tag.kind == TagKind::Noise);
        stack.push(child);
    }

    Ok(PrunedTree {
        seed: root,
        visited: order,
        via_noise,
        branches: retained,
    })
}

/// Pruned trees from both entries and the union of their vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedPair {
    pub trees: [PrunedTree; 2],
    /// Union of visited vertices, ascending.
    pub retained: Vec<u32>,
}

/// Prunes from both entries with independent visited sets.
pub fn prune_both(
    graph: &VesselGraph,
    branches: &BranchSet,
    entries: &EntryPoints,
    params: &PruneParams,
    drop_noise: bool,
) -> Result<PrunedPair, PruneError> {
    let (a, b) = rayon::join(
        || prune(graph, branches, entries.v_p, params),
        || prune(graph, branches, entries.v_h, params),
    );
    let (a, b) = (a?, b?);
    let mut retained: Vec<u32> = a.vertices(drop_noise).chain(b.vertices(drop_noise)).collect();
    retained.sort_unstable();
    retained.dedup();
    Ok(PrunedPair { trees: [a, b], retained })
}

/// Inflates retained skeleton voxels by their (rounded-up) radii and clips
/// the result to the original vessel mask.
pub fn reconstruct(retained: &[(usize, f64)], original: &BinaryMask, mode: DilationMode) -> Result<BinaryMask, PruneError> {
    let scaled: Vec<(usize, f64)> = retained.iter().map(|&(v, r)| (v, mode.scale(r))).collect();
    let inflated = dilate_by_radii(&scaled, original.grid())?;
    Ok(inflated.and(original)?)
}

/// `(voxel, radius)` pairs for a set of graph vertices.
pub fn retained_voxels(graph: &VesselGraph, vertices: &[u32]) -> Vec<(usize, f64)> {
    vertices
        .iter()
        .map(|&v| {
            let vx = graph.vertex(v);
            (vx.voxel, vx.radius)
        })
        .collect()
}
