//! Convex hull of the retained vessels (the hepatic central zone), its
//! voxelization, diameter and lesion distance.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::volume::{voxel_volume, BinaryMask, VolumeError, VoxelGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HczError {
    #[error("degenerate hull: {0}")]
    DegenerateHull(String),
    #[error("lesion mask is empty")]
    EmptyLesion,
    #[error("central zone mask is empty")]
    EmptyHcz,
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P3, b: P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: P3, b: P3) -> f64 {
    norm(sub(a, b))
}

/// Plane `normal · x <= offset` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: P3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn signed_distance(&self, p: P3) -> f64 {
        dot(self.normal, p) - self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    pub vertices: Vec<P3>,
    /// Triangles indexing `vertices`, counterclockwise seen from outside.
    pub faces: Vec<[usize; 3]>,
    pub half_spaces: Vec<HalfSpace>,
    /// Diagonal of the input bounding box.
    pub bbox_diagonal: f64,
}

impl ConvexHull {
    /// Containment tolerance for input points.
    pub fn epsilon(&self) -> f64 {
        1e-6 * self.bbox_diagonal
    }

    /// Tolerance absorbing rounding in point-in-hull tests.
    pub fn rounding_tolerance(&self) -> f64 {
        1e-9 * self.bbox_diagonal
    }

    pub fn contains(&self, p: P3, tolerance: f64) -> bool {
        self.half_spaces.iter().all(|h| h.signed_distance(p) <= tolerance)
    }

    /// Enclosed volume from signed tetrahedra about the first vertex.
    pub fn volume(&self) -> f64 {
        let o = self.vertices[0];
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
                dot(sub(a, o), cross(sub(b, o), sub(c, o))) / 6.0
            })
            .sum()
    }

    pub fn edge_count(&self) -> usize {
        self.faces.len() * 3 / 2
    }

    /// Applies a per-axis positive scale, keeping the face structure.
    pub fn scaled(&self, scale: P3) -> ConvexHull {
        let vertices: Vec<P3> = self
            .vertices
            .iter()
            .map(|v| [v[0] * scale[0], v[1] * scale[1], v[2] * scale[2]])
            .collect();
        let half_spaces = self.faces.iter().map(|f| plane_of(&vertices, *f)).collect();
        let diagonal = self.bbox_diagonal_scaled(scale);
        ConvexHull { vertices, faces: self.faces.clone(), half_spaces, bbox_diagonal: diagonal }
    }

    fn bbox_diagonal_scaled(&self, scale: P3) -> f64 {
        // the hull vertices span the same box as the input points
        let (lo, hi) = bbox(&self.vertices);
        norm([0, 1, 2].map(|a| (hi[a] - lo[a]) * scale[a]))
    }

    /// Wavefront OBJ with 1-based indices.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }
}

fn plane_of(vertices: &[P3], f: [usize; 3]) -> HalfSpace {
    let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
    let n = cross(sub(b, a), sub(c, a));
    let len = norm(n);
    let normal = n.map(|x| x / len);
    HalfSpace { normal, offset: dot(normal, a) }
}

fn bbox(points: &[P3]) -> (P3, P3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

struct Face {
    v: [usize; 3],
    /// Unnormalized outward normal.
    n: P3,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[P3], v: [usize; 3]) -> Face {
        let n = cross(sub(points[v[1]], points[v[0]]), sub(points[v[2]], points[v[0]]));
        Face { v, n, outside: Vec::new(), alive: true }
    }

    /// Positive iff `p` is strictly on the outer side. Exact for integer
    /// coordinates of moderate size.
    fn orient(&self, points: &[P3], p: usize) -> f64 {
        dot(self.n, sub(points[p], points[self.v[0]]))
    }

    fn edges(&self) -> [(usize, usize); 3] {
        [(self.v[0], self.v[1]), (self.v[1], self.v[2]), (self.v[2], self.v[0])]
    }
}

/// Quickhull over the lexicographically sorted, deduplicated input.
pub fn convex_hull(input: &[P3]) -> Result<ConvexHull, HczError> {
    let mut points: Vec<P3> = input.to_vec();
    if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(HczError::DegenerateHull("non-finite coordinate".into()));
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    points.dedup();
    if points.len() < 4 {
        return Err(HczError::DegenerateHull(format!("{} distinct points", points.len())));
    }
    let (lo, hi) = bbox(&points);
    let diagonal = dist(lo, hi);
    let flat = 1e-9 * diagonal;

    // initial simplex
    let mut extremes = Vec::new();
    for a in 0..3 {
        let min = (0..points.len()).min_by(|&i, &j| points[i][a].total_cmp(&points[j][a])).unwrap();
        let max = (0..points.len()).max_by(|&i, &j| points[i][a].total_cmp(&points[j][a]).then(j.cmp(&i))).unwrap();
        extremes.push(min);
        extremes.push(max);
    }
    let mut best = (0.0, 0, 0);
    for &i in &extremes {
        for &j in &extremes {
            let d = dist(points[i], points[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let (i0, i1) = (best.1, best.2);
    let axis = sub(points[i1], points[i0]);
    let i2 = argmax(points.len(), |k| norm(cross(axis, sub(points[k], points[i0]))) / norm(axis));
    let normal = cross(axis, sub(points[i2], points[i0]));
    if norm(normal) / norm(axis) <= flat {
        return Err(HczError::DegenerateHull("collinear input".into()));
    }
    let i3 = argmax(points.len(), |k| dot(normal, sub(points[k], points[i0])).abs());
    if dot(normal, sub(points[i3], points[i0])).abs() / norm(normal) <= flat {
        return Err(HczError::DegenerateHull("coplanar input".into()));
    }
    let (i1, i2) = if dot(normal, sub(points[i3], points[i0])) > 0.0 { (i2, i1) } else { (i1, i2) };
    let mut faces = vec![
        Face::new(&points, [i0, i1, i2]),
        Face::new(&points, [i0, i3, i1]),
        Face::new(&points, [i1, i3, i2]),
        Face::new(&points, [i2, i3, i0]),
    ];
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for e in face.edges() {
            edge_face.insert(e, f);
        }
    }
    let simplex = [i0, i1, i2, i3];
    for p in 0..points.len() {
        if simplex.contains(&p) {
            continue;
        }
        if let Some(f) = (0..4).find(|&f| faces[f].orient(&points, p) > 0.0) {
            faces[f].outside.push(p);
        }
    }

    let mut cursor = 0;
    while cursor < faces.len() {
        if !faces[cursor].alive || faces[cursor].outside.is_empty() {
            cursor += 1;
            continue;
        }
        let start = cursor;
        let apex = {
            let f = &faces[start];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| f.orient(&points, a).total_cmp(&f.orient(&points, b)).then(b.cmp(&a)))
                .expect("non-empty")
        };
        // visible region by flood fill over face adjacency
        let mut visible = vec![start];
        faces[start].alive = false;
        let mut horizon = Vec::new();
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for (a, b) in faces[f].edges() {
                let g = edge_face[&(b, a)];
                if !faces[g].alive {
                    continue;
                }
                if faces[g].orient(&points, apex) > 0.0 {
                    faces[g].alive = false;
                    visible.push(g);
                } else {
                    horizon.push((a, b));
                }
            }
        }
        let mut orphans = Vec::new();
        for &f in &visible {
            for e in faces[f].edges() {
                edge_face.remove(&e);
            }
            orphans.append(&mut faces[f].outside);
        }
        let first_new = faces.len();
        for &(a, b) in &horizon {
            let face = Face::new(&points, [a, b, apex]);
            for e in face.edges() {
                edge_face.insert(e, faces.len());
            }
            faces.push(face);
        }
        for p in orphans {
            if p == apex {
                continue;
            }
            if let Some(f) = (first_new..faces.len()).find(|&f| faces[f].orient(&points, p) > 0.0) {
                faces[f].outside.push(p);
            }
        }
    }

    let live: Vec<&Face> = faces.iter().filter(|f| f.alive).collect();
    let mut used: Vec<usize> = live.iter().flat_map(|f| f.v).collect();
    used.sort_unstable();
    used.dedup();
    let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let vertices: Vec<P3> = used.iter().map(|&i| points[i]).collect();
    let faces: Vec<[usize; 3]> = live.iter().map(|f| f.v.map(|i| remap[&i])).collect();
    let half_spaces = faces.iter().map(|f| plane_of(&vertices, *f)).collect();
    Ok(ConvexHull { vertices, faces, half_spaces, bbox_diagonal: diagonal })
}

fn argmax(n: usize, key: impl Fn(usize) -> f64) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..n {
        let v = key(k);
        if v > best.0 {
            best = (v, k);
        }
    }
    best.1
}

/// Hull of the voxel centers of a mask. Built in index space, where the
/// orientation tests are exact, then scaled to millimetres.
pub fn hull_of_mask(mask: &BinaryMask) -> Result<ConvexHull, HczError> {
    let [nx, ny, nz] = mask.dims();
    let mut candidates = Vec::new();
    // every voxel lies between the extremes of its x row
    for z in 0..nz {
        for y in 0..ny {
            let row = mask.grid().index(0, y, z);
            let first = (0..nx).find(|&x| mask.get(row + x));
            let last = (0..nx).rev().find(|&x| mask.get(row + x));
            if let (Some(a), Some(b)) = (first, last) {
                candidates.push([a as f64, y as f64, z as f64]);
                if b != a {
                    candidates.push([b as f64, y as f64, z as f64]);
                }
            }
        }
    }
    Ok(convex_hull(&candidates)?.scaled(mask.spacing()))
}

/// Voxels whose centers satisfy every half-space (inclusive).
pub fn voxelize_hull<T: Sync>(hull: &ConvexHull, template: &VoxelGrid<T>) -> BinaryMask {
    let tolerance = hull.rounding_tolerance();
    let data: Vec<bool> = (0..template.len())
        .into_par_iter()
        .map(|i| hull.contains(template.position(i), tolerance))
        .collect();
    BinaryMask::new(template.with_data(data).expect("same length"))
}

/// Largest pairwise distance between hull vertices.
pub fn hull_diameter(hull: &ConvexHull) -> f64 {
    let v = &hull.vertices;
    (0..v.len())
        .into_par_iter()
        .map(|i| v[i + 1..].iter().map(|&w| dist(v[i], w)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: P3, a: P3, b: P3, c: P3) -> P3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return [a[0] + t * ac[0], a[1] + t * ac[1], a[2] + t * ac[2]];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let bc = sub(c, b);
        return [b[0] + t * bc[0], b[1] + t * bc[1], b[2] + t * bc[2]];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [0, 1, 2].map(|k| a[k] + ab[k] * v + ac[k] * w)
}

/// Distance from `p` to the solid hull, 0 inside.
pub fn point_hull_distance(hull: &ConvexHull, p: P3) -> f64 {
    if hull.contains(p, hull.rounding_tolerance()) {
        return 0.0;
    }
    hull.faces
        .iter()
        .map(|f| {
            let q = closest_point_on_triangle(p, hull.vertices[f[0]], hull.vertices[f[1]], hull.vertices[f[2]]);
            dist(p, q)
        })
        .fold(f64::INFINITY, f64::min)
}

/// The hepatic central zone of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct Hcz {
    pub hull: ConvexHull,
    pub mask: BinaryMask,
    /// mm³, true-voxel count times voxel volume.
    pub volume: f64,
    pub diameter: f64,
}

/// Builds the central zone from the reconstructed retained vessels,
/// optionally clipped to a liver mask.
pub fn build_hcz(retained_vessels: &BinaryMask, clip_to: Option<&BinaryMask>) -> Result<Hcz, HczError> {
    let hull = hull_of_mask(retained_vessels)?;
    let mut mask = voxelize_hull(&hull, retained_vessels.grid());
    if let Some(liver) = clip_to {
        mask = mask.and(liver)?;
    }
    let volume = mask.count() as f64 * voxel_volume(mask.grid());
    let diameter = hull_diameter(&hull);
    Ok(Hcz { hull, mask, volume, diameter })
}

/// Minimum over lesion voxel centers of the distance to the hull.
pub fn distance_to_hcz(lesion: &BinaryMask, hcz: &Hcz) -> Result<f64, HczError> {
    if lesion.is_all_false() {
        return Err(HczError::EmptyLesion);
    }
    if hcz.mask.is_all_false() {
        return Err(HczError::EmptyHcz);
    }
    let grid = lesion.grid();
    Ok(lesion
        .true_indices()
        .par_iter()
        .map(|&i| point_hull_distance(&hcz.hull, grid.position(i)))
        .reduce(|| f64::INFINITY, f64::min))
}
