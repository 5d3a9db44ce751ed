//! Synthetic liver phantoms: two tapered binary vessel trees entering an
//! ellipsoidal liver from opposite sides, plus spherical lesions placed
//! relative to the analytic hull of the first two tree generations.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)` and the
//! case index as stream id, so every case is reproducible on its own and on
//! any platform. Uniform reals are `(next_u64 >> 11) * 2^-53`.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Vertex, VesselGraph};
use crate::hcz::{convex_hull, point_hull_distance, ConvexHull};
use crate::volume::{LabelVolume, VoxelGrid, BACKGROUND, LESION, LIVER, VESSEL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("phantom specification out of bounds: {0}")]
    SpecOutOfBounds(String),
    #[error("invalid phantom specification: {0}")]
    InvalidSpec(String),
}

type P3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub center: P3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    /// Stream id of the generator; datasets use the case index.
    pub stream: u64,
    pub dims: [usize; 3],
    pub spacing: P3,
    /// 1 or 2 trees; the second enters from the opposite side.
    pub trees: usize,
    /// Number of branching generations below the root segment.
    pub depth: u32,
    /// Root segment length range in mm.
    pub root_length: [f64; 2],
    /// Length factor applied per generation.
    pub length_decay: f64,
    /// Root radius per tree in mm.
    pub root_radius: [f64; 2],
    /// Radius factor per generation, in (0, 1).
    pub taper: f64,
    /// Range of the angle between parent and child directions, in degrees.
    pub branch_angle: [f64; 2],
    pub spur_probability: f64,
    pub spur_length_factor: f64,
    pub lesions: Vec<LesionSpec>,
    pub liver_semi_axes: P3,
    /// Minimum gap in mm between non-adjacent tube surfaces.
    pub clearance: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            stream: 0,
            dims: [88, 72, 72],
            spacing: [1.0; 3],
            trees: 2,
            depth: 3,
            root_length: [10.0, 13.0],
            length_decay: 0.8,
            root_radius: [4.0, 3.0],
            taper: 0.75,
            branch_angle: [30.0, 45.0],
            spur_probability: 0.0,
            spur_length_factor: 0.08,
            lesions: Vec::new(),
            liver_semi_axes: [38.0, 31.0, 29.0],
            clearance: 2.0,
        }
    }
}

impl PhantomSpec {
    pub fn center(&self) -> P3 {
        [0, 1, 2].map(|a| (self.dims[a] - 1) as f64 * self.spacing[a] / 2.0)
    }

    fn extent(&self) -> P3 {
        [0, 1, 2].map(|a| (self.dims[a] - 1) as f64 * self.spacing[a])
    }

    fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: &str| Err(PhantomError::InvalidSpec(m.into()));
        if self.dims.contains(&0) || self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("grid dims and spacing must be positive");
        }
        if !(self.taper > 0.0 && self.taper < 1.0) {
            return bad("taper must lie in (0, 1)");
        }
        if !(1..=2).contains(&self.trees) {
            return bad("trees must be 1 or 2");
        }
        if self.depth > 6 {
            return bad("depth above 6");
        }
        if !(self.root_length[0] > 0.0 && self.root_length[0] <= self.root_length[1]) {
            return bad("root length range");
        }
        if self.root_radius.iter().any(|&r| !(r > 0.0)) || self.liver_semi_axes.iter().any(|&r| !(r > 0.0)) {
            return bad("radii and semi-axes must be positive");
        }
        if !(0.0..=1.0).contains(&self.spur_probability) {
            return bad("spur probability outside [0, 1]");
        }
        let (c, e) = (self.center(), self.extent());
        for a in 0..3 {
            if c[a] - self.liver_semi_axes[a] < 0.0 || c[a] + self.liver_semi_axes[a] > e[a] {
                return Err(PhantomError::SpecOutOfBounds("liver ellipsoid leaves the grid".into()));
            }
        }
        for l in &self.lesions {
            if (0..3).any(|a| l.center[a] - l.radius < 0.0 || l.center[a] + l.radius > e[a]) {
                return Err(PhantomError::SpecOutOfBounds("lesion leaves the grid".into()));
            }
        }
        Ok(())
    }
}

/// One analytic tube segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBranch {
    pub id: usize,
    pub tree: usize,
    /// 0 for the root segment.
    pub generation: u32,
    pub parent: Option<usize>,
    pub spur: bool,
    pub start: P3,
    pub end: P3,
    pub radius_start: f64,
    pub radius_end: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLesion {
    pub center: P3,
    pub radius: f64,
    pub volume_mm3: f64,
    /// Distance from the center to the core hull, 0 inside.
    pub center_hull_distance: f64,
    pub overlaps_core_hull: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub seed: u64,
    pub stream: u64,
    pub branches: Vec<TruthBranch>,
    /// Start point of every root segment.
    pub entries: Vec<P3>,
    pub lesions: Vec<TruthLesion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_score: Option<u8>,
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Sampler(rng)
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn below(&mut self, n: u64) -> u64 {
        (self.unit() * n as f64) as u64
    }
}

fn add(a: P3, b: P3) -> P3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: P3, s: f64) -> P3 {
    a.map(|v| v * s)
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: P3) -> P3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

/// Unit vector perpendicular to the unit vector `d`, at angle `phi`.
fn perpendicular(d: P3, phi: f64) -> P3 {
    let helper = if d[0].abs() <= d[1].abs() && d[0].abs() <= d[2].abs() {
        [1.0, 0.0, 0.0]
    } else if d[1].abs() <= d[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let u1 = normalize(cross(d, helper));
    let u2 = cross(d, u1);
    add(scale(u1, phi.cos()), scale(u2, phi.sin()))
}

/// Closest distance between segments `p1q1` and `p2q2`.
pub fn segment_distance(p1: P3, q1: P3, p2: P3, q2: P3) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return norm(r);
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let s0 = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    norm(sub(add(p1, scale(d1, s)), add(p2, scale(d2, t))))
}

impl TruthBranch {
    fn max_radius(&self) -> f64 {
        self.radius_start.max(self.radius_end)
    }

    /// Radius-interpolated inclusion test around the clamped projection.
    pub fn contains(&self, p: P3) -> bool {
        let d = sub(self.end, self.start);
        let len2 = dot(d, d);
        let t = if len2 > 0.0 { (dot(sub(p, self.start), d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let r = self.radius_start + (self.radius_end - self.radius_start) * t;
        let q = add(self.start, scale(d, t));
        dot(sub(p, q), sub(p, q)) <= r * r
    }

    pub fn point_at(&self, t: f64) -> P3 {
        add(self.start, scale(sub(self.end, self.start), t))
    }

    pub fn radius_at(&self, t: f64) -> f64 {
        self.radius_start + (self.radius_end - self.radius_start) * t
    }
}

fn adjacent(a: &TruthBranch, b: &TruthBranch) -> bool {
    a.parent == Some(b.id) || b.parent == Some(a.id) || (a.parent.is_some() && a.parent == b.parent)
}

fn inside_ellipsoid(p: P3, center: P3, axes: P3, shrink: f64) -> bool {
    (0..3)
        .map(|k| {
            let s = axes[k] - shrink;
            if s <= 0.0 {
                f64::INFINITY
            } else {
                ((p[k] - center[k]) / s).powi(2)
            }
        })
        .sum::<f64>()
        <= 1.0
}

fn fits(spec: &PhantomSpec, branch: &TruthBranch, existing: &[TruthBranch]) -> bool {
    let steps = (branch.length / 0.5).ceil().max(1.0) as usize;
    let (c, e) = (spec.center(), spec.extent());
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let p = branch.point_at(t);
        let r = branch.radius_at(t);
        if branch.parent.is_none() {
            if (0..3).any(|a| p[a] - r < 0.0 || p[a] + r > e[a]) {
                return false;
            }
        } else if !inside_ellipsoid(p, c, spec.liver_semi_axes, r + 1.0) {
            return false;
        }
    }
    existing.iter().all(|o| {
        adjacent(branch, o)
            || segment_distance(branch.start, branch.end, o.start, o.end)
                >= branch.max_radius() + o.max_radius() + spec.clearance
    })
}

const ATTEMPTS_PER_BRANCH: usize = 64;
const ATTEMPTS_PER_TREE: usize = 32;

fn grow_tree(spec: &PhantomSpec, tree: usize, rng: &mut Sampler, existing: &[TruthBranch]) -> Option<Vec<TruthBranch>> {
    let c = spec.center();
    let sign = if tree == 0 { 1.0 } else { -1.0 };
    let start = [c[0] - sign * spec.liver_semi_axes[0], c[1], c[2]];
    let dir = [sign, 0.0, 0.0];
    let r0 = spec.root_radius[tree];
    let root_len = rng.range(spec.root_length[0], spec.root_length[1]);
    let mean_len = 0.5 * (spec.root_length[0] + spec.root_length[1]);
    let first = existing.len();
    let mut all: Vec<TruthBranch> = existing.to_vec();
    let root = TruthBranch {
        id: first,
        tree,
        generation: 0,
        parent: None,
        spur: false,
        start,
        end: add(start, scale(dir, root_len)),
        radius_start: r0,
        radius_end: r0 * spec.taper.sqrt(),
        length: root_len,
    };
    if !fits(spec, &root, &all) {
        return None;
    }
    all.push(root);
    let mut cursor = first;
    while cursor < all.len() {
        let parent = all[cursor].clone();
        cursor += 1;
        if parent.spur || parent.generation >= spec.depth {
            continue;
        }
        let pdir = normalize(sub(parent.end, parent.start));
        let g = parent.generation + 1;
        let r_child = spec.root_radius[tree] * spec.taper.powi(g as i32);
        let plane = rng.range(0.0, std::f64::consts::TAU);
        for side in [1.0, -1.0] {
            let mut placed = false;
            for _ in 0..ATTEMPTS_PER_BRANCH {
                let theta = rng.range(spec.branch_angle[0], spec.branch_angle[1]).to_radians();
                let phi = plane + rng.range(-0.3, 0.3);
                let u = perpendicular(pdir, phi);
                let d = add(scale(pdir, theta.cos()), scale(u, side * theta.sin()));
                let len = mean_len * spec.length_decay.powi(g as i32) * rng.range(0.85, 1.15);
                let child = TruthBranch {
                    id: all.len(),
                    tree,
                    generation: g,
                    parent: Some(parent.id),
                    spur: false,
                    start: parent.end,
                    end: add(parent.end, scale(d, len)),
                    radius_start: r_child,
                    radius_end: r_child * spec.taper.sqrt(),
                    length: len,
                };
                if fits(spec, &child, &all) {
                    all.push(child);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return None;
            }
        }
        if spec.spur_probability > 0.0 && rng.unit() < spec.spur_probability {
            for _ in 0..ATTEMPTS_PER_BRANCH {
                let phi = plane + std::f64::consts::FRAC_PI_2 + rng.range(-0.4, 0.4);
                let tilt = rng.range(-0.35, 0.35);
                let d = normalize(add(perpendicular(pdir, phi), scale(pdir, tilt)));
                let len = spec.spur_length_factor * parent.length + parent.radius_end;
                let r = 0.5 * r_child;
                let spur = TruthBranch {
                    id: all.len(),
                    tree,
                    generation: g,
                    parent: Some(parent.id),
                    spur: true,
                    start: parent.end,
                    end: add(parent.end, scale(d, len)),
                    radius_start: r,
                    radius_end: r,
                    length: len,
                };
                if fits(spec, &spur, &all) {
                    all.push(spur);
                    break;
                }
            }
        }
    }
    Some(all.split_off(first))
}

fn grow_forest(spec: &PhantomSpec, rng: &mut Sampler) -> Result<Vec<TruthBranch>, PhantomError> {
    let mut branches = Vec::new();
    for tree in 0..spec.trees {
        let mut grown = None;
        for _ in 0..ATTEMPTS_PER_TREE {
            if let Some(t) = grow_tree(spec, tree, rng, &branches) {
                grown = Some(t);
                break;
            }
        }
        let t = grown.ok_or_else(|| PhantomError::SpecOutOfBounds(format!("tree {tree} does not fit the liver")))?;
        branches.extend(t);
    }
    Ok(branches)
}

/// Voxel index range covering `[lo, hi]` mm along one axis.
fn index_range(lo: f64, hi: f64, spacing: f64, n: usize) -> std::ops::Range<usize> {
    let a = (lo / spacing).ceil().max(0.0) as usize;
    let b = ((hi / spacing).floor() + 1.0).clamp(0.0, n as f64) as usize;
    a.min(b)..b
}

fn rasterize(spec: &PhantomSpec, branches: &[TruthBranch], lesions: &[LesionSpec]) -> LabelVolume {
    let grid = VoxelGrid::filled(spec.dims, spec.spacing, BACKGROUND).expect("validated");
    let mut data = vec![BACKGROUND; grid.len()];
    let c = spec.center();
    for (i, v) in data.iter_mut().enumerate() {
        if inside_ellipsoid(grid.position(i), c, spec.liver_semi_axes, 0.0) {
            *v = LIVER;
        }
    }
    for b in branches {
        let r = b.max_radius();
        let ranges: Vec<_> = (0..3)
            .map(|a| index_range(b.start[a].min(b.end[a]) - r, b.start[a].max(b.end[a]) + r, spec.spacing[a], spec.dims[a]))
            .collect();
        for z in ranges[2].clone() {
            for y in ranges[1].clone() {
                for x in ranges[0].clone() {
                    let i = grid.index(x, y, z);
                    if b.contains(grid.position(i)) {
                        data[i] = VESSEL;
                    }
                }
            }
        }
    }
    for l in lesions {
        let ranges: Vec<_> = (0..3)
            .map(|a| index_range(l.center[a] - l.radius, l.center[a] + l.radius, spec.spacing[a], spec.dims[a]))
            .collect();
        for z in ranges[2].clone() {
            for y in ranges[1].clone() {
                for x in ranges[0].clone() {
                    let i = grid.index(x, y, z);
                    let p = grid.position(i);
                    if data[i] == LIVER && dot(sub(p, l.center), sub(p, l.center)) <= l.radius * l.radius {
                        data[i] = LESION;
                    }
                }
            }
        }
    }
    LabelVolume::new(grid.with_data(data).expect("same length")).expect("labels in range")
}

/// Hull of the tube surfaces of non-spur branches up to `max_generation`.
pub fn core_hull(branches: &[TruthBranch], max_generation: u32) -> Option<ConvexHull> {
    let mut points = Vec::new();
    let dirs: Vec<P3> = (-1..=1i32)
        .flat_map(|x| (-1..=1i32).flat_map(move |y| (-1..=1i32).map(move |z| [x, y, z])))
        .filter(|d| *d != [0, 0, 0])
        .map(|d| normalize(d.map(f64::from)))
        .collect();
    for b in branches.iter().filter(|b| !b.spur && b.generation <= max_generation) {
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            let p = b.point_at(t);
            let r = b.radius_at(t);
            points.extend(dirs.iter().map(|d| add(p, scale(*d, r))));
        }
    }
    convex_hull(&points).ok()
}

fn lesion_truth(l: &LesionSpec, hull: Option<&ConvexHull>) -> TruthLesion {
    let d = hull.map_or(f64::INFINITY, |h| point_hull_distance(h, l.center));
    TruthLesion {
        center: l.center,
        radius: l.radius,
        volume_mm3: 4.0 / 3.0 * std::f64::consts::PI * l.radius.powi(3),
        center_hull_distance: d,
        overlaps_core_hull: d < l.radius,
    }
}

/// Generation up to which the analytic core hull is taken; matches the
/// portion kept by pruning with two bifurcation levels.
pub const CORE_GENERATION: u32 = 1;

/// Builds one phantom volume and its analytic truth.
pub fn generate_tree(spec: &PhantomSpec) -> Result<(LabelVolume, PhantomTruth), PhantomError> {
    spec.validate()?;
    let mut rng = Sampler::new(spec.seed, spec.stream);
    let branches = grow_forest(spec, &mut rng)?;
    let volume = rasterize(spec, &branches, &spec.lesions);
    let hull = core_hull(&branches, CORE_GENERATION);
    Ok((
        volume,
        PhantomTruth {
            seed: spec.seed,
            stream: spec.stream,
            entries: branches.iter().filter(|b| b.parent.is_none()).map(|b| b.start).collect(),
            lesions: spec.lesions.iter().map(|l| lesion_truth(l, hull.as_ref())).collect(),
            branches,
            label: None,
            raw_score: None,
        },
    ))
}

impl PhantomTruth {
    /// Centerline graph sampled every `step` mm: one vertex per sample,
    /// junctions shared between a parent end and its children. Also
    /// returns the vertex path of every truth branch.
    pub fn centerline_graph(&self, step: f64) -> (VesselGraph, Vec<Vec<u32>>) {
        let mut vertices: Vec<Vertex> = Vec::new();
        let mut edges = Vec::new();
        let mut paths: Vec<Vec<u32>> = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let start = match b.parent {
                Some(p) => *paths[p].last().expect("parent sampled first"),
                None => {
                    vertices.push(Vertex { voxel: vertices.len(), position: b.start, radius: b.radius_start });
                    vertices.len() as u32 - 1
                }
            };
            let n = (b.length / step).ceil().max(1.0) as usize;
            let mut path = vec![start];
            for k in 1..=n {
                let t = k as f64 / n as f64;
                let id = vertices.len() as u32;
                vertices.push(Vertex { voxel: id as usize, position: b.point_at(t), radius: b.radius_at(t) });
                edges.push((*path.last().unwrap(), id));
                path.push(id);
            }
            paths.push(path);
        }
        (VesselGraph::from_edges(vertices, &edges).expect("tree edges are simple"), paths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub n_cases: usize,
    pub seed: u64,
    /// Probability that a case is planted as complex.
    pub complex_fraction: f64,
    /// Total lesion volume above which a case is complex.
    pub volume_threshold_mm3: f64,
    pub template: PhantomSpec,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_cases: 40,
            seed: 7,
            complex_fraction: 0.5,
            volume_threshold_mm3: 1200.0,
            template: PhantomSpec { spur_probability: 0.3, ..PhantomSpec::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    InsideHull,
    LargeOutside,
    Near,
    Far,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub case_id: String,
    pub placement: Placement,
    pub volume: LabelVolume,
    pub truth: PhantomTruth,
    pub label: u8,
    pub raw_score: u8,
}

const PLACEMENT_ATTEMPTS: usize = 4000;

fn place_lesion(
    spec: &PhantomSpec,
    rng: &mut Sampler,
    hulls: [&ConvexHull; 2],
    radius: f64,
    accept: impl Fn(f64, f64) -> bool,
    others: &[LesionSpec],
) -> Option<LesionSpec> {
    let c = spec.center();
    let axes = spec.liver_semi_axes;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = [0, 1, 2].map(|a| c[a] + rng.range(-axes[a], axes[a]));
        if !inside_ellipsoid(p, c, axes, radius + 1.0) {
            continue;
        }
        if others.iter().any(|o| norm(sub(o.center, p)) < o.radius + radius + 3.0) {
            continue;
        }
        if accept(signed_hull_distance(hulls[0], p), signed_hull_distance(hulls[1], p)) {
            return Some(LesionSpec { center: p, radius });
        }
    }
    None
}

fn signed_hull_distance(hull: &ConvexHull, p: P3) -> f64 {
    let signed = hull.half_spaces.iter().map(|h| h.signed_distance(p)).fold(f64::NEG_INFINITY, f64::max);
    if signed <= 0.0 { signed } else { point_hull_distance(hull, p) }
}

/// Outside lesions also keep clear of the next generation's hull, since
/// junction knots can retain one extra level of the tree.
const OUTER_MARGIN: f64 = 1.0;

fn plant_case(opts: &DatasetOptions, index: usize) -> Result<PhantomCase, PhantomError> {
    let spec0 = PhantomSpec { seed: opts.seed, stream: index as u64, lesions: Vec::new(), ..opts.template.clone() };
    spec0.validate()?;
    let mut rng = Sampler::new(opts.seed, index as u64);
    let complex = rng.unit() < opts.complex_fraction;
    let placement = if complex {
        if rng.unit() < 0.6 { Placement::InsideHull } else { Placement::LargeOutside }
    } else if rng.unit() < 0.5 {
        Placement::Near
    } else {
        Placement::Far
    };
    for _ in 0..ATTEMPTS_PER_TREE {
        let branches = grow_forest(&spec0, &mut rng)?;
        let (Some(hull), Some(outer)) = (core_hull(&branches, CORE_GENERATION), core_hull(&branches, CORE_GENERATION + 1)) else {
            continue;
        };
        let hulls = [&hull, &outer];
        let mut lesions = Vec::new();
        let main = match placement {
            Placement::InsideHull => {
                let r = rng.range(3.0, 6.0);
                place_lesion(&spec0, &mut rng, hulls, r, |d, _| d <= -2.0, &lesions)
            }
            Placement::LargeOutside => {
                let r = rng.range(7.5, 8.5);
                place_lesion(&spec0, &mut rng, hulls, r, |d, o| d >= r + 3.0 && o >= r + OUTER_MARGIN, &lesions)
            }
            Placement::Near => {
                let r = rng.range(2.5, 5.0);
                let gap = rng.range(3.0, 6.0);
                place_lesion(&spec0, &mut rng, hulls, r, |d, o| d >= r + gap && o >= r + OUTER_MARGIN, &lesions)
            }
            Placement::Far => {
                let r = rng.range(2.5, 5.0);
                place_lesion(&spec0, &mut rng, hulls, r, |d, o| d >= r + 10.0 && o >= r + OUTER_MARGIN, &lesions)
            }
        };
        let Some(main) = main else {
            continue;
        };
        lesions.push(main);
        if rng.unit() < 0.3 {
            let r = rng.range(2.0, 3.0);
            if let Some(s) = place_lesion(&spec0, &mut rng, hulls, r, |d, o| d >= r + 6.0 && o >= r + OUTER_MARGIN, &lesions) {
                lesions.push(s);
            }
        }
        let truth_lesions: Vec<TruthLesion> = lesions.iter().map(|l| lesion_truth(l, Some(&hull))).collect();
        let overlaps = truth_lesions.iter().any(|l| l.overlaps_core_hull);
        let total: f64 = truth_lesions.iter().map(|l| l.volume_mm3).sum();
        let label = u8::from(overlaps || total > opts.volume_threshold_mm3);
        let raw_score = if label == 1 { 6 + rng.below(5) as u8 } else { 1 + rng.below(5) as u8 };
        let spec = PhantomSpec { lesions: lesions.clone(), ..spec0.clone() };
        let volume = rasterize(&spec, &branches, &lesions);
        let truth = PhantomTruth {
            seed: opts.seed,
            stream: index as u64,
            entries: branches.iter().filter(|b| b.parent.is_none()).map(|b| b.start).collect(),
            branches,
            lesions: truth_lesions,
            label: Some(label),
            raw_score: Some(raw_score),
        };
        return Ok(PhantomCase { case_id: format!("case_{index:03}"), placement, volume, truth, label, raw_score });
    }
    Err(PhantomError::SpecOutOfBounds(format!("case {index}: lesion placement failed")))
}

/// Planted-label dataset: each case is complex iff a lesion overlaps the
/// analytic core hull or the total lesion volume exceeds the threshold.
pub fn generate_dataset(opts: &DatasetOptions) -> Result<Vec<PhantomCase>, PhantomError> {
    use rayon::prelude::*;
    if opts.n_cases < 2 {
        return Err(PhantomError::InvalidSpec("a dataset needs at least two cases".into()));
    }
    (0..opts.n_cases).into_par_iter().map(|i| plant_case(opts, i)).collect()
}
