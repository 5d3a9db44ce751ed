//! Binary morphology on voxel masks: cross erosion, exact anisotropic
//! Euclidean distance transform, connected-component labelling and
//! ball dilation around weighted seed points.
//!
//! Erosion treats voxels outside the grid as background. The distance
//! transform only measures to background voxels inside the grid, so a mask
//! without any background voxel maps to `INFINITY`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::volume::{BinaryMask, VolumeError, VoxelGrid};

pub(crate) const FACE_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// The 26 neighbor offsets in raster order (x fastest), center excluded.
pub(crate) const NEIGHBOR_OFFSETS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut z = -1;
    while z <= 1 {
        let mut y = -1;
        while y <= 1 {
            let mut x = -1;
            while x <= 1 {
                if !(x == 0 && y == 0 && z == 0) {
                    out[n] = [x, y, z];
                    n += 1;
                }
                x += 1;
            }
            y += 1;
        }
        z += 1;
    }
    out
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [[i64; 3]] {
        match self {
            Connectivity::Six => &FACE_OFFSETS,
            Connectivity::TwentySix => &NEIGHBOR_OFFSETS_26,
        }
    }
}

/// Erosion by the 6-connected cross: a voxel survives iff it and its six
/// face neighbors are foreground.
pub fn erode(mask: &BinaryMask) -> BinaryMask {
    let grid = mask.grid();
    let [nx, ny, nz] = grid.dims();
    let mut out = vec![false; grid.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = grid.index(x, y, z);
                if !mask.get(i) {
                    continue;
                }
                let (xi, yi, zi) = (x as i64, y as i64, z as i64);
                out[i] = FACE_OFFSETS
                    .iter()
                    .all(|o| mask.get_signed(xi + o[0], yi + o[1], zi + o[2]));
            }
        }
    }
    BinaryMask::new(grid.with_data(out).expect("same geometry"))
}

/// Per-voxel distance (mm) from each foreground voxel center to the nearest
/// background voxel center; zero on background.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap(VoxelGrid<f64>);

impl DistanceMap {
    pub fn grid(&self) -> &VoxelGrid<f64> {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0.data()[index]
    }
}

/// 1D squared distance transform over sites at `i * step`.
///
/// Lower envelope of parabolas; `f` holds squared distances (`INFINITY` for
/// no site). Writes the result into `out`, all `INFINITY` when the line has
/// no finite site.
fn edt_1d(f: &[f64], step: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    let pos = |q: usize| q as f64 * step;
    let intersect = |a: usize, b: usize| -> f64 {
        // abscissa where the parabolas rooted at sites a < b meet
        let (pa, pb) = (pos(a), pos(b));
        ((f[b] + pb * pb) - (f[a] + pa * pa)) / (2.0 * (pb - pa))
    };

    sites.clear();
    bounds.clear();
    for q in 0..f.len() {
        if f[q].is_infinite() {
            continue;
        }
        while let Some(&top) = sites.last() {
            let s = intersect(top, q);
            if !bounds.is_empty() && s <= bounds[bounds.len() - 1] {
                sites.pop();
                bounds.pop();
            } else {
                bounds.push(s);
                break;
            }
        }
        sites.push(q);
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    // bounds[k] is the left boundary of sites[k + 1]
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let x = pos(q);
        while k < bounds.len() && bounds[k] < x {
            k += 1;
        }
        let d = x - pos(sites[k]);
        *o = d * d + f[sites[k]];
    }
}

/// Exact Euclidean distance transform with anisotropic spacing.
pub fn edt(mask: &BinaryMask) -> DistanceMap {
    let grid = mask.grid();
    let dims = grid.dims();
    let spacing = grid.spacing();
    let mut sq: Vec<f64> = grid
        .data()
        .iter()
        .map(|&b| if b { f64::INFINITY } else { 0.0 })
        .collect();

    let strides = [1usize, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    let mut out = Vec::new();
    let mut sites = Vec::new();
    let mut bounds = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        line.resize(n, 0.0);
        out.resize(n, 0.0);
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[b] {
            for i in 0..dims[a] {
                let base = i * strides[a] + j * strides[b];
                for (k, v) in line.iter_mut().enumerate() {
                    *v = sq[base + k * stride];
                }
                edt_1d(&line, spacing[axis], &mut out, &mut sites, &mut bounds);
                for (k, v) in out.iter().enumerate() {
                    sq[base + k * stride] = *v;
                }
            }
        }
    }
    for (v, &fg) in sq.iter_mut().zip(grid.data()) {
        *v = if fg { v.sqrt() } else { 0.0 };
    }
    DistanceMap(grid.with_data(sq).expect("same geometry"))
}

/// Connected components of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    /// Component id per voxel, 0 on background.
    pub labels: VoxelGrid<u32>,
    pub count: usize,
    /// Voxel count per component (index `id - 1`).
    pub sizes: Vec<usize>,
    /// Centroid per component in mm.
    pub centroids: Vec<[f64; 3]>,
    /// First voxel of each component in raster order.
    pub first_voxel: Vec<usize>,
}

impl ComponentLabeling {
    /// Voxel indices of component `id` in raster order.
    pub fn members(&self, id: u32) -> Vec<usize> {
        self.labels
            .data()
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == id).then_some(i))
            .collect()
    }
}

/// Labels components in raster order of their first voxel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let grid = mask.grid();
    let mut labels = vec![0u32; grid.len()];
    let mut sizes = Vec::new();
    let mut centroids = Vec::new();
    let mut first_voxel = Vec::new();
    let mut queue = VecDeque::new();
    let offsets = connectivity.offsets();

    for start in 0..grid.len() {
        if !mask.get(start) || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0usize;
        let mut sum = [0.0f64; 3];
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = grid.position(i);
            for k in 0..3 {
                sum[k] += p[k];
            }
            let [x, y, z] = grid.coords(i);
            for o in offsets {
                if let Some(j) = grid.checked_index(x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]) {
                    if mask.get(j) && labels[j] == 0 {
                        labels[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
        centroids.push(sum.map(|s| s / size as f64));
        first_voxel.push(start);
    }
    ComponentLabeling {
        labels: grid.with_data(labels).expect("same geometry"),
        count: sizes.len(),
        sizes,
        centroids,
        first_voxel,
    }
}

/// How a retained centerline is inflated during reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DilationMode {
    /// Ball of the local distance-transform radius.
    #[default]
    Radius,
    /// Ball of twice the local radius.
    Diameter,
}

impl DilationMode {
    pub fn scale(self, radius: f64) -> f64 {
        match self {
            DilationMode::Radius => radius,
            DilationMode::Diameter => 2.0 * radius,
        }
    }
}

/// Rounds a radius up to the next multiple of the smallest spacing component.
pub fn round_up_radius(radius: f64, spacing: [f64; 3]) -> f64 {
    let unit = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    // values within 1e-9 units of a multiple are not bumped by float noise
    let k = (radius / unit - 1e-9).ceil().max(0.0);
    k * unit
}

/// Union of digital balls: a voxel is set iff its center lies within the
/// rounded-up radius of some seed voxel center.
pub fn dilate_by_radii<T>(points: &[(usize, f64)], domain: &VoxelGrid<T>) -> Result<BinaryMask, VolumeError> {
    let dims = domain.dims();
    let spacing = domain.spacing();
    let n = domain.len();
    let mut out = vec![false; n];
    for &(index, radius) in points {
        if index >= n {
            return Err(VolumeError::LengthMismatch {
                expected: n,
                actual: index,
            });
        }
        let r = round_up_radius(radius.max(0.0), spacing);
        let r2 = r * r * (1.0 + 1e-12);
        let c = domain.coords(index);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let reach = (r / spacing[a] + 1e-9).floor() as usize;
            lo[a] = c[a].saturating_sub(reach);
            hi[a] = (c[a] + reach).min(dims[a] - 1);
        }
        for z in lo[2]..=hi[2] {
            let dz = (z as f64 - c[2] as f64) * spacing[2];
            for y in lo[1]..=hi[1] {
                let dy = (y as f64 - c[1] as f64) * spacing[1];
                for x in lo[0]..=hi[0] {
                    let dx = (x as f64 - c[0] as f64) * spacing[0];
                    if dx * dx + dy * dy + dz * dz <= r2 {
                        out[domain.index(x, y, z)] = true;
                    }
                }
            }
        }
    }
    Ok(BinaryMask::new(domain.with_data(out)?))
}
