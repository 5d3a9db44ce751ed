//! Curve skeletons of binary masks by directional border peeling.
//!
//! Each sweep visits the six border directions in the fixed order
//! up (+z), down (-z), north (-y), south (+y), east (+x), west (-x). For a
//! direction, all foreground voxels whose face neighbor in that direction is
//! background, that are not line endpoints and that are simple are
//! collected in raster order; they are then re-checked one by one and
//! deleted while they stay simple and non-endpoint. Sweeps repeat until
//! nothing changes.
//!
//! A voxel is simple for (26, 6) topology when the foreground in its
//! 26-neighborhood forms exactly one 26-component and the background in its
//! 18-neighborhood has exactly one 6-component touching a face neighbor.
//! Both counts are computed by labelling the 3×3×3 neighborhood as a bitmask.

use crate::morphology::{DistanceMap, NEIGHBOR_OFFSETS_26};
use crate::volume::{BinaryMask, VolumeError};

/// Skeleton voxels with their local radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// Voxel indices in raster order.
    pub voxels: Vec<usize>,
    /// Radius (mm) per voxel, zero until [`attach_radii`] runs.
    pub radius: Vec<f64>,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::empty(self.dims, self.spacing).expect("skeleton geometry is valid");
        for &v in &self.voxels {
            m.set(v, true);
        }
        m
    }
}

// Neighborhood bit positions follow NEIGHBOR_OFFSETS_26: the 3x3x3 cube in
// raster order with the center (cube index 13) removed.
const fn cube_index(bit: usize) -> usize {
    if bit < 13 {
        bit
    } else {
        bit + 1
    }
}

const fn offset_of(bit: usize) -> [i32; 3] {
    let c = cube_index(bit) as i32;
    [c % 3 - 1, (c / 3) % 3 - 1, c / 9 - 1]
}

const fn abs(v: i32) -> i32 {
    if v < 0 {
        -v
    } else {
        v
    }
}

/// Bits 26-adjacent to each neighbor bit.
const ADJ26: [u32; 26] = {
    let mut out = [0u32; 26];
    let mut i = 0;
    while i < 26 {
        let a = offset_of(i);
        let mut j = 0;
        while j < 26 {
            let b = offset_of(j);
            if i != j && abs(a[0] - b[0]) <= 1 && abs(a[1] - b[1]) <= 1 && abs(a[2] - b[2]) <= 1 {
                out[i] |= 1 << j;
            }
            j += 1;
        }
        i += 1;
    }
    out
};

/// Bits of the 18-neighborhood (faces and edges, no corners).
const N18: u32 = {
    let mut m = 0u32;
    let mut i = 0;
    while i < 26 {
        let o = offset_of(i);
        if abs(o[0]) + abs(o[1]) + abs(o[2]) <= 2 {
            m |= 1 << i;
        }
        i += 1;
    }
    m
};

/// Bits of the six face neighbors.
const N6: u32 = {
    let mut m = 0u32;
    let mut i = 0;
    while i < 26 {
        let o = offset_of(i);
        if abs(o[0]) + abs(o[1]) + abs(o[2]) == 1 {
            m |= 1 << i;
        }
        i += 1;
    }
    m
};

/// Bits 6-adjacent to each neighbor bit.
const ADJ6: [u32; 26] = {
    let mut out = [0u32; 26];
    let mut i = 0;
    while i < 26 {
        let a = offset_of(i);
        let mut j = 0;
        while j < 26 {
            let b = offset_of(j);
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) + abs(a[2] - b[2]) == 1 {
                out[i] |= 1 << j;
            }
            j += 1;
        }
        i += 1;
    }
    out
};

/// Collects the component of `seed` within `set` under `adj`.
#[inline]
fn flood(set: u32, seed: u32, adj: &[u32; 26]) -> u32 {
    let mut comp = seed;
    let mut frontier = seed;
    while frontier != 0 {
        let bit = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let grow = adj[bit] & set & !comp;
        comp |= grow;
        frontier |= grow;
    }
    comp
}

/// Number of 26-components of the foreground neighbors, stopping at 2.
fn object_components(nb: u32) -> u32 {
    let mut left = nb;
    let mut count = 0;
    while left != 0 {
        let seed = left & left.wrapping_neg();
        left &= !flood(left, seed, &ADJ26);
        count += 1;
        if count > 1 {
            break;
        }
    }
    count
}

/// Number of 6-components of background in N18 that touch a face neighbor,
/// stopping at 2.
fn background_components(nb: u32) -> u32 {
    let bg = !nb & N18 & ((1 << 26) - 1);
    let mut faces = bg & N6;
    let mut count = 0;
    while faces != 0 {
        let seed = faces & faces.wrapping_neg();
        let comp = flood(bg, seed, &ADJ6);
        faces &= !comp;
        count += 1;
        if count > 1 {
            break;
        }
    }
    count
}

/// Simple point test for (26, 6) topology on a 26-neighborhood bitmask.
pub fn is_simple(nb: u32) -> bool {
    object_components(nb) == 1 && background_components(nb) == 1
}

fn is_endpoint(nb: u32) -> bool {
    nb.count_ones() == 1
}

struct Volume {
    dims: [i64; 3],
    data: Vec<bool>,
}

impl Volume {
    #[inline]
    fn get(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && x < self.dims[0]
            && y < self.dims[1]
            && z < self.dims[2]
            && self.data[(x + self.dims[0] * (y + self.dims[1] * z)) as usize]
    }

    #[inline]
    fn coords(&self, i: usize) -> [i64; 3] {
        let i = i as i64;
        [i % self.dims[0], (i / self.dims[0]) % self.dims[1], i / (self.dims[0] * self.dims[1])]
    }

    fn neighborhood(&self, i: usize) -> u32 {
        let [x, y, z] = self.coords(i);
        let mut nb = 0u32;
        for (bit, o) in NEIGHBOR_OFFSETS_26.iter().enumerate() {
            if self.get(x + o[0], y + o[1], z + o[2]) {
                nb |= 1 << bit;
            }
        }
        nb
    }
}

/// Border directions in sweep order: U, D, N, S, E, W.
const BORDER_DIRECTIONS: [[i64; 3]; 6] = [
    [0, 0, 1],
    [0, 0, -1],
    [0, -1, 0],
    [0, 1, 0],
    [1, 0, 0],
    [-1, 0, 0],
];

/// Thins `mask` to a curve skeleton. Radii are left at zero.
pub fn skeletonize(mask: &BinaryMask) -> Skeleton {
    let grid = mask.grid();
    let dims = grid.dims();
    let mut vol = Volume {
        dims: dims.map(|d| d as i64),
        data: grid.data().to_vec(),
    };
    let mut foreground = mask.true_indices();
    let mut candidates = Vec::new();

    loop {
        let mut changed = false;
        for dir in BORDER_DIRECTIONS {
            candidates.clear();
            for &i in &foreground {
                let [x, y, z] = vol.coords(i);
                if vol.get(x + dir[0], y + dir[1], z + dir[2]) {
                    continue;
                }
                let nb = vol.neighborhood(i);
                if !is_endpoint(nb) && is_simple(nb) {
                    candidates.push(i);
                }
            }
            let mut deleted = false;
            for &i in &candidates {
                let nb = vol.neighborhood(i);
                if !is_endpoint(nb) && is_simple(nb) {
                    vol.data[i] = false;
                    deleted = true;
                }
            }
            if deleted {
                changed = true;
                foreground.retain(|&i| vol.data[i]);
            }
        }
        if !changed {
            break;
        }
    }

    Skeleton {
        radius: vec![0.0; foreground.len()],
        voxels: foreground,
        dims,
        spacing: grid.spacing(),
    }
}

/// Sets each skeleton radius to the distance-map value at its voxel.
pub fn attach_radii(skeleton: &Skeleton, distance: &DistanceMap) -> Result<Skeleton, VolumeError> {
    let g = distance.grid();
    if g.dims() != skeleton.dims || g.spacing() != skeleton.spacing {
        return Err(VolumeError::GeometryMismatch(
            skeleton.dims,
            skeleton.spacing,
            g.dims(),
            g.spacing(),
        ));
    }
    Ok(Skeleton {
        voxels: skeleton.voxels.clone(),
        radius: skeleton.voxels.iter().map(|&v| distance.get(v)).collect(),
        dims: skeleton.dims,
        spacing: skeleton.spacing,
    })
}

/// Convenience: skeleton of `mask` with radii from its own distance map.
pub fn skeleton_with_radii(mask: &BinaryMask, distance: &DistanceMap) -> Result<Skeleton, VolumeError> {
    attach_radii(&skeletonize(mask), distance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{connected_components, edt, Connectivity};
    use crate::volume::VoxelGrid;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn mask_from(dims: [usize; 3], f: impl Fn(i64, i64, i64) -> bool) -> BinaryMask {
        let g = VoxelGrid::filled(dims, [1.0; 3], false).unwrap();
        let data = (0..g.len())
            .map(|i| {
                let [x, y, z] = g.coords(i);
                f(x as i64, y as i64, z as i64)
            })
            .collect();
        BinaryMask::new(g.with_data(data).unwrap())
    }

    /// Euler characteristic of a union of closed unit cubes.
    fn euler(cells: &[bool]) -> i64 {
        let mut v = HashSet::new();
        let mut e = HashSet::new();
        let mut f = HashSet::new();
        let mut c = 0i64;
        for (k, _) in cells.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y, z) = ((k % 3) as i32, ((k / 3) % 3) as i32, (k / 9) as i32);
            c += 1;
            for i in 0..2 {
                for j in 0..2 {
                    for l in 0..2 {
                        v.insert((x + i, y + j, z + l));
                    }
                    e.insert((x, y + i, z + j, 0));
                    e.insert((x + i, y, z + j, 1));
                    e.insert((x + i, y + j, z, 2));
                }
                f.insert((x + i, y, z, 0));
                f.insert((x, y + i, z, 1));
                f.insert((x, y, z + i, 2));
            }
        }
        v.len() as i64 - e.len() as i64 + f.len() as i64 - c
    }

    /// Component count in the 3x3x3 cube surrounded by a background frame.
    fn count(cells: &[bool], fg: bool, six: bool) -> usize {
        let at = |x: i32, y: i32, z: i32| -> bool {
            if (1..=3).contains(&x) && (1..=3).contains(&y) && (1..=3).contains(&z) {
                cells[((x - 1) + 3 * (y - 1) + 9 * (z - 1)) as usize]
            } else {
                false
            }
        };
        let mut seen = [false; 125];
        let mut n = 0;
        for s in 0..125 {
            let (x, y, z) = (s % 5, (s / 5) % 5, s / 25);
            if seen[s as usize] || at(x, y, z) != fg {
                continue;
            }
            n += 1;
            let mut stack = vec![(x, y, z)];
            seen[s as usize] = true;
            while let Some((x, y, z)) = stack.pop() {
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let d = dx * dx + dy * dy + dz * dz;
                            if d == 0 || (six && d != 1) {
                                continue;
                            }
                            let (a, b, c) = (x + dx, y + dy, z + dz);
                            if !(0..5).contains(&a) || !(0..5).contains(&b) || !(0..5).contains(&c) {
                                continue;
                            }
                            let k = (a + 5 * b + 25 * c) as usize;
                            if !seen[k] && at(a, b, c) == fg {
                                seen[k] = true;
                                stack.push((a, b, c));
                            }
                        }
                    }
                }
            }
        }
        n
    }

    /// Brute-force simple point check: deleting the center keeps the number
    /// of object components, background components and the Euler
    /// characteristic (hence tunnels) of the neighborhood.
    fn brute_simple(nb: u32) -> bool {
        let cube = |with_center: bool| -> Vec<bool> {
            (0..27)
                .map(|c| if c == 13 { with_center } else { nb & (1 << if c < 13 { c } else { c - 1 }) != 0 })
                .collect()
        };
        let (with, without) = (cube(true), cube(false));
        count(&with, true, false) == count(&without, true, false)
            && count(&with, false, true) == count(&without, false, true)
            && euler(&with) == euler(&without)
    }

    #[test]
    fn tables_have_expected_sizes() {
        assert_eq!(N18.count_ones(), 18);
        assert_eq!(N6.count_ones(), 6);
        assert_eq!(ADJ26[13].count_ones(), 16); // bit 13 is the (+1,0,0) face neighbor
    }

    #[test]
    fn simple_point_basics() {
        assert!(!is_simple(0)); // isolated voxel
        assert!(!is_simple((1 << 26) - 1)); // interior voxel
        // two opposite face neighbors: deleting splits the line
        let left = 1 << 12;
        let right = 1 << 13;
        assert!(!is_simple(left | right));
        assert!(is_simple(left));
    }

    #[test]
    fn simple_point_matches_brute_force_on_random_neighborhoods() {
        let mut s = 0x9e3779b97f4a7c15u64;
        for _ in 0..4000 {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            let density = (s >> 40) % 100;
            let mut nb = 0u32;
            let mut t = s;
            for bit in 0..26 {
                t = t.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (t >> 33) % 100 < density {
                    nb |= 1 << bit;
                }
            }
            assert_eq!(is_simple(nb), brute_simple(nb), "nb = {nb:#x}");
        }
    }

    #[test]
    fn single_voxel_and_empty() {
        let m = mask_from([3, 3, 3], |x, y, z| (x, y, z) == (1, 1, 1));
        assert_eq!(skeletonize(&m).voxels, vec![13]);
        let e = mask_from([3, 3, 3], |_, _, _| false);
        assert!(skeletonize(&e).is_empty());
    }

    /// Checks that a voxel set forms a simple 26-connected chain: two
    /// endpoints, all others with exactly two neighbors.
    fn is_chain(s: &Skeleton) -> bool {
        let m = s.to_mask();
        let g = m.grid();
        let mut ends = 0;
        for &v in &s.voxels {
            let [x, y, z] = g.coords(v).map(|c| c as i64);
            let deg = NEIGHBOR_OFFSETS_26
                .iter()
                .filter(|o| m.get_signed(x + o[0], y + o[1], z + o[2]))
                .count();
            match deg {
                1 => ends += 1,
                2 => {}
                _ => return false,
            }
        }
        ends == 2
    }

    #[test]
    fn straight_tube_becomes_centered_chain() {
        let m = mask_from([22, 5, 5], |x, y, z| (1..=20).contains(&x) && (1..=3).contains(&y) && (1..=3).contains(&z));
        let s = skeletonize(&m);
        assert!(s.to_mask().is_subset_of(&m));
        assert!(is_chain(&s), "{:?}", s.voxels);
        let g = m.grid();
        let xs: Vec<usize> = s.voxels.iter().map(|&v| g.coords(v)[0]).collect();
        assert!(*xs.iter().min().unwrap() <= 2 && *xs.iter().max().unwrap() >= 19, "{xs:?}");
        for &v in &s.voxels {
            let [_, y, z] = g.coords(v);
            assert!(y.abs_diff(2) <= 1 && z.abs_diff(2) <= 1);
        }
    }

    #[test]
    fn radii_from_distance_map() {
        // open digital ball of radius 3: the nearest background voxel to the
        // center is then an axis point at distance exactly 3
        let m = mask_from([9, 9, 9], |x, y, z| (x - 4).pow(2) + (y - 4).pow(2) + (z - 4).pow(2) < 9);
        let d = edt(&m);
        let center = m.grid().index(4, 4, 4);
        let sk = Skeleton {
            voxels: vec![center],
            radius: vec![0.0],
            dims: m.dims(),
            spacing: m.spacing(),
        };
        let r = attach_radii(&sk, &d).unwrap();
        let brute = crate::morphology::tests::brute_edt(&m)[center];
        assert_eq!(r.radius, vec![brute]);
        assert_eq!(r.radius, vec![3.0]);
    }

    #[test]
    fn radius_next_to_background_is_one() {
        let m = mask_from([5, 3, 3], |_, y, z| y == 1 && z == 1);
        let s = skeleton_with_radii(&m, &edt(&m)).unwrap();
        assert!(s.radius.iter().all(|&r| r == 1.0));
        let empty = mask_from([2, 2, 2], |_, _, _| false);
        assert!(skeleton_with_radii(&empty, &edt(&empty)).unwrap().radius.is_empty());
    }

    #[test]
    fn attach_rejects_geometry_mismatch() {
        let m = mask_from([3, 3, 3], |_, _, _| false);
        let other = mask_from([4, 3, 3], |_, _, _| false);
        assert!(attach_radii(&skeletonize(&m), &edt(&other)).is_err());
    }

    fn blobby_mask(seed: u64) -> BinaryMask {
        // a few random balls and rods
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        };
        let shapes: Vec<(i64, i64, i64, i64, u64)> = (0..3)
            .map(|_| {
                (
                    (next() % 12) as i64 + 2,
                    (next() % 12) as i64 + 2,
                    (next() % 12) as i64 + 2,
                    (next() % 3) as i64 + 1,
                    next() % 3,
                )
            })
            .collect();
        mask_from([16, 16, 16], |x, y, z| {
            shapes.iter().any(|&(cx, cy, cz, r, axis)| {
                let (dx, dy, dz) = (x - cx, y - cy, z - cz);
                let along = [dx, dy, dz][axis as usize];
                let across: i64 = [dx, dy, dz].iter().map(|v| v * v).sum::<i64>() - along * along;
                across <= r * r && along.abs() <= 5
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn skeleton_invariants(seed in any::<u64>()) {
            let m = blobby_mask(seed);
            let s = skeletonize(&m);
            let sm = s.to_mask();
            prop_assert!(sm.is_subset_of(&m));
            prop_assert_eq!(
                connected_components(&sm, Connectivity::TwentySix).count,
                connected_components(&m, Connectivity::TwentySix).count
            );
            let g = sm.grid();
            for &v in &s.voxels {
                let [x, y, z] = g.coords(v).map(|c| c as i64);
                prop_assert!(!NEIGHBOR_OFFSETS_26.iter().all(|o| sm.get_signed(x + o[0], y + o[1], z + o[2])));
            }
            prop_assert_eq!(&skeletonize(&sm).voxels, &s.voxels);
            prop_assert_eq!(&skeletonize(&m).voxels, &s.voxels);
        }
    }
}
