//! Imaging biomarkers of a case: liver volume, lesion count, lesion volume
//! and the central-zone occupancy `b_hcz`.

use serde::{Deserialize, Serialize};

use crate::hcz::{distance_to_hcz, Hcz, HczError};
use crate::morphology::{connected_components, Connectivity};
use crate::volume::{extract_mask, voxel_volume, BinaryMask, LabelSelector, LabelVolume, LESION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseFlag {
    NoLesion,
    DegenerateHull,
    EmptyHcz,
    NoEntries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiomarkerOptions {
    /// Lesion components smaller than this are ignored.
    pub min_lesion_voxels: usize,
}

impl Default for BiomarkerOptions {
    fn default() -> Self {
        Self { min_lesion_voxels: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerVector {
    pub v_liv: f64,
    pub n_les: usize,
    pub v_les: f64,
    /// Occupancy fraction, or minus the normalized distance; `None` when undefined.
    pub b_hcz: Option<f64>,
    pub flags: Vec<CaseFlag>,
}

/// Lesion label with components below `min_voxels` removed.
pub fn lesion_mask(volume: &LabelVolume, min_voxels: usize) -> (BinaryMask, usize) {
    let lesions = extract_mask(volume, LabelSelector::Label(LESION)).expect("valid label");
    let cc = connected_components(&lesions, Connectivity::TwentySix);
    if min_voxels <= 1 {
        return (lesions, cc.count);
    }
    let keep: Vec<bool> = cc.sizes.iter().map(|&s| s >= min_voxels).collect();
    let data = cc.labels.data().iter().map(|&l| l != 0 && keep[l as usize - 1]).collect();
    let mask = BinaryMask::new(lesions.grid().with_data(data).expect("same length"));
    (mask, keep.iter().filter(|&&k| k).count())
}

/// Occupancy when lesion and zone share voxels, otherwise the negative
/// distance normalized by the zone diameter.
pub fn b_hcz(lesion: &BinaryMask, hcz: &Hcz) -> Result<f64, HczError> {
    if lesion.is_all_false() {
        return Err(HczError::EmptyLesion);
    }
    let zone = hcz.mask.count();
    if zone == 0 {
        return Err(HczError::EmptyHcz);
    }
    let overlap = lesion.and(&hcz.mask)?.count();
    if overlap > 0 {
        return Ok(overlap as f64 / zone as f64);
    }
    Ok(-distance_to_hcz(lesion, hcz)? / hcz.diameter)
}

/// Biomarkers of one case. `hcz` is `None` when no zone could be built.
pub fn compute_biomarkers(volume: &LabelVolume, hcz: Option<&Hcz>, options: &BiomarkerOptions) -> BiomarkerVector {
    let vox = voxel_volume(volume.grid());
    let liver = extract_mask(volume, LabelSelector::LiverUnion).expect("valid selector");
    let (lesions, n_les) = lesion_mask(volume, options.min_lesion_voxels);
    let mut flags = Vec::new();
    let b = match hcz {
        _ if lesions.is_all_false() => {
            flags.push(CaseFlag::NoLesion);
            None
        }
        None => {
            flags.push(CaseFlag::DegenerateHull);
            None
        }
        Some(h) => match b_hcz(&lesions, h) {
            Ok(b) => Some(b),
            Err(_) => {
                flags.push(CaseFlag::EmptyHcz);
                None
            }
        },
    };
    BiomarkerVector {
        v_liv: liver.count() as f64 * vox,
        n_les,
        v_les: lesions.count() as f64 * vox,
        b_hcz: b,
        flags,
    }
}

/// Per-case JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerRecord {
    pub case_id: String,
    pub v_liv_mm3: f64,
    pub n_les: usize,
    pub v_les_mm3: f64,
    pub b_hcz: Option<f64>,
    pub b_hcz_percent: Option<f64>,
    pub flags: Vec<CaseFlag>,
}

impl BiomarkerRecord {
    pub fn new(case_id: impl Into<String>, b: &BiomarkerVector) -> Self {
        Self {
            case_id: case_id.into(),
            v_liv_mm3: b.v_liv,
            n_les: b.n_les,
            v_les_mm3: b.v_les,
            b_hcz: b.b_hcz,
            b_hcz_percent: b.b_hcz.map(|v| v * 100.0),
            flags: b.flags.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcz::build_hcz;
    use crate::volume::{VoxelGrid, LIVER, VESSEL};

    fn block(dims: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> BinaryMask {
        let g = VoxelGrid::filled(dims, [1.0; 3], false).unwrap();
        let data = (0..g.len())
            .map(|i| {
                let c = g.coords(i);
                (0..3).all(|a| c[a] >= lo[a] && c[a] < hi[a])
            })
            .collect();
        BinaryMask::new(g.with_data(data).unwrap())
    }

    #[test]
    fn full_occupancy() {
        let zone = block([10, 10, 10], [2, 2, 2], [7, 7, 7]);
        let hcz = build_hcz(&zone, None).unwrap();
        assert_eq!(b_hcz(&zone, &hcz).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_at_one_diameter() {
        // 2x2x2 block with x spacing s: diameter sqrt(s^2 + 2); a lesion voxel
        // at x index 3 lies 2s from the face, equal to the diameter when s^2 = 2/3
        let s = (2.0f64 / 3.0).sqrt();
        let g = VoxelGrid::filled([4, 2, 2], [s, 1.0, 1.0], false).unwrap();
        let zone = BinaryMask::new(g.with_data((0..16).map(|i| i % 4 < 2).collect()).unwrap());
        let hcz = build_hcz(&zone, None).unwrap();
        let mut lesion = BinaryMask::empty(g.dims(), g.spacing()).unwrap();
        lesion.set(g.index(3, 1, 0), true);
        assert!((b_hcz(&lesion, &hcz).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_counted_occupancy() {
        // 125-voxel zone, 33-voxel lesion with 10 voxels inside
        let zone = block([20, 20, 20], [0, 0, 0], [5, 5, 5]);
        let hcz = build_hcz(&zone, None).unwrap();
        assert_eq!(hcz.mask.count(), 125);
        let g = zone.grid().clone();
        let mut lesion = BinaryMask::empty(g.dims(), g.spacing()).unwrap();
        for x in 0..10 {
            lesion.set(g.index(x, 4, 4), true);
        }
        for x in 0..5 {
            lesion.set(g.index(x, 3, 4), true);
        }
        for x in 10..19 {
            for y in 0..2 {
                lesion.set(g.index(x, y, 0), true);
            }
        }
        assert_eq!(lesion.count(), 33);
        assert_eq!(b_hcz(&lesion, &hcz).unwrap(), 10.0 / 125.0);
    }

    #[test]
    fn liver_volume_and_lesion_count() {
        let mut labels = vec![0u8; 1000 * 8];
        let g = VoxelGrid::filled([20, 20, 20], [1.0; 3], 0u8).unwrap();
        for (i, l) in labels.iter_mut().enumerate() {
            let [x, y, z] = g.coords(i);
            if x < 10 && y < 10 && z < 10 {
                *l = LIVER;
            }
        }
        labels[g.index(1, 1, 1)] = LESION;
        labels[g.index(5, 5, 5)] = LESION;
        labels[g.index(6, 6, 6)] = LESION;
        labels[g.index(8, 1, 1)] = VESSEL;
        let v = LabelVolume::new(g.with_data(labels).unwrap()).unwrap();
        let b = compute_biomarkers(&v, None, &BiomarkerOptions::default());
        assert_eq!(b.v_liv, 1000.0);
        assert_eq!(b.n_les, 2);
        assert_eq!(b.v_les, 3.0);
        assert_eq!(b.flags, vec![CaseFlag::DegenerateHull]);
        let b = compute_biomarkers(&v, None, &BiomarkerOptions { min_lesion_voxels: 2 });
        assert_eq!((b.n_les, b.v_les), (1, 2.0));
    }
}
