//! Per-case pipeline: vessel extraction through biomarkers.

use serde::{Deserialize, Serialize};

use crate::biomarkers::{compute_biomarkers, BiomarkerOptions, BiomarkerVector, CaseFlag};
use crate::graph::{build_graph, decompose_branches, BranchSet, VesselGraph};
use crate::hcz::{build_hcz, Hcz, HczError};
use crate::morphology::{edt, DilationMode, DistanceMap};
use crate::pruning::{find_entries, prune_both, reconstruct, retained_voxels, EntryPoints, PruneError, PruneParams, PrunedPair, TagKind};
use crate::skeleton::{attach_radii, skeletonize, Skeleton};
use crate::volume::{extract_mask, BinaryMask, LabelSelector, LabelVolume, VESSEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub prune: PruneParams,
    pub drop_noise_branches: bool,
    pub clip_to_liver: bool,
    pub min_lesion_voxels: usize,
    pub dilation: DilationMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prune: PruneParams::default(),
            drop_noise_branches: false,
            clip_to_liver: false,
            min_lesion_voxels: 1,
            dilation: DilationMode::Radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportTag {
    Trunk,
    Noise,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub id: usize,
    /// 0 for the traversal seeded at `v_p`, 1 for `v_h`.
    pub seed: Option<usize>,
    pub tag: ReportTag,
    pub level: Option<u32>,
    pub len_mm: f64,
    pub rad_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub entries: Option<EntryPoints>,
    pub vertex_count: usize,
    pub retained_vertices: usize,
    pub branches: Vec<BranchRow>,
}

pub fn branch_report(graph: &VesselGraph, set: &BranchSet, entries: Option<&EntryPoints>, pruned: Option<&PrunedPair>) -> BranchReport {
    let mut rows: Vec<BranchRow> = set
        .branches
        .iter()
        .map(|b| BranchRow { id: b.id, seed: None, tag: ReportTag::Pruned, level: None, len_mm: b.len, rad_mm: b.rad })
        .collect();
    if let Some(p) = pruned {
        for (seed, tree) in p.trees.iter().enumerate() {
            for rb in &tree.branches {
                let row = &mut rows[rb.branch];
                if row.seed.is_none() {
                    row.seed = Some(seed);
                    row.tag = match rb.tag.kind {
                        TagKind::Trunk => ReportTag::Trunk,
                        TagKind::Noise => ReportTag::Noise,
                    };
                    row.level = Some(rb.tag.level);
                }
            }
        }
    }
    BranchReport {
        entries: entries.cloned(),
        vertex_count: graph.vertex_count(),
        retained_vertices: pruned.map_or(0, |p| p.retained.len()),
        branches: rows,
    }
}

/// Every intermediate product of one case.
#[derive(Debug, Clone)]
pub struct CaseArtifacts {
    pub vessel_mask: BinaryMask,
    pub distance: DistanceMap,
    pub skeleton: Skeleton,
    pub graph: VesselGraph,
    pub branches: BranchSet,
    pub entries: Option<EntryPoints>,
    pub pruned: Option<PrunedPair>,
    pub retained_mask: Option<BinaryMask>,
    pub hcz: Option<Hcz>,
    pub report: BranchReport,
    pub biomarkers: BiomarkerVector,
}

/// Runs every stage. Entry, pruning and hull failures are soft: they are
/// recorded as case flags and leave `b_hcz` undefined.
pub fn run_case(volume: &LabelVolume, config: &PipelineConfig) -> Result<CaseArtifacts, PruneError> {
    config.prune.validate()?;
    let vessel_mask = extract_mask(volume, LabelSelector::Label(VESSEL))?;
    let distance = edt(&vessel_mask);
    let skeleton = attach_radii(&skeletonize(&vessel_mask), &distance)?;
    let graph = build_graph(&skeleton);
    let branches = decompose_branches(&graph);
    let mut flags = Vec::new();

    let entries = match find_entries(&vessel_mask, &graph) {
        Ok(e) => Some(e),
        Err(_) => {
            flags.push(CaseFlag::NoEntries);
            None
        }
    };
    let pruned = match &entries {
        Some(e) => match prune_both(&graph, &branches, e, &config.prune, config.drop_noise_branches) {
            Ok(p) => Some(p),
            Err(PruneError::InvalidParams(m)) => return Err(PruneError::InvalidParams(m)),
            Err(_) => {
                flags.push(CaseFlag::NoEntries);
                None
            }
        },
        None => None,
    };
    let retained_mask = match &pruned {
        Some(p) => Some(reconstruct(&retained_voxels(&graph, &p.retained), &vessel_mask, config.dilation)?),
        None => None,
    };
    let liver = if config.clip_to_liver { Some(extract_mask(volume, LabelSelector::LiverUnion)?) } else { None };
    let hcz = match &retained_mask {
        Some(m) => match build_hcz(m, liver.as_ref()) {
            Ok(h) if h.mask.is_all_false() => {
                flags.push(CaseFlag::EmptyHcz);
                None
            }
            Ok(h) => Some(h),
            Err(HczError::Volume(e)) => return Err(e.into()),
            Err(_) => {
                flags.push(CaseFlag::DegenerateHull);
                None
            }
        },
        None => None,
    };

    let mut biomarkers = compute_biomarkers(volume, hcz.as_ref(), &BiomarkerOptions { min_lesion_voxels: config.min_lesion_voxels });
    if hcz.is_none() && !flags.is_empty() {
        biomarkers.flags.retain(|f| *f == CaseFlag::NoLesion);
    }
    biomarkers.flags.extend(flags);
    biomarkers.flags.sort();
    biomarkers.flags.dedup();

    let report = branch_report(&graph, &branches, entries.as_ref(), pruned.as_ref());
    Ok(CaseArtifacts {
        vessel_mask,
        distance,
        skeleton,
        graph,
        branches,
        entries,
        pruned,
        retained_mask,
        hcz,
        report,
        biomarkers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_tree, LesionSpec, PhantomSpec};

    #[test]
    fn no_vessels_is_soft() {
        let spec = PhantomSpec { lesions: vec![LesionSpec { center: [43.5, 35.5, 35.5], radius: 3.0 }], ..PhantomSpec::default() };
        let (v, _) = generate_tree(&spec).unwrap();
        let data: Vec<u8> = v.grid().data().iter().map(|&l| if l == VESSEL { 1 } else { l }).collect();
        let v = LabelVolume::new(v.grid().with_data(data).unwrap()).unwrap();
        let a = run_case(&v, &PipelineConfig::default()).unwrap();
        assert_eq!(a.biomarkers.b_hcz, None);
        assert_eq!(a.biomarkers.flags, vec![CaseFlag::NoEntries]);
        assert!(a.biomarkers.v_les > 0.0);
    }
}
