//! Voxel-grid containers for label volumes and binary masks.
//!
//! All grids store their elements in a flat vector in x-fastest order:
//! the element at `(x, y, z)` lives at `x + dims[0] * (y + dims[1] * z)`.
//! Physical coordinates of a voxel center are `index * spacing` (mm).

mod nrrd;

pub use nrrd::{read_nrrd, read_nrrd_file, write_nrrd, NrrdError};

use thiserror::Error;

pub const BACKGROUND: u8 = 0;
pub const LIVER: u8 = 1;
pub const LESION: u8 = 2;
pub const VESSEL: u8 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("grid dimensions must be positive, got {0:?}")]
    ZeroDimension([usize; 3]),
    #[error("voxel spacing must be finite and positive, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("data length {actual} does not match dims product {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("label value {value} at voxel {index} is not one of 0,1,2,3")]
    InvalidLabelValue { index: usize, value: u8 },
    #[error("mask value {value} at voxel {index} is not 0 or 1")]
    InvalidMaskValue { index: usize, value: u8 },
    #[error("label {0} cannot be extracted (expected 1, 2, 3 or the liver union)")]
    InvalidLabel(u8),
    #[error("grid geometry mismatch: {0:?}/{1:?} vs {2:?}/{3:?}")]
    GeometryMismatch([usize; 3], [f64; 3], [usize; 3], [f64; 3]),
}

/// A dense 3D grid with anisotropic spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

impl<T> VoxelGrid<T> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::ZeroDimension(dims));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Linear index of a signed coordinate, `None` when outside the grid.
    #[inline]
    pub fn checked_index(&self, x: i64, y: i64, z: i64) -> Option<usize> {
        if x < 0
            || y < 0
            || z < 0
            || x >= self.dims[0] as i64
            || y >= self.dims[1] as i64
            || z >= self.dims[2] as i64
        {
            None
        } else {
            Some(self.index(x as usize, y as usize, z as usize))
        }
    }

    /// Physical position (mm) of the center of voxel `index`.
    pub fn position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    pub fn same_geometry<U>(&self, other: &VoxelGrid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn check_geometry<U>(&self, other: &VoxelGrid<U>) -> Result<(), VolumeError> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(VolumeError::GeometryMismatch(
                self.dims,
                self.spacing,
                other.dims,
                other.spacing,
            ))
        }
    }

    /// A grid with this geometry and the given data.
    pub fn with_data<U>(&self, data: Vec<U>) -> Result<VoxelGrid<U>, VolumeError> {
        VoxelGrid::new(self.dims, self.spacing, data)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> VoxelGrid<U> {
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> VoxelGrid<T> {
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self, VolumeError> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![value; n])
    }
}

/// Volume of a single voxel in mm³.
pub fn voxel_volume<T>(grid: &VoxelGrid<T>) -> f64 {
    let s = grid.spacing();
    s[0] * s[1] * s[2]
}

/// Which voxels [`extract_mask`] selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSelector {
    Label(u8),
    /// Labels 1, 2 and 3 together: the whole organ including lesions and vessels.
    LiverUnion,
}

pub const LIVER_UNION: LabelSelector = LabelSelector::LiverUnion;

/// Segmentation with labels 0 = background, 1 = liver, 2 = lesion, 3 = vessel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume(VoxelGrid<u8>);

impl LabelVolume {
    pub fn new(grid: VoxelGrid<u8>) -> Result<Self, VolumeError> {
        if let Some((index, &value)) = grid.data().iter().enumerate().find(|(_, &v)| v > VESSEL) {
            return Err(VolumeError::InvalidLabelValue { index, value });
        }
        Ok(Self(grid))
    }

    /// Builds a label volume from arbitrary input values; `remap[v]` gives
    /// the label for input value `v` (unlisted values map to background).
    pub fn from_remapped(grid: VoxelGrid<u8>, remap: &[(u8, u8)]) -> Result<Self, VolumeError> {
        let mut table: [u8; 256] = [BACKGROUND; 256];
        for &(from, to) in remap {
            if to > VESSEL {
                return Err(VolumeError::InvalidLabel(to));
            }
            table[from as usize] = to;
        }
        Ok(Self(grid.map(|&v| table[v as usize])))
    }

    pub fn grid(&self) -> &VoxelGrid<u8> {
        &self.0
    }

    pub fn into_grid(self) -> VoxelGrid<u8> {
        self.0
    }
}

/// Boolean voxel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(VoxelGrid<bool>);

impl BinaryMask {
    pub fn new(grid: VoxelGrid<bool>) -> Self {
        Self(grid)
    }

    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        Ok(Self(VoxelGrid::filled(dims, spacing, false)?))
    }

    pub fn from_u8(grid: VoxelGrid<u8>) -> Result<Self, VolumeError> {
        if let Some((index, &value)) = grid.data().iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(VolumeError::InvalidMaskValue { index, value });
        }
        Ok(Self(grid.map(|&v| v == 1)))
    }

    pub fn to_u8(&self) -> VoxelGrid<u8> {
        self.0.map(|&b| b as u8)
    }

    pub fn grid(&self) -> &VoxelGrid<bool> {
        &self.0
    }

    pub fn grid_mut(&mut self) -> &mut VoxelGrid<bool> {
        &mut self.0
    }

    pub fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.0.spacing()
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.0.data()[index]
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        self.0.data_mut()[index] = value;
    }

    /// Value at a signed coordinate; out-of-bounds reads as `false`.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        self.0.checked_index(x, y, z).is_some_and(|i| self.0.data()[i])
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&b| b).count()
    }

    pub fn is_all_false(&self) -> bool {
        !self.0.data().iter().any(|&b| b)
    }

    /// Linear indices of the true voxels in raster order.
    pub fn true_indices(&self) -> Vec<usize> {
        self.0
            .data()
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask, VolumeError> {
        self.0.check_geometry(&other.0)?;
        let data = self.0.data().iter().zip(other.0.data()).map(|(&a, &b)| a && b).collect();
        Ok(BinaryMask(self.0.with_data(data)?))
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask, VolumeError> {
        self.0.check_geometry(&other.0)?;
        let data = self.0.data().iter().zip(other.0.data()).map(|(&a, &b)| a || b).collect();
        Ok(BinaryMask(self.0.with_data(data)?))
    }

    /// `true` when every true voxel of `self` is also true in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.0.same_geometry(&other.0)
            && self.0.data().iter().zip(other.0.data()).all(|(&a, &b)| !a || b)
    }
}

pub fn extract_mask(volume: &LabelVolume, selector: LabelSelector) -> Result<BinaryMask, VolumeError> {
    let grid = volume.grid();
    match selector {
        LabelSelector::Label(label @ (LIVER | LESION | VESSEL)) => {
            Ok(BinaryMask(grid.map(|&v| v == label)))
        }
        LabelSelector::Label(other) => Err(VolumeError::InvalidLabel(other)),
        LabelSelector::LiverUnion => Ok(BinaryMask(grid.map(|&v| v != BACKGROUND))),
    }
}
