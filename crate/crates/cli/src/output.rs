use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hcz_core::volume::{read_nrrd_file, write_nrrd, BinaryMask, LabelVolume, VoxelGrid};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::at(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::at(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::at(path, e))?;
    tmp.persist(path).map_err(|e| CliError::at(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_grid(path: &Path, grid: &VoxelGrid<u8>) -> Result<()> {
    write_atomic(path, &write_nrrd(grid))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_grid(path, &mask.to_u8())
}

pub fn write_csv_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), String>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::at(path, e))?;
    write_atomic(path, &buf)
}

/// One input volume and the case id taken from its file name.
#[derive(Debug, Clone)]
pub struct CaseInput {
    pub case_id: String,
    pub path: PathBuf,
}

/// Expands files and directories (every `*.nrrd` inside, sorted) into cases.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<CaseInput>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::at(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "nrrd"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::at(p, "no such file or directory"));
        }
    }
    if files.is_empty() {
        return Err(CliError::Input("no input volumes".into()));
    }
    let mut cases: Vec<CaseInput> = Vec::with_capacity(files.len());
    for path in files {
        let case_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::at(&path, "file name is not valid UTF-8"))?
            .to_string();
        if cases.iter().any(|c| c.case_id == case_id) {
            return Err(CliError::Input(format!("duplicate case id {case_id}")));
        }
        cases.push(CaseInput { case_id, path });
    }
    Ok(cases)
}

pub fn read_volume(path: &Path, remap: &[(u8, u8)]) -> Result<LabelVolume> {
    let grid = read_nrrd_file(path).map_err(|e| CliError::at(path, e))?;
    let volume = if remap.is_empty() { LabelVolume::new(grid) } else { LabelVolume::from_remapped(grid, remap) };
    volume.map_err(|e| CliError::at(path, e))
}
