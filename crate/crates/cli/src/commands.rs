use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use hcz_core::biomarkers::BiomarkerRecord;
use hcz_core::classifier::{
    self, canonical_subset, roc_curve, write_grid_csv, write_roc_csv, CaseRecord, Dataset, EvalReport, Feature, FitOptions,
};
use hcz_core::phantom::{generate_dataset, DatasetOptions, PhantomSpec};
use hcz_core::pipeline::{run_case, CaseArtifacts, PipelineConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::{collect_inputs, read_volume, write_atomic, write_csv_with, write_grid, write_json, write_mask, CaseInput};

fn run_one(path: &Path, config: &PipelineConfig, remap: &[(u8, u8)]) -> Result<CaseArtifacts> {
    let volume = read_volume(path, remap)?;
    run_case(&volume, config).map_err(|e| CliError::at(path, e))
}

/// Intermediate masks and the branch report.
fn dump_intermediates(dir: &Path, a: &CaseArtifacts) -> Result<()> {
    write_mask(&dir.join("vessel.nrrd"), &a.vessel_mask)?;
    write_mask(&dir.join("skeleton.nrrd"), &a.skeleton.to_mask())?;
    if let Some(m) = &a.retained_mask {
        write_mask(&dir.join("retained.nrrd"), m)?;
    }
    write_json(&dir.join("branches.json"), &a.report)
}

#[derive(Serialize)]
struct HczSummary {
    volume_mm3: f64,
    diameter_mm: f64,
    hull_vertices: usize,
    hull_faces: usize,
}

fn dump_hcz(dir: &Path, a: &CaseArtifacts) -> Result<()> {
    if let Some(h) = &a.hcz {
        write_mask(&dir.join("hcz.nrrd"), &h.mask)?;
        write_atomic(&dir.join("hcz.obj"), h.hull.to_obj().as_bytes())?;
        write_json(
            &dir.join("hcz.json"),
            &HczSummary {
                volume_mm3: h.volume,
                diameter_mm: h.diameter,
                hull_vertices: h.hull.vertices.len(),
                hull_faces: h.hull.faces.len(),
            },
        )?;
    }
    Ok(())
}

fn case_id_of(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("case").to_string()
}

pub fn prune(input: &Path, out: &Path, config: &PipelineConfig, remap: &[(u8, u8)], quiet: bool) -> Result<()> {
    let a = run_one(input, config, remap)?;
    dump_intermediates(out, &a)?;
    if !quiet {
        println!(
            "{}: {} skeleton vertices, {} retained, flags {:?}",
            case_id_of(input),
            a.report.vertex_count,
            a.report.retained_vertices,
            a.biomarkers.flags
        );
    }
    Ok(())
}

pub fn hcz(input: &Path, out: &Path, config: &PipelineConfig, remap: &[(u8, u8)], quiet: bool) -> Result<()> {
    let a = run_one(input, config, remap)?;
    if !quiet {
        dump_intermediates(out, &a)?;
    }
    dump_hcz(out, &a)?;
    if !quiet {
        match &a.hcz {
            Some(h) => println!("{}: HCZ {:.1} mm3, diameter {:.2} mm", case_id_of(input), h.volume, h.diameter),
            None => println!("{}: no HCZ, flags {:?}", case_id_of(input), a.biomarkers.flags),
        }
    }
    Ok(())
}

pub fn export_mesh(input: &Path, out: &Path, config: &PipelineConfig, remap: &[(u8, u8)]) -> Result<()> {
    let a = run_one(input, config, remap)?;
    let h = a
        .hcz
        .as_ref()
        .ok_or_else(|| CliError::at(input, format!("no central zone (flags {:?})", a.biomarkers.flags)))?;
    write_atomic(out, h.hull.to_obj().as_bytes())
}

fn process(case: &CaseInput, out: &Path, config: &PipelineConfig, remap: &[(u8, u8)], quiet: bool) -> Result<BiomarkerRecord> {
    let a = run_one(&case.path, config, remap)?;
    let dir = out.join("cases").join(&case.case_id);
    if !quiet {
        dump_intermediates(&dir, &a)?;
        dump_hcz(&dir, &a)?;
    }
    let record = BiomarkerRecord::new(case.case_id.clone(), &a.biomarkers);
    write_json(&dir.join("biomarkers.json"), &record)?;
    Ok(record)
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    case_id: String,
    #[serde(default)]
    raw_score: Option<u8>,
    #[serde(default)]
    label: Option<u8>,
}

fn read_labels(path: &Path) -> Result<HashMap<String, LabelRow>> {
    let file = File::open(path).map_err(|e| CliError::at(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut labels = HashMap::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row.map_err(|e| CliError::at(path, e))?;
        if row.label.is_none() && row.raw_score.is_none() {
            return Err(CliError::at(path, format!("case {}: neither label nor raw score", row.case_id)));
        }
        if labels.contains_key(&row.case_id) {
            return Err(CliError::at(path, format!("duplicate case id {}", row.case_id)));
        }
        labels.insert(row.case_id.clone(), row);
    }
    Ok(labels)
}

fn to_dataset(records: &[BiomarkerRecord], labels: &HashMap<String, LabelRow>, labels_path: &Path) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let l = labels
            .get(&r.case_id)
            .ok_or_else(|| CliError::at(labels_path, format!("no label for case {}", r.case_id)))?;
        let label = match (l.label, l.raw_score) {
            (Some(v), _) => v,
            (None, Some(s)) => classifier::label_from_score(s),
            (None, None) => unreachable!("checked on read"),
        };
        rows.push(CaseRecord {
            case_id: r.case_id.clone(),
            features: [r.b_hcz.unwrap_or(f64::NAN), r.n_les as f64, r.v_les_mm3, r.v_liv_mm3],
            raw_score: l.raw_score,
            label,
        });
    }
    Dataset::new(rows).map_err(|e| CliError::at(labels_path, e))
}

fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    write_csv_with(path, |buf| d.write_csv(buf).map_err(|e| e.to_string()))
}

pub fn biomarkers(
    inputs: &[PathBuf],
    out: &Path,
    labels: Option<&Path>,
    config: &PipelineConfig,
    remap: &[(u8, u8)],
    quiet: bool,
) -> Result<Option<Dataset>> {
    let cases = collect_inputs(inputs)?;
    let label_map = labels.map(read_labels).transpose()?;
    let records: Vec<BiomarkerRecord> =
        cases.par_iter().map(|c| process(c, out, config, remap, quiet)).collect::<Result<_>>()?;
    write_json(&out.join("biomarkers.json"), &records)?;
    if !quiet {
        for r in &records {
            let b = r.b_hcz.map_or("undefined".to_string(), |v| format!("{v:.4}"));
            println!("{}: b_hcz {b}, n_les {}, v_les {:.1} mm3, flags {:?}", r.case_id, r.n_les, r.v_les_mm3, r.flags);
        }
    }
    match (labels, label_map) {
        (Some(path), Some(map)) => {
            let d = to_dataset(&records, &map, path)?;
            write_dataset(&out.join("dataset.csv"), &d)?;
            Ok(Some(d))
        }
        _ => Ok(None),
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| CliError::at(path, e))?;
    Dataset::read_csv(file).map_err(|e| CliError::at(path, e))
}

fn classifier_error(path: &Path, e: classifier::ClassifierError) -> CliError {
    CliError::at(path, e)
}

fn summary(r: &EvalReport) -> String {
    let names: Vec<&str> = r.features.iter().map(|f| f.name()).collect();
    let auc = r.auc.map_or("undefined".to_string(), |a| format!("{a:.4}"));
    format!("[{}] accuracy {:.4} f1 {:.4} auc {auc}", names.join(", "), r.accuracy, r.f1)
}

pub fn fit(dataset: &Path, out: &Path, features: &[Feature], opts: &FitOptions, quiet: bool) -> Result<()> {
    let d = read_dataset(dataset)?;
    let (model, trace) = classifier::fit_with_trace(&d, features, opts).map_err(|e| classifier_error(dataset, e))?;
    write_json(out, &model)?;
    if !quiet {
        println!(
            "{} iterations, gradient norm {:.3e}, converged {}",
            trace.objective.len() - 1,
            trace.gradient_norm,
            trace.converged
        );
    }
    Ok(())
}

pub fn evaluate(dataset: &Path, out: &Path, features: &[Feature], opts: &FitOptions, quiet: bool) -> Result<()> {
    let d = read_dataset(dataset)?;
    let r = classifier::loo_evaluate(&d, features, opts).map_err(|e| classifier_error(dataset, e))?;
    write_json(out, &r)?;
    if !quiet {
        println!("{}", summary(&r));
    }
    Ok(())
}

fn write_ablation(out: &Path, a: &classifier::Ablation) -> Result<()> {
    write_json(&out.join("ablation.json"), a)?;
    write_csv_with(&out.join("ablation_grid.csv"), |buf| write_grid_csv(&a.grid, buf).map_err(|e| e.to_string()))
}

pub fn ablate(dataset: &Path, out: &Path, features: &[Feature], opts: &FitOptions, quiet: bool) -> Result<()> {
    let d = read_dataset(dataset)?;
    let a = classifier::ablate(&d, features, opts).map_err(|e| classifier_error(dataset, e))?;
    write_ablation(out, &a)?;
    if !quiet {
        for step in &a.path {
            let removed = step.removed.map_or("-", |f| f.name());
            println!("removed {removed:>5}: {}", summary(&step.report));
        }
    }
    Ok(())
}

fn write_roc(path: &Path, r: &EvalReport) -> Result<()> {
    let points = roc_curve(&r.probabilities, &r.labels);
    write_csv_with(path, |buf| write_roc_csv(&points, buf).map_err(|e| e.to_string()))
}

pub fn roc(dataset: &Path, out: &Path, features: &[Feature], opts: &FitOptions) -> Result<()> {
    let d = read_dataset(dataset)?;
    let r = classifier::loo_evaluate(&d, features, opts).map_err(|e| classifier_error(dataset, e))?;
    write_roc(out, &r)
}

#[derive(Serialize)]
struct LabelOut<'a> {
    case_id: &'a str,
    raw_score: u8,
    label: u8,
}

pub fn phantom(n_cases: usize, seed: u64, complex_fraction: f64, spur_probability: f64, out: &Path, quiet: bool) -> Result<()> {
    if !(0.0..=1.0).contains(&complex_fraction) || !(0.0..=1.0).contains(&spur_probability) {
        return Err(CliError::Usage("probabilities must lie in [0, 1]".into()));
    }
    let opts = DatasetOptions {
        n_cases,
        seed,
        complex_fraction,
        template: PhantomSpec { spur_probability, ..DatasetOptions::default().template },
        ..DatasetOptions::default()
    };
    let cases = generate_dataset(&opts).map_err(|e| CliError::Usage(e.to_string()))?;
    cases.par_iter().try_for_each(|c| -> Result<()> {
        write_grid(&out.join(format!("{}.nrrd", c.case_id)), c.volume.grid())?;
        write_json(&out.join("truth").join(format!("{}.json", c.case_id)), &c.truth)
    })?;
    let rows: Vec<LabelOut> =
        cases.iter().map(|c| LabelOut { case_id: &c.case_id, raw_score: c.raw_score, label: c.label }).collect();
    write_csv_with(&out.join("labels.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for r in &rows {
            w.serialize(r).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    })?;
    write_json(&out.join("options.json"), &opts)?;
    if !quiet {
        let complex = cases.iter().filter(|c| c.label == 1).count();
        println!("{} cases ({complex} complex) written to {}", cases.len(), out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct Metrics {
    loo: EvalReport,
    /// Same subset without B_HCZ, when B_HCZ is selected with other features.
    loo_without_b_hcz: Option<EvalReport>,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    inputs: &[PathBuf],
    out: &Path,
    labels: &Path,
    config: &PipelineConfig,
    remap: &[(u8, u8)],
    features: &[Feature],
    opts: &FitOptions,
    quiet: bool,
) -> Result<()> {
    let d = biomarkers(inputs, out, Some(labels), config, remap, quiet)?.expect("labels given");
    let dataset_path = out.join("dataset.csv");
    let features = canonical_subset(features);
    let loo = classifier::loo_evaluate(&d, &features, opts).map_err(|e| classifier_error(&dataset_path, e))?;
    let reduced: Vec<Feature> = features.iter().copied().filter(|&f| f != Feature::BHcz).collect();
    let loo_without_b_hcz = if reduced.len() < features.len() && !reduced.is_empty() {
        Some(classifier::loo_evaluate(&d, &reduced, opts).map_err(|e| classifier_error(&dataset_path, e))?)
    } else {
        None
    };
    write_roc(&out.join("roc.csv"), &loo)?;
    if features.len() >= 2 {
        let a = classifier::ablate(&d, &features, opts).map_err(|e| classifier_error(&dataset_path, e))?;
        write_ablation(out, &a)?;
    }
    if !quiet {
        println!("{}", summary(&loo));
        if let Some(r) = &loo_without_b_hcz {
            println!("{}", summary(r));
        }
    }
    write_json(&out.join("metrics.json"), &Metrics { loo, loo_without_b_hcz })
}
