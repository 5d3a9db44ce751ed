use hcz_core::biomarkers::CaseFlag;
use hcz_core::classifier::{CaseRecord, Dataset};
use hcz_core::phantom::{generate_dataset, generate_tree, DatasetOptions, LesionSpec, PhantomSpec, Placement};
use hcz_core::pipeline::{run_case, PipelineConfig};
use hcz_core::volume::{read_nrrd, write_nrrd, LabelVolume};

fn with_lesion(center: [f64; 3], radius: f64) -> LabelVolume {
    let spec = PhantomSpec { lesions: vec![LesionSpec { center, radius }], ..PhantomSpec::default() };
    generate_tree(&spec).unwrap().0
}

#[test]
fn central_lesion_is_positive() {
    let c = PhantomSpec::default().center();
    let a = run_case(&with_lesion(c, 4.0), &PipelineConfig::default()).unwrap();
    let b = a.biomarkers.b_hcz.unwrap();
    assert!(b > 0.0 && b <= 1.0, "{b}");
    assert!(a.biomarkers.flags.is_empty());
    assert_eq!(a.biomarkers.n_les, 1);
}

#[test]
fn planted_placements_have_matching_sign() {
    let cases = generate_dataset(&DatasetOptions { n_cases: 12, ..DatasetOptions::default() }).unwrap();
    let mut agree = 0;
    for c in &cases {
        let b = run_case(&c.volume, &PipelineConfig::default()).unwrap().biomarkers.b_hcz.unwrap();
        let inside = c.placement == Placement::InsideHull;
        agree += usize::from(inside == (b > 0.0));
    }
    assert!(agree >= 11, "{agree} of 12");
}

#[test]
fn rerun_is_identical() {
    let c = PhantomSpec::default().center();
    let v = with_lesion([c[0], c[1] + 20.0, c[2]], 3.0);
    let a = run_case(&v, &PipelineConfig::default()).unwrap();
    let b = run_case(&v, &PipelineConfig::default()).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.biomarkers, b.biomarkers);
    assert_eq!(a.hcz.map(|h| h.mask), b.hcz.map(|h| h.mask));
}

#[test]
fn missing_lesion_is_flagged() {
    let (v, _) = generate_tree(&PhantomSpec::default()).unwrap();
    let a = run_case(&v, &PipelineConfig::default()).unwrap();
    assert!(a.hcz.is_some());
    assert_eq!(a.biomarkers.b_hcz, None);
    assert_eq!(a.biomarkers.flags, vec![CaseFlag::NoLesion]);
}

#[test]
fn clipping_and_noise_options_shrink_the_zone() {
    let c = PhantomSpec::default().center();
    let v = with_lesion(c, 3.0);
    let base = run_case(&v, &PipelineConfig::default()).unwrap();
    let clipped = run_case(&v, &PipelineConfig { clip_to_liver: true, ..PipelineConfig::default() }).unwrap();
    let dropped = run_case(&v, &PipelineConfig { drop_noise_branches: true, ..PipelineConfig::default() }).unwrap();
    let zone = base.hcz.unwrap().mask;
    assert!(clipped.hcz.unwrap().mask.is_subset_of(&zone));
    assert!(dropped.retained_mask.unwrap().is_subset_of(base.retained_mask.as_ref().unwrap()));
}

#[test]
fn volume_and_dataset_round_trip() {
    let c = PhantomSpec::default().center();
    let v = with_lesion(c, 3.0);
    let back = LabelVolume::new(read_nrrd(&write_nrrd(v.grid())).unwrap()).unwrap();
    assert_eq!(back, v);

    let records = vec![
        CaseRecord { case_id: "a".into(), features: [0.25, 1.0, 113.0, 1.5e5], raw_score: Some(7), label: 1 },
        CaseRecord { case_id: "b".into(), features: [-0.125, 2.0, 50.5, 1.25e5], raw_score: None, label: 0 },
    ];
    let d = Dataset::new(records).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), d);
}
