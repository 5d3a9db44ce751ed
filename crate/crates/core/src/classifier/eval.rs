use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{canonical_subset, Dataset, Feature};
use super::model::{fit, FitOptions};
use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in predicted.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        (self.tp + self.tn) as f64 / total as f64
    }

    /// F1 of the positive class, 0 when precision + recall is 0.
    pub fn f1(&self) -> f64 {
        let precision = if self.tp + self.fp == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 };
        let recall = if self.tp + self.fn_ == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

/// Mann-Whitney AUC from midranks; `None` when one class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..labels.len()).filter(|&k| labels[k] == 1).map(|k| ranks[k]).sum();
    let p = positives as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub features: Vec<Feature>,
    pub accuracy: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub case_ids: Vec<String>,
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Leave-one-out evaluation: one fit per held-out record.
pub fn loo_evaluate(d: &Dataset, subset: &[Feature], opts: &FitOptions) -> Result<EvalReport, ClassifierError> {
    if d.len() < 2 {
        return Err(ClassifierError::SingleRecord);
    }
    let features = canonical_subset(subset);
    let probabilities = (0..d.len())
        .into_par_iter()
        .map(|i| {
            let model = fit(&d.without(i), &features, opts)?;
            let held = &d.records[i];
            for &f in &features {
                if !held.value(f).is_finite() {
                    return Err(ClassifierError::NonFiniteFeature { case_id: held.case_id.clone(), feature: f.name() });
                }
            }
            Ok(model.predict_proba(&held.features))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(report(features, d, probabilities))
}

fn report(features: Vec<Feature>, d: &Dataset, probabilities: Vec<f64>) -> EvalReport {
    let labels = d.labels();
    let predicted: Vec<u8> = probabilities.iter().map(|&p| u8::from(p >= 0.5)).collect();
    let confusion = Confusion::from_predictions(&predicted, &labels);
    EvalReport {
        features,
        accuracy: confusion.accuracy(),
        f1: confusion.f1(),
        auc: auc(&probabilities, &labels),
        confusion,
        case_ids: d.records.iter().map(|r| r.case_id.clone()).collect(),
        probabilities,
        labels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above the threshold are called positive.
    pub threshold: f64,
}

/// ROC curve over the distinct scores, starting at (0, 0) with an infinite threshold.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Vec<RocPoint> {
    let positives = labels.iter().filter(|&&y| y == 1).count() as f64;
    let negatives = labels.len() as f64 - positives;
    let rate = |k: usize, total: f64| if total == 0.0 { 0.0 } else { k as f64 / total };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: rate(fp, negatives), tpr: rate(tp, positives), threshold });
    }
    points
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], writer: W) -> Result<(), ClassifierError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| ClassifierError::Csv(e.to_string());
    wtr.write_record(["fpr", "tpr", "threshold"]).map_err(err)?;
    for p in points {
        wtr.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()]).map_err(err)?;
    }
    wtr.flush().map_err(|e| ClassifierError::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationStep {
    /// Feature dropped to reach this subset; `None` for the baseline.
    pub removed: Option<Feature>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub rule: String,
    pub path: Vec<AblationStep>,
    /// Path subsets, then single-feature subsets not on the path.
    pub grid: Vec<EvalReport>,
}

pub const ELIMINATION_RULE: &str =
    "drop the feature whose removal maximizes LOO AUC; ties: higher accuracy, then the later feature in B_HCZ, N_Les, V_Les, V_Liv order";

/// Whether `a` beats `b` as the subset left after a removal.
fn better(a: &EvalReport, b: &EvalReport) -> bool {
    let key = |r: &EvalReport| r.auc.unwrap_or(f64::NEG_INFINITY);
    if key(a) != key(b) {
        return key(a) > key(b);
    }
    a.accuracy > b.accuracy
}

/// Backward elimination from `subset` down to a single feature.
pub fn ablate(d: &Dataset, subset: &[Feature], opts: &FitOptions) -> Result<Ablation, ClassifierError> {
    let start = canonical_subset(subset);
    if start.len() < 2 {
        return Err(ClassifierError::TooFewFeatures);
    }
    let mut cache: BTreeMap<Vec<Feature>, EvalReport> = BTreeMap::new();
    let mut evaluate = |s: &[Feature]| -> Result<EvalReport, ClassifierError> {
        if let Some(r) = cache.get(s) {
            return Ok(r.clone());
        }
        let r = loo_evaluate(d, s, opts)?;
        cache.insert(s.to_vec(), r.clone());
        Ok(r)
    };
    let mut path = vec![AblationStep { removed: None, report: evaluate(&start)? }];
    let mut current = start.clone();
    while current.len() > 1 {
        let mut best: Option<(Feature, EvalReport)> = None;
        // later features win ties, so scan in reverse and only replace on strict improvement
        for &f in current.iter().rev() {
            let rest: Vec<Feature> = current.iter().copied().filter(|&g| g != f).collect();
            let r = evaluate(&rest)?;
            if best.as_ref().is_none_or(|(_, b)| better(&r, b)) {
                best = Some((f, r));
            }
        }
        let (f, r) = best.expect("at least two features");
        current.retain(|&g| g != f);
        path.push(AblationStep { removed: Some(f), report: r });
    }
    let mut grid: Vec<EvalReport> = path.iter().map(|s| s.report.clone()).collect();
    for f in start {
        if !grid.iter().any(|r| r.features == [f]) {
            grid.push(evaluate(&[f])?);
        }
    }
    Ok(Ablation { rule: ELIMINATION_RULE.into(), path, grid })
}

/// Grid CSV: one indicator column per feature, then the metrics.
pub fn write_grid_csv<W: Write>(grid: &[EvalReport], writer: W) -> Result<(), ClassifierError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| ClassifierError::Csv(e.to_string());
    let mut header: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    header.extend(["accuracy", "f1", "auc"]);
    wtr.write_record(&header).map_err(err)?;
    for r in grid {
        let mut row: Vec<String> = Feature::ALL
            .iter()
            .map(|f| u8::from(r.features.contains(f)).to_string())
            .collect();
        row.push(r.accuracy.to_string());
        row.push(r.f1.to_string());
        row.push(r.auc.map(|a| a.to_string()).unwrap_or_default());
        wtr.write_record(&row).map_err(err)?;
    }
    wtr.flush().map_err(|e| ClassifierError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::dataset::CaseRecord;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
        let mut num = 0.0;
        let mut pairs = 0usize;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        (pairs > 0).then(|| num / pairs as f64)
    }

    #[test]
    fn auc_worked_example() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), Some(0.75));
        assert_eq!(auc(&[0.1, 0.2], &[1, 1]), None);
    }

    proptest::proptest! {
        #[test]
        fn auc_matches_pair_count(data in proptest::collection::vec((0u8..6, 0u8..2), 1..21)) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 5.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            let a = auc(&scores, &labels);
            let b = brute_auc(&scores, &labels);
            proptest::prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn f1_edge_cases() {
        let c = Confusion { tp: 0, fp: 0, tn: 3, fn_: 2 };
        assert_eq!(c.f1(), 0.0);
        let c = Confusion { tp: 2, fp: 1, tn: 3, fn_: 1 };
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
    }

    fn records(rows: &[([f64; 4], u8)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, &(features, label))| CaseRecord { case_id: format!("r{i:02}"), features, raw_score: None, label })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn separable_loo_is_perfect() {
        let d = records(&(0..10).map(|i| ([f64::from(i % 2), 0.0, 0.0, 0.0], (i % 2) as u8)).collect::<Vec<_>>());
        let r = loo_evaluate(&d, &[Feature::BHcz], &FitOptions::default()).unwrap();
        assert_eq!((r.accuracy, r.f1, r.auc), (1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn single_class_loo() {
        let d = records(&(0..6).map(|i| ([f64::from(i), 0.0, 0.0, 0.0], 1)).collect::<Vec<_>>());
        let r = loo_evaluate(&d, &[Feature::BHcz], &FitOptions::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.auc, None);
        assert_eq!(loo_evaluate(&d.without(0).without(0).without(0).without(0).without(0), &[Feature::BHcz], &FitOptions::default()), Err(ClassifierError::SingleRecord));
    }

    #[test]
    fn roc_endpoints() {
        let pts = roc_curve(&[0.9, 0.8, 0.8, 0.1], &[1, 0, 1, 0]);
        assert_eq!(pts.first().unwrap().threshold, f64::INFINITY);
        assert_eq!((pts.last().unwrap().fpr, pts.last().unwrap().tpr), (1.0, 1.0));
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[2].fpr, pts[2].tpr), (0.5, 1.0));
    }

    #[test]
    fn duplicate_informative_features_remove_later_key() {
        let rows: Vec<([f64; 4], u8)> = (0..12)
            .map(|i| {
                let y = (i % 2) as u8;
                let v = f64::from(y) + 0.1 * f64::from(i);
                ([v, v, 0.0, 0.0], y)
            })
            .collect();
        let a = ablate(&records(&rows), &[Feature::BHcz, Feature::NLes], &FitOptions::default()).unwrap();
        assert_eq!(a.path[1].removed, Some(Feature::NLes));
        assert_eq!(a.grid.len(), 3);
    }
}
