use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Biomarker features in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "B_HCZ")]
    BHcz,
    #[serde(rename = "N_Les")]
    NLes,
    #[serde(rename = "V_Les")]
    VLes,
    #[serde(rename = "V_Liv")]
    VLiv,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::BHcz, Feature::NLes, Feature::VLes, Feature::VLiv];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::BHcz => "B_HCZ",
            Feature::NLes => "N_Les",
            Feature::VLes => "V_Les",
            Feature::VLiv => "V_Liv",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Feature::BHcz => "b_hcz",
            Feature::NLes => "n_les",
            Feature::VLes => "v_les_mm3",
            Feature::VLiv => "v_liv_mm3",
        }
    }

    pub fn parse(s: &str) -> Option<Feature> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s) || f.column().eq_ignore_ascii_case(s))
    }
}

/// Sorts and deduplicates a feature list into the fixed order.
pub fn canonical_subset(features: &[Feature]) -> Vec<Feature> {
    let mut v = features.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Label rule for a 1–10 complexity score.
pub fn label_from_score(score: u8) -> u8 {
    u8::from(score > 5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    /// Values in `Feature::ALL` order; NaN marks a missing value.
    pub features: [f64; 4],
    pub raw_score: Option<u8>,
    pub label: u8,
}

impl CaseRecord {
    pub fn value(&self, f: Feature) -> f64 {
        self.features[f.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<CaseRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    case_id: String,
    b_hcz: Option<f64>,
    n_les: Option<f64>,
    v_les_mm3: Option<f64>,
    v_liv_mm3: Option<f64>,
    #[serde(default)]
    raw_score: Option<u8>,
    #[serde(default)]
    label: Option<u8>,
}

impl Dataset {
    pub fn new(records: Vec<CaseRecord>) -> Result<Self, ClassifierError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.case_id.as_str()) {
                return Err(ClassifierError::DuplicateCaseId(r.case_id.clone()));
            }
            if r.label > 1 {
                return Err(ClassifierError::InvalidLabel { case_id: r.case_id.clone(), label: r.label });
            }
            if let Some(s) = r.raw_score {
                if !(1..=10).contains(&s) {
                    return Err(ClassifierError::InvalidRawScore { case_id: r.case_id.clone(), score: s });
                }
                if label_from_score(s) != r.label {
                    return Err(ClassifierError::LabelMismatch(r.case_id.clone()));
                }
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Copy without record `i`.
    pub fn without(&self, i: usize) -> Dataset {
        let mut records = self.records.clone();
        records.remove(i);
        Dataset { records }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ClassifierError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(|e| ClassifierError::Csv(e.to_string()))?;
            let label = match (row.label, row.raw_score) {
                (Some(l), _) => l,
                (None, Some(s)) => label_from_score(s),
                (None, None) => return Err(ClassifierError::MissingLabel(row.case_id)),
            };
            let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
            records.push(CaseRecord {
                features: [nan(row.b_hcz), nan(row.n_les), nan(row.v_les_mm3), nan(row.v_liv_mm3)],
                case_id: row.case_id,
                raw_score: row.raw_score,
                label,
            });
        }
        Dataset::new(records)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ClassifierError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let some = |v: f64| (!v.is_nan()).then_some(v);
        for r in &self.records {
            wtr.serialize(CsvRow {
                case_id: r.case_id.clone(),
                b_hcz: some(r.features[0]),
                n_les: some(r.features[1]),
                v_les_mm3: some(r.features[2]),
                v_liv_mm3: some(r.features[3]),
                raw_score: r.raw_score,
                label: Some(r.label),
            })
            .map_err(|e| ClassifierError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| ClassifierError::Csv(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, score: Option<u8>, label: u8) -> CaseRecord {
        CaseRecord { case_id: id.into(), features: [0.5, 1.0, 2.0, 3.0], raw_score: score, label }
    }

    #[test]
    fn score_threshold() {
        assert_eq!(label_from_score(5), 0);
        assert_eq!(label_from_score(6), 1);
        assert!(Dataset::new(vec![rec("a", Some(6), 0)]).is_err());
        assert!(Dataset::new(vec![rec("a", Some(5), 0), rec("a", None, 1)]).is_err());
        assert!(Dataset::new(vec![rec("a", Some(11), 1)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut r = rec("b", None, 1);
        r.features[0] = f64::NAN;
        let d = Dataset::new(vec![rec("a", Some(7), 1), r]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("case_id,b_hcz,n_les,v_les_mm3,v_liv_mm3,raw_score,label\n"));
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back.records[0], d.records[0]);
        assert!(back.records[1].features[0].is_nan());
    }

    #[test]
    fn csv_without_score_column() {
        let text = "case_id,b_hcz,n_les,v_les_mm3,v_liv_mm3,label\nx,0.1,1,10,100,0\n";
        let d = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.records[0].raw_score, None);
        assert_eq!(d.records[0].features, [0.1, 1.0, 10.0, 100.0]);
        let derived = "case_id,b_hcz,n_les,v_les_mm3,v_liv_mm3,raw_score,label\nx,0.1,1,10,100,8,\n";
        assert_eq!(Dataset::read_csv(derived.as_bytes()).unwrap().records[0].label, 1);
    }
}
