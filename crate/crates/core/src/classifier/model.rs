use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::{canonical_subset, Dataset, Feature};
use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lambda: f64,
    pub standardize: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { lambda: 1.0, standardize: true, max_iterations: 1000, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub features: Vec<Feature>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 maps the feature to 0.
    pub stds: Vec<f64>,
    pub lambda: f64,
}

/// Optimizer record of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Objective after every accepted iterate, starting at the origin.
    pub objective: Vec<f64>,
    pub gradient_norm: f64,
    pub converged: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    fn scale(&self, k: usize, v: f64) -> f64 {
        if self.stds[k] == 0.0 {
            0.0
        } else {
            (v - self.means[k]) / self.stds[k]
        }
    }

    fn linear(&self, values: &[f64]) -> f64 {
        let mut z = self.intercept;
        for (k, &v) in values.iter().enumerate() {
            z += self.weights[k] * self.scale(k, v);
        }
        z
    }

    /// Probability of class 1 for values keyed by `features`.
    pub fn predict_proba_keyed(&self, features: &[Feature], values: &[f64]) -> Result<f64, ClassifierError> {
        if features != self.features.as_slice() || values.len() != features.len() {
            return Err(ClassifierError::FeatureKeyMismatch);
        }
        Ok(sigmoid(self.linear(values)))
    }

    /// Probability of class 1 for a full four-feature vector.
    pub fn predict_proba(&self, all: &[f64; 4]) -> f64 {
        let values: Vec<f64> = self.features.iter().map(|f| all[f.index()]).collect();
        sigmoid(self.linear(&values))
    }

    pub fn predict(&self, all: &[f64; 4]) -> u8 {
        u8::from(self.predict_proba(all) >= 0.5)
    }
}

struct Problem {
    /// Rows of standardized features with a leading 1.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    lambda: f64,
}

impl Problem {
    fn objective(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (row, &y) in self.x.iter().zip(&self.y) {
            let z = dot(row, theta);
            total += softplus(z) - y * z;
        }
        let penalty: f64 = theta[1..].iter().map(|w| w * w).sum();
        total + 0.5 * self.lambda * penalty
    }

    fn gradient_hessian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = theta.len();
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (row, &y) in self.x.iter().zip(&self.y) {
            let p = sigmoid(dot(row, theta));
            let s = p * (1.0 - p);
            for a in 0..d {
                g[a] += (p - y) * row[a];
                for b in 0..d {
                    h[(a, b)] += s * row[a] * row[b];
                }
            }
        }
        for a in 1..d {
            g[a] += self.lambda * theta[a];
            h[(a, a)] += self.lambda;
        }
        (g, h)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits an L2-regularized logistic regression by damped Newton steps.
pub fn fit(d: &Dataset, subset: &[Feature], opts: &FitOptions) -> Result<LogisticModel, ClassifierError> {
    fit_with_trace(d, subset, opts).map(|(m, _)| m)
}

pub fn fit_with_trace(d: &Dataset, subset: &[Feature], opts: &FitOptions) -> Result<(LogisticModel, FitTrace), ClassifierError> {
    if d.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let features = canonical_subset(subset);
    if features.is_empty() {
        return Err(ClassifierError::NoFeatures);
    }
    for r in &d.records {
        for &f in &features {
            if !r.value(f).is_finite() {
                return Err(ClassifierError::NonFiniteFeature { case_id: r.case_id.clone(), feature: f.name() });
            }
        }
    }
    let n = d.len() as f64;
    let mut means = vec![0.0; features.len()];
    let mut stds = vec![1.0; features.len()];
    if opts.standardize {
        for (k, &f) in features.iter().enumerate() {
            let mean = d.records.iter().map(|r| r.value(f)).sum::<f64>() / n;
            let var = d.records.iter().map(|r| (r.value(f) - mean).powi(2)).sum::<f64>() / n;
            means[k] = mean;
            stds[k] = var.sqrt();
        }
    }
    let mut model = LogisticModel {
        features: features.clone(),
        weights: vec![0.0; features.len()],
        intercept: 0.0,
        means,
        stds,
        lambda: opts.lambda,
    };
    let x: Vec<Vec<f64>> = d
        .records
        .iter()
        .map(|r| {
            std::iter::once(1.0)
                .chain(features.iter().enumerate().map(|(k, &f)| model.scale(k, r.value(f))))
                .collect()
        })
        .collect();
    let problem = Problem { x, y: d.records.iter().map(|r| f64::from(r.label)).collect(), lambda: opts.lambda };

    let dim = features.len() + 1;
    let mut theta = vec![0.0; dim];
    let mut value = problem.objective(&theta);
    let mut objective = vec![value];
    let mut converged = false;
    let mut gradient_norm = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let (g, h) = problem.gradient_hessian(&theta);
        gradient_norm = g.amax();
        if gradient_norm <= opts.tolerance {
            converged = true;
            break;
        }
        let step = match h.clone().cholesky() {
            Some(c) => -c.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let v = problem.objective(&candidate);
            if v <= value + 1e-4 * t * slope {
                accepted = Some((candidate, v));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, v)) = accepted else {
            break;
        };
        theta = candidate;
        value = v;
        objective.push(value);
    }
    model.intercept = theta[0];
    model.weights = theta[1..].to_vec();
    Ok((model, FitTrace { objective, gradient_norm, converged }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::dataset::CaseRecord;

    pub(crate) fn one_d(points: &[(f64, u8)]) -> Dataset {
        Dataset::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| CaseRecord { case_id: format!("c{i}"), features: [x, 0.0, 0.0, 0.0], raw_score: None, label: y })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_class_limit() {
        let d = one_d(&[(0.0, 0), (1.0, 0), (3.0, 0), (7.0, 0)]);
        let (m, trace) = fit_with_trace(&d, &[Feature::BHcz], &FitOptions::default()).unwrap();
        assert!(trace.converged);
        assert!(m.weights[0].abs() < 1e-8);
        assert!(m.intercept < -10.0);
        for r in &d.records {
            assert!(m.predict_proba(&r.features) < 0.5);
        }
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let pts: Vec<(f64, u8)> = (0..5).flat_map(|_| [(-1.0, 0), (1.0, 1)]).collect();
        let m = fit(&one_d(&pts), &[Feature::BHcz], &FitOptions::default()).unwrap();
        assert!(m.intercept.abs() < 1e-8);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn zero_model_and_training_mean() {
        let m = LogisticModel {
            features: vec![Feature::NLes],
            weights: vec![0.0],
            intercept: 0.0,
            means: vec![2.0],
            stds: vec![1.0],
            lambda: 1.0,
        };
        assert_eq!(m.predict_proba(&[0.0, 9.0, 0.0, 0.0]), 0.5);
        let m = LogisticModel { weights: vec![3.0], intercept: 0.7, ..m };
        assert_eq!(m.predict_proba(&[0.0, 2.0, 0.0, 0.0]), sigmoid(0.7));
        assert_eq!(m.predict_proba_keyed(&[Feature::VLes], &[1.0]), Err(ClassifierError::FeatureKeyMismatch));
    }

    #[test]
    fn constant_feature_passes_as_zero() {
        let d = one_d(&[(4.0, 0), (4.0, 1), (4.0, 1)]);
        let m = fit(&d, &[Feature::BHcz], &FitOptions::default()).unwrap();
        assert_eq!(m.stds[0], 0.0);
        assert_eq!(m.weights[0], 0.0);
        assert!((sigmoid(m.intercept) - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(fit(&Dataset::default(), &[Feature::BHcz], &FitOptions::default()), Err(ClassifierError::EmptyDataset));
        let d = one_d(&[(f64::NAN, 0), (1.0, 1)]);
        assert!(matches!(fit(&d, &[Feature::BHcz], &FitOptions::default()), Err(ClassifierError::NonFiniteFeature { .. })));
        assert!(fit(&d, &[Feature::NLes], &FitOptions::default()).is_ok());
        assert_eq!(fit(&d, &[], &FitOptions::default()), Err(ClassifierError::NoFeatures));
    }
}
