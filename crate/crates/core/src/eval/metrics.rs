use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifiers::{Prediction, N_CLASSES};
use crate::corpus::DeauvilleLabel;
use crate::error::{Error, Result};

/// Counts with rows indexed by the true class and columns by the predicted class.
pub type Confusion = [[u64; N_CLASSES]; N_CLASSES];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Linear,
    Quadratic,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Linear => "linear",
            Weighting::Quadratic => "quadratic",
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Weighting::Linear),
            "quadratic" => Ok(Weighting::Quadratic),
            other => Err(Error::validation(format!("unknown kappa weighting `{other}`"))),
        }
    }
}

/// A prediction paired with the physician-assigned label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub prediction: Prediction,
    pub truth: DeauvilleLabel,
}

impl ScoredPrediction {
    pub fn pair(&self) -> (DeauvilleLabel, DeauvilleLabel) {
        (self.truth, self.prediction.predicted)
    }
}

/// Fraction of exact matches over `(truth, predicted)` pairs.
pub fn accuracy(pairs: &[(DeauvilleLabel, DeauvilleLabel)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("accuracy of an empty prediction set"));
    }
    let hits = pairs.iter().filter(|(t, p)| t == p).count();
    Ok(hits as f64 / pairs.len() as f64)
}

pub fn confusion(pairs: &[(DeauvilleLabel, DeauvilleLabel)]) -> Confusion {
    let mut m = [[0u64; N_CLASSES]; N_CLASSES];
    for (t, p) in pairs {
        m[t.index()][p.index()] += 1;
    }
    m
}

/// Weighted Cohen's kappa, `1 - sum(w O) / sum(w E)` with `w = |i-j|` or
/// `(i-j)^2`. Both sums are computed exactly in integer arithmetic on counts,
/// so the degenerate case is detected without a tolerance.
pub fn weighted_kappa(m: &Confusion, weighting: Weighting) -> Result<f64> {
    let n: i128 = m.iter().flatten().map(|&c| c as i128).sum();
    if n == 0 {
        return Err(Error::validation("weighted kappa of an empty confusion matrix"));
    }
    let rows: Vec<i128> = m.iter().map(|r| r.iter().map(|&c| c as i128).sum()).collect();
    let cols: Vec<i128> = (0..N_CLASSES).map(|j| m.iter().map(|r| r[j] as i128).sum()).collect();
    let w = |i: usize, j: usize| -> i128 {
        let d = i.abs_diff(j) as i128;
        match weighting {
            Weighting::Linear => d,
            Weighting::Quadratic => d * d,
        }
    };
    let mut observed: i128 = 0;
    for (i, row) in m.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            observed += w(i, j) * c as i128;
        }
    }
    // n^2 * sum(w E) from the marginals alone.
    let expected = match weighting {
        Weighting::Linear => {
            // |i-j| counts the thresholds k with min(i,j) <= k < max(i,j).
            let (mut cr, mut cc, mut acc) = (0i128, 0i128, 0i128);
            for k in 0..N_CLASSES - 1 {
                cr += rows[k];
                cc += cols[k];
                acc += cr * (n - cc) + cc * (n - cr);
            }
            acc
        }
        Weighting::Quadratic => {
            let moment = |v: &[i128], p: u32| -> i128 { v.iter().enumerate().map(|(i, &x)| (i as i128).pow(p) * x).sum() };
            n * moment(&rows, 2) + n * moment(&cols, 2) - 2 * moment(&rows, 1) * moment(&cols, 1)
        }
    };
    if expected == 0 {
        return Err(Error::UndefinedKappa(
            "all ratings fall in a single class, so chance disagreement is zero".into(),
        ));
    }
    Ok(1.0 - (n * observed) as f64 / expected as f64)
}

/// Test-set outcome of one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub iteration: usize,
    pub predictions: Vec<ScoredPrediction>,
    pub accuracy: f64,
    pub kappa_w: f64,
    pub confusion: Confusion,
}

impl FoldResult {
    pub fn new(iteration: usize, predictions: Vec<ScoredPrediction>, weighting: Weighting) -> Result<Self> {
        let pairs: Vec<_> = predictions.iter().map(ScoredPrediction::pair).collect();
        let accuracy = accuracy(&pairs)?;
        let confusion = confusion(&pairs);
        let kappa_w = weighted_kappa(&confusion, weighting)?;
        Ok(FoldResult {
            iteration,
            predictions,
            accuracy,
            kappa_w,
            confusion,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub model_name: String,
    pub weighting: Weighting,
    pub acc_mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub acc_sd: f64,
    pub kappa_mean: f64,
    /// Sorted by iteration.
    pub folds: Vec<FoldResult>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample SD over folds. Folds are ordered by iteration first, so
/// the summary does not depend on completion order.
pub fn aggregate(model_name: &str, weighting: Weighting, mut folds: Vec<FoldResult>) -> Result<MetricSummary> {
    if folds.len() < 2 {
        return Err(Error::validation(format!(
            "aggregation needs at least 2 folds, got {}",
            folds.len()
        )));
    }
    folds.sort_by_key(|f| f.iteration);
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let kappas: Vec<f64> = folds.iter().map(|f| f.kappa_w).collect();
    let (acc_mean, acc_sd) = mean_sd(&accs);
    let (kappa_mean, _) = mean_sd(&kappas);
    Ok(MetricSummary {
        model_name: model_name.to_string(),
        weighting,
        acc_mean,
        acc_sd,
        kappa_mean,
        folds,
    })
}

/// Single-point agreement of an external rater with the reference labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSummary {
    pub n_cases: usize,
    pub weighting: Weighting,
    pub accuracy: f64,
    pub kappa_w: f64,
    pub confusion: Confusion,
}

/// Scores `(exam_id, predicted)` pairs against `truths`.
pub fn compare_expert(
    expert: &[(String, DeauvilleLabel)],
    truths: &BTreeMap<String, DeauvilleLabel>,
    weighting: Weighting,
) -> Result<ExpertSummary> {
    let mut seen = std::collections::HashSet::new();
    let pairs = expert
        .iter()
        .map(|(id, p)| {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!("exam {id} appears twice in the expert file")));
            }
            truths
                .get(id)
                .map(|t| (*t, *p))
                .ok_or_else(|| Error::validation(format!("unknown exam id {id} in expert file")))
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracy = accuracy(&pairs)?;
    let confusion = confusion(&pairs);
    Ok(ExpertSummary {
        n_cases: pairs.len(),
        weighting,
        accuracy,
        kappa_w: weighted_kappa(&confusion, weighting)?,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: u8) -> DeauvilleLabel {
        DeauvilleLabel::new(v).unwrap()
    }

    #[test]
    fn accuracy_counts_exact_matches() {
        let pairs: Vec<_> = [1, 2, 3, 4, 5].iter().zip([1, 2, 3, 4, 4]).map(|(&t, p)| (l(t), l(p))).collect();
        assert!((accuracy(&pairs).unwrap() - 0.8).abs() < 1e-15);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn diagonal_kappa_is_exactly_one() {
        let mut m = [[0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 3 + i as u64;
        }
        assert_eq!(weighted_kappa(&m, Weighting::Linear).unwrap(), 1.0);
        assert_eq!(weighted_kappa(&m, Weighting::Quadratic).unwrap(), 1.0);
    }

    #[test]
    fn single_cell_kappa_is_undefined() {
        let mut m = [[0; 5]; 5];
        m[0][0] = 10;
        assert!(matches!(weighted_kappa(&m, Weighting::Linear), Err(Error::UndefinedKappa(_))));
    }

    #[test]
    fn two_fold_sample_sd() {
        let fold = |it, acc| FoldResult {
            iteration: it,
            predictions: vec![],
            accuracy: acc,
            kappa_w: 0.5,
            confusion: [[0; 5]; 5],
        };
        let s = aggregate("m", Weighting::Linear, vec![fold(2, 0.8), fold(1, 0.7)]).unwrap();
        assert!((s.acc_mean - 0.75).abs() < 1e-12);
        assert!((s.acc_sd - 0.0707106781186548).abs() < 1e-12);
        assert!(aggregate("m", Weighting::Linear, vec![fold(1, 0.7)]).is_err());
    }
}
