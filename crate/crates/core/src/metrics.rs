//! Confusion matrices and the usual accuracy figures: OA, AA and Cohen's κ.

use std::ops::AddAssign;

use crate::error::{Result, SmsbError};

/// Rows are true classes, columns predicted classes, both indexed by `classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<u16>,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Chance agreement `p_e`.
    pub expected_agreement: f64,
    /// Recall per class, `None` for classes with no true samples.
    pub per_class: Vec<Option<f64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<u16>) -> Self {
        let c = classes.len();
        Self {
            classes,
            counts: vec![0; c * c],
        }
    }

    pub fn from_counts(classes: Vec<u16>, rows: &[Vec<u64>]) -> Result<Self> {
        let c = classes.len();
        if rows.len() != c || rows.iter().any(|r| r.len() != c) {
            return Err(SmsbError::Shape(format!("confusion matrix must be {c}x{c}")));
        }
        Ok(Self {
            classes,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    /// Tallies `(truth, predicted)` pairs. Class ids are taken from both sides.
    pub fn from_labels(truth: &[u16], predicted: &[u16]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(SmsbError::Shape(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut classes: Vec<u16> = truth.iter().chain(predicted).copied().collect();
        classes.sort_unstable();
        classes.dedup();
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p);
        }
        Ok(cm)
    }

    pub fn classes(&self) -> &[u16] {
        &self.classes
    }

    fn index(&self, class: u16) -> Option<usize> {
        self.classes.binary_search(&class).ok().or_else(|| {
            // classes need not be sorted when built from explicit counts
            self.classes.iter().position(|&c| c == class)
        })
    }

    /// Panics if either class is not part of the matrix.
    pub fn add(&mut self, truth: u16, predicted: u16) {
        let c = self.classes.len();
        let i = self.index(truth).expect("unknown true class");
        let j = self.index(predicted).expect("unknown predicted class");
        self.counts[i * c + j] += 1;
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.classes.len() + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        let c = self.classes.len();
        self.counts[i * c..(i + 1) * c].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        let c = self.classes.len();
        (0..c).map(|i| self.counts[i * c + j]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(SmsbError::Shape("cannot merge matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        self.merge(rhs).expect("matching classes");
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(SmsbError::EmptyInput("confusion matrix has no samples".into()));
    }
    let c = cm.classes.len();
    let n = total as f64;
    let trace: u64 = (0..c).map(|i| cm.get(i, i)).sum();
    let oa = trace as f64 / n;

    let per_class: Vec<Option<f64>> = (0..c)
        .map(|i| {
            let row = cm.row_sum(i);
            (row > 0).then(|| cm.get(i, i) as f64 / row as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let aa = defined.iter().sum::<f64>() / defined.len() as f64;

    // integer products keep p_e exact up to the final division
    let chance: u128 = (0..c)
        .map(|i| cm.row_sum(i) as u128 * cm.col_sum(i) as u128)
        .sum();
    let pe = chance as f64 / (total as u128 * total as u128) as f64;
    let kappa = if pe == 1.0 {
        if trace == total {
            1.0
        } else {
            return Err(SmsbError::DegenerateData(
                "kappa undefined: chance agreement is 1 without perfect agreement".into(),
            ));
        }
    } else {
        // (p_o - p_e) / (1 - p_e) with both sides scaled by total²
        let num = trace as i128 * total as i128 - chance as i128;
        let den = total as i128 * total as i128 - chance as i128;
        num as f64 / den as f64
    };
    Ok(Metrics {
        oa,
        aa,
        kappa,
        expected_agreement: pe,
        per_class,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator, 0 for one sample).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let cm = ConfusionMatrix::from_counts(vec![1, 2, 3], &[vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 2]])
            .unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!((m.oa, m.aa, m.kappa), (1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_is_skipped_in_aa() {
        let cm = ConfusionMatrix::from_counts(vec![1, 2], &[vec![50, 0], vec![0, 0]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.oa, 1.0);
        assert_eq!(m.aa, 1.0);
        assert_eq!(m.per_class, vec![Some(1.0), None]);
        assert_eq!(m.kappa, 1.0);
    }

    #[test]
    fn hand_computed_case() {
        let cm = ConfusionMatrix::from_counts(vec![1, 2], &[vec![40, 10], vec![20, 30]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.oa, 0.7);
        assert_eq!(m.aa, 0.7);
        assert_eq!(m.expected_agreement, 0.5);
        assert_eq!(m.kappa, 0.4);
    }

    #[test]
    fn empty_matrix() {
        let cm = ConfusionMatrix::new(vec![1, 2]);
        assert!(matches!(compute_metrics(&cm), Err(SmsbError::EmptyInput(_))));
    }

    #[test]
    fn from_labels_and_merge() {
        let a = ConfusionMatrix::from_labels(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap();
        let mut b = ConfusionMatrix::from_labels(&[1, 2], &[1, 1]).unwrap();
        assert_eq!(a.get(0, 1), 1);
        b += &a;
        assert_eq!(b.total(), 6);
        assert_eq!(b.get(1, 0), 1);
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
