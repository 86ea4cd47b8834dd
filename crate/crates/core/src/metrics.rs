use serde::{Deserialize, Serialize};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_predictions(pred: &[usize], truth: &[usize], classes: usize) -> Self {
        let mut m = Self::new(classes);
        for (&p, &t) in pred.iter().zip(truth) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Recall per true class; `None` for classes absent from the truth.
    pub per_class: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    /// OA, AA (mean recall over classes present) and Cohen's kappa.
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let n = confusion.total() as f64;
        let k = confusion.counts.len();
        let diag: u64 = (0..k).map(|i| confusion.counts[i][i]).sum();
        let oa = if n > 0.0 { diag as f64 / n } else { 0.0 };
        let per_class: Vec<Option<f64>> = confusion
            .counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let s: u64 = row.iter().sum();
                (s > 0).then(|| row[i] as f64 / s as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let aa = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        let mut pe = 0.0;
        for i in 0..k {
            let row: u64 = confusion.counts[i].iter().sum();
            let col: u64 = confusion.counts.iter().map(|r| r[i]).sum();
            pe += row as f64 * col as f64;
        }
        let pe = if n > 0.0 { pe / (n * n) } else { 0.0 };
        let kappa = if (1.0 - pe).abs() < 1e-15 { 1.0 } else { (oa - pe) / (1.0 - pe) };
        Self { oa, aa, kappa, per_class, confusion }
    }

    pub fn from_predictions(pred: &[usize], truth: &[usize], classes: usize) -> Self {
        Self::from_confusion(ConfusionMatrix::from_predictions(pred, truth, classes))
    }
}

/// Index of the largest entry of each row; ties resolve to the lowest index.
pub fn argmax_rows<T: PartialOrd + Copy>(data: &[T], width: usize) -> Vec<usize> {
    data.chunks(width)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Pearson correlations between the columns of `a: [n, da]` and `b: [n, db]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    pub matrix: Vec<Vec<f64>>,
    /// `true` where either column has zero variance; those entries are 0.
    pub undefined: Vec<Vec<bool>>,
}

pub fn correlation_matrix(a: &[f64], b: &[f64], n: usize, da: usize, db: usize) -> Correlation {
    assert_eq!(a.len(), n * da);
    assert_eq!(b.len(), n * db);
    let stats = |x: &[f64], d: usize| -> Vec<(f64, f64)> {
        (0..d)
            .map(|j| {
                let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
                let ss = (0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>();
                (mean, ss.sqrt())
            })
            .collect()
    };
    let (sa, sb) = (stats(a, da), stats(b, db));
    let mut matrix = vec![vec![0.0; db]; da];
    let mut undefined = vec![vec![false; db]; da];
    for i in 0..da {
        for j in 0..db {
            let denom = sa[i].1 * sb[j].1;
            if denom == 0.0 {
                undefined[i][j] = true;
                continue;
            }
            let cov: f64 = (0..n).map(|r| (a[r * da + i] - sa[i].0) * (b[r * db + j] - sb[j].0)).sum();
            matrix[i][j] = (cov / denom).clamp(-1.0, 1.0);
        }
    }
    Correlation { matrix, undefined }
}

impl Correlation {
    /// Mean absolute correlation over defined entries.
    pub fn mean_abs(&self) -> f64 {
        let vals: Vec<f64> = self
            .matrix
            .iter()
            .flatten()
            .zip(self.undefined.iter().flatten())
            .filter(|(_, &u)| !u)
            .map(|(v, _)| v.abs())
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let r = MetricsReport::from_predictions(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert_eq!(r.oa, 0.75);
        assert!((r.aa - 0.8333).abs() < 1e-4);
        assert!((r.kappa - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let r = MetricsReport::from_predictions(&[0, 1, 2], &[0, 1, 2], 3);
        assert_eq!((r.oa, r.aa, r.kappa), (1.0, 1.0, 1.0));
        let r = MetricsReport::from_predictions(&[0, 0, 0, 0], &[0, 1, 0, 1], 2);
        assert_eq!(r.kappa, 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax_rows(&[0.25f32, 0.25, 0.25, 0.25, 0.1, 0.45, 0.45, 0.0], 4), vec![0, 1]);
    }

    #[test]
    fn self_and_negated_correlation() {
        let a = [1.0, 2.0, 3.0, 0.5, 2.0, -1.0, 7.0, 1.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let c = correlation_matrix(&a, &a, 4, 2, 2);
        assert!((c.matrix[0][0] - 1.0).abs() < 1e-12 && (c.matrix[1][1] - 1.0).abs() < 1e-12);
        let c = correlation_matrix(&a, &neg, 4, 2, 2);
        assert!((c.matrix[0][0] + 1.0).abs() < 1e-12 && (c.matrix[1][1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_flagged() {
        let c = correlation_matrix(&[1.0, 1.0, 1.0], &[1.0, 2.0, 4.0], 3, 1, 1);
        assert!(c.undefined[0][0]);
        assert_eq!(c.matrix[0][0], 0.0);
    }
}
