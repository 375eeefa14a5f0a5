use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Area under the ROC curve as the Mann–Whitney statistic; tied scores
/// count one half.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    // average ranks over tie blocks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Macro one-vs-rest AUC over `B×o` scores. Classes absent from `labels`
/// are skipped; at least one class must be scorable.
pub fn roc_auc_macro<T: Scalar>(scores: &[T], labels: &[usize], n_classes: usize) -> Result<f64> {
    if scores.len() != labels.len() * n_classes {
        return Err(Error::shape(format!(
            "{} scores for {} samples of {n_classes} classes",
            scores.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0;
    for c in 0..n_classes {
        let col: Vec<T> = (0..labels.len()).map(|i| scores[i * n_classes + c]).collect();
        let hits: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        match roc_auc(&col, &hits) {
            Ok(a) => {
                total += a;
                counted += 1;
            }
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric("no class has both positives and negatives".into()));
    }
    Ok(total / counted as f64)
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

/// Trapezoid rule over sample points `(x_i, y_i)`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2], &[false, false, true]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn macro_auc_skips_absent_classes() {
        let scores = [0.9, 0.1, 0.0, 0.2, 0.8, 0.0, 0.7, 0.3, 0.0];
        assert_eq!(roc_auc_macro(&scores, &[0, 1, 0], 3).unwrap(), 1.0);
    }

    #[test]
    fn trapezoid_and_linspace() {
        let grid = linspace(0.0, 0.5, 6);
        assert_eq!(grid.len(), 6);
        assert!(grid.iter().enumerate().all(|(i, &v)| (v - 0.1 * i as f64).abs() < 1e-15));
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
        assert!((trapezoid(&[0.0, 0.5, 1.0], &[1.0, 0.0, 0.0]) - 0.25).abs() < 1e-15);
        assert_eq!(trapezoid(&[0.0], &[3.0]), 0.0);
    }
}
