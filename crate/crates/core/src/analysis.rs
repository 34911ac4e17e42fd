//! Representation probes: k-nearest-neighbour role classification under
//! cosine distance, and Pearson correlation.

use thiserror::Error;

use crate::model::SpeakerRole;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("vector dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("series have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a series has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledVectors {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<SpeakerRole>,
}

impl LabeledVectors {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<SpeakerRole>) -> Result<Self, AnalysisError> {
        if vectors.len() != labels.len() {
            return Err(AnalysisError::LengthMismatch(vectors.len(), labels.len()));
        }
        if let Some(first) = vectors.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(AnalysisError::DimensionMismatch { expected: 1, found: 0 });
            }
            if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
                return Err(AnalysisError::DimensionMismatch { expected: dim, found: v.len() });
            }
        }
        Ok(LabeledVectors { vectors, labels })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }
}

/// `1 - cos(a, b)`; a zero vector is at the maximal distance 2 from everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 2.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Label by majority vote of the `k` nearest neighbours. Vote ties go to the
/// role with the smaller summed distance, then to `Child`.
pub fn knn_classify(train: &LabeledVectors, query: &[f64], k: usize) -> Result<SpeakerRole, AnalysisError> {
    if k == 0 || train.len() < k {
        return Err(AnalysisError::InsufficientData { needed: k.max(1), got: train.len() });
    }
    let dim = train.dim().expect("non-empty");
    if query.len() != dim {
        return Err(AnalysisError::DimensionMismatch { expected: dim, found: query.len() });
    }
    let mut dists: Vec<(f64, usize)> =
        train.vectors.iter().enumerate().map(|(i, v)| (cosine_distance(v, query), i)).collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = [0usize; 2];
    let mut summed = [0.0f64; 2];
    for &(d, i) in &dists[..k] {
        let r = train.labels[i].index();
        votes[r] += 1;
        summed[r] += d;
    }
    let (c, a) = (SpeakerRole::Child.index(), SpeakerRole::Adult.index());
    Ok(if votes[a] > votes[c] || (votes[a] == votes[c] && summed[a] < summed[c]) {
        SpeakerRole::Adult
    } else {
        SpeakerRole::Child
    })
}

/// Fraction of test vectors whose predicted role matches their label.
pub fn knn_probe(train: &LabeledVectors, test: &LabeledVectors, k: usize) -> Result<f64, AnalysisError> {
    if test.is_empty() {
        return Err(AnalysisError::InsufficientData { needed: 1, got: 0 });
    }
    let mut correct = 0usize;
    for (v, label) in test.vectors.iter().zip(&test.labels) {
        if knn_classify(train, v, k)? == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::InsufficientData { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use SpeakerRole::*;

    fn lv(points: &[(f64, f64, SpeakerRole)]) -> LabeledVectors {
        LabeledVectors::new(points.iter().map(|p| vec![p.0, p.1]).collect(), points.iter().map(|p| p.2).collect())
            .unwrap()
    }

    #[test]
    fn separated_clusters() {
        let train = lv(&[
            (1.0, 0.1, Child), (1.0, 0.0, Child), (0.9, 0.2, Child),
            (0.1, 1.0, Adult), (0.0, 1.0, Adult), (0.2, 0.9, Adult),
        ]);
        let test = lv(&[(1.0, 0.05, Child), (0.05, 1.0, Adult)]);
        assert_eq!(knn_probe(&train, &test, 3).unwrap(), 1.0);
        assert_eq!(knn_probe(&train, &train, 1).unwrap(), 1.0);
    }

    #[test]
    fn hand_example_with_one_miss() {
        // Neighbours by angle with k = 1: the fourth test point lies on the
        // child side but is labelled adult.
        let train = lv(&[(1.0, 0.0, Child), (0.0, 1.0, Adult)]);
        let test = lv(&[(2.0, 0.5, Child), (0.3, 3.0, Adult), (5.0, 1.0, Child), (1.0, 0.2, Adult)]);
        assert_eq!(knn_probe(&train, &test, 1).unwrap(), 0.75);
    }

    #[test]
    fn vote_tie_uses_summed_distance() {
        let train = lv(&[(1.0, 0.0, Child), (0.0, 1.0, Adult)]);
        assert_eq!(knn_classify(&train, &[0.2, 1.0], 2).unwrap(), Adult);
        assert_eq!(knn_classify(&train, &[1.0, 1.0], 2).unwrap(), Child);
    }

    #[test]
    fn zero_vector_is_far() {
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 2.0);
    }

    #[test]
    fn knn_errors() {
        let train = lv(&[(1.0, 0.0, Child)]);
        assert!(matches!(knn_classify(&train, &[1.0], 1), Err(AnalysisError::DimensionMismatch { .. })));
        assert!(matches!(knn_classify(&train, &[1.0, 0.0], 5), Err(AnalysisError::InsufficientData { .. })));
        assert!(LabeledVectors::new(vec![vec![1.0], vec![1.0, 2.0]], vec![Child, Adult]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(pearson(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&x, &[-1.0, -2.0, -3.0]).unwrap(), -1.0, epsilon = 1e-12);
        // 3 / sqrt(2 * 42/9)
        assert_abs_diff_eq!(pearson(&x, &[1.0, 2.0, 4.0]).unwrap(), 0.9819805060619657, epsilon = 1e-12);
        assert_eq!(pearson(&x, &[1.0, 1.0, 1.0]), Err(AnalysisError::ZeroVariance));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }
}
