//! Signed diagnostic weighting of trajectory feature families: discounted
//! per-turn means and mutual-information-based signed importance.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("series must contain at least one value")]
    EmptySeries,
    #[error("discount must lie in (0, 1], got {0}")]
    BadDiscount(f64),
    #[error("signed importance needs samples from both classes")]
    EmptyClass,
}

/// Exponentially discounted mean weighting recent turns most: weight for
/// turn `t` of `T` is `discount^(T-1-t)`.
pub fn discounted_feature_mean(series: &[f64], discount: f64) -> Result<f64, DiagnosticsError> {
    if series.is_empty() {
        return Err(DiagnosticsError::EmptySeries);
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(DiagnosticsError::BadDiscount(discount));
    }
    let total_turns = series.len();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (t, &value) in series.iter().enumerate() {
        let weight = discount.powi((total_turns - 1 - t) as i32);
        numerator += weight * value;
        denominator += weight;
    }
    Ok(numerator / denominator)
}

const MI_BINS: usize = 16;

/// Plug-in mutual information between a 16-bin equal-width discretization of
/// the feature and the binary label, in nats.
fn plug_in_mi(values: &[(f64, bool)]) -> f64 {
    let min = values.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let max = values
        .iter()
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return 0.0;
    }
    let width = (max - min) / MI_BINS as f64;
    let mut joint = [[0usize; 2]; MI_BINS];
    for &(value, label) in values {
        let bin = (((value - min) / width) as usize).min(MI_BINS - 1);
        joint[bin][usize::from(label)] += 1;
    }
    let n = values.len() as f64;
    let class_totals = [
        values.iter().filter(|(_, y)| !*y).count() as f64,
        values.iter().filter(|(_, y)| *y).count() as f64,
    ];
    let mut mi = 0.0;
    for row in &joint {
        let bin_total = (row[0] + row[1]) as f64;
        if bin_total == 0.0 {
            continue;
        }
        for y in 0..2 {
            let cell = row[y] as f64;
            if cell == 0.0 {
                continue;
            }
            let p_joint = cell / n;
            mi += p_joint * (p_joint / ((bin_total / n) * (class_totals[y] / n))).ln();
        }
    }
    mi
}

/// Signed importance of a discounted feature mean: the sign of the class-mean
/// difference times the plug-in mutual information with the label.
pub fn signed_importance(values: &[(f64, bool)]) -> Result<f64, DiagnosticsError> {
    let positives: Vec<f64> = values.iter().filter(|(_, y)| *y).map(|(v, _)| *v).collect();
    let negatives: Vec<f64> = values
        .iter()
        .filter(|(_, y)| !*y)
        .map(|(v, _)| *v)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(DiagnosticsError::EmptyClass);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let direction = (mean(&positives) - mean(&negatives)).signum();
    let direction = if mean(&positives) == mean(&negatives) {
        0.0
    } else {
        direction
    };
    Ok(direction * plug_in_mi(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitRng;

    #[test]
    fn constant_series_returns_the_constant() {
        for discount in [0.1, 0.5, 1.0] {
            let m = discounted_feature_mean(&[2.5, 2.5, 2.5], discount).unwrap();
            assert!((m - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn recency_weighted_mean_matches_hand_evaluation() {
        // weights (0.25, 0.5, 1) over (0, 0, 1) -> 1 / 1.75
        let m = discounted_feature_mean(&[0.0, 0.0, 1.0], 0.5).unwrap();
        assert!((m - 1.0 / 1.75).abs() < 1e-12);
        assert!((m - 0.5714).abs() < 5e-4);
    }

    #[test]
    fn unit_discount_is_the_arithmetic_mean() {
        let m = discounted_feature_mean(&[1.0, 2.0, 6.0], 1.0).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
    }

    #[test]
    fn discount_domain_is_enforced() {
        assert!(discounted_feature_mean(&[], 0.5).is_err());
        assert!(discounted_feature_mean(&[1.0], 0.0).is_err());
        assert!(discounted_feature_mean(&[1.0], 1.5).is_err());
    }

    #[test]
    fn perfectly_aligned_feature_scores_plus_ln2() {
        let values: Vec<(f64, bool)> = (0..100).map(|i| ((i % 2) as f64, i % 2 == 1)).collect();
        let w = signed_importance(&values).unwrap();
        assert!((w - std::f64::consts::LN_2).abs() < 1e-9, "{w}");
    }

    #[test]
    fn inverted_feature_flips_the_sign() {
        let values: Vec<(f64, bool)> = (0..100)
            .map(|i| (1.0 - (i % 2) as f64, i % 2 == 1))
            .collect();
        let w = signed_importance(&values).unwrap();
        assert!((w + std::f64::consts::LN_2).abs() < 1e-9, "{w}");
    }

    #[test]
    fn independent_feature_scores_near_zero() {
        let mut rng = SplitRng::new(31);
        let values: Vec<(f64, bool)> = (0..4000).map(|i| (rng.next_f64(), i % 2 == 0)).collect();
        let w = signed_importance(&values).unwrap();
        assert!(w.abs() < 0.01, "{w}");
    }

    #[test]
    fn empty_class_is_an_error() {
        let values: Vec<(f64, bool)> = (0..10).map(|i| (i as f64, true)).collect();
        assert!(matches!(
            signed_importance(&values),
            Err(DiagnosticsError::EmptyClass)
        ));
    }
}
