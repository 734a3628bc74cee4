//! Small statistical helpers shared by the fitting and Monte Carlo modules.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n-1 denominator); 0 when fewer than 2 values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Quantile of the Student-t distribution with `dof` degrees of freedom.
///
/// For dof >= 2000 this is within 1e-3 of the normal quantile.
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    debug_assert!(dof >= 1.0);
    StudentsT::new(0.0, 1.0, dof)
        .expect("valid t distribution parameters")
        .inverse_cdf(p)
}

/// Round half-up to the nearest integer (paper convention for minute rounding).
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_std() {
        assert_eq!(mean(&[]), 0.0);
        assert_eq!(mean(&[2.0, 4.0]), 3.0);
        assert_relative_eq!(sample_std(&[2.0, 4.0, 6.0]), 2.0);
        assert_eq!(sample_std(&[5.0]), 0.0);
    }

    #[test]
    fn t_quantile_matches_table() {
        // 99.5% percentile values from the standard t table.
        assert_relative_eq!(t_quantile(0.995, 1.0), 63.657, max_relative = 1e-3);
        assert_relative_eq!(t_quantile(0.995, 10.0), 3.169, max_relative = 1e-3);
        assert_relative_eq!(t_quantile(0.995, 1999.0), 2.5783, max_relative = 1e-3);
        // Large-dof limit approaches the normal quantile 2.5758.
        assert!((t_quantile(0.995, 10_000.0) - 2.5758).abs() < 1e-3);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(5.5), 6);
        assert_eq!(round_half_up(5.49), 5);
        assert_eq!(round_half_up(-0.5), 0);
        assert_eq!(round_half_up(30.0), 30);
    }
}
