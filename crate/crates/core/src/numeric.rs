//! Small numerical helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Pairwise (cascade) summation. The association order depends only on the
/// length of the input, so results are reproducible bit for bit.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Column-wise pairwise sum of equally sized vectors.
pub fn pairwise_sum_vectors(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut column = vec![0.0; rows.len()];
    (0..dim)
        .map(|j| {
            for (c, r) in column.iter_mut().zip(rows) {
                *c = r[j];
            }
            pairwise_sum(&column)
        })
        .collect()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_exact_inputs() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(pairwise_sum_vectors(&rows, 2), vec![9.0, 12.0]);
    }

    #[test]
    fn normal_round_trip() {
        for &p in &[1e-6, 0.025, 0.3, 0.5, 0.9, 0.999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-9);
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
    }
}
