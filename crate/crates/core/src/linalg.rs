//! Dense vector helpers and a few matrix routines backed by nalgebra.

use nalgebra::DMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `y = A x` for a row-major `d × d` matrix.
pub fn mat_vec(a: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr = dot(&a[r * d..(r + 1) * d], x);
    }
}

/// `xᵀ A x` for a row-major `d × d` matrix.
pub fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    (0..d).map(|r| x[r] * dot(&a[r * d..(r + 1) * d], x)).sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Column-wise mean of `n` stacked vectors of length `l`.
pub fn stacked_mean(stacked: &[f64], l: usize) -> Vec<f64> {
    let n = stacked.len() / l;
    let mut mean = vec![0.0; l];
    for chunk in stacked.chunks_exact(l) {
        for (m, v) in mean.iter_mut().zip(chunk) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn quad_form_matches_mat_vec() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = [1.0, -2.0];
        let mut y = [0.0; 2];
        mat_vec(&a, &x, &mut y);
        assert_eq!(y, [0.0, -5.0]);
        assert_eq!(quad_form(&a, &x), dot(&x, &y));
    }
}
