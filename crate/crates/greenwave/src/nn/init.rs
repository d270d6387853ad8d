//! Orthogonal weight initialization.
//!
//! A Gaussian matrix is orthonormalized with two passes of modified
//! Gram-Schmidt (the second pass scrubs the rounding left by the first),
//! giving `W^T W = I` to machine precision for any full-rank draw. Wide
//! matrices are handled by orthonormalizing the transpose, so whichever
//! of rows/columns fits is orthonormal.

use super::linalg::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

/// Orthogonal (or semi-orthogonal) `rows x cols` matrix scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Mat {
    if rows >= cols {
        orthonormal_columns(rows, cols, gain, rng)
    } else {
        let t = orthonormal_columns(cols, rows, gain, rng);
        Mat::from_fn(rows, cols, |r, c| t.get(c, r))
    }
}

/// Tall matrix with orthonormal columns.
fn orthonormal_columns(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Mat {
    debug_assert!(rows >= cols);
    let mut columns: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for _pass in 0..2 {
        for j in 0..cols {
            for i in 0..j {
                let proj = dot(&columns[j], &columns[i]);
                for r in 0..rows {
                    columns[j][r] -= proj * columns[i][r];
                }
            }
            let norm = dot(&columns[j], &columns[j]).sqrt();
            for v in &mut columns[j] {
                *v /= norm;
            }
        }
    }
    Mat::from_fn(rows, cols, |r, c| gain * columns[c][r])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
