//! Dense Gaussian elimination for the small systems the TPS fit needs.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Solve `a · x = b` in place for `m` right-hand sides. `a` is row-major
/// `n × n`, `b` row-major `n × m`; on success `b` holds `x`.
pub fn solve(a: &mut [f64], b: &mut [f64], n: usize, m: usize) -> Result<()> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * m);
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col].abs() <= tol {
            return Err(Error::DegenerateKernel);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            for k in 0..m {
                b[row * m + k] -= f * b[col * m + k];
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[col * n + col];
        for k in 0..m {
            let mut s = b[col * m + k];
            for j in (col + 1)..n {
                s -= a[col * n + j] * b[j * m + k];
            }
            b[col * m + k] = s / d;
        }
    }
    Ok(())
}

/// `a · x` for row-major `a` (`rows × cols`).
pub fn mat_vec(a: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|r| (0..cols).map(|c| a[r * cols + c] * x[c]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let mut a = alloc::vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let orig = a.clone();
        let x = [1.0, -2.0, 0.5];
        let mut b = mat_vec(&orig, &x, 3, 3);
        solve(&mut a, &mut b, 3, 1).unwrap();
        for (got, want) in b.iter().zip(x) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = alloc::vec![1.0, 2.0, 2.0, 4.0];
        let mut b = alloc::vec![1.0, 2.0];
        assert_eq!(solve(&mut a, &mut b, 2, 1), Err(Error::DegenerateKernel));
    }
}
