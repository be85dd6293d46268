use nalgebra::{DMatrix, SymmetricEigen};

/// Eigendecomposition of a dense symmetric matrix (Householder
/// tridiagonalization plus implicit QR).
///
/// `matrix` is row-major `n x n`. Returns eigenvalues (unsorted) and the
/// row-major eigenvector matrix whose column `j` belongs to eigenvalue `j`.
/// The result depends only on the input bits.
pub fn symmetric_eigen(a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let eigen = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &a));
    let mut vectors = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vectors[i * n + j] = eigen.eigenvectors[(i, j)];
        }
    }
    (eigen.eigenvalues.iter().copied().collect(), vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonalizes_random_symmetric() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let (values, vectors) = symmetric_eigen(a.clone(), n);
        for j in 0..n {
            for i in 0..n {
                let av: f64 = (0..n).map(|k| a[i * n + k] * vectors[k * n + j]).sum();
                assert!((av - values[j] * vectors[i * n + j]).abs() < 1e-12);
            }
            for m in 0..n {
                let dot: f64 = (0..n).map(|k| vectors[k * n + j] * vectors[k * n + m]).sum();
                let expect = if m == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let (mut values, _) = symmetric_eigen(vec![2.0, 1.0, 1.0, 2.0], 2);
        values.sort_by(f64::total_cmp);
        assert!((values[0] - 1.0).abs() < 1e-15 && (values[1] - 3.0).abs() < 1e-15);
    }
}
