use nalgebra::{DMatrix, SymmetricEigen};

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::provider::EmbeddingMatrix;

#[derive(Clone, Debug)]
pub struct Mds {
    pub embedding: EmbeddingMatrix,
    /// The `d` largest eigenvalues of the centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Fewer than `d` positive eigenvalues; the missing columns are zero.
    pub degenerate: bool,
}

/// Classical scaling: top-`d` eigenpairs of `-1/2 J D^2 J`.
pub fn classical_mds(d: &DistanceMatrix, dim: usize) -> Result<Mds> {
    let n = d.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if n == 0 {
        return Ok(Mds {
            embedding: EmbeddingMatrix::zeros(0, dim),
            eigenvalues: Vec::new(),
            degenerate: true,
        });
    }
    let mut b = DMatrix::<f64>::from_fn(n, n, |i, j| d.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| b.row(i).mean()).collect();
    let total = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (b[(i, j)] - row_means[i] - row_means[j] + total);
        }
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut data = vec![0.0; n * dim];
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut degenerate = false;
    for (c, &idx) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[idx];
        eigenvalues.push(lambda);
        if lambda <= 1e-12 * scale {
            degenerate = true;
            continue;
        }
        let s = lambda.sqrt();
        for i in 0..n {
            data[i * dim + c] = eig.eigenvectors[(i, idx)] * s;
        }
    }
    if dim > n {
        degenerate = true;
    }
    Ok(Mds {
        embedding: EmbeddingMatrix::new(n, dim, data)?,
        eigenvalues,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(x: &EmbeddingMatrix) -> DistanceMatrix {
        DistanceMatrix::from_fn(x.len(), |i, j| crate::provider::squared_distance(x.row(i), x.row(j)).sqrt()).unwrap()
    }

    #[test]
    fn collinear_points() {
        let x = EmbeddingMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let m = classical_mds(&dist(&x), 1).unwrap();
        let y = &m.embedding;
        let d = |a: usize, b: usize| (y.row(a)[0] - y.row(b)[0]).abs();
        assert!((d(0, 1) - 1.0).abs() < 1e-12);
        assert!((d(1, 2) - 1.0).abs() < 1e-12);
        assert!((d(0, 2) - 2.0).abs() < 1e-12);
        assert!(!m.degenerate);
    }

    #[test]
    fn all_zero_distances_collapse() {
        let d = DistanceMatrix::from_fn(4, |_, _| 0.0).unwrap();
        let m = classical_mds(&d, 2).unwrap();
        assert!(m.embedding.as_slice().iter().all(|v| *v == 0.0));
        assert!(m.degenerate);
    }

    #[test]
    fn unit_square() {
        let x = EmbeddingMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let d = dist(&x);
        let m = classical_mds(&d, 2).unwrap();
        let back = dist(&m.embedding);
        for i in 0..4 {
            for j in 0..4 {
                assert!((back.get(i, j) - d.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_many_dimensions_pads_with_zeros() {
        let x = EmbeddingMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let m = classical_mds(&dist(&x), 2).unwrap();
        assert!(m.degenerate);
        assert!((0..3).all(|i| m.embedding.row(i)[1] == 0.0));
    }

    proptest! {
        #[test]
        fn exact_distances_reproduced(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 5..25)) {
            let rows: Vec<Vec<f64>> = pts.iter().map(|&(a, b, c)| vec![a, b, c]).collect();
            let x = EmbeddingMatrix::from_rows(&rows).unwrap();
            let d = dist(&x);
            let back = dist(&classical_mds(&d, 3).unwrap().embedding);
            let scale = d.upper_triangle().iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-3);
            for i in 0..x.len() {
                for j in 0..x.len() {
                    prop_assert!((back.get(i, j) - d.get(i, j)).abs() <= 1e-8 * scale);
                }
            }
        }
    }
}
