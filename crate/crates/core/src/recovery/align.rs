use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::provider::{squared_distance, EmbeddingMatrix};

/// Best similarity transform of an estimate onto a reference:
/// `aligned = scale * (xhat - mean(xhat)) * rotation + translation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `||aligned - xref||_F / ||xref - mean(xref)||_F`.
    pub error: f64,
    pub scale: f64,
    /// Orthogonal `d x d` matrix, row-major; may include a reflection.
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    #[serde(skip)]
    pub aligned: Option<EmbeddingMatrix>,
}

fn centered(x: &EmbeddingMatrix) -> (DMatrix<f64>, Vec<f64>) {
    let m = x.to_dmatrix();
    let mean: Vec<f64> = (0..x.dim()).map(|c| m.column(c).mean()).collect();
    let mut c = m;
    for j in 0..x.dim() {
        for i in 0..x.len() {
            c[(i, j)] -= mean[j];
        }
    }
    (c, mean)
}

/// Orthogonal Procrustes with scaling.
pub fn procrustes_align(xhat: &EmbeddingMatrix, xref: &EmbeddingMatrix) -> Result<Alignment> {
    if xhat.len() != xref.len() || xhat.dim() != xref.dim() {
        return Err(Error::InvalidParameter(format!(
            "shapes differ: {}x{} vs {}x{}",
            xhat.len(),
            xhat.dim(),
            xref.len(),
            xref.dim()
        )));
    }
    let d = xref.dim();
    let (y, _) = centered(xhat);
    let (x, mean) = centered(xref);
    let ref_norm = x.norm();
    if !(ref_norm > 0.0) {
        return Err(Error::InvalidParameter("reference has zero variance".into()));
    }
    let m = y.transpose() * &x;
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let r = u * vt;
    let y_norm2 = y.norm_squared();
    let scale = if y_norm2 > 0.0 { svd.singular_values.sum() / y_norm2 } else { 0.0 };
    let mut aligned = (&y * &r) * scale;
    for j in 0..d {
        for i in 0..xref.len() {
            aligned[(i, j)] += mean[j];
        }
    }
    let resid = (&aligned - xref.to_dmatrix()).norm();
    Ok(Alignment {
        error: resid / ref_norm,
        scale,
        rotation: (0..d).map(|i| (0..d).map(|j| r[(i, j)]).collect()).collect(),
        translation: mean,
        aligned: Some(EmbeddingMatrix::from_dmatrix(&aligned)?),
    })
}

/// Euclidean distances between all rows.
pub fn pairwise_distances(x: &EmbeddingMatrix) -> DistanceMatrix {
    DistanceMatrix::from_fn(x.len(), |i, j| squared_distance(x.row(i), x.row(j)).sqrt()).expect("euclidean distances are valid")
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidParameter("spearman needs two equal-length samples of size >= 2".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("spearman input contains NaN".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidParameter("spearman of a constant sample is undefined".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}
