use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Snapshots projected onto their leading principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row per snapshot, `k` coordinates each.
    pub points: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalue (1/(n−1) normalisation) of each component,
    /// in decreasing order.
    pub variances: Vec<f64>,
}

/// PCA of parameter snapshots through the `n × n` Gram matrix of the
/// mean-centred rows. With `G = X Xᵀ = U Λ Uᵀ`, the scores on component `i`
/// are `√λᵢ · uᵢ`, so the `D`-dimensional covariance is never formed.
///
/// Each component's sign is fixed so that its largest-magnitude score is
/// positive.
pub fn pca_project<S: AsRef<[f64]>>(snapshots: &[S], k: usize) -> Result<Projection> {
    let n = snapshots.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "pca needs at least 2 snapshots, got {n}"
        )));
    }
    let dim = snapshots[0].as_ref().len();
    if snapshots.iter().any(|s| s.as_ref().len() != dim) {
        return Err(Error::Shape("snapshots have different lengths".to_string()));
    }
    if k == 0 || k > n.min(dim) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            n.min(dim)
        )));
    }

    let mut mean = vec![0.0; dim];
    for s in snapshots {
        for (m, v) in mean.iter_mut().zip(s.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centred: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| s.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let gram = DMatrix::<f64>::from_fn(n, n, |i, j| {
        centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut points = vec![vec![0.0; k]; n];
    let mut variances = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let u = eig.eigenvectors.column(idx);
        let pivot = (0..n)
            .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if u[pivot] < 0.0 { -1.0 } else { 1.0 };
        let root = lambda.sqrt();
        for (row, point) in points.iter_mut().enumerate() {
            point[c] = sign * root * u[row];
        }
        variances.push(lambda / (n as f64 - 1.0));
    }
    Ok(Projection { points, variances })
}

/// Writes `step,pc1,pc2` rows with 17 significant digits. A one-component
/// projection gets `pc2 = 0`.
pub fn write_trajectory_csv<W: Write>(
    steps: &[u64],
    projection: &Projection,
    mut out: W,
) -> Result<()> {
    if steps.len() != projection.points.len() {
        return Err(Error::Shape(format!(
            "{} steps for {} points",
            steps.len(),
            projection.points.len()
        )));
    }
    writeln!(out, "step,pc1,pc2")?;
    for (step, p) in steps.iter().zip(&projection.points) {
        let pc1 = p.first().copied().unwrap_or(0.0);
        let pc2 = p.get(1).copied().unwrap_or(0.0);
        writeln!(out, "{step},{pc1:.16e},{pc2:.16e}")?;
    }
    Ok(())
}
