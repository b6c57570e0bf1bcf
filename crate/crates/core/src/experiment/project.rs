use nalgebra::{DMatrix, SymmetricEigen};

use super::ExperimentError;

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<String>,
    /// Variance along each kept component.
    pub variance: [f64; 2],
    /// Components with non-zero variance (0, 1 or 2).
    pub components: usize,
}

/// Top-2 principal components of the centered latents. Each component's
/// sign is fixed so that its largest-magnitude loading is positive.
/// Missing components (rank < 2) come out as zeros.
pub fn project_latents_2d(
    latents: &[Vec<f64>],
    labels: &[String],
) -> Result<Projection, ExperimentError> {
    let n = latents.len();
    if n < 3 {
        return Err(ExperimentError::Config(format!(
            "projection needs at least 3 latents, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(ExperimentError::Config(format!(
            "{n} latents but {} labels",
            labels.len()
        )));
    }
    let d = latents[0].len();
    if d == 0 || latents.iter().any(|l| l.len() != d) {
        return Err(ExperimentError::Config(
            "latents must share a non-zero dimension".into(),
        ));
    }
    let x = DMatrix::from_fn(n, d, |i, j| latents[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = 1e-12 * top.max(1e-300);
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .take(2)
        .filter(|&k| eig.eigenvalues[k] > tol)
        .collect();
    if kept.len() < 2 {
        log::warn!(
            "latents have rank {} < 2; projecting onto the available components",
            kept.len()
        );
    }
    let mut coords = vec![[0.0; 2]; n];
    let mut variance = [0.0; 2];
    for (c, &k) in kept.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        for (row, p) in coords.iter_mut().zip(proj.iter()) {
            row[c] = *p;
        }
        variance[c] = eig.eigenvalues[k];
    }
    Ok(Projection {
        coords,
        labels: labels.to_vec(),
        variance,
        components: kept.len(),
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette coefficient under Euclidean distance. Points in
/// singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[String]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let mut clusters: Vec<&str> = labels.iter().map(String::as_str).collect();
    clusters.sort_unstable();
    clusters.dedup();
    if clusters.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![(0.0, 0usize); clusters.len()];
        for j in 0..n {
            if i != j {
                let c = clusters
                    .binary_search(&labels[j].as_str())
                    .expect("label present");
                sums[c].0 += dist(&points[i], &points[j]);
                sums[c].1 += 1;
            }
        }
        let own = clusters
            .binary_search(&labels[i].as_str())
            .expect("label present");
        if sums[own].1 == 0 {
            continue;
        }
        let a = sums[own].0 / sums[own].1 as f64;
        let b = sums
            .iter()
            .enumerate()
            .filter(|&(c, s)| c != own && s.1 > 0)
            .map(|(_, s)| s.0 / s.1 as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}
