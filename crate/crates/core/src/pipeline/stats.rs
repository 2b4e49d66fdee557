use nalgebra::{DMatrix, SymmetricEigen};

/// Pearson correlation; `None` when either column is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation matrix of the given columns.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    columns.iter().map(|a| columns.iter().map(|b| pearson(a, b)).collect()).collect()
}

pub struct Pca {
    /// Projection of every row onto the leading components.
    pub scores: Vec<Vec<f64>>,
    /// Fraction of total variance per returned component.
    pub explained: Vec<f64>,
}

/// Principal components of centered rows. Each component's sign is fixed
/// so its largest-magnitude loading is positive.
pub fn pca(rows: &[Vec<f64>], n_components: usize) -> Pca {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return Pca { scores: vec![Vec::new(); n], explained: Vec::new() };
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = x.transpose() * &x / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let k = n_components.min(d);
    let mut comps = Vec::with_capacity(k);
    for &c in &order[..k] {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        comps.push(v);
    }
    let scores = (0..n).map(|i| comps.iter().map(|v| (0..d).map(|j| x[(i, j)] * v[j]).sum()).collect()).collect();
    let explained =
        order[..k].iter().map(|&c| if total > 0.0 { eig.eigenvalues[c].max(0.0) / total } else { 0.0 }).collect();
    Pca { scores, explained }
}
