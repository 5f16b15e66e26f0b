use rand::Rng as _;

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, sq_dist, RowMatrix};
use crate::rng;

/// Centroids of a batch K-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: RowMatrix,
    training_seed: u64,
    /// Objective after every assignment step.
    objective: Vec<f64>,
}

impl Codebook {
    pub fn new(centroids: RowMatrix, training_seed: u64) -> Result<Self> {
        if centroids.rows() == 0 || centroids.cols() == 0 {
            return Err(Error::invalid("codebook needs at least one centroid"));
        }
        if !centroids.is_finite() {
            return Err(Error::NonFinite("codebook centroids".into()));
        }
        Ok(Self {
            centroids,
            training_seed,
            objective: Vec::new(),
        })
    }

    pub fn centroids(&self) -> &RowMatrix {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Attach a recorded objective trace, as read back from disk.
    pub fn with_objective(mut self, objective: Vec<f64>) -> Self {
        self.objective = objective;
        self
    }

    /// Nearest centroid by Euclidean distance, lowest index on ties.
    pub fn nearest(&self, v: &[f64]) -> Result<usize> {
        check_len("codebook query", v.len(), self.dim())?;
        Ok(nearest(&self.centroids, v).0)
    }

    /// `max(0, mean_k z_k − z_q)` with `z_q` the distance to centroid `q`.
    pub fn triangle_activation(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("codebook query", v.len(), self.dim())?;
        let z: Vec<f64> = self.centroids.iter_rows().map(|c| sq_dist(c, v).sqrt()).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        Ok(z.iter().map(|zq| (mean - zq).max(0.0)).collect())
    }
}

fn nearest(centroids: &RowMatrix, v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (q, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (q, d);
        }
    }
    best
}

fn plus_plus_init(data: &RowMatrix, k: usize, r: &mut rng::Rng) -> RowMatrix {
    let n = data.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(r.random_range(0..n));
    let mut d2: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = r.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if t < w {
                        break;
                    }
                    t -= w;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            // every point coincides with a chosen centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[r.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, x) in data.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, data.row(next)));
        }
    }
    RowMatrix::from_fn(k, data.cols(), |q, j| data.get(chosen[q], j))
}

/// Batch K-means with k-means++ seeding.
///
/// Runs at most `iterations` Lloyd steps, stopping early once the
/// assignment no longer changes. Empty clusters are re-seeded from a
/// random row.
pub fn build_vocabulary(descriptors: &RowMatrix, k: usize, seed: u64, iterations: usize) -> Result<Codebook> {
    let n = descriptors.rows();
    if k == 0 || iterations == 0 {
        return Err(Error::invalid("k and iterations must be >= 1"));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} samples cannot form {k} clusters")));
    }
    if !descriptors.is_finite() {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut r = rng::seeded(seed);
    let mut centroids = plus_plus_init(descriptors, k, &mut r);
    let mut assign = vec![usize::MAX; n];
    let mut objective = Vec::new();
    for _ in 0..iterations {
        let mut changed = false;
        let mut j = 0.0;
        for (i, x) in descriptors.iter_rows().enumerate() {
            let (q, d) = nearest(&centroids, x);
            changed |= assign[i] != q;
            assign[i] = q;
            j += d;
        }
        objective.push(j);
        if !changed {
            break;
        }
        let mut sums = RowMatrix::zeros(k, descriptors.cols());
        let mut counts = vec![0usize; k];
        for (i, x) in descriptors.iter_rows().enumerate() {
            axpy(1.0, x, sums.row_mut(assign[i]));
            counts[assign[i]] += 1;
        }
        for q in 0..k {
            let row = centroids.row_mut(q);
            if counts[q] == 0 {
                row.copy_from_slice(descriptors.row(r.random_range(0..n)));
            } else {
                let inv = 1.0 / counts[q] as f64;
                row.iter_mut().zip(sums.row(q)).for_each(|(c, s)| *c = s * inv);
            }
        }
    }
    let mut book = Codebook::new(centroids, seed)?;
    book.objective = objective;
    Ok(book)
}

/// K-means over hidden activation vectors.
pub fn pool_features(hiddens: &RowMatrix, centroids: usize, seed: u64, iterations: usize) -> Result<Codebook> {
    build_vocabulary(hiddens, centroids, seed, iterations)
}

/// One pooling unit and the filters that weigh most in its center.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingGroup {
    pub centroid: usize,
    /// Samples assigned to this centroid.
    pub members: usize,
    /// Filter indices by descending centroid weight.
    pub top_filters: Vec<usize>,
}

/// Per-centroid top filters, most populated centroids first.
pub fn pooling_report(book: &Codebook, hiddens: &RowMatrix, top: usize) -> Result<Vec<PoolingGroup>> {
    check_len("hidden vectors", hiddens.cols(), book.dim())?;
    let mut members = vec![0usize; book.k()];
    for h in hiddens.iter_rows() {
        members[book.nearest(h)?] += 1;
    }
    let mut groups: Vec<PoolingGroup> = book
        .centroids()
        .iter_rows()
        .enumerate()
        .map(|(q, c)| {
            let mut idx: Vec<usize> = (0..c.len()).collect();
            idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
            idx.truncate(top);
            PoolingGroup {
                centroid: q,
                members: members[q],
                top_filters: idx,
            }
        })
        .collect();
    groups.sort_by(|a, b| b.members.cmp(&a.members).then(a.centroid.cmp(&b.centroid)));
    Ok(groups)
}
