//! Seeded k-means (k-means++ initialization, Lloyd iterations).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::linalg::{self, Matrix};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            ..Default::default()
        }
    }
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 7,
            seed: 0,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClusterModel<T> {
    pub config: KMeansConfig,
    pub centroids: Matrix<T>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: T,
    pub iterations: usize,
    /// Inertia after every assignment step, ending with the final model's.
    pub inertia_history: Vec<T>,
}

/// Index of the nearest centroid by squared Euclidean distance; ties go to
/// the lowest index.
fn nearest<T: Scalar>(point: &[T], centroids: &Matrix<T>) -> (usize, T) {
    let mut best = (0, linalg::squared_euclidean(point, centroids.row(0)));
    for j in 1..centroids.nrows() {
        let d = linalg::squared_euclidean(point, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

impl<T: Scalar> ClusterModel<T> {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn nearest_centroid(&self, point: &[T]) -> Result<usize> {
        if point.len() != self.centroids.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.centroids.ncols(),
                found: point.len(),
            });
        }
        Ok(nearest(point, &self.centroids).0)
    }

    /// Row indices assigned to cluster `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::CorruptArtifact(e.to_string()))?;
        if model.centroids.nrows() != model.config.k || model.assignment.iter().any(|&c| c >= model.config.k) {
            return Err(Error::CorruptArtifact("cluster model is inconsistent with k".into()));
        }
        Ok(model)
    }
}

pub fn nearest_centroid<T: Scalar>(model: &ClusterModel<T>, point: &[T]) -> Result<usize> {
    model.nearest_centroid(point)
}

/// Clusters the fused feature rows.
pub fn kmeans<T: Scalar>(features: &FeatureMatrix<T>, config: KMeansConfig) -> Result<ClusterModel<T>> {
    kmeans_matrix(&features.rows, config)
}

pub fn kmeans_matrix<T: Scalar>(data: &Matrix<T>, config: KMeansConfig) -> Result<ClusterModel<T>> {
    let n = data.nrows();
    let k = config.k;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the number of points ({n})")));
    }
    if config.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if config.tol.is_nan() || config.tol < 0.0 {
        return Err(Error::invalid("tol must be nonnegative"));
    }
    let distinct = data
        .rows()
        .map(|r| r.iter().map(|&x| (x + T::zero()).as_f64().to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len();
    if distinct < k {
        return Err(Error::Degenerate(format!(
            "only {distinct} distinct feature vectors for k = {k} clusters"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut assignment = vec![0; n];
    let mut dists = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let tol = T::of(config.tol);

    for iter in 0..config.max_iters {
        assign(data, &centroids, &mut assignment, &mut dists);
        repair_empty(data, &mut centroids, &mut assignment, &mut dists)?;
        history.push(sum(&dists));

        let updated = cluster_means(data, &assignment, k);
        let shift = (0..k).fold(T::zero(), |mx, j| {
            mx.max(linalg::euclidean(updated.row(j), centroids.row(j)))
        });
        centroids = updated;
        iterations = iter + 1;
        if shift < tol || shift == T::zero() {
            break;
        }
    }

    // Final assignment against the last centroids; repairs here place the
    // centroid on the moved point, so the loop only ever lowers inertia.
    let mut guard = 0;
    loop {
        assign(data, &centroids, &mut assignment, &mut dists);
        if !has_empty(&assignment, k) {
            break;
        }
        guard += 1;
        if guard > n + k {
            return Err(Error::Degenerate("could not eliminate empty clusters".into()));
        }
        repair_empty(data, &mut centroids, &mut assignment, &mut dists)?;
    }
    let inertia = assignment
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &c)| acc + linalg::squared_euclidean(data.row(i), centroids.row(c)));
    history.push(inertia);

    Ok(ClusterModel {
        config,
        centroids,
        assignment,
        inertia,
        iterations,
        inertia_history: history,
    })
}

fn plus_plus_init<T: Scalar>(data: &Matrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let n = data.nrows();
    let mut centroids = Matrix::zeros(k, data.ncols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = data
        .rows()
        .map(|r| linalg::squared_euclidean(r, data.row(first)).as_f64())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // distinct rows >= k guarantees some positive weight remains
        let pick = pick.expect("a point away from the chosen centroids exists");
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, w) in d2.iter_mut().enumerate() {
            let d = linalg::squared_euclidean(data.row(i), data.row(pick)).as_f64();
            if d < *w {
                *w = d;
            }
        }
    }
    centroids
}

fn assign<T: Scalar>(data: &Matrix<T>, centroids: &Matrix<T>, assignment: &mut [usize], dists: &mut [T]) {
    for (i, row) in data.rows().enumerate() {
        let (c, d) = nearest(row, centroids);
        assignment[i] = c;
        dists[i] = d;
    }
}

fn has_empty(assignment: &[usize], k: usize) -> bool {
    let mut seen = vec![false; k];
    assignment.iter().for_each(|&c| seen[c] = true);
    seen.contains(&false)
}

/// Each empty cluster takes the point farthest from its centroid (among
/// clusters with more than one member) and is re-centred on it.
fn repair_empty<T: Scalar>(
    data: &Matrix<T>,
    centroids: &mut Matrix<T>,
    assignment: &mut [usize],
    dists: &mut [T],
) -> Result<()> {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    assignment.iter().for_each(|&c| counts[c] += 1);
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i]] > 1 && best.is_none_or(|b| dists[i] > dists[b]) {
                best = Some(i);
            }
        }
        let i = best.ok_or_else(|| Error::Degenerate("no point available to fill an empty cluster".into()))?;
        counts[assignment[i]] -= 1;
        counts[j] += 1;
        assignment[i] = j;
        dists[i] = T::zero();
        centroids.row_mut(j).copy_from_slice(data.row(i));
    }
    Ok(())
}

fn cluster_means<T: Scalar>(data: &Matrix<T>, assignment: &[usize], k: usize) -> Matrix<T> {
    let mut sums = Matrix::zeros(k, data.ncols());
    let mut counts = vec![0usize; k];
    for (row, &c) in data.rows().zip(assignment) {
        counts[c] += 1;
        for (s, &x) in sums.row_mut(c).iter_mut().zip(row) {
            *s = *s + x;
        }
    }
    for (j, &count) in counts.iter().enumerate() {
        let inv = T::one() / T::of(count as f64);
        sums.row_mut(j).iter_mut().for_each(|s| *s = *s * inv);
    }
    sums
}

fn sum<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn k_bounds_are_checked() {
        let data = m(&[&[0.0], &[1.0]]);
        assert!(kmeans_matrix(&data, KMeansConfig::new(0, 1)).is_err());
        assert!(kmeans_matrix(&data, KMeansConfig::new(3, 1)).is_err());
    }

    #[test]
    fn duplicate_points_cannot_fill_k_clusters() {
        let data = m(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(kmeans_matrix(&data, KMeansConfig::new(2, 0)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn nearest_centroid_tie_goes_low() {
        let model = ClusterModel {
            config: KMeansConfig::new(2, 0),
            centroids: m(&[&[-1.0, 0.0], &[1.0, 0.0]]),
            assignment: vec![0, 1],
            inertia: 0.0,
            iterations: 1,
            inertia_history: vec![0.0],
        };
        assert_eq!(model.nearest_centroid(&[0.0, 3.0]).unwrap(), 0);
        assert_eq!(model.nearest_centroid(&[0.1, 0.0]).unwrap(), 1);
        assert!(matches!(model.nearest_centroid(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn point_on_a_centroid_maps_to_it() {
        let data = m(&[&[0.0, 0.0], &[5.0, 5.0], &[10.0, 0.0], &[0.2, 0.1], &[5.1, 4.9], &[9.8, 0.3]]);
        let model = kmeans_matrix(&data, KMeansConfig::new(3, 11)).unwrap();
        for j in 0..3 {
            assert_eq!(model.nearest_centroid(model.centroids.row(j)).unwrap(), j);
        }
    }

    #[test]
    fn empty_cluster_repair_takes_farthest_point() {
        let data = m(&[&[0.0], &[1.0], &[10.0]]);
        let mut centroids = m(&[&[3.0], &[100.0]]);
        let mut assignment = vec![0; 3];
        let mut dists = vec![0.0; 3];
        assign(&data, &centroids, &mut assignment, &mut dists);
        assert_eq!(assignment, [0, 0, 0]);
        repair_empty(&data, &mut centroids, &mut assignment, &mut dists).unwrap();
        assert_eq!(assignment, [0, 0, 1]);
        assert_eq!(centroids.row(1), [10.0]);
    }
}
