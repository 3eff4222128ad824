//! Per-cluster representative selection.
//!
//! The default strategy is greedy farthest-point sampling seeded with the
//! example nearest the centroid. `random` and `closest` exist as baselines.
//! All ties break to the lowest corpus index.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::features::FeatureMatrix;
use crate::linalg::{self, Matrix};
use crate::{Error, Result, Scalar};

/// Default number of representatives kept per cluster.
pub const DEFAULT_PER_CLUSTER: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Diverse,
    Random,
    Closest,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Diverse => "diverse",
            Strategy::Random => "random",
            Strategy::Closest => "closest",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diverse" => Ok(Strategy::Diverse),
            "random" => Ok(Strategy::Random),
            "closest" => Ok(Strategy::Closest),
            other => Err(Error::invalid(format!(
                "unknown selection strategy `{other}` (expected diverse, random or closest)"
            ))),
        }
    }
}

/// The reduced training set: one ordered id list per cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedSet {
    pub strategy: Strategy,
    pub l: usize,
    pub seed: Option<u64>,
    pub clusters: Vec<Vec<String>>,
}

impl ReducedSet {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, k: usize) -> &[String] {
        &self.clusters[k]
    }

    pub fn total(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let set: Self = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::CorruptArtifact(format!("reduced-set manifest: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::invalid("manifest has no clusters"));
        }
        let mut seen = HashSet::new();
        for (k, ids) in self.clusters.iter().enumerate() {
            if ids.len() > self.l {
                return Err(Error::invalid(format!("cluster {k} lists more than l = {} ids", self.l)));
            }
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::DuplicateId(id.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentroidDistance<T> {
    /// Row index into the feature matrix.
    pub index: usize,
    pub distance: T,
}

fn cluster_members<T: Scalar>(features: &FeatureMatrix<T>, model: &ClusterModel<T>, k: usize) -> Result<Vec<usize>> {
    if k >= model.k() {
        return Err(Error::invalid(format!("cluster index {k} out of range (k = {})", model.k())));
    }
    if model.assignment.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: model.assignment.len(),
        });
    }
    if model.centroids.ncols() != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            found: model.centroids.ncols(),
        });
    }
    let members = model.members(k);
    assert!(!members.is_empty(), "k-means never yields an empty cluster");
    Ok(members)
}

/// Distances from `centroid` to each member row, ascending, ties by index.
pub fn sorted_distances<T: Scalar>(rows: &Matrix<T>, members: &[usize], centroid: &[T]) -> Vec<CentroidDistance<T>> {
    let mut out: Vec<_> = members
        .iter()
        .map(|&i| CentroidDistance {
            index: i,
            distance: linalg::euclidean(rows.row(i), centroid),
        })
        .collect();
    out.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    out
}

/// Greedy farthest-point order over `members`: the member nearest `centroid`
/// first, then repeatedly the member whose distance to the selected set is
/// largest. Returns `min(l, members.len())` row indices.
pub fn farthest_point_order<T: Scalar>(rows: &Matrix<T>, members: &[usize], centroid: &[T], l: usize) -> Vec<usize> {
    let take = l.min(members.len());
    if take == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<usize> = members.to_vec();
    sorted.sort_unstable();
    let first = sorted_distances(rows, &sorted, centroid)[0].index;

    let mut selected = Vec::with_capacity(take);
    let mut taken = vec![false; sorted.len()];
    let mut min_dist: Vec<T> = sorted
        .iter()
        .map(|&i| linalg::euclidean(rows.row(i), rows.row(first)))
        .collect();
    let pos = sorted.binary_search(&first).expect("first pick is a member");
    taken[pos] = true;
    selected.push(first);

    while selected.len() < take {
        let mut best: Option<usize> = None;
        for (p, &d) in min_dist.iter().enumerate() {
            if !taken[p] && best.is_none_or(|b| d > min_dist[b]) {
                best = Some(p);
            }
        }
        let p = best.expect("unselected members remain");
        taken[p] = true;
        let pick = sorted[p];
        selected.push(pick);
        for (q, d) in min_dist.iter_mut().enumerate() {
            if !taken[q] {
                let nd = linalg::euclidean(rows.row(sorted[q]), rows.row(pick));
                if nd < *d {
                    *d = nd;
                }
            }
        }
    }
    selected
}

/// Distance of every member of cluster `k` to its centroid, ascending.
pub fn centroid_distances<T: Scalar>(
    features: &FeatureMatrix<T>,
    model: &ClusterModel<T>,
    k: usize,
) -> Result<Vec<CentroidDistance<T>>> {
    let members = cluster_members(features, model, k)?;
    Ok(sorted_distances(&features.rows, &members, model.centroids.row(k)))
}

pub fn select_diverse<T: Scalar>(
    features: &FeatureMatrix<T>,
    model: &ClusterModel<T>,
    k: usize,
    l: usize,
) -> Result<Vec<usize>> {
    let members = cluster_members(features, model, k)?;
    Ok(farthest_point_order(&features.rows, &members, model.centroids.row(k), l))
}

pub fn select_closest<T: Scalar>(
    features: &FeatureMatrix<T>,
    model: &ClusterModel<T>,
    k: usize,
    l: usize,
) -> Result<Vec<usize>> {
    Ok(centroid_distances(features, model, k)?
        .into_iter()
        .take(l)
        .map(|d| d.index)
        .collect())
}

/// Uniform sample without replacement. Each cluster draws from its own stream
/// of the seeded generator, so results do not depend on cluster order.
pub fn select_random<T: Scalar>(
    features: &FeatureMatrix<T>,
    model: &ClusterModel<T>,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let members = cluster_members(features, model, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let amount = l.min(members.len());
    Ok(rand::seq::index::sample(&mut rng, members.len(), amount)
        .into_iter()
        .map(|p| members[p])
        .collect())
}

/// Builds the reduced set over every cluster.
pub fn reduce<T: Scalar>(
    features: &FeatureMatrix<T>,
    model: &ClusterModel<T>,
    strategy: Strategy,
    l: usize,
    seed: u64,
) -> Result<ReducedSet> {
    if l == 0 {
        return Err(Error::invalid("l must be at least 1"));
    }
    let clusters = (0..model.k())
        .map(|k| {
            let picks = match strategy {
                Strategy::Diverse => select_diverse(features, model, k, l)?,
                Strategy::Random => select_random(features, model, k, l, seed)?,
                Strategy::Closest => select_closest(features, model, k, l)?,
            };
            Ok(picks.into_iter().map(|i| features.ids[i].clone()).collect())
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(ReducedSet {
        strategy,
        l,
        seed: (strategy == Strategy::Random).then_some(seed),
        clusters,
    })
}
