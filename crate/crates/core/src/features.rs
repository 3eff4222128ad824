//! Clustering feature space: PCA-reduced embeddings, per-dimension
//! standardization, and the standardized difficulty appended as a final column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::linalg::{self, Matrix};
use crate::{Error, Result, Scalar};

/// Default number of principal components kept.
pub const DEFAULT_PCA_COMPONENTS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// p × D, one unit-norm principal direction per row.
    pub components: Matrix<T>,
    /// Variance along each component (population convention), nonincreasing.
    pub explained_variance: Vec<T>,
    /// Total variance of the centered fit data.
    pub total_variance: T,
}

/// Fits a `p`-component PCA on the rows of `data` by eigendecomposition of the
/// population covariance matrix.
///
/// Each component is oriented so that its largest-magnitude coordinate is
/// positive (first such coordinate on ties).
pub fn fit_pca<T: Scalar>(data: &Matrix<T>, p: usize) -> Result<PcaModel<T>> {
    let (n, d) = (data.nrows(), data.ncols());
    if n == 0 || d == 0 {
        return Err(Error::invalid("PCA needs a nonempty data matrix"));
    }
    if p == 0 || p > n.min(d) {
        return Err(Error::invalid(format!(
            "PCA component count {p} must lie in 1..={}",
            n.min(d)
        )));
    }
    if data.rows().all(|r| r == data.row(0)) {
        return Err(Error::Degenerate("all embeddings are identical; variance is zero".into()));
    }

    let mean = data.column_means();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for row in data.rows() {
        for (c, (&x, &m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = x - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == T::zero() {
                continue;
            }
            let cov_row = cov.row_mut(a);
            for b in a..d {
                cov_row[b] = cov_row[b] + ca * centered[b];
            }
        }
    }
    let inv_n = T::one() / T::of(n as f64);
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] * inv_n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let total_variance = (0..d).fold(T::zero(), |acc, i| acc + cov[(i, i)]);
    if total_variance <= T::zero() {
        return Err(Error::Degenerate("centered embeddings have zero variance".into()));
    }

    let (values, vectors) = linalg::symmetric_eigen(&cov)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut components = Matrix::zeros(p, d);
    let mut explained_variance = Vec::with_capacity(p);
    for (row, &idx) in order.iter().take(p).enumerate() {
        let mut v: Vec<T> = vectors.column(idx).collect();
        let norm = linalg::dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x = *x / norm);
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[pivot] < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.row_mut(row).copy_from_slice(&v);
        explained_variance.push(values[idx].max(T::zero()));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

impl<T: Scalar> PcaModel<T> {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Fraction of the total variance carried by each component.
    pub fn explained_variance_ratio(&self) -> Vec<T> {
        self.explained_variance
            .iter()
            .map(|&v| v / self.total_variance)
            .collect()
    }

    pub fn transform_row(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        Ok(self
            .components
            .rows()
            .map(|c| linalg::dot(c, &centered))
            .collect())
    }

    /// Projects every row: `components · (x − mean)`.
    pub fn transform(&self, data: &Matrix<T>) -> Result<Matrix<T>> {
        if data.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: data.ncols(),
            });
        }
        let mut out = Matrix::zeros(data.nrows(), self.n_components());
        for (i, row) in data.rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.transform_row(row)?);
        }
        Ok(out)
    }

    /// Maps reduced coordinates back to the input space.
    pub fn inverse_transform(&self, reduced: &Matrix<T>) -> Result<Matrix<T>> {
        if reduced.ncols() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                found: reduced.ncols(),
            });
        }
        let d = self.input_dim();
        let mut out = Matrix::zeros(reduced.nrows(), d);
        for (i, coords) in reduced.rows().enumerate() {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.mean);
            for (&w, comp) in coords.iter().zip(self.components.rows()) {
                for (o, &c) in row.iter_mut().zip(comp) {
                    *o = *o + w * c;
                }
            }
        }
        Ok(out)
    }
}

/// Transforms a corpus with a fitted model.
pub fn transform_pca<T: Scalar>(model: &PcaModel<T>, corpus: &Corpus) -> Result<Matrix<T>> {
    if corpus.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: corpus.dim(),
        });
    }
    model.transform(&corpus.embedding_matrix())
}

/// Per-column z-scoring with the population standard deviation.
///
/// Columns whose spread is indistinguishable from rounding noise are flagged
/// degenerate and map to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
    pub degenerate: Vec<bool>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(data: &Matrix<T>) -> Result<Self> {
        let n = data.nrows();
        if n < 2 {
            return Err(Error::invalid(format!(
                "standardization needs at least 2 rows, got {n}"
            )));
        }
        let means = data.column_means();
        let inv_n = T::one() / T::of(n as f64);
        let noise = T::epsilon() * T::of(64.0);
        let mut stds = Vec::with_capacity(data.ncols());
        let mut degenerate = Vec::with_capacity(data.ncols());
        for (j, &m) in means.iter().enumerate() {
            let (ss, max_abs) = data.column(j).fold((T::zero(), T::zero()), |(ss, mx), x| {
                let dx = x - m;
                (ss + dx * dx, mx.max(x.abs()))
            });
            let std = (ss * inv_n).sqrt();
            degenerate.push(std == T::zero() || std <= noise * max_abs);
            stds.push(std);
        }
        Ok(Standardizer {
            means,
            stds,
            degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, data: &Matrix<T>) -> Result<Matrix<T>> {
        if data.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.ncols(),
            });
        }
        let mut out = Matrix::zeros(data.nrows(), data.ncols());
        for (i, row) in data.rows().enumerate() {
            for (j, (o, &x)) in out.row_mut(i).iter_mut().zip(row).enumerate() {
                *o = if self.degenerate[j] {
                    T::zero()
                } else {
                    (x - self.means[j]) / self.stds[j]
                };
            }
        }
        Ok(out)
    }
}

/// Fused, standardized feature vectors: `p` semantic columns followed by one
/// difficulty column, row-aligned with `ids`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureMatrix<T> {
    pub ids: Vec<String>,
    pub p: usize,
    pub degenerate: Vec<bool>,
    pub rows: Matrix<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Width of each feature vector (`p + 1`).
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.rows.row(i)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let fm: Self = serde_json::from_reader(r).map_err(|e| Error::CorruptArtifact(e.to_string()))?;
        fm.validate()?;
        Ok(fm)
    }

    fn validate(&self) -> Result<()> {
        if self.rows.nrows() != self.ids.len() {
            return Err(Error::CorruptArtifact(format!(
                "{} ids but {} feature rows",
                self.ids.len(),
                self.rows.nrows()
            )));
        }
        if self.dim() != self.p + 1 || self.degenerate.len() != self.p + 1 {
            return Err(Error::CorruptArtifact("feature width does not match p + 1".into()));
        }
        Ok(())
    }
}

/// Standardizes the reduced embedding and the difficulty column independently
/// and concatenates them row by row.
pub fn fuse_features<T: Scalar>(
    reduced: &Matrix<T>,
    difficulties: &[T],
    ids: Vec<String>,
) -> Result<(Standardizer<T>, FeatureMatrix<T>)> {
    let n = reduced.nrows();
    if difficulties.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: difficulties.len(),
        });
    }
    if ids.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: ids.len(),
        });
    }
    let p = reduced.ncols();
    let mut raw = Matrix::zeros(n, p + 1);
    for (i, &d) in difficulties.iter().enumerate() {
        let row = raw.row_mut(i);
        row[..p].copy_from_slice(reduced.row(i));
        row[p] = d;
    }
    let standardizer = Standardizer::fit(&raw)?;
    let rows = standardizer.apply(&raw)?;
    let features = FeatureMatrix {
        ids,
        p,
        degenerate: standardizer.degenerate.clone(),
        rows,
    };
    Ok((standardizer, features))
}

/// Everything fitted while building the feature space.
#[derive(Clone, Debug)]
pub struct Featurization<T> {
    pub pca: PcaModel<T>,
    pub standardizer: Standardizer<T>,
    pub features: FeatureMatrix<T>,
}

/// Runs PCA, standardization and fusion over an annotated corpus.
pub fn featurize<T: Scalar>(corpus: &Corpus, p: usize) -> Result<Featurization<T>> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let difficulties: Vec<T> = corpus.difficulties()?.into_iter().map(T::of).collect();
    let embeddings = corpus.embedding_matrix();
    let pca = fit_pca(&embeddings, p)?;
    let reduced = pca.transform(&embeddings)?;
    let (standardizer, features) = fuse_features(&reduced, &difficulties, corpus.ids())?;
    Ok(Featurization {
        pca,
        standardizer,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_put_all_variance_in_one_component() {
        let data = Matrix::<f64>::from_rows(&[[0.0, 0.0], [1.0, 2.0], [2.0, 4.0]]).unwrap();
        let pca = fit_pca(&data, 1).unwrap();
        assert!((pca.explained_variance_ratio()[0] - 1.0).abs() <= 1e-9);
        let c = pca.components.row(0);
        let s = 5f64.sqrt();
        assert!((c[0] - 1.0 / s).abs() < 1e-12 && (c[1] - 2.0 / s).abs() < 1e-12);
    }

    #[test]
    fn component_count_is_range_checked() {
        let data = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
        assert!(fit_pca(&data, 0).is_err());
        assert!(fit_pca(&data, 3).is_err());
        assert!(fit_pca(&data, 2).is_ok());
    }

    #[test]
    fn identical_embeddings_are_degenerate() {
        let data = Matrix::from_rows(&[[0.3, 1.0], [0.3, 1.0], [0.3, 1.0]]).unwrap();
        assert!(matches!(fit_pca(&data, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mean_maps_to_origin() {
        let data = Matrix::<f64>::from_rows(&[[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 0.0, 1.0], [2.0, 5.0, -3.0]]).unwrap();
        let pca = fit_pca(&data, 2).unwrap();
        let z = pca.transform_row(&pca.mean).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(pca.transform_row(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn two_point_difficulty_standardizes_to_unit() {
        let reduced = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let (_, fm) = fuse_features(&reduced, &[0.0, 100.0], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(fm.row(0)[1], -1.0);
        assert_eq!(fm.row(1)[1], 1.0);
    }

    #[test]
    fn constant_difficulty_is_flagged_degenerate() {
        let reduced = Matrix::from_rows(&[[1.0], [-1.0], [0.5]]).unwrap();
        let (st, fm) = fuse_features(&reduced, &[37.1, 37.1, 37.1], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(st.degenerate, [false, true]);
        assert!(fm.rows.column(1).all(|x| x == 0.0));
    }

    #[test]
    fn fusion_needs_two_rows() {
        let reduced = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            fuse_features(&reduced, &[3.0], vec!["a".into()]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn feature_matrix_round_trips_bit_exactly() {
        let reduced = Matrix::<f64>::from_rows(&[[0.1, 1.0 / 3.0], [-2.5e-7, 7.0], [1e10, -0.3]]).unwrap();
        let (_, fm) = fuse_features(&reduced, &[12.5, 99.0, 0.0], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        fm.save(&path).unwrap();
        let back = FeatureMatrix::<f64>::load(&path).unwrap();
        for (x, y) in fm.rows.as_slice().iter().zip(back.rows.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back, fm);
    }

    #[test]
    fn single_precision_pipeline_runs() {
        let data = Matrix::<f32>::from_rows(&[[1.0, 2.0], [2.0, 1.0], [3.0, 5.0], [0.0, 1.0]]).unwrap();
        let pca = fit_pca(&data, 2).unwrap();
        let reduced = pca.transform(&data).unwrap();
        let back = pca.inverse_transform(&reduced).unwrap();
        for (a, b) in back.as_slice().iter().zip(data.as_slice()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
