//! Label-correlation matrices, their Laplacians and learned Laplacian
//! factors.
//!
//! A Laplacian factor `Z` (`l x k`) stands for the Laplacian `Z Zᵀ`. Its rows
//! are kept at unit norm so that `diag(Z Zᵀ) = 1`; `Z Zᵀ` itself is never
//! formed by the solver.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::LabelMatrix;
use crate::error::{GlocalError, Result};
use crate::linalg::sq_norm;

/// Symmetric `l x l` label-correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(pub Array2<f64>);

/// `L = diag(S 1) - S`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(pub Array2<f64>);

/// `l x k` factor with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianFactor(Array2<f64>);

impl AsRef<Array2<f64>> for LaplacianFactor {
    fn as_ref(&self) -> &Array2<f64> {
        &self.0
    }
}

impl LaplacianFactor {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn l(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    /// Wrap `z` if every row already has unit norm (within `1e-12`).
    pub fn from_unit_rows(z: Array2<f64>) -> Result<Self> {
        for (j, row) in z.outer_iter().enumerate() {
            let norm2 = sq_norm(&row);
            if (norm2 - 1.0).abs() > 1e-12 {
                return Err(GlocalError::InvalidArgument(format!(
                    "factor row {} has squared norm {norm2}",
                    j + 1
                )));
            }
        }
        Ok(Self(z))
    }

    /// The Laplacian `Z Zᵀ`. Only meant for inspection and tests.
    pub fn laplacian(&self) -> Array2<f64> {
        self.0.dot(&self.0.t())
    }
}

/// Cosine similarity between the label rows of `labels`.
///
/// Pairs involving an all-zero row get similarity 0.
pub fn cosine_correlation(labels: &LabelMatrix) -> CorrelationMatrix {
    cosine_of_rows(labels.to_f64().view())
}

fn cosine_of_rows(y: ArrayView2<f64>) -> CorrelationMatrix {
    let gram = y.dot(&y.t());
    let l = gram.nrows();
    let s = Array2::from_shape_fn((l, l), |(i, j)| {
        let denom = (gram[[i, i]] * gram[[j, j]]).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            gram[[i, j]] / denom
        }
    });
    CorrelationMatrix(s)
}

/// Graph Laplacian of a symmetric similarity matrix.
pub fn laplacian_of(s: &CorrelationMatrix) -> Result<LaplacianMatrix> {
    let s = &s.0;
    let l = s.nrows();
    if s.ncols() != l {
        return Err(GlocalError::Shape(format!(
            "correlation matrix must be square, got {}x{}",
            l,
            s.ncols()
        )));
    }
    for i in 0..l {
        for j in (i + 1)..l {
            if s[[i, j]] != s[[j, i]] {
                return Err(GlocalError::InvalidArgument(format!(
                    "correlation matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let degree = s.sum_axis(Axis(1));
    let mut lap = -s.clone();
    for i in 0..l {
        lap[[i, i]] += degree[i];
    }
    Ok(LaplacianMatrix(lap))
}

/// `Σ beta[m] * parts[m]`.
pub fn combine_correlations(
    parts: &[CorrelationMatrix],
    beta: &[f64],
) -> Result<CorrelationMatrix> {
    if parts.len() != beta.len() {
        return Err(GlocalError::Shape(format!(
            "{} matrices but {} weights",
            parts.len(),
            beta.len()
        )));
    }
    let first = parts
        .first()
        .ok_or_else(|| GlocalError::InvalidArgument("nothing to combine".into()))?;
    let dim = first.0.dim();
    let mut out = Array2::<f64>::zeros(dim);
    for (p, &b) in parts.iter().zip(beta) {
        if p.0.dim() != dim {
            return Err(GlocalError::Shape(format!(
                "expected {dim:?}, got {:?}",
                p.0.dim()
            )));
        }
        out.scaled_add(b, &p.0);
    }
    Ok(CorrelationMatrix(out))
}

/// Per-group cosine correlations for the label columns in each group.
pub fn group_correlations(labels: &LabelMatrix, groups: &[Vec<usize>]) -> Vec<CorrelationMatrix> {
    groups
        .iter()
        .map(|cols| cosine_correlation(&labels.select(cols)))
        .collect()
}

/// Normalise each row of `z` to unit length.
///
/// A zero row has no direction; it is replaced by a random unit vector drawn
/// from `seed`. The indices of such rows are returned alongside the factor.
pub fn project_unit_rows(mut z: Array2<f64>, seed: u64) -> (LaplacianFactor, Vec<usize>) {
    let mut reseeded = Vec::new();
    let mut rng: Option<ChaCha8Rng> = None;
    for (j, mut row) in z.outer_iter_mut().enumerate() {
        let mut norm = sq_norm(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            let rng = rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed));
            loop {
                row.mapv_inplace(|_| StandardNormal.sample(rng));
                norm = sq_norm(&row).sqrt();
                if norm > 0.0 {
                    break;
                }
            }
            reseeded.push(j);
        }
        // already-unit rows stay bit-identical
        if norm != 1.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    (LaplacianFactor(z), reseeded)
}

/// Random factor: i.i.d. standard normal entries, rows then normalised.
pub fn init_factor(l: usize, k: usize, seed: u64) -> LaplacianFactor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::from_shape_fn((l, k), |_| StandardNormal.sample(&mut rng));
    project_unit_rows(z, seed ^ 0x5EED_FAC7).0
}

/// `tr(Fᵀ Z Zᵀ F)` evaluated as `‖Zᵀ F‖²`.
pub fn factored_trace(z: &LaplacianFactor, f: &Array2<f64>) -> f64 {
    sq_norm(&z.0.t().dot(f))
}

/// Comma-separated rows, for inspection in external tools.
pub fn correlation_csv(s: &CorrelationMatrix) -> String {
    let mut out = String::new();
    for row in s.0.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn labels(rows: Array2<i8>) -> LabelMatrix {
        LabelMatrix::new(rows).unwrap()
    }

    /// Cosine of two integer rows by explicit loops.
    fn cosine_oracle(a: &[i8], b: &[i8]) -> f64 {
        let dot: i32 = a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum();
        let na: i32 = a.iter().map(|&x| (x as i32).pow(2)).sum();
        let nb: i32 = b.iter().map(|&x| (x as i32).pow(2)).sum();
        if na == 0 || nb == 0 {
            0.0
        } else {
            dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())
        }
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_correlation(&labels(array![[1, -1], [1, 1]]));
        assert_eq!(s.0[[0, 1]], cosine_oracle(&[1, -1], &[1, 1]));
        assert_eq!(s.0[[0, 1]], 0.0);
        assert_eq!(s.0[[0, 0]], 1.0);
        assert_eq!(s.0[[1, 1]], 1.0);

        let s = cosine_correlation(&labels(array![[1, -1, 1], [1, -1, 1]]));
        assert!((s.0[[0, 1]] - 1.0).abs() < 1e-15);

        let s = cosine_correlation(&labels(array![[1, 1], [-1, -1]]));
        assert!((s.0[[0, 1]] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_row_is_uncorrelated() {
        let s = cosine_correlation(&labels(array![[0, 0, 0], [1, 0, -1], [1, 1, 0]]));
        assert_eq!(s.0.row(0).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(s.0.column(0).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(s.0[[1, 1]], 1.0);
        assert!((s.0[[1, 2]] - cosine_oracle(&[1, 0, -1], &[1, 1, 0])).abs() < 1e-15);
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian_of(&CorrelationMatrix(array![[1.0, 0.5], [0.5, 1.0]])).unwrap();
        assert_eq!(l.0, array![[0.5, -0.5], [-0.5, 0.5]]);
        let l = laplacian_of(&CorrelationMatrix(Array2::eye(4))).unwrap();
        assert!(l.0.iter().all(|&v| v == 0.0));
        assert!(laplacian_of(&CorrelationMatrix(array![[1.0, 0.2], [0.3, 1.0]])).is_err());
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = Array2::from_shape_fn((6, 6), |_| rng.random_range(-1.0..1.0));
            let s = CorrelationMatrix(&a + &a.t());
            let l = laplacian_of(&s).unwrap();
            for row in l.0.outer_iter() {
                assert!(row.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn combine_selects_with_unit_weight() {
        let a = CorrelationMatrix(array![[1.0, 0.3], [0.3, 1.0]]);
        let b = CorrelationMatrix(array![[1.0, -0.7], [-0.7, 1.0]]);
        assert_eq!(
            combine_correlations(&[a.clone(), b.clone()], &[1.0, 0.0]).unwrap(),
            a
        );
        assert!(combine_correlations(std::slice::from_ref(&a), &[1.0, 2.0]).is_err());
        let c = CorrelationMatrix(Array2::eye(3));
        assert!(combine_correlations(&[a, c], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let (z, reseeded) = project_unit_rows(array![[3.0, 4.0]], 0);
        assert_eq!(z.as_array(), &array![[0.6, 0.8]]);
        assert!(reseeded.is_empty());

        let unit = array![[1.0, 0.0], [0.0, -1.0]];
        assert_eq!(project_unit_rows(unit.clone(), 0).0.as_array(), &unit);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = Array2::from_shape_fn((7, 3), |_| rng.random_range(-2.0..2.0));
        let once = project_unit_rows(raw, 0).0;
        let twice = project_unit_rows(once.as_array().clone(), 0).0;
        for (a, b) in once.as_array().iter().zip(twice.as_array()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_reseeds_zero_rows() {
        let (z, reseeded) = project_unit_rows(array![[0.0, 0.0], [2.0, 0.0]], 5);
        assert_eq!(reseeded, vec![0]);
        assert!((sq_norm(&z.as_array().row(0)) - 1.0).abs() < 1e-12);
        assert_eq!(z.as_array().row(1).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn init_factor_properties() {
        let z = init_factor(9, 4, 11);
        let lap = z.laplacian();
        for j in 0..9 {
            assert!((lap[[j, j]] - 1.0).abs() < 1e-12);
        }
        assert_eq!(init_factor(9, 4, 11), z);
        assert_ne!(init_factor(9, 4, 12), z);
        let one = init_factor(5, 1, 3);
        assert!(one.as_array().iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn factored_trace_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..20 {
            let z = init_factor(6, 3, seed);
            let f = Array2::from_shape_fn((6, 11), |_| rng.random_range(-3.0..3.0));
            let explicit = f.t().dot(&z.laplacian()).dot(&f).diag().sum();
            let factored = factored_trace(&z, &f);
            assert!(factored >= 0.0);
            assert!(
                (explicit - factored).abs() < 1e-10,
                "{explicit} vs {factored}"
            );
        }
    }

    #[test]
    fn csv_export() {
        let s = CorrelationMatrix(array![[1.0, -0.5], [-0.5, 1.0]]);
        assert_eq!(correlation_csv(&s), "1,-0.5\n-0.5,1\n");
    }
}
