//! Dense symmetric-positive-definite matrix state shared by the estimators
//! and the planner.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::MnlError;
use crate::spec::FeatureVec;
use crate::Result;

/// A regularized Gram matrix together with a Cholesky factorization that is
/// refreshed after every update. Updates are rank-`U` per step, so a full
/// `O(d^3)` refresh keeps the factor exact at a cost that is constant in the
/// episode count.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GramData", into = "GramData")]
pub struct GramMatrix {
    mat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Explicit inverse, refreshed with the factorization. Keeps the
    /// per-backup width queries allocation-free.
    inv: DMatrix<f64>,
}

/// `(L L^T)^{-1}` by inverting the triangular factor and forming `X^T X`
/// with `X = L^{-1}`. Runs on raw column-major slices; this sits on the
/// per-update path of every estimator.
fn inverse_from_cholesky(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let l_mat = chol.l_dirty();
    let d = l_mat.nrows();
    let l = l_mat.as_slice();
    let at = |i: usize, j: usize| l[j * d + i];
    // Forward-substitute the identity: X = L^{-1}, lower triangular,
    // column-major in `x`.
    let mut x = vec![0.0; d * d];
    for col in 0..d {
        x[col * d + col] = 1.0 / at(col, col);
        for i in (col + 1)..d {
            let mut acc = 0.0;
            for j in col..i {
                acc -= at(i, j) * x[col * d + j];
            }
            x[col * d + i] = acc / at(i, i);
        }
    }
    // inv = X^T X: entry (i, j) contracts columns i and j of x.
    let mut inv = DMatrix::zeros(d, d);
    for i in 0..d {
        let ci = &x[i * d..(i + 1) * d];
        for j in i..d {
            let cj = &x[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for k in j..d {
                acc += ci[k] * cj[k];
            }
            inv[(i, j)] = acc;
            inv[(j, i)] = acc;
        }
    }
    inv
}

/// Serialized form: dimension plus row-major entries.
#[derive(Serialize, Deserialize)]
struct GramData {
    dim: usize,
    entries: Vec<f64>,
}

impl From<GramMatrix> for GramData {
    fn from(g: GramMatrix) -> Self {
        GramData {
            dim: g.mat.nrows(),
            entries: g.mat.transpose().as_slice().to_vec(),
        }
    }
}

impl TryFrom<GramData> for GramMatrix {
    type Error = MnlError;
    fn try_from(d: GramData) -> Result<Self> {
        if d.entries.len() != d.dim * d.dim {
            return Err(MnlError::InvalidArgument(
                "gram entry count does not match dimension".into(),
            ));
        }
        let mat = DMatrix::from_row_slice(d.dim, d.dim, &d.entries);
        GramMatrix::from_matrix(mat)
    }
}

impl GramMatrix {
    /// `lambda * I_d`.
    pub fn regularized(dim: usize, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(MnlError::InvalidArgument(
                "regularization must be positive".into(),
            ));
        }
        Self::from_matrix(DMatrix::identity(dim, dim) * lambda)
    }

    pub fn from_matrix(mat: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(mat.clone()).ok_or(MnlError::NotPositiveDefinite)?;
        let inv = inverse_from_cholesky(&chol);
        Ok(Self { mat, chol, inv })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// The cached inverse.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// Apply an in-place update to the matrix and refresh the factorization.
    pub fn update<F: FnOnce(&mut DMatrix<f64>)>(&mut self, f: F) -> Result<()> {
        f(&mut self.mat);
        self.chol = Cholesky::new(self.mat.clone()).ok_or(MnlError::NotPositiveDefinite)?;
        self.inv = inverse_from_cholesky(&self.chol);
        Ok(())
    }

    /// `G^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `v^T G v`.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.mat * v))
    }

    /// `v^T G^{-1} v`.
    pub fn inv_quad(&self, v: &DVector<f64>) -> f64 {
        let d = self.dim();
        let cols = self.inv.as_slice();
        let mut total = 0.0;
        for j in 0..d {
            let col = &cols[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for i in 0..d {
                acc += col[i] * v[i];
            }
            total += acc * v[j];
        }
        total
    }

    /// `phi^T G^{-1} phi` without densifying one-hot features.
    pub fn inv_quad_feature(&self, phi: &FeatureVec) -> f64 {
        match phi {
            FeatureVec::Dense(v) => self.inv_quad(v),
            FeatureVec::OneHot { index, .. } => self.inv[(*index, *index)],
        }
    }

    /// Draw `count` samples from `N(0, sigma^2 G^{-1})`.
    ///
    /// With `G = L L^T`, each sample is `sigma * L^{-T} z` for standard
    /// normal `z`, obtained by back-substitution against the factor already
    /// at hand.
    pub fn sample_inv_gaussians<R: Rng + ?Sized>(
        &self,
        sigma: f64,
        count: usize,
        rng: &mut R,
    ) -> Vec<DVector<f64>> {
        let d = self.dim();
        let l = self.chol.l_dirty().as_slice().to_vec();
        (0..count)
            .map(|_| {
                let mut xi = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
                if sigma == 0.0 {
                    return DVector::zeros(d);
                }
                // Solve L^T xi = z in place; column i of the factor holds
                // the multipliers, and only the lower triangle is valid.
                for i in (0..d).rev() {
                    let col = &l[i * d..(i + 1) * d];
                    let mut acc = xi[i];
                    for j in (i + 1)..d {
                        acc -= col[j] * xi[j];
                    }
                    xi[i] = acc / col[i];
                }
                xi * sigma
            })
            .collect()
    }

    /// Single-sample variant of [`Self::sample_inv_gaussians`].
    pub fn sample_inv_gaussian<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> DVector<f64> {
        self.sample_inv_gaussians(sigma, 1, rng).pop().unwrap()
    }

    /// Smallest eigenvalue (test and validation helper).
    pub fn min_eigenvalue(&self) -> f64 {
        self.mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute asymmetry `|G_ij - G_ji|` (test helper).
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)]).abs());
            }
        }
        worst
    }
}
