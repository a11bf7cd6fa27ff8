//! Classical (linear) FPCA on basis coefficients.
//!
//! With centred coefficients `C` and Gram matrix `W`, the covariance operator
//! acts on coefficient vectors as `Cov(C) W`. Writing `W = S S` with `S` the
//! symmetric square root turns this into the symmetric problem
//! `S Cov(C) S e = lambda e`, and eigenfunction coefficients are `S^{-1} e`,
//! which are W-orthonormal by construction.

use nalgebra::{DMatrix, DVector};

use crate::bspline::{BSplineBasis, CurveSet, EvalMatrix, GramMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FpcaModel {
    basis: BSplineBasis,
    gram: GramMatrix,
    mean: Vec<f64>,
    /// `K x L`, one eigenfunction per row.
    components: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl FpcaModel {
    pub fn from_parts(
        basis: BSplineBasis,
        mean: Vec<f64>,
        components: DMatrix<f64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let l = basis.count();
        if mean.len() != l || components.ncols() != l {
            return Err(Error::shape(
                format!("mean and components with {l} columns"),
                format!("{} and {}", mean.len(), components.ncols()),
            ));
        }
        if eigenvalues.len() != components.nrows() {
            return Err(Error::shape(components.nrows(), eigenvalues.len()));
        }
        let gram = basis.gram_matrix();
        Ok(Self {
            basis,
            gram,
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// `n x K` scores `(x - mu) W Phi^T`.
    pub fn scores(&self, curves: &CurveSet) -> Result<DMatrix<f64>> {
        if curves.basis() != &self.basis {
            return Err(Error::InvalidInput(format!(
                "curve basis {:?} does not match model basis {:?}",
                curves.basis().descriptor(),
                self.basis.descriptor()
            )));
        }
        let mut centred = curves.coefficients().clone();
        let mu = DVector::from_column_slice(&self.mean).transpose();
        for mut row in centred.row_iter_mut() {
            row -= &mu;
        }
        Ok(centred * self.gram.matrix() * self.components.transpose())
    }

    /// Values of `mu + sum_k xi_k phi_k` on the grid of `eval`.
    pub fn reconstruct(&self, scores: &DMatrix<f64>, eval: &EvalMatrix) -> Result<DMatrix<f64>> {
        if scores.ncols() != self.n_components() {
            return Err(Error::shape(
                format!("{} score columns", self.n_components()),
                scores.ncols(),
            ));
        }
        if eval.basis_count() != self.basis.count() {
            return Err(Error::shape(self.basis.count(), eval.basis_count()));
        }
        let mut coefs = scores * &self.components;
        let mu = DVector::from_column_slice(&self.mean).transpose();
        for mut row in coefs.row_iter_mut() {
            row += &mu;
        }
        eval.apply(&coefs)
    }

    pub fn reconstruct_curves(&self, curves: &CurveSet, eval: &EvalMatrix) -> Result<DMatrix<f64>> {
        let scores = self.scores(curves)?;
        self.reconstruct(&scores, eval)
    }
}

/// Fits `K` components. Needs `1 <= K <= min(n - 1, L)`.
pub fn fit_fpca(curves: &CurveSet, gram: &GramMatrix, k: usize) -> Result<FpcaModel> {
    let n = curves.len();
    let l = curves.basis().count();
    if gram.dim() != l {
        return Err(Error::shape(format!("{l} x {l} Gram matrix"), gram.dim()));
    }
    if k == 0 || k > l || k + 1 > n {
        return Err(Error::InvalidDimension(format!(
            "component count K={k} must lie in [1, min(n-1, L)] = [1, {}]",
            (n.saturating_sub(1)).min(l)
        )));
    }
    let x = curves.coefficients();
    let mean: Vec<f64> = (0..l).map(|c| x.column(c).mean()).collect();
    let mut centred = x.clone();
    for (c, &m) in mean.iter().enumerate() {
        centred.column_mut(c).add_scalar_mut(-m);
    }
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);

    let (sqrt_w, inv_sqrt_w) = symmetric_sqrt(gram.matrix())?;
    let mut target = &sqrt_w * cov * &sqrt_w;
    // exact symmetry for the eigen-solver
    let t2 = target.transpose();
    target = (target + t2) * 0.5;
    let eig = target.symmetric_eigen();

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = DMatrix::zeros(k, l);
    let mut eigenvalues = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let mut phi = &inv_sqrt_w * eig.eigenvectors.column(idx);
        let norm = gram.inner(phi.as_slice(), phi.as_slice()).sqrt();
        phi /= norm;
        let pivot = phi
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            phi.neg_mut();
        }
        components.row_mut(row).copy_from(&phi.transpose());
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(FpcaModel {
        basis: curves.basis().clone(),
        gram: gram.clone(),
        mean,
        components,
        eigenvalues,
    })
}

fn symmetric_sqrt(w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = w.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&e| e.is_nan() || e <= 0.0) {
        return Err(Error::Internal(
            "Gram matrix is not positive definite".into(),
        ));
    }
    let q = &eig.eigenvectors;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_root = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt()));
    Ok((q * root * q.transpose(), q * inv_root * q.transpose()))
}
