//! Clamped uniform B-spline bases on `[0, 1]`.
//!
//! Curves and functional weights all live in the span of one basis. A curve is
//! carried as its coefficient row `x` (length `L`) together with its values on
//! an evaluation grid, which are `x` times the `L x M` evaluation matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Default cubic degree.
pub const DEFAULT_DEGREE: usize = 3;

/// Default ridge in [`smooth_curves`]; only guards against round-off.
pub const DEFAULT_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    count: usize,
    knots: Vec<f64>,
}

/// `(L, d)` pair identifying a basis; enough to rebuild it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub count: usize,
    pub degree: usize,
}

impl BSplineBasis {
    /// Clamped basis with `count` functions of the given degree and equally
    /// spaced interior knots.
    pub fn new(count: usize, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidDimension(format!(
                "spline degree must be at least 1, got {degree}"
            )));
        }
        if count < degree + 1 {
            return Err(Error::InvalidDimension(format!(
                "basis count L={count} must be at least degree + 1 = {}",
                degree + 1
            )));
        }
        let interior = count - degree - 1;
        let mut knots = Vec::with_capacity(count + degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        let spans = (interior + 1) as f64;
        knots.extend((1..=interior).map(|j| j as f64 / spans));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self {
            degree,
            count,
            knots,
        })
    }

    pub fn from_descriptor(desc: BasisDescriptor) -> Result<Self> {
        Self::new(desc.count, desc.degree)
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            count: self.count,
            degree: self.degree,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `L`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Distinct knot values `0 = k_0 < ... < k_S = 1` bounding the spans.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[self.degree..=self.count]
    }

    /// Index `i` with `knots[i] <= t < knots[i+1]`; `t = 1` maps to the last span.
    fn span(&self, t: f64) -> usize {
        let (lo, hi) = (self.degree, self.count);
        if t >= self.knots[hi] {
            return hi - 1;
        }
        // upper_bound over the active knots, then step back one
        let rel = self.knots[lo..=hi].partition_point(|&k| k <= t);
        lo + rel - 1
    }

    /// The `d + 1` possibly nonzero basis values at `t` and the index of the
    /// first of them. Triangular Cox–de Boor recurrence.
    pub fn eval_nonzero(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        check_domain(t)?;
        let p = self.degree;
        let i = self.span(t);
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - self.knots[i + 1 - j];
            right[j] = self.knots[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        Ok((i - p, n))
    }

    /// All `L` basis values at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (start, vals) = self.eval_nonzero(t)?;
        let mut row = vec![0.0; self.count];
        row[start..start + vals.len()].copy_from_slice(&vals);
        Ok(row)
    }

    /// The `L x M` matrix whose column `m` is the basis evaluated at `grid[m]`.
    pub fn eval_matrix(&self, grid: &[f64]) -> Result<EvalMatrix> {
        let width = self.degree + 1;
        let mut starts = Vec::with_capacity(grid.len());
        let mut values = Vec::with_capacity(grid.len() * width);
        let mut dense = DMatrix::zeros(self.count, grid.len());
        for (m, &t) in grid.iter().enumerate() {
            let (start, vals) = self.eval_nonzero(t)?;
            for (k, &v) in vals.iter().enumerate() {
                dense[(start + k, m)] = v;
            }
            starts.push(start);
            values.extend_from_slice(&vals);
        }
        Ok(EvalMatrix {
            grid: grid.to_vec(),
            width,
            starts,
            values,
            dense,
        })
    }

    /// Inner products `W[h][l] = \int_0^1 B_h B_l`, by Gauss–Legendre with
    /// `d + 1` nodes per knot span (exact for the degree `2d` integrand).
    pub fn gram_matrix(&self) -> GramMatrix {
        let rule = GaussLegendre::new(self.degree + 1);
        let mut w = DMatrix::zeros(self.count, self.count);
        for span in self.breakpoints().windows(2) {
            let (a, b) = (span[0], span[1]);
            for (t, wt) in rule.on_interval(a, b) {
                let (start, vals) = self
                    .eval_nonzero(t)
                    .expect("quadrature node lies inside [0, 1]");
                for (p, &vp) in vals.iter().enumerate() {
                    for (q, &vq) in vals.iter().enumerate().skip(p) {
                        w[(start + p, start + q)] += wt * vp * vq;
                    }
                }
            }
        }
        for h in 0..self.count {
            for l in 0..h {
                w[(h, l)] = w[(l, h)];
            }
        }
        GramMatrix(w)
    }
}

fn check_domain(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { value: t })
    }
}

/// `M` equally spaced points on `[0, 1]`, both endpoints included.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (m - 1) as f64;
            (0..m)
                .map(|i| if i + 1 == m { 1.0 } else { i as f64 / last })
                .collect()
        }
    }
}

/// Basis values on a grid, kept both dense and column-sparse.
///
/// Each column has at most `d + 1` nonzeros starting at `starts[m]`; the hot
/// loops in the network only touch those.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    grid: Vec<f64>,
    width: usize,
    starts: Vec<usize>,
    values: Vec<f64>,
    dense: DMatrix<f64>,
}

impl EvalMatrix {
    /// Wraps an arbitrary `L x M` matrix; every column is treated as dense.
    pub fn from_dense(grid: Vec<f64>, dense: DMatrix<f64>) -> Result<Self> {
        if dense.ncols() != grid.len() {
            return Err(Error::shape(grid.len(), dense.ncols()));
        }
        let width = dense.nrows();
        let values = dense.as_slice().to_vec();
        Ok(Self {
            starts: vec![0; grid.len()],
            grid,
            width,
            values,
            dense,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Number of basis functions (rows).
    pub fn basis_count(&self) -> usize {
        self.dense.nrows()
    }

    /// Number of grid points (columns).
    pub fn points(&self) -> usize {
        self.grid.len()
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    #[inline]
    pub fn column(&self, m: usize) -> (usize, &[f64]) {
        let off = m * self.width;
        (self.starts[m], &self.values[off..off + self.width])
    }

    /// Curve values `sum_l coefs[l] B_l(t_m)` for every grid point.
    pub fn curve_values(&self, coefs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coefs.len(), self.basis_count());
        for (m, o) in out.iter_mut().enumerate() {
            let (start, vals) = self.column(m);
            *o = vals
                .iter()
                .zip(&coefs[start..start + vals.len()])
                .map(|(b, c)| b * c)
                .sum();
        }
    }

    /// Row-wise product `coefs (n x L) * B (L x M)`.
    pub fn apply(&self, coefs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coefs.ncols() != self.basis_count() {
            return Err(Error::shape(
                format!("{} coefficient columns", self.basis_count()),
                format!("{}", coefs.ncols()),
            ));
        }
        Ok(coefs * &self.dense)
    }
}

/// `L x L` basis inner-product matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `\int f g` for curves given by coefficient vectors.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .enumerate()
            .map(|(h, fh)| {
                let row: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(l, gl)| self.0[(h, l)] * gl)
                    .sum();
                fh * row
            })
            .sum()
    }
}

/// Curves held both as basis coefficients (`n x L`) and dense values on a grid
/// (`n x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    basis: BSplineBasis,
    coefs: DMatrix<f64>,
    eval: EvalMatrix,
    values: DMatrix<f64>,
}

impl CurveSet {
    pub fn from_coefficients(
        basis: BSplineBasis,
        coefs: DMatrix<f64>,
        grid: &[f64],
    ) -> Result<Self> {
        if coefs.nrows() == 0 {
            return Err(Error::InvalidInput(
                "curve set needs at least one curve".into(),
            ));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "evaluation grid needs at least 2 points, got {}",
                grid.len()
            )));
        }
        check_increasing(grid, "evaluation grid")?;
        let eval = basis.eval_matrix(grid)?;
        let values = eval.apply(&coefs)?;
        Ok(Self {
            basis,
            coefs,
            eval,
            values,
        })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.coefs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.nrows() == 0
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefs
    }

    pub fn coefficient_row(&self, i: usize) -> Vec<f64> {
        self.coefs.row(i).iter().copied().collect()
    }

    pub fn grid(&self) -> &[f64] {
        self.eval.grid()
    }

    pub fn eval_matrix(&self) -> &EvalMatrix {
        &self.eval
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn value_row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Subset of curves, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let coefs = self.coefs.select_rows(rows);
        let values = self.values.select_rows(rows);
        Self {
            basis: self.basis.clone(),
            coefs,
            eval: self.eval.clone(),
            values,
        }
    }

    /// Same curves re-evaluated on a different grid.
    pub fn regrid(&self, grid: &[f64]) -> Result<Self> {
        Self::from_coefficients(self.basis.clone(), self.coefs.clone(), grid)
    }
}

fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    for (i, &t) in grid.iter().enumerate() {
        check_domain(t)?;
        if i > 0 && t <= grid[i - 1] {
            return Err(Error::InvalidInput(format!(
                "{what} must be strictly increasing (index {i})"
            )));
        }
    }
    Ok(())
}

/// Per-curve ridge least squares of the rows of `y` (observed on `obs_grid`)
/// onto the basis; the result is evaluated on `out_grid`.
pub fn smooth_curves(
    y: &DMatrix<f64>,
    obs_grid: &[f64],
    basis: &BSplineBasis,
    ridge: f64,
    out_grid: &[f64],
) -> Result<CurveSet> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    if y.ncols() != obs_grid.len() {
        return Err(Error::shape(
            format!("{} observation columns", obs_grid.len()),
            y.ncols(),
        ));
    }
    check_increasing(obs_grid, "observation grid")?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation matrix".into()));
    }
    let l = basis.count();
    // design is T x L
    let design = basis.eval_matrix(obs_grid)?.dense().transpose();
    let mut normal = design.transpose() * &design;
    if ridge == 0.0 {
        let eig = normal.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let rank = eig
            .eigenvalues
            .iter()
            .filter(|&&e| e > max * 1e-12 && e > 0.0)
            .count();
        if rank < l {
            return Err(Error::Singular { rank, dim: l });
        }
    } else {
        for i in 0..l {
            normal[(i, i)] += ridge;
        }
    }
    let chol = normal
        .cholesky()
        .ok_or(Error::Singular { rank: 0, dim: l })?;
    // (n x T) * (T x L) gives the right-hand sides as rows
    let rhs = y * &design;
    let mut coefs = DMatrix::zeros(y.nrows(), l);
    for i in 0..y.nrows() {
        let b = DVector::from_iterator(l, rhs.row(i).iter().copied());
        let x = chol.solve(&b);
        coefs.row_mut(i).copy_from(&x.transpose());
    }
    CurveSet::from_coefficients(basis.clone(), coefs, out_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bernstein_knots() {
        let b = BSplineBasis::new(4, 3).unwrap();
        assert_eq!(b.knots(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn ten_cubic_interior_knots() {
        let b = BSplineBasis::new(10, 3).unwrap();
        assert_eq!(b.knots().len(), 14);
        for j in 1..=6 {
            assert!((b.knots()[3 + j] - j as f64 / 7.0).abs() < 1e-15);
        }
        let interior = &b.knots()[4..10];
        assert!(interior.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn too_few_functions() {
        assert!(matches!(
            BSplineBasis::new(3, 3),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn endpoint_values() {
        let b = BSplineBasis::new(4, 3).unwrap();
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.eval(1.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn bernstein_midpoint() {
        let b = BSplineBasis::new(4, 3).unwrap();
        let v = b.eval(0.5).unwrap();
        let want = [0.125, 0.375, 0.375, 0.125];
        for (a, w) in v.iter().zip(want) {
            assert!((a - w).abs() < 1e-15);
        }
    }

    #[test]
    fn outside_domain() {
        let b = BSplineBasis::new(6, 3).unwrap();
        assert!(matches!(b.eval(1.0001), Err(Error::Domain { .. })));
        assert!(matches!(b.eval(-1e-9), Err(Error::Domain { .. })));
        assert!(b.eval_matrix(&[0.0, 1.5]).is_err());
    }

    #[test]
    fn local_support() {
        let b = BSplineBasis::new(12, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t: f64 = rng.random();
            let (start, vals) = b.eval_nonzero(t).unwrap();
            let row = b.eval(t).unwrap();
            for (l, v) in row.iter().enumerate() {
                if l < start || l >= start + vals.len() {
                    assert_eq!(*v, 0.0);
                } else {
                    assert!(*v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn bernstein_gram_corner() {
        let w = BSplineBasis::new(4, 3).unwrap().gram_matrix();
        assert!((w.matrix()[(0, 0)] - 1.0 / 7.0).abs() < 1e-14);
        // \int 3t(1-t)^2 (1-t)^3 dt = 3 B(2,6) = 1/14
        assert!((w.matrix()[(0, 1)] - 1.0 / 14.0).abs() < 1e-14);
    }

    #[test]
    fn gram_is_banded_symmetric_and_sums_to_one() {
        for (l, d) in [(4, 3), (10, 3), (15, 2), (7, 1), (20, 3)] {
            let w = BSplineBasis::new(l, d).unwrap().gram_matrix();
            let m = w.matrix();
            assert!((m.sum() - 1.0).abs() < 1e-12);
            assert_eq!(m, &m.transpose());
            for h in 0..l {
                for k in 0..l {
                    assert!(m[(h, k)] >= 0.0);
                    if h.abs_diff(k) > d {
                        assert_eq!(m[(h, k)], 0.0);
                    }
                }
            }
            let eig = m.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn eval_matrix_columns() {
        let b = BSplineBasis::new(10, 3).unwrap();
        let grid = uniform_grid(101);
        let e = b.eval_matrix(&grid).unwrap();
        assert_eq!(e.dense()[(0, 0)], 1.0);
        for l in 1..10 {
            assert_eq!(e.dense()[(l, 0)], 0.0);
        }
        for (m, &t) in grid.iter().enumerate() {
            let s: f64 = e.dense().column(m).sum();
            assert!((s - 1.0).abs() < 1e-12);
            let direct = b.eval(t).unwrap();
            assert_eq!(direct.as_slice(), e.dense().column(m).as_slice());
        }
    }

    #[test]
    fn eval_matrix_reproduces_curve_values() {
        let b = BSplineBasis::new(8, 3).unwrap();
        let coefs: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let grid = uniform_grid(33);
        let e = b.eval_matrix(&grid).unwrap();
        let mut sparse = vec![0.0; 33];
        e.curve_values(&coefs, &mut sparse);
        for (m, &t) in grid.iter().enumerate() {
            let row = b.eval(t).unwrap();
            let direct: f64 = row.iter().zip(&coefs).map(|(a, c)| a * c).sum();
            assert!((direct - sparse[m]).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothing_constant_curve() {
        let b = BSplineBasis::new(10, 3).unwrap();
        let obs = uniform_grid(51);
        let y = DMatrix::from_element(3, 51, 2.5);
        let out = uniform_grid(101);
        let cs = smooth_curves(&y, &obs, &b, 0.0, &out).unwrap();
        for v in cs.values().iter() {
            assert!((v - 2.5).abs() < 1e-10);
        }
        let cs = smooth_curves(&y, &obs, &b, DEFAULT_RIDGE, &out).unwrap();
        for v in cs.values().iter() {
            assert!((v - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn smoothing_recovers_in_span_curve() {
        let b = BSplineBasis::new(10, 3).unwrap();
        let obs = uniform_grid(51);
        let truth: Vec<f64> = (0..10).map(|i| ((i * i) as f64 * 0.37).cos()).collect();
        let e = b.eval_matrix(&obs).unwrap();
        let mut row = vec![0.0; 51];
        e.curve_values(&truth, &mut row);
        let y = DMatrix::from_row_slice(1, 51, &row);
        let cs = smooth_curves(&y, &obs, &b, 0.0, &obs).unwrap();
        for (a, t) in cs.coefficient_row(0).iter().zip(&truth) {
            assert!((a - t).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_deficient_without_ridge() {
        let b = BSplineBasis::new(10, 3).unwrap();
        let obs = uniform_grid(6);
        let y = DMatrix::from_element(2, 6, 1.0);
        let err = smooth_curves(&y, &obs, &b, 0.0, &obs).unwrap_err();
        match err {
            Error::Singular { rank, dim } => {
                assert_eq!(dim, 10);
                assert!(rank < 10);
            }
            other => panic!("unexpected {other}"),
        }
        // a ridge makes the same system solvable
        assert!(smooth_curves(&y, &obs, &b, 1e-6, &obs).is_ok());
    }

    #[test]
    fn uniform_grid_endpoints() {
        assert_eq!(uniform_grid(5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = uniform_grid(101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 1.0);
    }
}
