//! Natural cubic spline machinery: knot grids, the roughness penalty
//! `Ω = Q R⁻¹ Qᵀ`, spline completion from knot values, evaluation with linear
//! extrapolation, and roughness.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{solve_tridiagonal, sorted_symmetric_eigen};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SplineError {
    #[error("knots must be finite and strictly increasing (violation at index {index})")]
    InvalidGrid { index: usize },
    #[error("a natural cubic spline needs at least 3 knots, got {0}")]
    TooFewKnots(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("spline and penalty were built on different knot grids")]
    GridMismatch,
    #[error("tridiagonal solve failed (zero pivot)")]
    Singular,
}

/// Strictly increasing knot locations `t_1 < … < t_m`, `m ≥ 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    knots: Vec<f64>,
    gaps: Vec<f64>,
}

impl KnotGrid {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() < 3 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        if let Some(index) = knots.iter().position(|t| !t.is_finite()) {
            return Err(SplineError::InvalidGrid { index });
        }
        let gaps: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(j) = gaps.iter().position(|h| *h <= 0.0) {
            return Err(SplineError::InvalidGrid { index: j + 1 });
        }
        Ok(Self { knots, gaps })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `h_j = t_{j+1} − t_j`.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// True when `t` lies outside `[t_1, t_m]`.
    pub fn is_extrapolation(&self, t: f64) -> bool {
        t < self.first() || t > self.last()
    }

    /// Index `j` of the interval `[t_j, t_{j+1}]` containing `t` (clamped).
    fn interval(&self, t: f64) -> usize {
        let m = self.knots.len();
        match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            p if p >= m => m - 2,
            p => p - 1,
        }
    }

    /// Trapezoid quadrature weights on the knots.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let m = self.len();
        let mut w = vec![0.0; m];
        for (j, h) in self.gaps.iter().enumerate() {
            w[j] += h / 2.0;
            w[j + 1] += h / 2.0;
        }
        w
    }
}

/// The banded matrices `Q` (m×(m−2)), `R` ((m−2)×(m−2), tridiagonal), the
/// penalty `Ω = Q R⁻¹ Qᵀ` and its eigendecomposition `Ω = Γ diag(δ) Γᵀ`.
///
/// `R` uses `r_jj = (h_{j−1} + h_j)/3`, `r_{j,j+1} = h_j/6`, which is
/// positive definite for every admissible grid.
#[derive(Debug, Clone)]
pub struct PenaltyOperator {
    grid: KnotGrid,
    q: DMatrix<f64>,
    r_diag: Vec<f64>,
    r_off: Vec<f64>,
    omega: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Relative threshold below which an eigenvalue of `Ω` counts as a null-space
/// eigenvalue when classifying, not when computing.
pub const NULL_EIGEN_REL_TOL: f64 = 1e-12;

impl PenaltyOperator {
    pub fn new(grid: &KnotGrid) -> Self {
        let m = grid.len();
        let h = grid.gaps();
        // Column c of Q corresponds to interior knot j = c + 1 (0-based knots).
        let mut q = DMatrix::zeros(m, m - 2);
        for c in 0..m - 2 {
            let j = c + 1;
            q[(j - 1, c)] = 1.0 / h[j - 1];
            q[(j, c)] = -1.0 / h[j - 1] - 1.0 / h[j];
            q[(j + 1, c)] = 1.0 / h[j];
        }
        let r_diag: Vec<f64> = (1..m - 1).map(|j| (h[j - 1] + h[j]) / 3.0).collect();
        let r_off: Vec<f64> = (1..m - 2).map(|j| h[j] / 6.0).collect();

        // Ω = Q R⁻¹ Qᵀ, one tridiagonal solve per column of Qᵀ.
        let qt = q.transpose();
        let mut rinv_qt = DMatrix::zeros(m - 2, m);
        for col in 0..m {
            let rhs: Vec<f64> = qt.column(col).iter().copied().collect();
            let sol = solve_tridiagonal(&r_off, &r_diag, &r_off, &rhs)
                .expect("R is positive definite for a valid grid");
            rinv_qt.set_column(col, &DVector::from_vec(sol));
        }
        let omega = crate::linalg::symmetrize(&(&q * rinv_qt));
        let (eigenvalues, eigenvectors) = null_aware_eigen(&omega, grid.knots());
        Self {
            grid: grid.clone(),
            q,
            r_diag,
            r_off,
            omega,
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Dense copy of the tridiagonal `R`.
    pub fn r(&self) -> DMatrix<f64> {
        let n = self.r_diag.len();
        let mut r = DMatrix::zeros(n, n);
        for i in 0..n {
            r[(i, i)] = self.r_diag[i];
            if i + 1 < n {
                r[(i, i + 1)] = self.r_off[i];
                r[(i + 1, i)] = self.r_off[i];
            }
        }
        r
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Eigenvalues `δ_1 ≤ … ≤ δ_m` of `Ω`; the first two are exactly zero.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthogonal `Γ` whose columns pair with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Number of eigenvalues below `NULL_EIGEN_REL_TOL · max δ`.
    pub fn null_dimension(&self) -> usize {
        let max = self.eigenvalues.max();
        self.eigenvalues
            .iter()
            .filter(|d| d.abs() < NULL_EIGEN_REL_TOL * max)
            .count()
    }

    /// `vᵀ Ω v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (v.transpose() * &self.omega * &v)[(0, 0)]
    }

    /// Interior second derivatives solving `R γ = Qᵀ f`.
    fn interior_second_derivatives(&self, values: &[f64]) -> Result<Vec<f64>, SplineError> {
        let f = DVector::from_column_slice(values);
        let rhs: Vec<f64> = (self.q.transpose() * f).iter().copied().collect();
        solve_tridiagonal(&self.r_off, &self.r_diag, &self.r_off, &rhs).ok_or(SplineError::Singular)
    }
}

/// Eigendecomposition of `Ω` with its null space `span{1, t}` imposed
/// exactly: the two null eigenvalues are zero and the remaining pairs come
/// from `Ω` restricted to the orthogonal complement. A generic solver
/// returns null eigenvalues of order `ε‖Ω‖`, which large `λ` turns into
/// spurious shrinkage of the affine part.
fn null_aware_eigen(omega: &DMatrix<f64>, knots: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = knots.len();
    let mean = knots.iter().sum::<f64>() / m as f64;
    let mut stacked = DMatrix::zeros(m, m + 2);
    for j in 0..m {
        stacked[(j, 0)] = 1.0;
        stacked[(j, 1)] = knots[j] - mean;
        stacked[(j, j + 2)] = 1.0;
    }
    let basis = stacked.qr().q();
    let complement = basis.columns(2, m - 2).into_owned();
    let restricted = complement.transpose() * omega * &complement;
    let (d, v) = sorted_symmetric_eigen(&restricted);
    let mut values = DVector::zeros(m);
    let mut vectors = DMatrix::zeros(m, m);
    vectors.columns_mut(0, 2).copy_from(&basis.columns(0, 2));
    vectors.columns_mut(2, m - 2).copy_from(&(complement * v));
    values.rows_mut(2, m - 2).copy_from(&d);
    (values, vectors)
}

/// Build the penalty operator for a grid.
pub fn build_penalty(grid: &KnotGrid) -> PenaltyOperator {
    PenaltyOperator::new(grid)
}

/// A natural cubic spline stored as knot values plus second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalCubicSpline {
    grid: KnotGrid,
    values: Vec<f64>,
    second_derivatives: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Assemble from stored parts, e.g. when reading a serialized model.
    pub fn from_parts(grid: KnotGrid, values: Vec<f64>, second_derivatives: Vec<f64>) -> Result<Self, SplineError> {
        for len in [values.len(), second_derivatives.len()] {
            if len != grid.len() {
                return Err(SplineError::Dimension { expected: grid.len(), found: len });
            }
        }
        Ok(Self { grid, values, second_derivatives })
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `γ_j = f″(t_j)`, with `γ_1 = γ_m = 0`.
    pub fn second_derivatives(&self) -> &[f64] {
        &self.second_derivatives
    }

    /// Evaluate the spline. Outside `[t_1, t_m]` the spline continues linearly
    /// with its boundary slope.
    pub fn evaluate(&self, t: f64) -> f64 {
        let knots = self.grid.knots();
        let h = self.grid.gaps();
        let f = &self.values;
        let g = &self.second_derivatives;
        let m = knots.len();
        if t < knots[0] {
            let slope = (f[1] - f[0]) / h[0] - h[0] * (2.0 * g[0] + g[1]) / 6.0;
            return f[0] + slope * (t - knots[0]);
        }
        if t > knots[m - 1] {
            let hl = h[m - 2];
            let slope = (f[m - 1] - f[m - 2]) / hl + hl * (g[m - 2] + 2.0 * g[m - 1]) / 6.0;
            return f[m - 1] + slope * (t - knots[m - 1]);
        }
        let j = self.grid.interval(t);
        let hj = h[j];
        let a = t - knots[j];
        let b = knots[j + 1] - t;
        (a * f[j + 1] + b * f[j]) / hj
            - a * b / 6.0 * ((1.0 + a / hj) * g[j + 1] + (1.0 + b / hj) * g[j])
    }

    /// Second derivative at `t`: piecewise linear inside, zero outside.
    pub fn second_derivative(&self, t: f64) -> f64 {
        if self.grid.is_extrapolation(t) {
            return 0.0;
        }
        let knots = self.grid.knots();
        let j = self.grid.interval(t);
        let w = (t - knots[j]) / self.grid.gaps()[j];
        (1.0 - w) * self.second_derivatives[j] + w * self.second_derivatives[j + 1]
    }

    /// `∫ f″(t)² dt` integrated exactly from the piecewise-linear second
    /// derivative, independent of `Ω`.
    pub fn curvature_integral(&self) -> f64 {
        let g = &self.second_derivatives;
        self.grid
            .gaps()
            .iter()
            .enumerate()
            .map(|(j, h)| h * (g[j] * g[j] + g[j] * g[j + 1] + g[j + 1] * g[j + 1]) / 3.0)
            .sum()
    }
}

/// The unique natural cubic spline interpolating `values` at the penalty's knots.
pub fn complete_spline(values: &[f64], penalty: &PenaltyOperator) -> Result<NaturalCubicSpline, SplineError> {
    let m = penalty.grid.len();
    if values.len() != m {
        return Err(SplineError::Dimension { expected: m, found: values.len() });
    }
    let interior = penalty.interior_second_derivatives(values)?;
    let mut gamma = Vec::with_capacity(m);
    gamma.push(0.0);
    gamma.extend(interior);
    gamma.push(0.0);
    Ok(NaturalCubicSpline {
        grid: penalty.grid.clone(),
        values: values.to_vec(),
        second_derivatives: gamma,
    })
}

/// `fᵀ Ω f` for the spline's knot values.
pub fn roughness(spline: &NaturalCubicSpline, penalty: &PenaltyOperator) -> Result<f64, SplineError> {
    if spline.grid != penalty.grid {
        return Err(SplineError::GridMismatch);
    }
    Ok(penalty.quadratic_form(&spline.values).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(knots: &[f64]) -> KnotGrid {
        KnotGrid::new(knots.to_vec()).unwrap()
    }

    /// Piecewise-cubic natural interpolant from a dense global system on
    /// per-interval polynomial coefficients; independent of Q and R.
    fn dense_ncs_coefficients(knots: &[f64], values: &[f64]) -> Vec<[f64; 4]> {
        let m = knots.len();
        let p = m - 1;
        let n = 4 * p;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut row = 0;
        for j in 0..p {
            let h = knots[j + 1] - knots[j];
            a[(row, 4 * j)] = 1.0;
            b[row] = values[j];
            row += 1;
            for k in 0..4 {
                a[(row, 4 * j + k)] = h.powi(k as i32);
            }
            b[row] = values[j + 1];
            row += 1;
        }
        for j in 0..p - 1 {
            let h = knots[j + 1] - knots[j];
            // first derivative continuity
            a[(row, 4 * j + 1)] = 1.0;
            a[(row, 4 * j + 2)] = 2.0 * h;
            a[(row, 4 * j + 3)] = 3.0 * h * h;
            a[(row, 4 * (j + 1) + 1)] = -1.0;
            row += 1;
            // second derivative continuity
            a[(row, 4 * j + 2)] = 2.0;
            a[(row, 4 * j + 3)] = 6.0 * h;
            a[(row, 4 * (j + 1) + 2)] = -2.0;
            row += 1;
        }
        a[(row, 2)] = 2.0;
        row += 1;
        let hl = knots[m - 1] - knots[m - 2];
        a[(row, 4 * (p - 1) + 2)] = 2.0;
        a[(row, 4 * (p - 1) + 3)] = 6.0 * hl;
        let x = a.lu().solve(&b).unwrap();
        (0..p).map(|j| [x[4 * j], x[4 * j + 1], x[4 * j + 2], x[4 * j + 3]]).collect()
    }

    fn dense_curvature_bilinear(knots: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let cu = dense_ncs_coefficients(knots, u);
        let cv = dense_ncs_coefficients(knots, v);
        let mut total = 0.0;
        for j in 0..knots.len() - 1 {
            let h = knots[j + 1] - knots[j];
            let (c1, d1) = (cu[j][2], cu[j][3]);
            let (c2, d2) = (cv[j][2], cv[j][3]);
            // ∫ (2c1 + 6d1 s)(2c2 + 6d2 s) ds over [0, h]
            total += 4.0 * c1 * c2 * h + 6.0 * (c1 * d2 + c2 * d1) * h * h + 12.0 * d1 * d2 * h.powi(3);
        }
        total
    }

    fn dense_omega(knots: &[f64]) -> DMatrix<f64> {
        let m = knots.len();
        let e = |i: usize| (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        DMatrix::from_fn(m, m, |i, j| dense_curvature_bilinear(knots, &e(i), &e(j)))
    }

    /// `∫ φ_a φ_b` for piecewise-linear hat functions by composite Simpson.
    fn hat_product_integral(knots: &[f64], a: usize, b: usize) -> f64 {
        let hat = |i: usize, t: f64| {
            let mut v = vec![0.0; knots.len()];
            v[i] = 1.0;
            let g = grid(knots);
            let j = g.interval(t);
            let w = (t - knots[j]) / g.gaps()[j];
            (1.0 - w) * v[j] + w * v[j + 1]
        };
        let mut total = 0.0;
        for j in 0..knots.len() - 1 {
            let n = 64;
            let h = (knots[j + 1] - knots[j]) / n as f64;
            for s in 0..n {
                let x0 = knots[j] + s as f64 * h;
                let xm = x0 + h / 2.0;
                let x1 = x0 + h;
                let f = |t: f64| hat(a, t) * hat(b, t);
                total += h / 6.0 * (f(x0) + 4.0 * f(xm) + f(x1));
            }
        }
        total
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(KnotGrid::new(vec![0.0, 1.0]).unwrap_err(), SplineError::TooFewKnots(2));
        assert_eq!(
            KnotGrid::new(vec![0.0, 1.0, 1.0]).unwrap_err(),
            SplineError::InvalidGrid { index: 2 }
        );
        assert!(KnotGrid::new(vec![0.0, 2.0, 1.0, 3.0]).is_err());
    }

    #[test]
    fn equal_spacing_q_columns_are_second_differences() {
        let p = build_penalty(&grid(&[0.0, 1.0, 2.0, 3.0, 4.0]));
        for c in 0..3 {
            let col: Vec<f64> = p.q().column(c).iter().copied().collect();
            let mut expected = vec![0.0; 5];
            expected[c] = 1.0;
            expected[c + 1] = -2.0;
            expected[c + 2] = 1.0;
            assert_eq!(col, expected);
        }
    }

    #[test]
    fn r_matches_hat_function_integrals() {
        for knots in [vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.5, 3.0, 6.0, 9.0, 12.0, 24.0]] {
            let p = build_penalty(&grid(&knots));
            let r = p.r();
            for a in 0..r.nrows() {
                for b in 0..r.ncols() {
                    let oracle = hat_product_integral(&knots, a + 1, b + 1);
                    assert!((r[(a, b)] - oracle).abs() < 1e-10, "{a},{b}: {} vs {oracle}", r[(a, b)]);
                }
            }
        }
        let r = build_penalty(&grid(&[0.0, 1.0, 2.0, 3.0])).r();
        assert_relative_eq!(r[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(r[(0, 1)], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn omega_matches_dense_oracle_on_equal_spacing() {
        let knots: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let p = build_penalty(&grid(&knots));
        let oracle = dense_omega(&knots);
        assert!(crate::linalg::max_abs_diff(p.omega(), &oracle) < 1e-8);
    }

    #[test]
    fn three_knot_hand_example() {
        let p = build_penalty(&grid(&[0.0, 1.0, 2.0]));
        let s = complete_spline(&[0.0, 1.0, 0.0], &p).unwrap();
        assert_relative_eq!(s.second_derivatives()[1], -3.0, epsilon = 1e-14);
        assert_eq!(s.second_derivatives()[0], 0.0);
        assert_eq!(s.second_derivatives()[2], 0.0);
        assert_relative_eq!(s.evaluate(0.5), 0.6875, epsilon = 1e-14);
        // dense polynomial oracle for the same spline
        let c = dense_ncs_coefficients(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let u: f64 = 0.5;
        assert_relative_eq!(c[0][0] + c[0][1] * u + c[0][2] * u * u + c[0][3] * u.powi(3), 0.6875, epsilon = 1e-12);
    }

    #[test]
    fn affine_values_have_zero_curvature_and_reproduce_lines() {
        let g = grid(&[1.5, 3.0, 6.0, 9.0, 12.0, 24.0, 60.0]);
        let p = build_penalty(&g);
        let vals: Vec<f64> = g.knots().iter().map(|t| 0.3 * t - 2.0).collect();
        let s = complete_spline(&vals, &p).unwrap();
        assert!(s.second_derivatives().iter().all(|x| x.abs() < 1e-12));
        for t in [0.0, 2.0, 7.7, 33.0, 100.0] {
            assert_relative_eq!(s.evaluate(t), 0.3 * t - 2.0, epsilon = 1e-10);
        }
        assert!(roughness(&s, &p).unwrap() < 1e-20);
    }

    #[test]
    fn extrapolation_is_linear_with_boundary_slope() {
        let g = grid(&[0.0, 1.0, 3.0, 4.0]);
        let p = build_penalty(&g);
        let s = complete_spline(&[1.0, 0.0, 2.0, -1.0], &p).unwrap();
        let eps = 1e-6;
        let left_slope = (s.evaluate(eps) - s.evaluate(0.0)) / eps;
        assert!((s.evaluate(-2.0) - (1.0 - 2.0 * left_slope)).abs() < 1e-4);
        let right_slope = (s.evaluate(4.0) - s.evaluate(4.0 - eps)) / eps;
        assert!((s.evaluate(5.5) - (-1.0 + 1.5 * right_slope)).abs() < 1e-4);
        assert_eq!(s.second_derivative(-1.0), 0.0);
    }

    #[test]
    fn roughness_rejects_foreign_grid() {
        let p1 = build_penalty(&grid(&[0.0, 1.0, 2.0]));
        let p2 = build_penalty(&grid(&[0.0, 1.0, 2.5]));
        let s = complete_spline(&[0.0, 1.0, 0.0], &p1).unwrap();
        assert_eq!(roughness(&s, &p2).unwrap_err(), SplineError::GridMismatch);
        assert!(complete_spline(&[0.0, 1.0], &p1).is_err());
    }

    fn arb_grid() -> impl Strategy<Value = Vec<f64>> {
        (3usize..25).prop_flat_map(|m| {
            (prop::collection::vec(0.05f64..5.0, m - 1), -10.0f64..10.0).prop_map(|(gaps, start)| {
                let mut knots = vec![start];
                for h in gaps {
                    let last = *knots.last().unwrap();
                    knots.push(last + h);
                }
                knots
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn omega_is_psd_with_two_dimensional_null_space(knots in arb_grid()) {
            let p = build_penalty(&grid(&knots));
            let max = p.eigenvalues().max();
            prop_assert!(p.eigenvalues()[0] > -1e-10 * max);
            prop_assert_eq!(p.null_dimension(), 2);
            let line: Vec<f64> = knots.iter().map(|t| 1.7 * t + 0.4).collect();
            let ov = p.omega() * DVector::from_vec(line);
            prop_assert!(ov.amax() < 1e-8 * max.max(1.0));
        }

        #[test]
        fn interpolates_and_two_roughness_routes_agree(
            knots in arb_grid(),
            seed in prop::collection::vec(-3.0f64..3.0, 30),
            scale in 0.1f64..10.0,
        ) {
            let p = build_penalty(&grid(&knots));
            let vals: Vec<f64> = seed[..knots.len()].to_vec();
            let s = complete_spline(&vals, &p).unwrap();
            for (t, v) in knots.iter().zip(&vals) {
                prop_assert!((s.evaluate(*t) - v).abs() < 1e-10);
            }
            let via_omega = roughness(&s, &p).unwrap();
            let via_gamma = s.curvature_integral();
            prop_assert!((via_omega - via_gamma).abs() <= 1e-10 * via_gamma.max(1e-300) + 1e-12);
            let scaled: Vec<f64> = vals.iter().map(|v| v * scale).collect();
            let s2 = complete_spline(&scaled, &p).unwrap();
            let r2 = roughness(&s2, &p).unwrap();
            prop_assert!((r2 - scale * scale * via_omega).abs() <= 1e-9 * r2.max(1e-12));
        }
    }
}
