use nalgebra::DMatrix;

use super::FdfmError;
use crate::linalg::inv_sqrt_spd;

/// Relative eigenvalue floor of `FFᵀ` below which F is rank deficient.
pub const LOADING_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub loadings: DMatrix<f64>,
    pub scores: DMatrix<f64>,
    /// `order[c]` is the original factor placed at position `c`.
    pub order: Vec<usize>,
    /// Sign applied to each output factor.
    pub signs: Vec<f64>,
}

/// Symmetric (Löwdin) orthonormalization `F′ = (FFᵀ)^{−1/2} F`,
/// `B′ = B (FFᵀ)^{1/2}`, so `B′F′ = BF`. Factors are then put in canonical
/// form by [`canonical_form`] using the column variances of `B′`.
pub fn orthonormalize(loadings: &DMatrix<f64>, scores: &DMatrix<f64>) -> Result<Orthonormalized, FdfmError> {
    let gram = loadings * loadings.transpose();
    let (inv_root, root) = inv_sqrt_spd(&gram, LOADING_RANK_TOL).ok_or(FdfmError::DegenerateLoadings)?;
    let f = &inv_root * loadings;
    let b = scores * &root;
    let variances = column_variances(&b);
    let (order, signs) = canonical_form(&f, &variances);
    Ok(Orthonormalized {
        loadings: DMatrix::from_fn(f.nrows(), f.ncols(), |c, j| signs[c] * f[(order[c], j)]),
        scores: DMatrix::from_fn(b.nrows(), b.ncols(), |i, c| signs[c] * b[(i, order[c])]),
        order,
        signs,
    })
}

pub fn column_variances(b: &DMatrix<f64>) -> Vec<f64> {
    let n = b.nrows() as f64;
    (0..b.ncols())
        .map(|k| {
            let col = b.column(k);
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Factor order by descending variance (stable for ties) and, per output
/// position, the sign that makes the largest-magnitude loading entry positive.
pub fn canonical_form(loadings: &DMatrix<f64>, variances: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    let signs = order
        .iter()
        .map(|&k| {
            let row = loadings.row(k);
            let mut best = 0.0_f64;
            for &v in row.iter() {
                // first entry of maximal magnitude decides
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            if best < 0.0 { -1.0 } else { 1.0 }
        })
        .collect();
    (order, signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdfm::testutil::*;
    use crate::linalg::max_abs_diff;

    #[test]
    fn orthonormal_input_is_kept_up_to_convention() {
        let mut r = rng(1);
        let f = random_orthonormal(3, 7, &mut r);
        let b = random_matrix(10, 3, &mut r);
        let o = orthonormalize(&f, &b).unwrap();
        for (c, &k) in o.order.iter().enumerate() {
            for j in 0..7 {
                assert!((o.loadings[(c, j)] - o.signs[c] * f[(k, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_moves_into_scores() {
        let mut r = rng(2);
        let f = random_orthonormal(2, 6, &mut r);
        let b = random_matrix(9, 2, &mut r);
        let o = orthonormalize(&(&f * 2.0), &b).unwrap();
        for c in 0..2 {
            assert!((o.loadings.row(c).norm() - 1.0).abs() < 1e-12);
            let k = o.order[c];
            for i in 0..9 {
                assert!((o.scores[(i, c)] - 2.0 * o.signs[c] * b[(i, k)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_loadings_keep_fitted_values() {
        let mut r = rng(3);
        for _ in 0..20 {
            let f = random_matrix(3, 8, &mut r);
            let b = random_matrix(12, 3, &mut r);
            let o = orthonormalize(&f, &b).unwrap();
            assert!(max_abs_diff(&(&o.scores * &o.loadings), &(&b * &f)) < 1e-10);
            assert!(max_abs_diff(&(&o.loadings * o.loadings.transpose()), &DMatrix::identity(3, 3)) < 1e-10);
            let v = column_variances(&o.scores);
            assert!(v.windows(2).all(|w| w[0] >= w[1]));
            for c in 0..3 {
                let lead = o.loadings.row(c).iter().copied().fold(0.0_f64, |a, x| if x.abs() > a.abs() { x } else { a });
                assert!(lead > 0.0);
            }
        }
    }

    #[test]
    fn rank_deficient_loadings_are_rejected() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let b = DMatrix::zeros(4, 2);
        assert!(matches!(orthonormalize(&f, &b), Err(FdfmError::DegenerateLoadings)));
    }
}
