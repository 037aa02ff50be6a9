mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fdfm::eval::metrics;
use fdfm::fdfm::ortho::orthonormalize;
use fdfm::fdfm::CurvePanel;
use fdfm::io::{panel_to_csv, parse_panel, UnitMode};
use fdfm::spline::KnotGrid;
use fdfm::trading::{algo1_weighted_pairs, algo2_optimal_pairs, interpolate_yield, Accounting, ReturnBook};

fn book(seed: u64, periods: usize, maturities: Vec<f64>) -> ReturnBook {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let k = maturities.len();
    ReturnBook {
        forecaster: "random".into(),
        periods: (0..periods).collect(),
        dates: vec![None; periods],
        maturities,
        predicted: common::gaussian_matrix(periods, k, &mut r) * 1e-3,
        realized_log: common::gaussian_matrix(periods, k, &mut r) * 1e-3,
        realized_simple: common::gaussian_matrix(periods, k, &mut r) * 1e-3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orthonormalization_keeps_the_product(seed in 0u64..10_000, k in 1usize..4, extra in 2usize..10, n in 5usize..30) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = k + extra;
        let f = common::gaussian_matrix(k, m, &mut r);
        let b = common::gaussian_matrix(n, k, &mut r);
        let o = orthonormalize(&f, &b).unwrap();
        let before = &b * &f;
        let after = &o.scores * &o.loadings;
        let scale = before.amax().max(1.0);
        prop_assert!((before - after).amax() <= 1e-10 * scale);
        let gram = &o.loadings * o.loadings.transpose();
        prop_assert!((gram - DMatrix::identity(k, k)).amax() <= 1e-10);
    }

    #[test]
    fn rmsfe_squared_is_bias_squared_plus_variance(errors in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let actuals = vec![1.0; errors.len()];
        let (mfe, rmsfe, mape) = metrics(&errors, &actuals);
        let r = errors.len() as f64;
        let var = errors.iter().map(|e| (e - mfe).powi(2)).sum::<f64>() / r;
        prop_assert!((rmsfe * rmsfe - (mfe * mfe + var)).abs() <= 1e-9 * (1.0 + rmsfe * rmsfe));
        prop_assert!(mfe.abs() <= rmsfe + 1e-12);
        let abs_mean = errors.iter().map(|e| e.abs()).sum::<f64>() / r;
        prop_assert!((mape.unwrap() - 100.0 * abs_mean).abs() <= 1e-9 * (1.0 + abs_mean));
    }

    #[test]
    fn negated_forecasts_negate_every_profit(seed in 0u64..10_000, periods in 1usize..20) {
        let b = book(seed, periods, vec![4.0, 5.0, 7.0, 10.0, 13.0]);
        let neg = b.negated();
        for accounting in [Accounting::Log, Accounting::Simple] {
            let w = [0.1, 0.2, 0.3, 0.4];
            let partners = [5.0, 7.0, 10.0, 13.0];
            let a = algo1_weighted_pairs(&b, 4.0, &partners, &w, 1.0, accounting).unwrap();
            let c = algo1_weighted_pairs(&neg, 4.0, &partners, &w, 1.0, accounting).unwrap();
            for (x, y) in a.period_profits.iter().zip(&c.period_profits) {
                prop_assert_eq!(*x, -*y);
            }
            let a = algo2_optimal_pairs(&b, 4.0, &b.maturities, 1.0, accounting).unwrap();
            let c = algo2_optimal_pairs(&neg, 4.0, &b.maturities, 1.0, accounting).unwrap();
            for (x, y) in a.entries.iter().zip(&c.entries) {
                prop_assert_eq!(x.t2, y.t2);
                prop_assert_eq!(x.profit, -y.profit);
            }
        }
    }

    #[test]
    fn interpolation_hits_knots_and_stays_in_hull(seed in 0u64..10_000, m in 3usize..15, u in 0.0f64..1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let knots = common::maturity_grid(m, &mut r);
        let y: Vec<f64> = common::gaussian_matrix(1, m, &mut r).iter().copied().collect();
        for (t, v) in knots.iter().zip(&y) {
            prop_assert_eq!(interpolate_yield(&knots, &y, *t).unwrap(), *v);
        }
        let t = knots[0] + u * (knots[m - 1] - knots[0]);
        let x = interpolate_yield(&knots, &y, t).unwrap();
        let j = knots.partition_point(|&k| k <= t).clamp(1, m - 1);
        let (lo, hi) = (y[j - 1].min(y[j]), y[j - 1].max(y[j]));
        prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
    }

    #[test]
    fn panel_csv_round_trip(seed in 0u64..10_000, n in 1usize..12, m in 3usize..10, monthly in any::<bool>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let knots = common::maturity_grid(m, &mut r);
        let data = common::gaussian_matrix(n, m, &mut r).map(|v| 5.0 + v);
        let dates: Vec<String> = (0..n).map(|i| format!("{}-{:02}", 1990 + i / 12, i % 12 + 1)).collect();
        let panel = CurvePanel::new(data, KnotGrid::new(knots).unwrap(), Some(dates)).unwrap();
        let unit = if monthly { UnitMode::MonthlyDecimal } else { UnitMode::Percent };
        let text = panel_to_csv(&panel, unit);
        let back = parse_panel(&text, unit).unwrap();
        prop_assert_eq!(back.dates(), panel.dates());
        prop_assert_eq!(back.maturities(), panel.maturities());
        prop_assert!((back.data() - panel.data()).amax() <= 1e-14 * panel.data().amax());
    }
}
