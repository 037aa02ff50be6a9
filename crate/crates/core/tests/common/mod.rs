//! Independent reference computations for the integration tests. Nothing
//! here calls into the library's numerics.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_grid<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut t = vec![rng.random_range(0.0..2.0)];
    for _ in 1..m {
        let last = *t.last().unwrap();
        t.push(last + rng.random_range(0.2..3.0));
    }
    t
}

/// Knots in months with gaps of one month to one year, like a yield-curve
/// maturity set.
pub fn maturity_grid<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut t = vec![rng.random_range(0.5..3.0)];
    for _ in 1..m {
        let last = *t.last().unwrap();
        t.push(last + rng.random_range(1.0..12.0));
    }
    t
}

pub fn gaussian_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// K×m with orthonormal rows, by classical Gram–Schmidt.
pub fn orthonormal_rows<R: Rng>(k: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut f = gaussian_matrix(k, m, rng);
    for a in 0..k {
        for b in 0..a {
            let d = f.row(a).dot(&f.row(b));
            let rb = f.row(b).into_owned();
            let mut ra = f.row_mut(a);
            ra -= rb * d;
        }
        let n = f.row(a).norm();
        f.row_mut(a).unscale_mut(n);
    }
    f
}

/// Natural cubic spline second derivatives at the knots: interior values
/// from the continuity equations, zero at both ends.
pub fn ncs_second_derivatives(t: &[f64], g: &[f64]) -> Vec<f64> {
    let m = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let k = m - 2;
    let mut a = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for r in 0..k {
        let j = r + 1;
        a[(r, r)] = (h[j - 1] + h[j]) / 3.0;
        if r > 0 {
            a[(r, r - 1)] = h[j - 1] / 6.0;
        }
        if r + 1 < k {
            a[(r, r + 1)] = h[j] / 6.0;
        }
        rhs[r] = (g[j + 1] - g[j]) / h[j] - (g[j] - g[j - 1]) / h[j - 1];
    }
    let inner = a.lu().solve(&rhs).expect("nonsingular continuity system");
    let mut gamma = vec![0.0; m];
    for r in 0..k {
        gamma[r + 1] = inner[r];
    }
    gamma
}

/// `∫ f''(t)² dt` by composite Simpson on every knot interval.
pub fn curvature_by_quadrature(t: &[f64], gamma: &[f64], per_interval: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..t.len() - 1 {
        let (a, b) = (t[j], t[j + 1]);
        let f2 = |x: f64| {
            let w = (x - a) / (b - a);
            let v = (1.0 - w) * gamma[j] + w * gamma[j + 1];
            v * v
        };
        let n = per_interval * 2;
        let h = (b - a) / n as f64;
        let mut s = f2(a) + f2(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f2(a + h * i as f64);
        }
        total += s * h / 3.0;
    }
    total
}

/// Stationary AR(p) autocovariances γ(0..n) from the MA(∞) weights,
/// truncated once they fall below 1e−18.
pub fn ar_autocovariances(phi: &[f64], innovation_variance: f64, n: usize) -> Vec<f64> {
    let mut psi = vec![1.0];
    loop {
        let j = psi.len();
        let next: f64 = phi.iter().enumerate().filter(|(i, _)| *i < j).map(|(i, p)| p * psi[j - 1 - i]).sum();
        psi.push(next);
        let tail = psi[psi.len().saturating_sub(phi.len().max(1))..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        if (tail < 1e-18 && psi.len() > phi.len() + 1) || psi.len() > 200_000 {
            break;
        }
    }
    (0..n).map(|h| innovation_variance * psi.iter().zip(psi.iter().skip(h)).map(|(a, b)| a * b).sum::<f64>()).collect()
}

/// Dense prior covariance of the stacked scores `vec(B)` (factor-major).
pub fn dense_score_covariance(processes: &[(Vec<f64>, f64)], n: usize) -> DMatrix<f64> {
    let k = processes.len();
    let mut s = DMatrix::zeros(n * k, n * k);
    for (c, (phi, v)) in processes.iter().enumerate() {
        let g = ar_autocovariances(phi, *v, n);
        for a in 0..n {
            for b in 0..n {
                s[(c * n + a, c * n + b)] = g[a.abs_diff(b)];
            }
        }
    }
    s
}

/// `U = Fᵀ ⊗ I_n`, mapping factor-major `vec(B)` to `vec(X)` with index
/// `j·n + i`.
pub fn loading_operator(f: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (k, m) = (f.nrows(), f.ncols());
    let mut u = DMatrix::zeros(n * m, n * k);
    for j in 0..m {
        for c in 0..k {
            for i in 0..n {
                u[(j * n + i, c * n + i)] = f[(c, j)];
            }
        }
    }
    u
}

/// Best affine approximation in the unweighted discrete inner product.
pub fn affine_fit(t: &[f64], y: &[f64]) -> Vec<f64> {
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    let slope = sxy / sxx;
    t.iter().map(|a| ym + slope * (a - tm)).collect()
}

/// Per true loading row, the RMSE against the best remaining estimated row
/// up to sign, and which estimated row it matched.
pub fn align(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Vec<(usize, f64)> {
    let k = truth.nrows();
    let perms = permutations(est.nrows(), k);
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    for p in perms {
        let mut total = 0.0;
        let mut out = Vec::new();
        for (c, &e) in p.iter().enumerate() {
            let err = |s: f64| {
                ((0..truth.ncols()).map(|j| (s * est[(e, j)] - truth[(c, j)]).powi(2)).sum::<f64>() / truth.ncols() as f64)
                    .sqrt()
            };
            let r = err(1.0).min(err(-1.0));
            total += r;
            out.push((e, r));
        }
        if best.as_ref().is_none_or(|b| total < b.0) {
            best = Some((total, out));
        }
    }
    best.unwrap().1
}

fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n, k - 1) {
        for i in 0..n {
            if !rest.contains(&i) {
                let mut v = rest.clone();
                v.push(i);
                out.push(v);
            }
        }
    }
    out
}

/// Yield-curve-like panel in annualized percent: three mean-reverting
/// Nelson–Siegel style factors plus a small smooth hump and noise, with
/// monthly dates from 1985-01.
pub fn yield_csv<R: Rng>(n: usize, rng: &mut R) -> String {
    let t = [1.5, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 30.0, 36.0, 48.0, 60.0, 72.0, 84.0, 96.0, 108.0, 120.0];
    let mut out = String::from("date");
    for m in t {
        out.push_str(&format!(",{m}"));
    }
    out.push('\n');
    let (mut l, mut s, mut c) = (8.0, -1.5, 0.5);
    let z = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
    for i in 0..n {
        l = 7.0 + 0.97 * (l - 7.0) + 0.25 * z(rng);
        s = -1.5 + 0.93 * (s + 1.5) + 0.35 * z(rng);
        c = 0.3 + 0.8 * (c - 0.3) + 0.5 * z(rng);
        out.push_str(&format!("{:04}-{:02}", 1985 + i / 12, i % 12 + 1));
        for m in t {
            let x: f64 = 0.0609 * m;
            let f2 = (1.0 - (-x).exp()) / x;
            let f3 = f2 - (-x).exp();
            let y = l + s * f2 + c * f3 + 0.15 * (m / 9.0).sin() * (-m / 40.0).exp() + 0.05 * z(rng);
            out.push_str(&format!(",{y:.4}"));
        }
        out.push('\n');
    }
    out
}
