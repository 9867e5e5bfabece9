//! Small statistical helpers shared by the validation suites: sample
//! moments, ordinary least squares, Kolmogorov-Smirnov tests, and the
//! Student-t tail used by the regression diagnostics.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 || n < 2.0 {
        return (0.0, my);
    }
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Two-sided p-value for the regression slope of `y` on `x` being zero,
/// via the Student-t distribution with `n - 2` degrees of freedom.
/// Degenerate designs (constant `x` or a perfect fit) report p = 1.
pub fn slope_t_test(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n < 3 {
        return (0.0, 1.0);
    }
    let mx = mean(x);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return (0.0, 1.0);
    }
    let (slope, intercept) = ols(x, y);
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(u, v)| {
            let r = v - (intercept + slope * u);
            r * r
        })
        .sum();
    let dof = (n - 2) as f64;
    let se2 = sse / dof / sxx;
    if se2 <= 0.0 || !se2.is_finite() {
        return (slope, 1.0);
    }
    let t = slope / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (slope, p.clamp(0.0, 1.0))
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..200 {
        let jj = j as f64;
        let term = (-2.0 * jj * jj * lambda * lambda).exp();
        if term < 1e-18 {
            break;
        }
        sum += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against the standard normal law.
/// Returns the statistic D and the asymptotic p-value.
pub fn ks_one_sample_normal(data: &[f64]) -> (f64, f64) {
    let mut xs = data.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut d: f64 = 0.0;
    for (j, x) in xs.iter().enumerate() {
        let f = normal.cdf(*x);
        let hi = (j as f64 + 1.0) / n - f;
        let lo = f - j as f64 / n;
        d = d.max(hi).max(lo);
    }
    (d, kolmogorov_sf(n.sqrt() * d))
}

/// Two-sample Kolmogorov-Smirnov test with the finite-sample adjusted
/// asymptotic p-value. Returns the statistic D and the p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (na, nb) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xs[i];
        let y = ys[j];
        let v = x.min(y);
        while i < na && xs[i] <= v {
            i += 1;
        }
        while j < nb && ys[j] <= v {
            j += 1;
        }
        let diff = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        d = d.max(diff);
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}
