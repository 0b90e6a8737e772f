//! Slow, independent reference implementations used to validate the
//! estimators in tests. Nothing here shares code with the estimators it
//! checks: the Kaplan–Meier oracle groups unique times directly, the
//! quantile-regression oracle enumerates basic solutions of the LP, and the
//! conformal oracle is the textbook counting formula.

use crate::linalg::lu_solve;

/// Classical (unconditional) Kaplan–Meier estimate of the cdf whose jumps
/// are the observations flagged `true`, evaluated at `t`. Grouped by unique
/// time with the risk set `#{k : Y_k >= Y_j}`.
pub fn km_cdf(times: &[f64], jumps: &[bool], t: f64) -> f64 {
    assert_eq!(times.len(), jumps.len());
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
    let n = times.len();
    let mut survival = 1.0;
    let mut pos = 0;
    while pos < n {
        let time = times[order[pos]];
        if time > t {
            break;
        }
        let at_risk = n - pos;
        let mut d = 0;
        let mut p = pos;
        while p < n && times[order[p]] == time {
            if jumps[order[p]] {
                d += 1;
            }
            p += 1;
        }
        // per-observation factors with a common risk set, so tied jumps
        // multiply (1 - 1/R) once each
        for _ in 0..d {
            survival *= 1.0 - 1.0 / at_risk as f64;
        }
        pos = p;
    }
    1.0 - survival
}

/// Total weighted check loss of an affine fit on raw rows.
pub fn weighted_check_loss(
    xs: &[Vec<f64>],
    ys: &[f64],
    weights: &[f64],
    tau: f64,
    intercept: f64,
    coefficients: &[f64],
) -> f64 {
    xs.iter()
        .zip(ys)
        .zip(weights)
        .map(|((x, &y), &w)| {
            let eta = intercept + x.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>();
            let u = y - eta;
            w * u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

/// Exact weighted quantile regression by vertex enumeration: some optimum
/// of the piecewise-linear program interpolates `p + 1` rows, so trying
/// every such subset and keeping the best objective is exhaustive. Only
/// viable for small n.
pub fn quantile_regression_vertex(
    xs: &[Vec<f64>],
    ys: &[f64],
    weights: &[f64],
    tau: f64,
) -> (f64, Vec<f64>) {
    let n = xs.len();
    let p = xs[0].len();
    let d = p + 1;
    assert!(n >= d, "need at least p + 1 rows");
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut subset: Vec<usize> = (0..d).collect();
    loop {
        // solve the interpolation system for this subset
        let a: Vec<Vec<f64>> = subset
            .iter()
            .map(|&i| {
                let mut row = Vec::with_capacity(d);
                row.push(1.0);
                row.extend_from_slice(&xs[i]);
                row
            })
            .collect();
        let b: Vec<f64> = subset.iter().map(|&i| ys[i]).collect();
        if let Some(beta) = lu_solve(&a, &b) {
            let loss = weighted_check_loss(xs, ys, weights, tau, beta[0], &beta[1..]);
            if best.as_ref().map_or(true, |(bl, _, _)| loss < *bl) {
                best = Some((loss, beta[0], beta[1..].to_vec()));
            }
        }
        // next lexicographic subset
        let mut i = d;
        loop {
            if i == 0 {
                let (_, b0, bs) = best.expect("at least one non-singular subset");
                return (b0, bs);
            }
            i -= 1;
            if subset[i] != i + n - d {
                subset[i] += 1;
                for j in (i + 1)..d {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exhaustive lattice search for a 1-covariate weighted quantile fit:
/// evaluates the exact objective over an (intercept, slope) grid and
/// returns the argmin. Used as a coarse independent check for censored
/// fits with pseudo rows.
pub fn quantile_regression_lattice(
    xs: &[Vec<f64>],
    ys: &[f64],
    weights: &[f64],
    tau: f64,
    intercept_range: (f64, f64),
    slope_range: (f64, f64),
    step: f64,
) -> (f64, f64) {
    let mut best = (f64::INFINITY, intercept_range.0, slope_range.0);
    let n_i = ((intercept_range.1 - intercept_range.0) / step).round() as usize;
    let n_s = ((slope_range.1 - slope_range.0) / step).round() as usize;
    for i in 0..=n_i {
        let b0 = intercept_range.0 + i as f64 * step;
        for s in 0..=n_s {
            let b1 = slope_range.0 + s as f64 * step;
            let loss = weighted_check_loss(xs, ys, weights, tau, b0, &[b1]);
            if loss < best.0 {
                best = (loss, b0, b1);
            }
        }
    }
    (best.1, best.2)
}

/// Textbook split-conformal p-value: `(1 + #{R_i >= r}) / (n + 1)`.
pub fn split_conformal_pvalue(calibration_scores: &[f64], test_score: f64) -> f64 {
    let count = calibration_scores
        .iter()
        .filter(|&&s| s >= test_score)
        .count();
    (1 + count) as f64 / (calibration_scores.len() + 1) as f64
}

/// Mean of the exponentially tilted uniform on [0, 1],
/// `E[x e^{g x}] / E[e^{g x}]`, by Simpson quadrature.
pub fn tilted_uniform_mean(gamma: f64) -> f64 {
    let f_num = |x: f64| x * (gamma * x).exp();
    let f_den = |x: f64| (gamma * x).exp();
    simpson(f_num, 0.0, 1.0, 10_000) / simpson(f_den, 0.0, 1.0, 10_000)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}
