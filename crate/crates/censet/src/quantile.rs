//! Locally weighted censored quantile regression on log time.
//!
//! Censored observations enter through redistribution-of-mass: each carries
//! weight `(τ − F̂(Y|x)) / (1 − F̂(Y|x))` at its censoring time (when
//! `F̂(Y|x) < τ`, zero otherwise) and the remaining mass at a pseudo point
//! far above the observed range. The fit minimizes the resulting weighted
//! check loss with a smoothed IRLS pass followed by exact coordinate-wise
//! minimization, so the returned parameters are coordinate-optimal for the
//! piecewise-linear objective itself.

use rayon::join;
use thiserror::Error;

use crate::data::SurvivalDataset;
use crate::kernel::{ConditionalCdf, KernelSpec, LocalizedKaplanMeier};
use crate::linalg::{cholesky_solve, dot};

#[derive(Debug, Error)]
pub enum QuantileError {
    #[error("tau {0} must lie strictly in (0, 1)")]
    InvalidTau(f64),
    #[error("need at least {needed} subjects with positive weight at tau, found {got}")]
    TooFewSubjects { needed: usize, got: usize },
    #[error("weighted design matrix has numerical rank below {0}")]
    DegenerateDesign(usize),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
}

/// A fitted log-linear conditional quantile: `Q̂_τ(x) = exp(b₀ + x·b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileModel {
    pub tau: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl QuantileModel {
    /// The fitted quantile on the log-time scale.
    pub fn log_quantile(&self, x: &[f64]) -> f64 {
        self.intercept + dot(x, &self.coefficients)
    }

    /// The fitted quantile on the time scale (always positive).
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.log_quantile(x).exp()
    }
}

/// Lower and upper conditional quantile models at τ = α/2 and 1 − α/2,
/// with fit diagnostics.
#[derive(Debug, Clone)]
pub struct QuantilePair {
    pub lower: QuantileModel,
    pub upper: QuantileModel,
    /// Set when the fitted quantiles cross on more than 10% of the
    /// training covariates.
    pub crossing_warning: bool,
    /// Set when the estimated censoring cdf hits its cap at the fitted
    /// upper quantile for more than 20% of training subjects, i.e. the
    /// upper quantile sits beyond the identifiable range.
    pub identifiability_warning: bool,
}

/// Check loss `ρ_τ(u) = u (τ − I(u < 0))`.
pub fn check_loss(tau: f64, u: f64) -> f64 {
    u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
}

/// Redistribution-of-mass weights at quantile level `tau`.
///
/// Events keep weight 1. A censored subject gets
/// `(tau − F̂(Y|x)) / (1 − F̂(Y|x))` when `F̂(Y|x) < tau` and 0 otherwise;
/// the remaining mass goes to the pseudo point during fitting.
pub fn redistribution_weights(
    train: &SurvivalDataset,
    tau: f64,
    event_cdf: &impl ConditionalCdf,
) -> Vec<f64> {
    train
        .subjects()
        .iter()
        .map(|s| {
            if s.event {
                1.0
            } else {
                let f = event_cdf.cdf(s.observed_time, &s.covariates);
                if f < tau {
                    (tau - f) / (1.0 - f)
                } else {
                    0.0
                }
            }
        })
        .collect()
}

/// One row of the augmented check-loss problem.
struct Row {
    x: Vec<f64>, // includes leading 1 for the intercept
    y: f64,
    w: f64,
}

/// Fit the τ-th conditional quantile of log time with the given
/// redistribution weights (aligned with `train.subjects()`).
///
/// Censored subjects with weight `w` contribute `(1 − w)` at the pseudo
/// point `log(100 × max Y)`.
pub fn fit_weighted(
    train: &SurvivalDataset,
    tau: f64,
    weights: &[f64],
) -> Result<QuantileModel, QuantileError> {
    fit_weighted_with_pseudo(train, tau, weights, PSEUDO_POINT_FACTOR)
}

/// Pseudo point placement: censored mass beyond the observed range sits at
/// `log(factor × max Y)`, far above every fitted quantile on the grid.
pub const PSEUDO_POINT_FACTOR: f64 = 100.0;

pub fn fit_weighted_with_pseudo(
    train: &SurvivalDataset,
    tau: f64,
    weights: &[f64],
    pseudo_factor: f64,
) -> Result<QuantileModel, QuantileError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantileError::InvalidTau(tau));
    }
    assert_eq!(weights.len(), train.len());
    let p = train.dim();
    let needed = p + 2;
    let got = weights.iter().filter(|&&w| w > 0.0).count();
    if got < needed {
        return Err(QuantileError::TooFewSubjects { needed, got });
    }
    let y_plus = (pseudo_factor * train.max_observed_time()).ln();
    let mut rows = Vec::with_capacity(2 * train.len());
    for (s, &w) in train.subjects().iter().zip(weights) {
        let mut x = Vec::with_capacity(p + 1);
        x.push(1.0);
        x.extend_from_slice(&s.covariates);
        if w > 1e-12 {
            rows.push(Row {
                x: x.clone(),
                y: s.observed_time.ln(),
                w,
            });
        }
        if !s.event && 1.0 - w > 1e-12 {
            rows.push(Row {
                x,
                y: y_plus,
                w: 1.0 - w,
            });
        }
    }
    let mut beta = irls(&rows, tau, p + 1)?;
    polish_coordinates(&rows, tau, &mut beta);
    interpolation_polish(&rows, tau, &mut beta);
    Ok(QuantileModel {
        tau,
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
    })
}

/// Fit the τ-th conditional quantile from scratch: estimates `F̂(t|x)` with
/// the localized Kaplan–Meier on events, forms redistribution weights, then
/// minimizes the weighted check loss.
pub fn fit(
    train: &SurvivalDataset,
    tau: f64,
    event_spec: KernelSpec,
    cap: f64,
) -> Result<QuantileModel, QuantileError> {
    let event_cdf = LocalizedKaplanMeier::event(train, event_spec, cap)?;
    let weights = redistribution_weights(train, tau, &event_cdf);
    fit_weighted(train, tau, &weights)
}

/// Fit the (α/2, 1 − α/2) quantile pair; the two fits run concurrently.
///
/// When a censoring model is supplied, flags the pair as non-identifiable
/// if `Ĝ` saturates at its cap at the fitted upper quantile for more than
/// 20% of training subjects.
pub fn fit_pair(
    train: &SurvivalDataset,
    alpha: f64,
    event_spec: KernelSpec,
    censoring: Option<&LocalizedKaplanMeier>,
) -> Result<QuantilePair, QuantileError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QuantileError::InvalidTau(alpha));
    }
    let cap = censoring.map_or(0.99, |c| c.cap());
    let event_cdf = LocalizedKaplanMeier::event(train, event_spec, cap)?;
    let (lower, upper) = join(
        || {
            let tau = alpha / 2.0;
            let w = redistribution_weights(train, tau, &event_cdf);
            fit_weighted(train, tau, &w)
        },
        || {
            let tau = 1.0 - alpha / 2.0;
            let w = redistribution_weights(train, tau, &event_cdf);
            fit_weighted(train, tau, &w)
        },
    );
    let (lower, upper) = (lower?, upper?);

    let n = train.len() as f64;
    let crossings = train
        .subjects()
        .iter()
        .filter(|s| upper.log_quantile(&s.covariates) < lower.log_quantile(&s.covariates))
        .count();
    let crossing_warning = crossings as f64 / n > 0.10;

    let identifiability_warning = match censoring {
        Some(g) => {
            let saturated = train
                .subjects()
                .iter()
                .filter(|s| {
                    let q_hi = upper.predict(&s.covariates);
                    g.cdf(q_hi, &s.covariates) >= cap - 1e-12
                })
                .count();
            saturated as f64 / n > 0.20
        }
        None => false,
    };

    Ok(QuantilePair {
        lower,
        upper,
        crossing_warning,
        identifiability_warning,
    })
}

/// Smoothed iteratively reweighted least squares. Checks design rank on the
/// first pass, then anneals the smoothing floor down to 1e-6.
fn irls(rows: &[Row], tau: f64, n_params: usize) -> Result<Vec<f64>, QuantileError> {
    let mut beta = vec![0.0; n_params];
    let mut eps = 0.1;
    for iter in 0..120 {
        let mut ata = vec![vec![0.0; n_params]; n_params];
        let mut atb = vec![0.0; n_params];
        for r in rows {
            let resid = r.y - dot(&r.x, &beta);
            let side = if resid >= 0.0 { tau } else { 1.0 - tau };
            let a = if iter == 0 {
                r.w // plain weighted least squares start
            } else {
                r.w * side / resid.abs().max(eps)
            };
            for i in 0..n_params {
                let axi = a * r.x[i];
                for j in 0..=i {
                    ata[i][j] += axi * r.x[j];
                }
                atb[i] += axi * r.y;
            }
        }
        for i in 0..n_params {
            for j in (i + 1)..n_params {
                ata[i][j] = ata[j][i];
            }
        }
        let tol = if iter == 0 { 1e-10 } else { 0.0 };
        let next = match cholesky_solve(&ata, &atb, tol) {
            Some(b) => b,
            None if iter == 0 => return Err(QuantileError::DegenerateDesign(n_params)),
            None => break, // smoothing collapsed; the polish step finishes
        };
        let delta = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        beta = next;
        if iter > 0 {
            eps = (eps * 0.3).max(1e-6);
        }
        if eps <= 1e-6 && delta < 1e-9 {
            break;
        }
    }
    Ok(beta)
}

/// Exact coordinate descent on the piecewise-linear objective. Each step
/// solves the one-dimensional weighted quantile problem in closed form, so
/// on exit no single-coordinate move can improve the loss.
fn polish_coordinates(rows: &[Row], tau: f64, beta: &mut [f64]) {
    let n_params = beta.len();
    let mut partial: Vec<f64> = rows.iter().map(|r| r.y - dot(&r.x, beta)).collect();
    for _sweep in 0..100 {
        let mut moved = false;
        for j in 0..n_params {
            // residual without coordinate j: c_r = partial + beta_j * x_rj
            let mut breaks: Vec<(f64, f64)> = Vec::new(); // (candidate b, slope jump)
            let mut slope = 0.0; // subgradient at b -> -inf
            for (r, res) in rows.iter().zip(&partial) {
                let z = r.x[j];
                if z == 0.0 {
                    continue;
                }
                let c = res + beta[j] * z;
                if z > 0.0 {
                    slope -= tau * r.w * z;
                } else {
                    slope += (1.0 - tau) * r.w * z;
                }
                breaks.push((c / z, r.w * z.abs()));
            }
            if breaks.is_empty() {
                continue;
            }
            breaks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut new_b = breaks[breaks.len() - 1].0;
            for &(b, jump) in &breaks {
                slope += jump;
                if slope >= 0.0 {
                    new_b = b;
                    break;
                }
            }
            if (new_b - beta[j]).abs() > 1e-12 {
                let old = beta[j];
                beta[j] = new_b;
                for (r, res) in rows.iter().zip(partial.iter_mut()) {
                    *res -= (new_b - old) * r.x[j];
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

fn objective(rows: &[Row], tau: f64, beta: &[f64]) -> f64 {
    rows.iter()
        .map(|r| r.w * check_loss(tau, r.y - dot(&r.x, beta)))
        .sum()
}

/// Jump between vertices of the piecewise-linear objective: interpolate the
/// rows with the smallest absolute residuals exactly, re-run the coordinate
/// polish from there, and keep the move only if the loss strictly improves.
/// Coordinate descent alone can stall in a diagonal valley of a polyhedral
/// function; this escape hatch lands on the optimal basic solution.
fn interpolation_polish(rows: &[Row], tau: f64, beta: &mut [f64]) {
    let n_params = beta.len();
    if rows.len() < n_params {
        return;
    }
    let mut best = objective(rows, tau, beta);
    for _round in 0..12 {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = (rows[a].y - dot(&rows[a].x, beta)).abs();
            let rb = (rows[b].y - dot(&rows[b].x, beta)).abs();
            ra.partial_cmp(&rb).unwrap()
        });
        // enumerate every basic solution drawn from the rows nearest the
        // current fit, not just the closest set
        let pool: Vec<usize> = order.into_iter().take((2 * n_params + 2).min(rows.len())).collect();
        let mut improved = false;
        for subset in subsets(pool.len(), n_params) {
            let a_mat: Vec<Vec<f64>> = subset.iter().map(|&k| rows[pool[k]].x.clone()).collect();
            let b_vec: Vec<f64> = subset.iter().map(|&k| rows[pool[k]].y).collect();
            let Some(mut candidate) = crate::linalg::lu_solve(&a_mat, &b_vec) else {
                continue;
            };
            polish_coordinates(rows, tau, &mut candidate);
            let cand_obj = objective(rows, tau, &candidate);
            if cand_obj < best - 1e-12 {
                best = cand_obj;
                beta.copy_from_slice(&candidate);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                cur[i] += 1;
                for j in (i + 1)..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exposed for tests: the exact objective the solver minimizes, rebuilt
/// from the dataset, weights and pseudo point.
pub fn weighted_objective(
    train: &SurvivalDataset,
    tau: f64,
    weights: &[f64],
    intercept: f64,
    coefficients: &[f64],
) -> f64 {
    let y_plus = (100.0 * train.max_observed_time()).ln();
    train
        .subjects()
        .iter()
        .zip(weights)
        .map(|(s, &w)| {
            let eta = intercept + dot(&s.covariates, coefficients);
            let mut loss = w * check_loss(tau, s.observed_time.ln() - eta);
            if !s.event {
                loss += (1.0 - w) * check_loss(tau, y_plus - eta);
            }
            loss
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn uncensored(xs: &[f64], ys: &[f64]) -> SurvivalDataset {
        let subjects = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| Subject::new(vec![x], y, true))
            .collect();
        SurvivalDataset::from_subjects(subjects).unwrap()
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.5, 2.0), 1.0);
        assert_eq!(check_loss(0.5, -2.0), 1.0);
        assert!((check_loss(0.9, 1.0) - 0.9).abs() < 1e-15);
        assert!((check_loss(0.9, -1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn redistribution_all_events_is_unit() {
        let data = uncensored(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]);
        let f = |_t: f64, _x: &[f64]| 0.0;
        assert_eq!(redistribution_weights(&data, 0.5, &f), vec![1.0; 3]);
    }

    #[test]
    fn redistribution_censored_formula() {
        let subjects = vec![Subject::new(vec![0.0], 2.0, false)];
        let data = SurvivalDataset::from_subjects(subjects).unwrap();
        // F = 0 at the censoring time -> (0.5 - 0) / (1 - 0)
        let zero = |_t: f64, _x: &[f64]| 0.0;
        assert_eq!(redistribution_weights(&data, 0.5, &zero), vec![0.5]);
        // F = 0.8 >= tau -> weight 0
        let high = |_t: f64, _x: &[f64]| 0.8;
        assert_eq!(redistribution_weights(&data, 0.5, &high), vec![0.0]);
    }

    #[test]
    fn fit_interpolates_exact_line() {
        // log Y = 2 + 3x exactly, no censoring
        let xs: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 + 3.0 * x).exp()).collect();
        let data = uncensored(&xs, &ys);
        let m = fit_weighted(&data, 0.5, &vec![1.0; 5]).unwrap();
        assert!((m.intercept - 2.0).abs() < 1e-6, "intercept {}", m.intercept);
        assert!((m.coefficients[0] - 3.0).abs() < 1e-6);
        let loss = weighted_objective(&data, 0.5, &vec![1.0; 5], m.intercept, &m.coefficients);
        assert!(loss < 1e-9);
    }

    #[test]
    fn intercept_only_fit_is_weighted_median() {
        let subjects: Vec<Subject> = [1.0, 2.0, 3.0, 4.0, 100.0]
            .iter()
            .map(|&y| Subject::new(vec![], y, true))
            .collect();
        let data = SurvivalDataset::new(subjects, vec![]).unwrap();
        let m = fit_weighted(&data, 0.5, &vec![1.0; 5]).unwrap();
        // median of log Y is log(3)
        assert!((m.intercept - 3.0_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn intercept_shift_equivariance() {
        let xs = [0.05, 0.2, 0.4, 0.55, 0.7, 0.9, 0.33, 0.61];
        let ys = [1.2, 3.1, 2.4, 5.0, 4.4, 8.1, 2.0, 6.3];
        let data = uncensored(&xs, &ys);
        let w = vec![1.0; xs.len()];
        let base = fit_weighted(&data, 0.5, &w).unwrap();
        let c = 0.7;
        let shifted_ys: Vec<f64> = ys.iter().map(|y| (y.ln() + c).exp()).collect();
        let shifted = fit_weighted(&uncensored(&xs, &shifted_ys), 0.5, &w).unwrap();
        assert!((shifted.intercept - base.intercept - c).abs() < 1e-8);
        assert!((shifted.coefficients[0] - base.coefficients[0]).abs() < 1e-8);
    }

    #[test]
    fn too_few_positive_weights_is_rejected() {
        let data = uncensored(&[0.1, 0.2, 0.9], &[1.0, 2.0, 3.0]);
        let r = fit_weighted(&data, 0.5, &[1.0, 0.0, 0.0]);
        assert!(matches!(r, Err(QuantileError::TooFewSubjects { .. })));
    }

    #[test]
    fn degenerate_design_is_rejected() {
        // constant covariate column duplicating the intercept
        let subjects: Vec<Subject> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&y| Subject::new(vec![1.0], y, true))
            .collect();
        let data = SurvivalDataset::from_subjects(subjects).unwrap();
        let r = fit_weighted(&data, 0.5, &vec![1.0; 4]);
        assert!(matches!(r, Err(QuantileError::DegenerateDesign(_))));
    }

    #[test]
    fn fit_pair_uses_half_alpha_taus() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (1.0 + x + 0.1 * ((i % 7) as f64 - 3.0)).exp())
            .collect();
        let data = uncensored(&xs, &ys);
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let pair = fit_pair(&data, 0.1, spec, None).unwrap();
        assert!((pair.lower.tau - 0.05).abs() < 1e-15);
        assert!((pair.upper.tau - 0.95).abs() < 1e-15);
        // symmetric noiseless-ish data: lower <= upper on the training range
        for s in data.subjects() {
            assert!(pair.lower.predict(&s.covariates) <= pair.upper.predict(&s.covariates) + 1e-9);
        }
        assert!(!pair.crossing_warning);
    }

    #[test]
    fn coordinate_optimality_of_returned_fit() {
        let xs = [0.1, 0.35, 0.5, 0.62, 0.8, 0.97];
        let ys = [2.0, 1.4, 3.9, 3.1, 6.0, 5.2];
        let events = [true, false, true, true, false, true];
        let subjects: Vec<Subject> = xs
            .iter()
            .zip(&ys)
            .zip(&events)
            .map(|((&x, &y), &e)| Subject::new(vec![x], y, e))
            .collect();
        let data = SurvivalDataset::from_subjects(subjects).unwrap();
        let f = |_t: f64, _x: &[f64]| 0.2; // fixed event cdf below tau
        let tau = 0.5;
        let w = redistribution_weights(&data, tau, &f);
        let m = fit_weighted(&data, tau, &w).unwrap();
        let base = weighted_objective(&data, tau, &w, m.intercept, &m.coefficients);
        for (di, dc) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            let perturbed = weighted_objective(
                &data,
                tau,
                &w,
                m.intercept + di,
                &[m.coefficients[0] + dc],
            );
            assert!(
                perturbed >= base - 1e-8,
                "perturbation ({di}, {dc}) improved objective: {perturbed} < {base}"
            );
        }
    }
}
