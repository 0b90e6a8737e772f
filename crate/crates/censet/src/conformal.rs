//! The conformal engine: quantile-residual nonconformity scores,
//! censoring-adjusted (and covariate-shift-weighted) conformal p-values,
//! the quasi-concavity diagnostic, and prediction-interval extraction.
//!
//! For a candidate time `t` the p-value is
//!
//! ```text
//! p(t) = [ Σ_i a_i · I{R_i ≥ R_new(t)} + a_new(t) ] / [ Σ_i a_i + a_new(t) ]
//! ```
//!
//! where the sums run over uncensored calibration subjects,
//! `a_i = ω̂(x_i) / (1 − Ĝ(Y_i | x_i))` is fixed per subject, and the test
//! term `a_new(t) = ω̂(x_new) / (1 − Ĝ(t | x_new))` is evaluated at the
//! candidate time. With exact weights the curve `t ↦ p(t)` is quasi-concave,
//! so its super-level set `{t : p(t) > α}` is a single interval; with
//! estimated weights that structure can fail, and the engine reports the
//! violation rather than repairing the curve, falling back to a one-sided
//! lower bound.

use crate::data::{CandidateGrid, SurvivalDataset};
use crate::density_ratio::ShiftWeight;
use crate::kernel::ConditionalCdf;
use crate::quantile::QuantilePair;

/// Quantile-residual nonconformity score
/// `R(x, t) = max(Q̂_lo(x) − t, t − Q̂_hi(x))`: negative exactly when `t`
/// lies strictly inside the quantile band, minimized at the band midpoint.
pub fn quantile_residual_score(pair: &QuantilePair, x: &[f64], t: f64) -> f64 {
    score_from_band(quantile_band(pair, x), t)
}

/// The fitted band `(Q̂_lo(x), Q̂_hi(x))` on the time scale.
pub fn quantile_band(pair: &QuantilePair, x: &[f64]) -> (f64, f64) {
    (pair.lower.predict(x), pair.upper.predict(x))
}

pub fn score_from_band(band: (f64, f64), t: f64) -> f64 {
    (band.0 - t).max(t - band.1)
}

/// Per-subject calibration state: score, inverse-probability-of-censoring
/// weight and covariate-shift factor for every uncensored subject. Censored
/// subjects carry weight zero and drop out of every sum, so only their
/// count is retained.
#[derive(Debug, Clone)]
pub struct CalibrationScores {
    /// (score, censoring weight, shift factor) per uncensored subject.
    entries: Vec<(f64, f64, f64)>,
    n_censored: usize,
    /// Scores sorted ascending with suffix sums of `weight × shift`.
    sorted_scores: Vec<f64>,
    suffix_weight: Vec<f64>,
}

impl CalibrationScores {
    /// Score the calibration set against fitted models. For each uncensored
    /// subject: `R_i = R(x_i, Y_i)`, `w_i = 1 / (1 − Ĝ(Y_i | x_i))` and
    /// shift factor `ω̂(x_i)` (1 when no ratio model is supplied).
    pub fn from_calibration<C, W>(
        calib: &SurvivalDataset,
        pair: &QuantilePair,
        censoring: &C,
        ratio: Option<&W>,
    ) -> Self
    where
        C: ConditionalCdf + ?Sized,
        W: ShiftWeight + ?Sized,
    {
        let mut entries = Vec::new();
        let mut n_censored = 0;
        for s in calib.subjects() {
            if !s.event {
                n_censored += 1;
                continue;
            }
            let score = quantile_residual_score(pair, &s.covariates, s.observed_time);
            let g = censoring.cdf(s.observed_time, &s.covariates);
            let weight = 1.0 / (1.0 - g);
            let shift = ratio.map_or(1.0, |r| r.weight(&s.covariates));
            entries.push((score, weight, shift));
        }
        Self::from_entries(entries, n_censored)
    }

    /// Assemble calibration state from raw parts; used when weights are
    /// known analytically rather than estimated.
    pub fn from_parts(scores: &[f64], weights: &[f64], shifts: &[f64]) -> Self {
        assert_eq!(scores.len(), weights.len());
        assert_eq!(scores.len(), shifts.len());
        let entries = scores
            .iter()
            .zip(weights)
            .zip(shifts)
            .map(|((&s, &w), &o)| (s, w, o))
            .collect();
        Self::from_entries(entries, 0)
    }

    fn from_entries(entries: Vec<(f64, f64, f64)>, n_censored: usize) -> Self {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| entries[a].0.partial_cmp(&entries[b].0).unwrap());
        let sorted_scores: Vec<f64> = order.iter().map(|&i| entries[i].0).collect();
        let mut suffix_weight = vec![0.0; entries.len() + 1];
        for k in (0..entries.len()).rev() {
            let (_, w, o) = entries[order[k]];
            suffix_weight[k] = suffix_weight[k + 1] + w * o;
        }
        Self {
            entries,
            n_censored,
            sorted_scores,
            suffix_weight,
        }
    }

    /// `Σ_i w_i · ω̂_i` over uncensored calibration subjects.
    pub fn total_weight(&self) -> f64 {
        self.suffix_weight[0]
    }

    /// Weighted mass of calibration scores at least `threshold` (ties count,
    /// matching the `≥` in the p-value definition).
    pub fn mass_at_least(&self, threshold: f64) -> f64 {
        let idx = self.sorted_scores.partition_point(|&s| s < threshold);
        self.suffix_weight[idx]
    }

    pub fn n_uncensored(&self) -> usize {
        self.entries.len()
    }

    pub fn n_censored(&self) -> usize {
        self.n_censored
    }

    pub fn entries(&self) -> &[(f64, f64, f64)] {
        &self.entries
    }
}

/// The censoring-adjusted conformal p-value at a single candidate time.
/// Strictly positive (the test term is always included) and at most 1.
pub fn pvalue_at<C, W>(
    scores: &CalibrationScores,
    pair: &QuantilePair,
    censoring: &C,
    ratio: Option<&W>,
    x_new: &[f64],
    t: f64,
) -> f64
where
    C: ConditionalCdf + ?Sized,
    W: ShiftWeight + ?Sized,
{
    let band = quantile_band(pair, x_new);
    let shift_new = ratio.map_or(1.0, |r| r.weight(x_new));
    let g = censoring.cdf(t, x_new);
    pvalue_from_parts(scores, band, shift_new, g, t)
}

/// The p-value from precomputed per-test-point state: the quantile band at
/// the test covariates, the shift factor there, and `Ĝ(t | x_new)`.
pub fn pvalue_from_parts(
    scores: &CalibrationScores,
    band: (f64, f64),
    shift_new: f64,
    g_at_t: f64,
    t: f64,
) -> f64 {
    let r_new = score_from_band(band, t);
    let a_new = shift_new / (1.0 - g_at_t);
    let hits = scores.mass_at_least(r_new);
    (hits + a_new) / (scores.total_weight() + a_new)
}

/// Verdict of the quasi-concavity diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The α-super-level set is a single contiguous run (possibly empty).
    QuasiConcave,
    /// The super-level set splits into disjoint runs; only the one-sided
    /// lower bound is trustworthy.
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub verdict: Verdict,
    /// Non-fatal: the curve rebounds after a strict local minimum somewhere,
    /// even if the α-level set is still contiguous.
    pub shape_warning: bool,
}

/// Check whether `{k : values[k] > alpha}` is one contiguous run, and flag
/// any rebound (a rise above a running trough exceeding 1e-9) anywhere in
/// the curve.
pub fn quasiconcavity_diagnostic(values: &[f64], alpha: f64) -> Diagnostic {
    assert!(!values.is_empty());
    let mut runs = 0;
    let mut inside = false;
    for &v in values {
        let above = v > alpha;
        if above && !inside {
            runs += 1;
        }
        inside = above;
    }
    let verdict = if runs <= 1 {
        Verdict::QuasiConcave
    } else {
        Verdict::Violated
    };

    let mut shape_warning = false;
    let mut descending = false;
    let mut trough = values[0];
    for w in values.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        if cur < prev {
            descending = true;
            trough = trough.min(cur);
        } else if descending && cur > trough + 1e-9 {
            shape_warning = true;
            break;
        }
        if !descending {
            trough = cur;
        }
    }
    Diagnostic {
        verdict,
        shape_warning,
    }
}

/// Prediction-set bounds extracted from a p-value curve on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalExtract {
    /// Grid points bracketing the super-level run exactly: the smallest and
    /// largest grid times with `p(t) > α`.
    TwoSided { lower: f64, upper: f64 },
    /// Quasi-concavity violated: only the lower edge of the first
    /// super-level run is reported, as the one-sided set `[lower, ∞)`.
    OneSidedFallback { lower: f64 },
    /// The super-level set is empty (can happen at small α with tiny
    /// calibration sets); callers report a zero-width set.
    Empty,
}

/// Locate the prediction-set bounds given the diagnostic verdict.
pub fn extract_interval(
    values: &[f64],
    grid_points: &[f64],
    alpha: f64,
    verdict: Verdict,
) -> IntervalExtract {
    debug_assert_eq!(values.len(), grid_points.len());
    let first = values.iter().position(|&v| v > alpha);
    let Some(first) = first else {
        return IntervalExtract::Empty;
    };
    match verdict {
        Verdict::Violated => IntervalExtract::OneSidedFallback {
            lower: grid_points[first],
        },
        Verdict::QuasiConcave => {
            let last = values.iter().rposition(|&v| v > alpha).unwrap();
            IntervalExtract::TwoSided {
                lower: grid_points[first],
                upper: grid_points[last],
            }
        }
    }
}

/// A conformal p-value curve over the candidate grid, with its diagnostic
/// verdict and extracted prediction set.
///
/// When the curve is quasi-concave at level α, the super-level set is one
/// run and `interval` brackets it exactly. With estimated weights the curve
/// can rebound in the tail; the engine never repairs it — the verdict turns
/// `Violated`, `interval` is absent, and `fallback_lower` carries the
/// robust one-sided bound `[fallback_lower, ∞)` (the lower edge of the
/// first super-level run).
///
/// Grid convention: `interval` stores the grid times bracketing the run;
/// the reported bounds widen each edge to the neighbouring grid point at or
/// below α (clamped to the grid range), so a candidate time whose p-value
/// exceeds α is never excluded by discretization. The widening is at most
/// one grid step per side.
#[derive(Debug, Clone)]
pub struct PValueCurve {
    pub grid: CandidateGrid,
    pub values: Vec<f64>,
    pub alpha: f64,
    pub verdict: Verdict,
    pub shape_warning: bool,
    /// Present iff the verdict is quasi-concave and the set is non-empty.
    pub interval: Option<(f64, f64)>,
    /// Present iff the verdict is violated.
    pub fallback_lower: Option<f64>,
}

impl PValueCurve {
    fn from_values(grid: CandidateGrid, values: Vec<f64>, alpha: f64) -> Self {
        let diag = quasiconcavity_diagnostic(&values, alpha);
        let extract = extract_interval(&values, &grid.points(), alpha, diag.verdict);
        let (interval, fallback_lower) = match extract {
            IntervalExtract::TwoSided { lower, upper } => (Some((lower, upper)), None),
            IntervalExtract::OneSidedFallback { lower } => (None, Some(lower)),
            IntervalExtract::Empty => (None, None),
        };
        Self {
            grid,
            values,
            alpha,
            verdict: diag.verdict,
            shape_warning: diag.shape_warning,
            interval,
            fallback_lower,
        }
    }

    pub fn is_empty_set(&self) -> bool {
        self.interval.is_none() && self.fallback_lower.is_none()
    }

    /// Two-sided bounds for reporting: the super-level run widened by one
    /// grid step on each side (clamped to the grid range), i.e. out to the
    /// neighbouring grid points at or below α.
    pub fn reported_interval(&self) -> Option<(f64, f64)> {
        let (lower, upper) = self.interval?;
        let step = self.grid.step();
        let lo = (lower - step).max(self.grid.t_min);
        let hi = (upper + step).min(self.grid.t_max);
        Some((lo, hi))
    }

    /// Whether a realized event time is covered: inside the two-sided
    /// reported interval, or at/above the one-sided fallback bound when the
    /// verdict is violated.
    pub fn covers(&self, t: f64) -> bool {
        if let Some((lo, hi)) = self.reported_interval() {
            return t >= lo && t <= hi;
        }
        if let Some(lo) = self.fallback_lower {
            return t >= lo;
        }
        false
    }

    /// Coverage by exact membership in the extracted interval: the p-value
    /// at `t` itself decides membership in `{t : p(t) > α}` (no grid
    /// rounding at the boundary), and `t` must lie within the first
    /// super-level run — for a quasi-concave curve that run is the whole
    /// set, and when the curve rebounds it is the first-down-crossing
    /// interval; detached tail runs are not credited.
    pub fn covers_exact(&self, t: f64, p_at_t: f64) -> bool {
        if p_at_t <= self.alpha {
            return false;
        }
        let pts = self.grid.points();
        let Some(first) = self.values.iter().position(|&v| v > self.alpha) else {
            // the grid misses the (narrow) set entirely; membership decides
            return true;
        };
        let mut end = first;
        while end + 1 < self.values.len() && self.values[end + 1] > self.alpha {
            end += 1;
        }
        let below = first == 0 && t < pts[0];
        let above = end + 1 < pts.len() && t >= pts[end + 1];
        let before = first > 0 && t <= pts[first - 1];
        !(below || above || before)
    }

    /// Interval length for the AL metric: `upper − lower` for two-sided
    /// sets, the conservative `t_max − fallback_lower` for one-sided
    /// fallbacks, zero for empty sets.
    pub fn length(&self) -> f64 {
        if let Some((lo, hi)) = self.reported_interval() {
            return hi - lo;
        }
        if let Some(lo) = self.fallback_lower {
            return self.grid.t_max - lo;
        }
        0.0
    }
}

/// Evaluate the p-value curve over the whole candidate grid, run the
/// quasi-concavity diagnostic and extract the prediction set. The
/// calibration normalization constant is shared across grid points; only
/// the test term varies with `t`.
pub fn pvalue_curve<C, W>(
    scores: &CalibrationScores,
    pair: &QuantilePair,
    censoring: &C,
    ratio: Option<&W>,
    x_new: &[f64],
    grid: &CandidateGrid,
    alpha: f64,
) -> PValueCurve
where
    C: ConditionalCdf + ?Sized,
    W: ShiftWeight + ?Sized,
{
    let band = quantile_band(pair, x_new);
    let shift_new = ratio.map_or(1.0, |r| r.weight(x_new));
    let ts = grid.points();
    let g_curve = censoring.cdf_curve(&ts, x_new);
    pvalue_curve_from_parts(scores, band, shift_new, &g_curve, grid, alpha)
}

/// Grid evaluation from precomputed per-test-point state: the quantile band,
/// the shift factor at the test point and `Ĝ(t | x_new)` along the grid.
pub fn pvalue_curve_from_parts(
    scores: &CalibrationScores,
    band: (f64, f64),
    shift_new: f64,
    g_curve: &[f64],
    grid: &CandidateGrid,
    alpha: f64,
) -> PValueCurve {
    let ts = grid.points();
    debug_assert_eq!(g_curve.len(), ts.len());
    let values: Vec<f64> = ts
        .iter()
        .zip(g_curve)
        .map(|(&t, &g)| pvalue_from_parts(scores, band, shift_new, g, t))
        .collect();
    PValueCurve::from_values(grid.clone(), values, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::QuantileModel;

    fn pair_with_band(lo: f64, hi: f64) -> QuantilePair {
        // intercept-only models: predict(x) = exp(intercept)
        QuantilePair {
            lower: QuantileModel {
                tau: 0.05,
                intercept: lo.ln(),
                coefficients: vec![],
            },
            upper: QuantileModel {
                tau: 0.95,
                intercept: hi.ln(),
                coefficients: vec![],
            },
            crossing_warning: false,
            identifiability_warning: false,
        }
    }

    #[test]
    fn score_left_inside_right_of_band() {
        let pair = pair_with_band(2.0, 5.0);
        assert!((quantile_residual_score(&pair, &[], 1.0) - 1.0).abs() < 1e-12);
        assert!((quantile_residual_score(&pair, &[], 3.5) + 1.5).abs() < 1e-12);
        assert!((quantile_residual_score(&pair, &[], 7.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_censored_calibration_gives_pvalue_one() {
        let scores = CalibrationScores::from_parts(&[], &[], &[]);
        let pair = pair_with_band(2.0, 5.0);
        let no_censoring = |_t: f64, _x: &[f64]| 0.0;
        for t in [0.0, 1.0, 3.5, 10.0] {
            let p = pvalue_at(
                &scores,
                &pair,
                &no_censoring,
                None::<&fn(&[f64]) -> f64>,
                &[],
                t,
            );
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn midpoint_pvalue_is_one_when_scores_nonnegative() {
        let scores = CalibrationScores::from_parts(
            &[0.0, 0.5, 1.2, 3.0],
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, 1.0, 1.0, 1.0],
        );
        let pair = pair_with_band(2.0, 5.0);
        let no_censoring = |_t: f64, _x: &[f64]| 0.0;
        let p = pvalue_at(
            &scores,
            &pair,
            &no_censoring,
            None::<&fn(&[f64]) -> f64>,
            &[],
            3.5,
        );
        assert_eq!(p, 1.0);
    }

    #[test]
    fn no_censoring_matches_classical_split_conformal() {
        let cal = [0.3, -0.1, 0.8, 0.2, 1.5];
        let scores = CalibrationScores::from_parts(&cal, &[1.0; 5], &[1.0; 5]);
        let pair = pair_with_band(2.0, 5.0);
        let no_censoring = |_t: f64, _x: &[f64]| 0.0;
        for t in [0.5, 2.5, 4.0, 6.0] {
            let p = pvalue_at(
                &scores,
                &pair,
                &no_censoring,
                None::<&fn(&[f64]) -> f64>,
                &[],
                t,
            );
            let r = quantile_residual_score(&pair, &[], t);
            let count = cal.iter().filter(|&&s| s >= r).count();
            let expect = (1 + count) as f64 / 6.0;
            assert_eq!(p, expect);
        }
    }

    #[test]
    fn ipcw_weight_doubles_at_half_censoring_mass() {
        let subjects = vec![crate::data::Subject::new(vec![], 2.0, true)];
        let calib = SurvivalDataset::from_subjects(subjects).unwrap();
        let pair = pair_with_band(1.0, 4.0);
        let half = |_t: f64, _x: &[f64]| 0.5;
        let scores = CalibrationScores::from_calibration(
            &calib,
            &pair,
            &half,
            None::<&fn(&[f64]) -> f64>,
        );
        assert_eq!(scores.entries()[0].1, 2.0);
    }

    #[test]
    fn diagnostic_unimodal_is_quasiconcave() {
        let d = quasiconcavity_diagnostic(&[0.1, 0.4, 0.9, 0.4, 0.1], 0.3);
        assert_eq!(d.verdict, Verdict::QuasiConcave);
        assert!(!d.shape_warning);
    }

    #[test]
    fn diagnostic_two_runs_is_violated() {
        let d = quasiconcavity_diagnostic(&[0.9, 0.2, 0.9], 0.5);
        assert_eq!(d.verdict, Verdict::Violated);
        assert!(d.shape_warning);
    }

    #[test]
    fn diagnostic_empty_superlevel_is_quasiconcave() {
        let d = quasiconcavity_diagnostic(&[0.01, 0.02], 0.1);
        assert_eq!(d.verdict, Verdict::QuasiConcave);
    }

    #[test]
    fn diagnostic_flags_rebound_below_alpha() {
        // contiguous at alpha = 0.5 but rebounds in the tail
        let d = quasiconcavity_diagnostic(&[0.9, 0.6, 0.1, 0.3, 0.2], 0.5);
        assert_eq!(d.verdict, Verdict::QuasiConcave);
        assert!(d.shape_warning);
    }

    #[test]
    fn extract_two_sided_interval() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        let vals = [0.05, 0.3, 0.8, 0.3, 0.05];
        let v = quasiconcavity_diagnostic(&vals, 0.1).verdict;
        let e = extract_interval(&vals, &grid, 0.1, v);
        assert_eq!(
            e,
            IntervalExtract::TwoSided {
                lower: 1.0,
                upper: 3.0
            }
        );
    }

    #[test]
    fn extract_fallback_on_violation() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        let vals = [0.5, 0.05, 0.5, 0.5, 0.05];
        let v = quasiconcavity_diagnostic(&vals, 0.1).verdict;
        assert_eq!(v, Verdict::Violated);
        let e = extract_interval(&vals, &grid, 0.1, v);
        assert_eq!(e, IntervalExtract::OneSidedFallback { lower: 0.0 });
    }

    #[test]
    fn violated_curve_falls_back_to_one_sided_bound() {
        // rebounding curve: two-sided bounds are untrustworthy, so only the
        // lower edge of the first run is kept, as a one-sided set
        let grid = CandidateGrid::new(0.0, 4.0, 5).unwrap();
        let curve = PValueCurve::from_values(grid, vec![0.05, 0.4, 0.05, 0.5, 0.5], 0.1);
        assert_eq!(curve.verdict, Verdict::Violated);
        assert_eq!(curve.interval, None);
        assert_eq!(curve.fallback_lower, Some(1.0));
        assert!(curve.covers(1.2));
        assert!(curve.covers(3.0)); // one-sided: everything above the bound
        assert!(!curve.covers(0.5));
        assert!((curve.length() - 3.0).abs() < 1e-12); // t_max - fallback
    }

    #[test]
    fn extract_empty_set() {
        let grid = [0.0, 1.0];
        let vals = [0.01, 0.02];
        let v = quasiconcavity_diagnostic(&vals, 0.1).verdict;
        let e = extract_interval(&vals, &grid, 0.1, v);
        assert_eq!(e, IntervalExtract::Empty);
    }

    #[test]
    fn curve_full_grid_above_alpha_spans_range() {
        let grid = CandidateGrid::new(0.0, 4.0, 5).unwrap();
        let scores = CalibrationScores::from_parts(&[10.0], &[1.0], &[1.0]);
        let pair = pair_with_band(1.0, 3.0);
        let no_censoring = |_t: f64, _x: &[f64]| 0.0;
        let curve = pvalue_curve(
            &scores,
            &pair,
            &no_censoring,
            None::<&fn(&[f64]) -> f64>,
            &[],
            &grid,
            0.1,
        );
        assert_eq!(curve.verdict, Verdict::QuasiConcave);
        assert_eq!(curve.interval, Some((0.0, 4.0)));
        assert_eq!(curve.reported_interval(), Some((0.0, 4.0)));
        assert!(curve.covers(2.0));
        assert!((curve.length() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn curve_reported_bounds_widen_to_outer_grid_points() {
        let grid = CandidateGrid::new(0.0, 4.0, 5).unwrap();
        // calibration score 1.05: p(t) > 0.5 iff R_new(t) <= 1.05
        let scores = CalibrationScores::from_parts(&[1.05], &[1.0], &[1.0]);
        let pair = pair_with_band(1.0, 2.0);
        let no_censoring = |_t: f64, _x: &[f64]| 0.0;
        let curve = pvalue_curve(
            &scores,
            &pair,
            &no_censoring,
            None::<&fn(&[f64]) -> f64>,
            &[],
            &grid,
            0.5,
        );
        // R_new at t in {0,1,2,3,4} = {1, 0, 0, 1, 2}; hits for t in {0,1,2,3}
        assert_eq!(curve.interval, Some((0.0, 3.0)));
        // the true crossing lies in (3, 4); the reported edge is conservative
        assert_eq!(curve.reported_interval(), Some((0.0, 4.0)));
        assert!(curve.covers(3.4));
        assert!(!curve.covers(4.1));
    }

    #[test]
    fn weight_normalization_sums_to_one() {
        let scores = CalibrationScores::from_parts(
            &[0.2, 0.7, -0.3],
            &[2.0, 1.5, 3.0],
            &[0.5, 2.0, 1.0],
        );
        let g = 0.25;
        let a_new = 1.7 / (1.0 - g);
        let total = scores.total_weight() + a_new;
        // normalized weights: each a_i / total plus a_new / total
        let sum: f64 = scores
            .entries()
            .iter()
            .map(|(_, w, o)| w * o / total)
            .sum::<f64>()
            + a_new / total;
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
